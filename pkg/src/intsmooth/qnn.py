"""Integer-arithmetic inference engine for int8 quantized classifiers.

Dense, conv2d, relu, and argmax-head layers with int8 weights, int32
biases, and fixed-point requantization. Every operation on the inference
path is integer typed; there is no fallback numeric path. Models are
immutable after loading and safe to share across threads.

Requantization contract (bit-exact, shared with any exporter):

    out = clamp(round_half_away((acc * scale_mult) >> (31 + right_shift))
                + zero_point, -128, 127)

where ``acc`` is the int32 accumulator and ``scale_mult`` is a Q0.31
multiplier normalized into [2**30, 2**31), or 0 to mark a pass-through
layer that emits raw accumulators (the usual choice before the argmax
head).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np

from .errors import ModelLoadError

MODEL_MAGIC = b"IRSQNN1"
MODEL_VERSION = 1

KIND_DENSE = 1
KIND_CONV2D = 2
KIND_RELU = 3
KIND_ARGMAX = 4

INPUT_LO = 0
INPUT_HI = 255

_INT32_MAX = 2**31 - 1


@dataclass(frozen=True)
class QuantParams:
    """Per-layer requantization constants (scale_mult == 0: pass-through)."""

    scale_mult: int
    right_shift: int
    zero_point: int

    def __post_init__(self):
        if self.scale_mult != 0 and not (2**30 <= self.scale_mult < 2**31):
            raise ValueError("scale_mult must be 0 or normalized into [2^30, 2^31)")
        if not 0 <= self.right_shift <= 62:
            raise ValueError("right_shift must lie in [0, 62]")
        if not -(2**31) <= self.zero_point <= _INT32_MAX:
            raise ValueError("zero_point must fit int32")

    @property
    def passthrough(self) -> bool:
        return self.scale_mult == 0


@dataclass(frozen=True)
class LatticeInput:
    """An integer input vector with entries in the [0, 255] pixel domain."""

    pixels: np.ndarray

    def __post_init__(self):
        arr = np.asarray(self.pixels, dtype=np.int64)
        if arr.ndim != 1:
            raise ValueError("input must be one-dimensional")
        if arr.size == 0:
            raise ValueError("input must be non-empty")
        if arr.min() < INPUT_LO or arr.max() > INPUT_HI:
            raise ValueError(f"input entries must lie in [{INPUT_LO}, {INPUT_HI}]")
        object.__setattr__(self, "pixels", arr)

    @property
    def d(self) -> int:
        return self.pixels.size


@dataclass(frozen=True)
class DenseLayer:
    weights: np.ndarray  # int8, shape (out, in)
    bias: np.ndarray  # int32, shape (out,)
    qparams: QuantParams
    kind: int = field(default=KIND_DENSE, init=False)

    @property
    def in_size(self) -> int:
        return self.weights.shape[1]

    @property
    def out_size(self) -> int:
        return self.weights.shape[0]

    @property
    def fan_in(self) -> int:
        return self.weights.shape[1]


@dataclass(frozen=True)
class Conv2dLayer:
    weights: np.ndarray  # int8, shape (out_c, in_c, kh, kw)
    bias: np.ndarray  # int32, shape (out_c,)
    qparams: QuantParams
    in_h: int
    in_w: int
    stride: int
    pad: int
    kind: int = field(default=KIND_CONV2D, init=False)

    @property
    def in_c(self) -> int:
        return self.weights.shape[1]

    @property
    def out_c(self) -> int:
        return self.weights.shape[0]

    @property
    def out_h(self) -> int:
        kh = self.weights.shape[2]
        return (self.in_h + 2 * self.pad - kh) // self.stride + 1

    @property
    def out_w(self) -> int:
        kw = self.weights.shape[3]
        return (self.in_w + 2 * self.pad - kw) // self.stride + 1

    @property
    def in_size(self) -> int:
        return self.in_c * self.in_h * self.in_w

    @property
    def out_size(self) -> int:
        return self.out_c * self.out_h * self.out_w

    @property
    def fan_in(self) -> int:
        return self.in_c * self.weights.shape[2] * self.weights.shape[3]


@dataclass(frozen=True)
class ReluLayer:
    size: int
    zero_point: int
    kind: int = field(default=KIND_RELU, init=False)

    in_size = property(lambda self: self.size)
    out_size = property(lambda self: self.size)


@dataclass(frozen=True)
class ArgmaxHead:
    size: int
    kind: int = field(default=KIND_ARGMAX, init=False)

    in_size = property(lambda self: self.size)
    out_size = property(lambda self: self.size)


@dataclass(frozen=True)
class QuantizedModel:
    """A validated stack of integer layers ending in an argmax head."""

    layers: tuple
    d: int
    num_classes: int

    def __post_init__(self):
        _validate_structure(self.layers, self.d, self.num_classes)


def _validate_structure(layers, d, num_classes, where=""):
    if num_classes < 2:
        raise ModelLoadError(f"{where}model must emit at least 2 classes")
    if not layers:
        raise ModelLoadError(f"{where}model has no layers")
    size = d
    for i, layer in enumerate(layers):
        if layer.in_size != size:
            raise ModelLoadError(
                f"{where}layer {i}: expects input size {layer.in_size}, got {size}"
            )
        if isinstance(layer, (DenseLayer, Conv2dLayer)):
            bound = layer.fan_in * 127 * 255 + int(np.abs(layer.bias).max(initial=0))
            if bound >= 2**31:
                raise ModelLoadError(
                    f"{where}layer {i}: accumulator bound {bound} risks int32 overflow"
                )
            if layer.weights.dtype != np.int8:
                raise ModelLoadError(f"{where}layer {i}: weights must be int8")
        if isinstance(layer, ArgmaxHead) and i != len(layers) - 1:
            raise ModelLoadError(f"{where}layer {i}: argmax head must be terminal")
        size = layer.out_size
    if not isinstance(layers[-1], ArgmaxHead):
        raise ModelLoadError(f"{where}final layer must be an argmax head")
    if layers[-1].size != num_classes:
        raise ModelLoadError(
            f"{where}argmax head size {layers[-1].size} != declared classes {num_classes}"
        )


def _requantize(acc: np.ndarray, q: QuantParams) -> np.ndarray:
    """Scale int32 accumulators back to the int8 activation range."""
    if q.passthrough:
        return acc
    shift = 31 + q.right_shift
    if shift >= 63:
        scaled = np.zeros_like(acc)
    else:
        prod = acc * np.int64(q.scale_mult)
        half = np.int64(1) << np.int64(shift - 1)
        scaled = np.sign(prod) * ((np.abs(prod) + half) >> np.int64(shift))
    return np.clip(scaled + np.int64(q.zero_point), -128, 127)


def _forward_array(model: QuantizedModel, x: np.ndarray) -> np.ndarray:
    act = x
    for layer in model.layers:
        if layer.kind == KIND_DENSE:
            acc = act @ layer.weights.astype(np.int64).T + layer.bias.astype(np.int64)
            act = _requantize(acc, layer.qparams)
        elif layer.kind == KIND_CONV2D:
            act = _conv2d(act, layer)
        elif layer.kind == KIND_RELU:
            act = np.maximum(act, np.int64(layer.zero_point))
        else:  # argmax head: logits are the activations entering it
            break
    return act


def _conv2d(act: np.ndarray, layer: Conv2dLayer) -> np.ndarray:
    batch = act.shape[0]
    c, h, w = layer.in_c, layer.in_h, layer.in_w
    kh, kw = layer.weights.shape[2], layer.weights.shape[3]
    x = act.reshape(batch, c, h, w)
    if layer.pad:
        x = np.pad(x, ((0, 0), (0, 0), (layer.pad, layer.pad), (layer.pad, layer.pad)))
    oh, ow = layer.out_h, layer.out_w
    # im2col: gather (c*kh*kw) patch columns, then one integer matmul
    cols = np.empty((batch, c * kh * kw, oh * ow), dtype=np.int64)
    idx = 0
    for ci in range(c):
        for ki in range(kh):
            for kj in range(kw):
                patch = x[
                    :,
                    ci,
                    ki : ki + layer.stride * oh : layer.stride,
                    kj : kj + layer.stride * ow : layer.stride,
                ]
                cols[:, idx, :] = patch.reshape(batch, oh * ow)
                idx += 1
    wmat = layer.weights.reshape(layer.out_c, c * kh * kw).astype(np.int64)
    acc = np.einsum("of,bfp->bop", wmat, cols) + layer.bias.astype(np.int64)[None, :, None]
    out = _requantize(acc, layer.qparams)
    return out.reshape(batch, layer.out_c * oh * ow)


def forward(model: QuantizedModel, x) -> np.ndarray:
    """Int32 logits for one LatticeInput (or a batch as an int array).

    Accepts a LatticeInput, a 1-D integer array, or a (batch, d) integer
    array; returns logits with matching leading shape.
    """
    if isinstance(x, LatticeInput):
        arr = x.pixels
    else:
        arr = np.asarray(x, dtype=np.int64)
    single = arr.ndim == 1
    if single:
        arr = arr[None, :]
    if arr.shape[1] != model.d:
        raise ValueError(f"input size {arr.shape[1]} != model input size {model.d}")
    logits = _forward_array(model, arr.astype(np.int64))
    return logits[0] if single else logits


def classify(model: QuantizedModel, x) -> int | np.ndarray:
    """Argmax class label(s); ties break toward the smallest index."""
    logits = forward(model, x)
    if logits.ndim == 1:
        return int(np.argmax(logits))
    return np.argmax(logits, axis=1)


def perturb_and_clamp(x, noise) -> np.ndarray:
    """Entrywise x + noise saturated to the [0, 255] input domain."""
    pixels = x.pixels if isinstance(x, LatticeInput) else np.asarray(x, dtype=np.int64)
    noise = np.asarray(noise, dtype=np.int64)
    if pixels.shape[-1] != noise.shape[-1]:
        raise ValueError("input and noise lengths differ")
    return np.clip(pixels + noise, INPUT_LO, INPUT_HI)


# ---------------------------------------------------------------------------
# Serialization (IRSQNN1)
# ---------------------------------------------------------------------------


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.off = 0

    def take(self, n: int, what: str) -> bytes:
        if self.off + n > len(self.blob):
            raise ModelLoadError(f"truncated while reading {what} at byte {self.off}")
        chunk = self.blob[self.off : self.off + n]
        self.off += n
        return chunk

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def load_model(source) -> QuantizedModel:
    """Parse and validate an IRSQNN1 byte stream (bytes or file path)."""
    if isinstance(source, (bytes, bytearray)):
        blob = bytes(source)
    else:
        with open(source, "rb") as fh:
            blob = fh.read()
    r = _Reader(blob)
    if r.take(len(MODEL_MAGIC), "magic") != MODEL_MAGIC:
        raise ModelLoadError("bad magic; not an IRSQNN1 model")
    (version,) = r.unpack("<H", "version")
    if version != MODEL_VERSION:
        raise ModelLoadError(f"unsupported version {version}")
    d, num_classes = r.unpack("<II", "header dims")
    (layer_count,) = r.unpack("<H", "layer count")
    layers = []
    for i in range(layer_count):
        (kind,) = r.unpack("<B", f"layer {i} kind")
        if kind == KIND_DENSE:
            n_in, n_out = r.unpack("<II", f"layer {i} shape")
            wbytes = r.take(n_in * n_out, f"layer {i} weights")
            weights = np.frombuffer(wbytes, dtype=np.int8).reshape(n_out, n_in).copy()
            bias = np.frombuffer(
                r.take(4 * n_out, f"layer {i} bias"), dtype="<i4"
            ).astype(np.int32)
            layers.append(DenseLayer(weights, bias, _read_qparams(r, i)))
        elif kind == KIND_CONV2D:
            in_c, in_h, in_w, out_c, kh, kw, stride, pad = r.unpack(
                "<IIIIIIII", f"layer {i} shape"
            )
            if stride < 1:
                raise ModelLoadError(f"layer {i}: stride must be positive")
            wbytes = r.take(out_c * in_c * kh * kw, f"layer {i} weights")
            weights = (
                np.frombuffer(wbytes, dtype=np.int8)
                .reshape(out_c, in_c, kh, kw)
                .copy()
            )
            bias = np.frombuffer(
                r.take(4 * out_c, f"layer {i} bias"), dtype="<i4"
            ).astype(np.int32)
            layers.append(
                Conv2dLayer(weights, bias, _read_qparams(r, i), in_h, in_w, stride, pad)
            )
        elif kind == KIND_RELU:
            (size,) = r.unpack("<I", f"layer {i} size")
            q = _read_qparams(r, i)
            layers.append(ReluLayer(size, q.zero_point))
        elif kind == KIND_ARGMAX:
            (size,) = r.unpack("<I", f"layer {i} size")
            _read_qparams(r, i)
            layers.append(ArgmaxHead(size))
        else:
            raise ModelLoadError(f"layer {i}: unknown kind {kind} at byte {r.off - 1}")
    if r.off != len(blob):
        raise ModelLoadError(f"{len(blob) - r.off} trailing bytes after layer {layer_count - 1}")
    _validate_structure(layers, d, num_classes)
    return QuantizedModel(layers=tuple(layers), d=d, num_classes=num_classes)


def _read_qparams(r: _Reader, i: int) -> QuantParams:
    scale_mult, right_shift, zero_point = r.unpack("<iBi", f"layer {i} qparams")
    try:
        return QuantParams(scale_mult, right_shift, zero_point)
    except ValueError as exc:
        raise ModelLoadError(f"layer {i}: {exc}") from exc


def save_model(model: QuantizedModel, path) -> None:
    """Write the model in the IRSQNN1 layout consumed by load_model."""
    out = bytearray()
    out += MODEL_MAGIC
    out += struct.pack("<H", MODEL_VERSION)
    out += struct.pack("<II", model.d, model.num_classes)
    out += struct.pack("<H", len(model.layers))
    for layer in model.layers:
        out += struct.pack("<B", layer.kind)
        if layer.kind == KIND_DENSE:
            out += struct.pack("<II", layer.in_size, layer.out_size)
            out += layer.weights.astype(np.int8).tobytes()
            out += layer.bias.astype("<i4").tobytes()
            q = layer.qparams
            out += struct.pack("<iBi", q.scale_mult, q.right_shift, q.zero_point)
        elif layer.kind == KIND_CONV2D:
            kh, kw = layer.weights.shape[2], layer.weights.shape[3]
            out += struct.pack(
                "<IIIIIIII",
                layer.in_c,
                layer.in_h,
                layer.in_w,
                layer.out_c,
                kh,
                kw,
                layer.stride,
                layer.pad,
            )
            out += layer.weights.astype(np.int8).tobytes()
            out += layer.bias.astype("<i4").tobytes()
            q = layer.qparams
            out += struct.pack("<iBi", q.scale_mult, q.right_shift, q.zero_point)
        elif layer.kind == KIND_RELU:
            out += struct.pack("<I", layer.size)
            out += struct.pack("<iBi", 0, 0, layer.zero_point)
        else:
            out += struct.pack("<I", layer.size)
            out += struct.pack("<iBi", 0, 0, 0)
    with open(path, "wb") as fh:
        fh.write(bytes(out))
