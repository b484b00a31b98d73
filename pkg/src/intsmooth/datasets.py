"""Dataset ingestion: CSV and idx-like binary formats, plus synthetic blobs.

The synthetic generator produces three integer Gaussian-ish blobs in
d = 16 with per-item spread drawn from a wide range, so a noise-trained
classifier sees a graded mix of easy and marginal items. All desk-scale
runs in this package use it.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import FormatError
from .qnn import INPUT_HI, INPUT_LO


@dataclass(frozen=True)
class Dataset:
    name: str
    inputs: np.ndarray  # (n, d) int64 in [0, 255]
    labels: np.ndarray  # (n,) int64 in [0, num_classes)
    num_classes: int

    def __post_init__(self):
        X, y = self.inputs, self.labels
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise FormatError("inputs/labels shape mismatch")
        if X.size and (X.min() < INPUT_LO or X.max() > INPUT_HI):
            raise FormatError("inputs must lie in [0, 255]")
        if y.size and (y.min() < 0 or y.max() >= self.num_classes):
            raise FormatError("labels out of range")

    @property
    def d(self) -> int:
        return self.inputs.shape[1]

    def __len__(self) -> int:
        return self.inputs.shape[0]


def generate_blobs(
    seed: int,
    count: int,
    d: int = 16,
    num_classes: int = 3,
    item_seed: int | None = None,
    center_lo: int = 48,
    center_hi: int = 208,
    spread_lo: int = 3,
    spread_hi: int = 46,
) -> Dataset:
    """Seeded integer class blobs, linearly separable by construction.

    ``seed`` fixes the class centers (the data distribution); ``item_seed``
    draws the items, defaulting to the same seed. Held-out splits of one
    distribution use the same seed with a different item_seed. Item jitter
    scale varies per item so some items sit near the decision boundary
    (those drive abstentions at moderate noise).
    """
    if count < 1:
        raise ValueError("count must be positive")
    cgen = np.random.Generator(np.random.PCG64(seed))
    # The tight first class hugs the low pixel wall on half its coordinates:
    # clamping of noisy pixels at the [0, 255] boundary then displaces its
    # noisy clouds at large sigma, which is exactly the effect noise-matched
    # training compensates for. Remaining classes sit in the interior with
    # enforced pairwise separation.
    while True:
        centers = np.empty((num_classes, d), dtype=int)
        wall = cgen.permutation(d)[: d // 2]
        c0 = cgen.integers(96, 171, size=d)
        c0[wall] = cgen.integers(34, 57, size=d // 2)
        centers[0] = c0
        for c in range(1, num_classes):
            lo = 88 + 24 * c
            centers[c] = cgen.integers(lo, min(lo + 92, 216), size=d)
        dists = [
            np.sqrt(((centers[i] - centers[j]) ** 2).sum())
            for i in range(num_classes)
            for j in range(i + 1, num_classes)
        ]
        if min(dists) > 100 and max(dists) < 180:
            break
    # a tight satellite pocket of the first class sits inside the last
    # class's broad region: it is separable under fine noise but washed out
    # under coarse noise, so certification quality depends on the noise
    # scale the classifier was trained for
    pocket_dir = cgen.normal(size=d)
    pocket_dir /= np.sqrt((pocket_dir**2).sum())
    pocket_center = centers[num_classes - 1] + 160 * pocket_dir

    gen = np.random.Generator(np.random.PCG64(seed if item_seed is None else item_seed))
    labels = gen.integers(0, num_classes, size=count)
    # class-dependent spread bands (tight first class, wide last class) plus
    # per-item variation: the optimal decision boundary between unequal-spread
    # classes depends on the smoothing noise level, which is what makes
    # train/certify noise mismatch measurable on this dataset
    band = (spread_lo + (spread_hi - spread_lo) * labels / max(1, num_classes - 1)).astype(int)
    spreads = np.clip(band + gen.integers(-4, 5, size=count), 1, None)
    in_pocket = (labels == 0) & (gen.random(size=count) < 0.2)
    item_centers = np.where(in_pocket[:, None], pocket_center, centers[labels])
    spreads = np.where(in_pocket, 6, spreads)
    noise = gen.normal(size=(count, d)) * spreads[:, None]
    X = np.clip(np.rint(item_centers + noise), INPUT_LO, INPUT_HI).astype(np.int64)
    tag = "" if item_seed is None else f"-items{item_seed}"
    return Dataset(
        name=f"blobs-seed{seed}{tag}-n{count}",
        inputs=X,
        labels=labels.astype(np.int64),
        num_classes=num_classes,
    )


# ---------------------------------------------------------------------------
# CSV format: one comment header carrying metadata, then label,x0,...,x{d-1}
# ---------------------------------------------------------------------------


def save_dataset_csv(ds: Dataset, path) -> None:
    with open(path, "w") as fh:
        fh.write(f"# intsmooth-dataset name={ds.name} d={ds.d} classes={ds.num_classes}\n")
        fh.write("label," + ",".join(f"x{i}" for i in range(ds.d)) + "\n")
        for y, row in zip(ds.labels, ds.inputs):
            fh.write(str(int(y)) + "," + ",".join(str(int(v)) for v in row) + "\n")


def load_dataset_csv(path) -> Dataset:
    with open(path) as fh:
        lines = fh.read().splitlines()
    if not lines or not lines[0].startswith("# intsmooth-dataset"):
        raise FormatError("line 1: missing intsmooth-dataset header comment")
    meta = {}
    for tok in lines[0].split()[2:]:
        key, _, val = tok.partition("=")
        meta[key] = val
    try:
        d = int(meta["d"])
        num_classes = int(meta["classes"])
    except (KeyError, ValueError) as exc:
        raise FormatError(f"line 1: bad metadata header ({exc})") from exc
    name = meta.get("name", "csv")
    rows = []
    labels = []
    for lineno, line in enumerate(lines[2:], start=3):
        if not line.strip():
            continue
        parts = line.split(",")
        if len(parts) != d + 1:
            raise FormatError(f"line {lineno}: expected {d + 1} fields, got {len(parts)}")
        try:
            vals = [int(p) for p in parts]
        except ValueError as exc:
            raise FormatError(f"line {lineno}: non-integer field ({exc})") from exc
        if not 0 <= vals[0] < num_classes:
            raise FormatError(f"line {lineno}: label {vals[0]} out of range [0, {num_classes})")
        bad = [v for v in vals[1:] if v < INPUT_LO or v > INPUT_HI]
        if bad:
            raise FormatError(f"line {lineno}: pixel {bad[0]} outside [0, 255]")
        labels.append(vals[0])
        rows.append(vals[1:])
    if not rows:
        raise FormatError("dataset has no items")
    return Dataset(
        name=name,
        inputs=np.asarray(rows, dtype=np.int64),
        labels=np.asarray(labels, dtype=np.int64),
        num_classes=num_classes,
    )


# ---------------------------------------------------------------------------
# idx-like format: big-endian magic/dims, u8 payload (images), u8 labels
# ---------------------------------------------------------------------------

_IDX_IMAGES_MAGIC = 0x00000802  # 2-D u8 tensor
_IDX_LABELS_MAGIC = 0x00000801


def save_dataset_idx(ds: Dataset, prefix) -> None:
    """Write <prefix>-images.idx and <prefix>-labels.idx."""
    with open(f"{prefix}-images.idx", "wb") as fh:
        fh.write(struct.pack(">III", _IDX_IMAGES_MAGIC, len(ds), ds.d))
        fh.write(ds.inputs.astype(np.uint8).tobytes())
    with open(f"{prefix}-labels.idx", "wb") as fh:
        fh.write(struct.pack(">II", _IDX_LABELS_MAGIC, len(ds)))
        fh.write(ds.labels.astype(np.uint8).tobytes())


def load_dataset_idx(prefix, num_classes: int | None = None) -> Dataset:
    try:
        with open(f"{prefix}-images.idx", "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {prefix}-images.idx: {exc}") from exc
    if len(blob) < 12:
        raise FormatError("images file truncated before header")
    magic, n, d = struct.unpack_from(">III", blob, 0)
    if magic != _IDX_IMAGES_MAGIC:
        raise FormatError(f"images magic {magic:#x} != {_IDX_IMAGES_MAGIC:#x}")
    if len(blob) != 12 + n * d:
        raise FormatError(f"images payload is {len(blob) - 12} bytes, expected {n * d}")
    X = np.frombuffer(blob, dtype=np.uint8, offset=12).reshape(n, d).astype(np.int64)
    try:
        with open(f"{prefix}-labels.idx", "rb") as fh:
            lblob = fh.read()
    except OSError as exc:
        raise FormatError(f"cannot read {prefix}-labels.idx: {exc}") from exc
    if len(lblob) < 8:
        raise FormatError("labels file truncated before header")
    lmagic, ln = struct.unpack_from(">II", lblob, 0)
    if lmagic != _IDX_LABELS_MAGIC:
        raise FormatError(f"labels magic {lmagic:#x} != {_IDX_LABELS_MAGIC:#x}")
    if ln != n:
        raise FormatError(f"labels count {ln} != images count {n}")
    if len(lblob) != 8 + n:
        raise FormatError(f"labels payload is {len(lblob) - 8} bytes, expected {n}")
    y = np.frombuffer(lblob, dtype=np.uint8, offset=8).astype(np.int64)
    classes = int(y.max()) + 1 if num_classes is None else num_classes
    return Dataset(name=str(prefix), inputs=X, labels=y, num_classes=classes)


def load_dataset(path, fmt: str = "csv", num_classes: int | None = None) -> Dataset:
    if fmt == "csv":
        return load_dataset_csv(path)
    if fmt == "idx":
        return load_dataset_idx(path, num_classes)
    raise ValueError(f"unknown dataset format {fmt!r}")
