"""Shared test utilities: independent oracles kept separate from the package.

The scalar interpreter re-implements the integer inference contract with
plain Python ints and explicit loops; it shares no code with the vectorized
engine so agreement between the two is meaningful.
"""

from fractions import Fraction
from math import comb

import numpy as np

from intsmooth.qnn import (
    KIND_ARGMAX,
    KIND_CONV2D,
    KIND_DENSE,
    KIND_RELU,
    QuantizedModel,
)


def scalar_requantize(acc: int, scale_mult: int, right_shift: int, zero_point: int) -> int:
    if scale_mult == 0:
        return acc
    shift = 31 + right_shift
    prod = acc * scale_mult
    if shift >= 63:
        scaled = 0
    else:
        half = 1 << (shift - 1)
        if prod >= 0:
            scaled = (prod + half) >> shift
        else:
            scaled = -((-prod + half) >> shift)
    return max(-128, min(127, scaled + zero_point))


def scalar_forward(model: QuantizedModel, x) -> list:
    """Reference forward pass: nested loops over plain Python integers."""
    act = [int(v) for v in x]
    for layer in model.layers:
        if layer.kind == KIND_DENSE:
            q = layer.qparams
            out = []
            for o in range(layer.out_size):
                acc = int(layer.bias[o])
                for i in range(layer.in_size):
                    acc += int(layer.weights[o, i]) * act[i]
                out.append(scalar_requantize(acc, q.scale_mult, q.right_shift, q.zero_point))
            act = out
        elif layer.kind == KIND_CONV2D:
            q = layer.qparams
            c, h, w = layer.in_c, layer.in_h, layer.in_w
            kh, kw = layer.weights.shape[2], layer.weights.shape[3]
            oh, ow = layer.out_h, layer.out_w
            out = []
            for oc in range(layer.out_c):
                for oy in range(oh):
                    for ox in range(ow):
                        acc = int(layer.bias[oc])
                        for ic in range(c):
                            for ky in range(kh):
                                for kx in range(kw):
                                    iy = oy * layer.stride + ky - layer.pad
                                    ix = ox * layer.stride + kx - layer.pad
                                    if 0 <= iy < h and 0 <= ix < w:
                                        acc += int(layer.weights[oc, ic, ky, kx]) * act[
                                            (ic * h + iy) * w + ix
                                        ]
                        out.append(
                            scalar_requantize(acc, q.scale_mult, q.right_shift, q.zero_point)
                        )
            act = out
        elif layer.kind == KIND_RELU:
            act = [max(v, layer.zero_point) for v in act]
        elif layer.kind == KIND_ARGMAX:
            break
    return act


def scalar_classify(model: QuantizedModel, x) -> int:
    logits = scalar_forward(model, x)
    best = 0
    for i in range(1, len(logits)):
        if logits[i] > logits[best]:
            best = i
    return best


def exact_binomial_upper_tail(k: int, n: int, p: Fraction) -> Fraction:
    """Full-summation oracle for P[Bin(n, p) >= k]; no early termination."""
    return sum(
        Fraction(comb(n, j)) * p**j * (1 - p) ** (n - j) for j in range(k, n + 1)
    )


class SeqLabelTarget:
    """Mock smoothing target: labels drawn from its own seeded stream.

    Ignores the noise values; classify_batch returns pre-scheduled labels so
    the top-class probability is exactly the requested Bernoulli rate.
    """

    def __init__(self, p_top: float, num_classes: int = 2, seed: int = 0, top: int = 0):
        self.num_classes = num_classes
        self.p_top = p_top
        self.top = top
        self.gen = np.random.Generator(np.random.PCG64(seed))

    def classify_batch(self, x, noise):
        n = noise.shape[0]
        hit = self.gen.random(n) < self.p_top
        other = (self.top + 1) % self.num_classes
        return np.where(hit, self.top, other)


class ConstantTarget:
    def __init__(self, label: int, num_classes: int = 3):
        self.num_classes = num_classes
        self.label = label

    def classify_batch(self, x, noise):
        return np.full(noise.shape[0], self.label, dtype=np.int64)
