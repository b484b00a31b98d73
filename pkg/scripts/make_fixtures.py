"""Build the bundled toy fixture models.

Trains a small MLP (16 -> 24 relu -> 3) on the synthetic blob dataset with
discrete Gaussian data augmentation at a chosen scale, quantizes it
post-training to the IRSQNN1 format, and writes one fixture per training
scale. Deterministic: fixed seeds end to end.

Run from the repository root:

    python3 scripts/make_fixtures.py
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from intsmooth import rng as rngmod
from intsmooth.datasets import generate_blobs
from intsmooth.dgauss import noise_params, sample_noise_pool
from intsmooth.qnn import (
    ArgmaxHead,
    DenseLayer,
    LatticeInput,
    QuantParams,
    QuantizedModel,
    ReluLayer,
    classify,
    save_model,
)

HIDDEN = 32
EPOCHS = 100
BATCH = 32
LR = 0.03
TRAIN_SEED = 20240
DATA_SEED = 7
TRAIN_COUNT = 600
POOL = 30000


def softmax(z):
    z = z - z.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def train_float(X, y, num_classes, sigma_lattice, seed):
    gen = np.random.Generator(np.random.PCG64(seed))
    d = X.shape[1]
    w1 = gen.normal(0, 0.08, size=(HIDDEN, d))
    b1 = np.zeros(HIDDEN)
    w2 = gen.normal(0, 0.3, size=(num_classes, HIDDEN))
    b2 = np.zeros(num_classes)
    if sigma_lattice > 0:
        params = noise_params(sigma_lattice)
        pool = sample_noise_pool(
            params, POOL // d, d, rngmod.stream(seed, sigma_lattice)
        ).ravel()
    else:
        pool = None
    n = X.shape[0]
    scale = 1.0 / 255.0
    for epoch in range(EPOCHS):
        order = gen.permutation(n)
        lr = LR * (0.2 if epoch > EPOCHS * 3 // 4 else 1.0)
        for start in range(0, n, BATCH):
            idx = order[start : start + BATCH]
            xb = X[idx].astype(np.float64)
            if pool is not None:
                noise = pool[gen.integers(0, pool.size, size=xb.shape)]
                xb = np.clip(xb + noise, 0, 255)
            xb = xb * scale
            yb = y[idx]
            h_pre = xb @ w1.T + b1
            h = np.maximum(h_pre, 0)
            logits = h @ w2.T + b2
            p = softmax(logits)
            g = p.copy()
            g[np.arange(len(idx)), yb] -= 1
            g /= len(idx)
            gw2 = g.T @ h
            gb2 = g.sum(axis=0)
            gh = g @ w2
            gh[h_pre <= 0] = 0
            gw1 = gh.T @ xb
            gb1 = gh.sum(axis=0)
            w2 -= lr * gw2
            b2 -= lr * gb2
            w1 -= lr * gw1
            b1 -= lr * gb1
    return w1, b1, w2, b2, pool


def normalize_multiplier(real_mult):
    """Split a real multiplier in (0, 1) into (scale_mult, right_shift)."""
    if not 0 < real_mult < 1:
        raise ValueError(f"multiplier {real_mult} outside (0, 1)")
    rs = 0
    while real_mult * 2 ** (31 + rs) < 2**30:
        rs += 1
        if rs > 62:
            raise ValueError("multiplier too small to normalize")
    m0 = int(round(real_mult * 2 ** (31 + rs)))
    if m0 == 2**31:
        m0 //= 2
        rs -= 1
    assert 2**30 <= m0 < 2**31
    return m0, rs


def quantize(w1, b1, w2, b2, X_cal, pool, gen):
    """Post-training quantization calibrated on noise-augmented inputs.

    Both the hidden activations and the logits are quantized to int8 with
    ranges calibrated on the training-noise distribution, so a mismatched
    certification noise level saturates (larger sigma) or under-resolves
    (smaller sigma) the head the way deployed int8 pipelines do.
    """
    # Training consumed x/255; fold that into the first layer so the
    # integer model consumes raw [0, 255] pixels.
    w1_eff = w1 / 255.0
    s_w1 = np.abs(w1_eff).max() / 127.0
    w1_q = np.clip(np.rint(w1_eff / s_w1), -127, 127).astype(np.int8)
    b1_q = np.rint(b1 / s_w1).astype(np.int32)

    xc = X_cal.astype(np.float64)
    if pool is not None:
        noise = pool[gen.integers(0, pool.size, size=xc.shape)]
        xc = np.clip(xc + noise, 0, 255)
    acc = xc @ w1_eff.T + b1  # float activations in accumulator scale s_w1
    a_max = np.quantile(np.abs(acc), 0.97)
    s_act = a_max / 127.0
    m0, rs = normalize_multiplier(s_w1 / s_act)

    s_w2 = np.abs(w2).max() / 127.0
    w2_q = np.clip(np.rint(w2 / s_w2), -127, 127).astype(np.int8)
    b2_q = np.rint(b2 / (s_w2 * s_act)).astype(np.int32)
    h_cal = np.maximum(acc / s_act, 0)
    logits_cal = h_cal @ w2_q.astype(np.float64).T + b2_q
    l_max = np.quantile(np.abs(logits_cal), 0.97)
    m0_2, rs_2 = normalize_multiplier(127.0 / l_max)
    layers = (
        DenseLayer(w1_q, b1_q, QuantParams(m0, rs, 0)),
        ReluLayer(HIDDEN, 0),
        DenseLayer(w2_q, b2_q, QuantParams(m0_2, rs_2, 0)),
        ArgmaxHead(w2_q.shape[0]),
    )
    return QuantizedModel(layers=layers, d=w1_q.shape[1], num_classes=w2_q.shape[0])


def build_fixture(sigma_lattice, out_path):
    ds = generate_blobs(DATA_SEED, TRAIN_COUNT)
    w1, b1, w2, b2, pool = train_float(
        ds.inputs, ds.labels, ds.num_classes, sigma_lattice, TRAIN_SEED + sigma_lattice
    )
    gen = np.random.Generator(np.random.PCG64(TRAIN_SEED + 1))
    model = quantize(w1, b1, w2, b2, ds.inputs, pool, gen)
    clean_acc = float(np.mean(classify(model.layers and model, ds.inputs) == ds.labels))
    save_model(model, out_path)
    print(f"sigma={sigma_lattice}: clean integer accuracy {clean_acc:.3f} -> {out_path}")
    return model


def main():
    out_dir = Path(__file__).resolve().parent.parent / "src" / "intsmooth" / "fixtures"
    out_dir.mkdir(parents=True, exist_ok=True)
    for sigma in (16, 32, 64):
        build_fixture(sigma, out_dir / f"toy_sigma{sigma}.irsqnn")


if __name__ == "__main__":
    main()
