"""Tuning harness for the fixture-model trend behavior (dev tool).

Measures smoothed-vote accuracy proxies for the sigma-mismatch matrix and
the CP-vs-sigma curve without running full certification, so geometry and
quantization knobs can be iterated quickly.
"""

import sys
from pathlib import Path

import numpy as np

sys.path.insert(0, str(Path(__file__).resolve().parent.parent / "src"))

from intsmooth import rng as rngmod
from intsmooth.datasets import generate_blobs
from intsmooth.dgauss import noise_params, sample_noise_pool
from intsmooth.qnn import classify, perturb_and_clamp

import make_fixtures as mf


def vote_stats(model, ds, sigma, votes=1500, seed=3):
    pool = sample_noise_pool(
        noise_params(sigma), 1200, ds.d, rngmod.stream(seed, sigma)
    ).ravel()
    gen = np.random.Generator(np.random.PCG64(seed * 77 + sigma))
    top_frac = np.empty(len(ds))
    top_is_true = np.empty(len(ds), dtype=bool)
    for i in range(len(ds)):
        noise = pool[gen.integers(0, pool.size, size=(votes, ds.d))]
        labels = np.asarray(classify(model, perturb_and_clamp(ds.inputs[i], noise)))
        counts = np.bincount(labels, minlength=ds.num_classes)
        top = int(np.argmax(counts))
        top_frac[i] = counts[top] / votes
        top_is_true[i] = top == int(ds.labels[i])
    # certification proxy: p_A comfortably above 1/2 certifies at N2=1e4
    certified = top_frac > 0.53
    ca0 = (certified & top_is_true).sum() / max(1, certified.sum())
    cp = certified.mean()
    return cp, ca0


def main():
    ds = generate_blobs(7, 80, item_seed=11)
    models = {}
    for s in (16, 32, 64):
        w1, b1, w2, b2, pool = mf.train_float(
            *_train_data(), s, mf.TRAIN_SEED + s
        )
        gen = np.random.Generator(np.random.PCG64(mf.TRAIN_SEED + 1))
        models[s] = mf.quantize(w1, b1, w2, b2, _train_data()[0], pool, gen)

    print("mismatch matrix (CP / CA0):")
    for st, m in models.items():
        cells = []
        for sc in (16, 32, 64):
            cp, ca0 = vote_stats(m, ds, sc)
            cells.append(f"{cp:.3f}/{ca0:.3f}")
        print(f"  train={st}: " + "  ".join(cells))
    print("CP curve (train=32):")
    for sc in (16, 32, 64, 128):
        cp, ca0 = vote_stats(models[32], ds, sc)
        print(f"  sigma={sc}: CP={cp:.3f} CA0={ca0:.3f}")


_cache = {}


def _train_data():
    if "ds" not in _cache:
        ds = generate_blobs(mf.DATA_SEED, mf.TRAIN_COUNT)
        _cache["ds"] = (ds.inputs, ds.labels, ds.num_classes)
    return _cache["ds"]


if __name__ == "__main__":
    main()
