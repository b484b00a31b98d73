"""Batch certification/prediction drivers and the int-vs-float microbenchmark.

This module is the only place a floating-point forward pass exists; it is a
benchmark reference re-implementation of the architecture with dequantized
weights and never touches the certification path.
"""

from __future__ import annotations

import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import rng as rngmod
from .certify import ABSTAIN, CertConfig, QnnTarget, certify, predict, to_csv_row, CSV_HEADER
from .datasets import Dataset
from .dgauss import sample_noise_pool
from .metrics import ItemOutcome, MetricsReport, build_report
from .qnn import (
    KIND_ARGMAX,
    KIND_CONV2D,
    KIND_DENSE,
    KIND_RELU,
    QuantizedModel,
    forward,
)

_STREAM_POOL = 10**9
DEFAULT_RADIUS_GRID = tuple(range(0, 161, 8))


def _make_pool(cfg: CertConfig, d: int, pool_size: int):
    if pool_size <= 0:
        return None
    rng = rngmod.stream(cfg.seed, _STREAM_POOL)
    return sample_noise_pool(cfg.sigma, pool_size, d, rng)


def run_certify(
    model: QuantizedModel,
    dataset: Dataset,
    cfg: CertConfig,
    out_csv=None,
    threads: int = 1,
    radius_grid=DEFAULT_RADIUS_GRID,
    pool_size: int = 0,
) -> MetricsReport:
    """Certify every dataset item and assemble the metrics report.

    Items run in a thread pool with per-item noise streams derived from
    (seed, item index), so results are byte-identical regardless of the
    thread count; rows are emitted in input order.
    """
    target = QnnTarget(model)
    pool = _make_pool(cfg, dataset.d, pool_size)

    def one(i: int) -> ItemOutcome:
        t0 = time.perf_counter()
        cert = certify(target, dataset.inputs[i], cfg, stream_path=(i,), noise_pool=pool)
        dt_us = int((time.perf_counter() - t0) * 1e6)
        return ItemOutcome(
            input_id=i,
            true_label=int(dataset.labels[i]),
            cert=cert,
            wall_time_us=dt_us,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool_exec:
            outcomes = list(pool_exec.map(one, range(len(dataset))))
    else:
        outcomes = [one(i) for i in range(len(dataset))]
    report = build_report(dataset.name, outcomes, list(radius_grid))
    if out_csv is not None:
        with open(out_csv, "w") as fh:
            fh.write(CSV_HEADER + "\n")
            for o in outcomes:
                fh.write(to_csv_row(o.input_id, o.cert, o.wall_time_us) + "\n")
    return report


@dataclass
class PredictSummary:
    num_samples: int
    correct: float
    wrong: float
    abstain: float


def run_predict(
    model: QuantizedModel,
    dataset: Dataset,
    cfg: CertConfig,
    n_values,
    out_csv=None,
    pool_size: int = 0,
) -> list[PredictSummary]:
    """Prediction sweep over sample counts, reporting correct/wrong/abstain."""
    target = QnnTarget(model)
    pool = _make_pool(cfg, dataset.d, pool_size)
    summaries = []
    for n in n_values:
        correct = wrong = abstain = 0
        for i in range(len(dataset)):
            label = predict(
                target,
                dataset.inputs[i],
                cfg,
                num_samples=n,
                stream_path=(i, n),
                noise_pool=pool,
            )
            if label == ABSTAIN:
                abstain += 1
            elif label == int(dataset.labels[i]):
                correct += 1
            else:
                wrong += 1
        total = len(dataset)
        summaries.append(
            PredictSummary(
                num_samples=n,
                correct=correct / total,
                wrong=wrong / total,
                abstain=abstain / total,
            )
        )
    if out_csv is not None:
        with open(out_csv, "w") as fh:
            fh.write("num_samples,correct,wrong,abstain\n")
            for s in summaries:
                fh.write(f"{s.num_samples},{s.correct:.6f},{s.wrong:.6f},{s.abstain:.6f}\n")
    return summaries


# ---------------------------------------------------------------------------
# Microbenchmark: integer forward vs float32 reference forward
# ---------------------------------------------------------------------------


def _dequantized_layers(model: QuantizedModel):
    layers = []
    for layer in model.layers:
        if layer.kind == KIND_DENSE:
            scale = (
                1.0
                if layer.qparams.passthrough
                else layer.qparams.scale_mult / 2**31 / 2**layer.qparams.right_shift
            )
            layers.append(
                (
                    "dense",
                    layer.weights.astype(np.float32) * np.float32(scale),
                    layer.bias.astype(np.float32) * np.float32(scale),
                )
            )
        elif layer.kind == KIND_CONV2D:
            raise NotImplementedError("float reference covers dense stacks only")
        elif layer.kind == KIND_RELU:
            layers.append(("relu", np.float32(layer.zero_point), None))
        elif layer.kind == KIND_ARGMAX:
            break
    return layers


def _float_forward(layers, x: np.ndarray) -> np.ndarray:
    act = x
    for kind, a, b in layers:
        if kind == "dense":
            act = act @ a.T + b
        else:
            act = np.maximum(act, a)
    return act


def _float_container_size(model: QuantizedModel) -> int:
    """Byte size of the same architecture serialized with float32 tensors."""
    size = len(b"IRSQNNF") + 2 + 4 + 4 + 2
    for layer in model.layers:
        size += 1
        if layer.kind == KIND_DENSE:
            size += 8 + 4 * layer.weights.size + 4 * layer.bias.size + 9
        elif layer.kind == KIND_CONV2D:
            size += 32 + 4 * layer.weights.size + 4 * layer.bias.size + 9
        else:
            size += 4 + 9
    return size


def _int_container_size(model: QuantizedModel) -> int:
    size = len(b"IRSQNN1") + 2 + 4 + 4 + 2
    for layer in model.layers:
        size += 1
        if layer.kind == KIND_DENSE:
            size += 8 + layer.weights.size + 4 * layer.bias.size + 9
        elif layer.kind == KIND_CONV2D:
            size += 32 + layer.weights.size + 4 * layer.bias.size + 9
        else:
            size += 4 + 9
    return size


@dataclass
class BenchReport:
    reps: int
    batch: int
    int_forward_s: float
    float_forward_s: float
    speed_ratio: float  # int time / float time, <= 1 is the expected trend
    weight_bytes_int8: int
    weight_bytes_float32: int
    raw_payload_ratio: float  # exactly 0.25
    container_bytes_int: int
    container_bytes_float: int
    container_shrink: float  # 1 - int/float, expected >= 0.40

    def to_csv(self) -> str:
        keys = [k for k in self.__dataclass_fields__]
        vals = [getattr(self, k) for k in keys]
        return ",".join(keys) + "\n" + ",".join(str(v) for v in vals) + "\n"


def run_bench(model: QuantizedModel, reps: int, batch: int = 1024, seed: int = 0) -> BenchReport:
    """Median wall time of integer vs float32 forward, plus storage sizes."""
    if reps < 1:
        raise ValueError("reps must be positive")
    gen = np.random.Generator(np.random.PCG64(seed))
    x_int = gen.integers(0, 256, size=(batch, model.d)).astype(np.int64)
    x_float = x_int.astype(np.float32)
    float_layers = _dequantized_layers(model)

    forward(model, x_int[:8])  # warm both paths
    _float_forward(float_layers, x_float[:8])

    int_times = []
    float_times = []
    for _ in range(reps):
        t0 = time.perf_counter()
        forward(model, x_int)
        int_times.append(time.perf_counter() - t0)
        t0 = time.perf_counter()
        _float_forward(float_layers, x_float)
        float_times.append(time.perf_counter() - t0)
    int_med = sorted(int_times)[reps // 2]
    float_med = sorted(float_times)[reps // 2]

    w_int = sum(
        layer.weights.size for layer in model.layers if hasattr(layer, "weights")
    )
    ci = _int_container_size(model)
    cf = _float_container_size(model)
    return BenchReport(
        reps=reps,
        batch=batch,
        int_forward_s=int_med,
        float_forward_s=float_med,
        speed_ratio=int_med / float_med,
        weight_bytes_int8=w_int,
        weight_bytes_float32=4 * w_int,
        raw_payload_ratio=0.25,
        container_bytes_int=ci,
        container_bytes_float=cf,
        container_shrink=1 - ci / cf,
    )
