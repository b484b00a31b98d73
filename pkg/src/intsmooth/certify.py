"""Monte-Carlo prediction and certification for the smoothed classifier.

The smoothed classifier g(x) takes a majority vote of the base classifier
over discrete Gaussian perturbations. ``predict`` answers with a two-sided
binomial test; ``certify`` lower-bounds the top-class probability with an
exact Clopper-Pearson bound and converts it into an integer certified
radius through the precomputed quantile table. After the noise samples are
drawn, every value on this path is an integer or exact rational.

The certified radius is the squared-norm predicate

    covered(delta)  iff  4 * ||delta||^2 < radius_sq_x4,
    radius_sq_x4 = (2 * quantile_z)^2,

where ``quantile_z`` is the lower generalized quantile of the noise table
at the confidence bound (floored at zero). The lower quantile is the
conservative branch: at probabilities strictly between two cumulative
atoms it sits one lattice step below the upper quantile, which keeps the
certificate sound for off-axis perturbations whose projected noise law has
no atom at the corresponding level (verified exhaustively by the
enumeration oracle in this package).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from functools import lru_cache

import numpy as np

from . import rng as rngmod
from .confidence import (
    DEFAULT_GRID_BITS,
    BinomialCount,
    binomial_two_sided_pvalue,
    clopper_pearson_lower,
)
from .dgauss import CdfTable, NoiseParams, build_cdf_table, inverse_cdf_floor, sample
from .qnn import QuantizedModel, classify, perturb_and_clamp

ABSTAIN = -1

_CHUNK = 8192

_STREAM_SELECT = 0
_STREAM_ESTIMATE = 1
_STREAM_PREDICT = 2


@dataclass(frozen=True)
class CertConfig:
    """Noise scale, sample counts, confidence level, and seed."""

    sigma: NoiseParams
    n1: int
    n2: int
    alpha: Fraction
    seed: int
    grid_bits: int = DEFAULT_GRID_BITS

    def __post_init__(self):
        if self.sigma.mu != 0:
            raise ValueError("smoothing noise must be centered (mu = 0)")
        if self.n1 < 1 or self.n2 < 1:
            raise ValueError("sample counts must be positive")
        alpha = Fraction(self.alpha)
        if not 0 < alpha < 1:
            raise ValueError("alpha must satisfy 0 < alpha < 1")
        object.__setattr__(self, "alpha", alpha)


@dataclass(frozen=True)
class CertificateResult:
    """Outcome of one certification: a certified label and radius, or abstain.

    ``radius_sq_x4`` equals (2 * quantile_z)**2; a perturbation with squared
    L2 norm D is covered iff 4*D < radius_sq_x4 (exact integer predicate).
    A certificate with quantile_z = 0 asserts only the label of the clean
    point: no nonzero perturbation is covered.
    """

    certified: bool
    label: int
    p_lb: Fraction
    quantile_z: int
    radius_sq_x4: int
    counts_select: np.ndarray
    counts_estimate: np.ndarray

    def __post_init__(self):
        if self.certified and not self.p_lb > Fraction(1, 2):
            raise ValueError("certified result requires p_lb > 1/2")

    @property
    def n2_count(self) -> int:
        if self.label == ABSTAIN:
            return int(self.counts_estimate.max(initial=0))
        return int(self.counts_estimate[self.label])


class QnnTarget:
    """Adapts a QuantizedModel to the smoothing driver (clamped addition)."""

    def __init__(self, model: QuantizedModel):
        self.model = model
        self.num_classes = model.num_classes

    def classify_batch(self, x: np.ndarray, noise: np.ndarray) -> np.ndarray:
        return classify(self.model, perturb_and_clamp(x, noise))


@lru_cache(maxsize=32)
def _table_for(params: NoiseParams) -> CdfTable:
    return build_cdf_table(params)


def _draw_noise(params: NoiseParams, n: int, d: int, rng, pool: np.ndarray | None, gen):
    if pool is not None:
        flat = pool.ravel()
        idx = gen.integers(0, flat.size, size=(n, d))
        return flat[idx]
    flat = [sample(params, rng) for _ in range(n * d)]
    return np.asarray(flat, dtype=np.int64).reshape(n, d)


def _tally(target, x, n, params, seed_path, pool):
    """Per-class vote counts over n noisy evaluations (order-free merge)."""
    counts = np.zeros(target.num_classes, dtype=np.int64)
    d = x.shape[-1]
    rng = rngmod.stream(*seed_path)
    gen = np.random.Generator(np.random.PCG64(rngmod.derive_seed(*seed_path)))
    remaining = n
    while remaining > 0:
        m = min(_CHUNK, remaining)
        noise = _draw_noise(params, m, d, rng, pool, gen)
        labels = np.asarray(target.classify_batch(x, noise))
        counts += np.bincount(labels, minlength=target.num_classes)
        remaining -= m
    return counts


def _top_two(counts: np.ndarray) -> tuple[int, int, int, int]:
    top = int(np.argmax(counts))
    rest = counts.copy()
    rest[top] = -1
    second = int(np.argmax(rest))
    return top, int(counts[top]), second, int(counts[second])


def conservative_quantile(table: CdfTable, p_lb: Fraction) -> int:
    """Radius quantile: max{z : Phi(z) <= p_lb}, floored at zero."""
    return max(0, inverse_cdf_floor(table, p_lb))


def certify(
    target,
    x,
    cfg: CertConfig,
    stream_path: tuple = (),
    noise_pool: np.ndarray | None = None,
) -> CertificateResult:
    """Two-round certification (selection then estimation).

    Round one picks the candidate class from n1 noisy votes; round two
    estimates its probability from n2 fresh votes on an independent stream
    and lower-bounds it at confidence 1 - alpha. ``stream_path`` isolates
    the noise streams of concurrent certifications (e.g. one path per
    dataset item), making results independent of scheduling.
    """
    x = np.asarray(x, dtype=np.int64)
    counts1 = _tally(
        target, x, cfg.n1, cfg.sigma, (cfg.seed, *stream_path, _STREAM_SELECT), noise_pool
    )
    c_hat = int(np.argmax(counts1))
    counts2 = _tally(
        target, x, cfg.n2, cfg.sigma, (cfg.seed, *stream_path, _STREAM_ESTIMATE), noise_pool
    )
    n2_count = int(counts2[c_hat])
    p_lb = clopper_pearson_lower(
        BinomialCount(n2_count, cfg.n2), cfg.alpha, cfg.grid_bits
    )
    if p_lb > Fraction(1, 2):
        table = _table_for(cfg.sigma)
        q = conservative_quantile(table, p_lb)
        return CertificateResult(
            certified=True,
            label=c_hat,
            p_lb=p_lb,
            quantile_z=q,
            radius_sq_x4=(2 * q) ** 2,
            counts_select=counts1,
            counts_estimate=counts2,
        )
    return CertificateResult(
        certified=False,
        label=ABSTAIN,
        p_lb=p_lb,
        quantile_z=0,
        radius_sq_x4=0,
        counts_select=counts1,
        counts_estimate=counts2,
    )


def predict(
    target,
    x,
    cfg: CertConfig,
    num_samples: int | None = None,
    stream_path: tuple = (),
    noise_pool: np.ndarray | None = None,
) -> int:
    """Majority-vote prediction with a two-sided binomial abstention test.

    Draws N noisy votes (default cfg.n2), takes the top two counts, and
    returns the leader only if the exact two-sided p-value against a fair
    split is at most alpha; otherwise ABSTAIN.
    """
    n = cfg.n2 if num_samples is None else int(num_samples)
    if n < 1:
        raise ValueError("num_samples must be positive")
    x = np.asarray(x, dtype=np.int64)
    counts = _tally(
        target, x, n, cfg.sigma, (cfg.seed, *stream_path, _STREAM_PREDICT), noise_pool
    )
    top, n_a, _, n_b = _top_two(counts)
    if binomial_two_sided_pvalue(n_a, n_a + n_b) <= cfg.alpha:
        return top
    return ABSTAIN


def is_covered(cert: CertificateResult, delta_l2_sq: int) -> bool:
    """Exact integer coverage predicate: 4 * ||delta||^2 < radius_sq_x4."""
    if not cert.certified:
        raise ValueError("is_covered is defined only for certified results")
    if delta_l2_sq < 0:
        raise ValueError("squared norm must be non-negative")
    return 4 * delta_l2_sq < cert.radius_sq_x4


CSV_HEADER = (
    "input_id,predicted_label,n2_count,p_lb_num,p_lb_den,"
    "quantile_z,radius_sq_x4,abstain_flag,wall_time_us"
)


def to_csv_row(input_id: int, cert: CertificateResult, wall_time_us: int) -> str:
    return ",".join(
        str(v)
        for v in (
            input_id,
            cert.label,
            cert.n2_count,
            cert.p_lb.numerator,
            cert.p_lb.denominator,
            cert.quantile_z,
            cert.radius_sq_x4,
            0 if cert.certified else 1,
            wall_time_us,
        )
    )
