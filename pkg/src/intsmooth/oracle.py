"""Brute-force verification of the smoothing certificate on tiny domains.

Everything here is exact: smoothed class probabilities are rational sums
over the full noise support, so a certificate checked against this module
either provably holds or provably fails, never statistically.

Two lattice conventions are supported. On the wrapped (cyclic) lattice,
noisy addition is translation on a finite group, which is the setting
where the normalizing-constant cancellation behind the likelihood-ratio
argument is exact. On the clamped lattice, addition saturates at the
domain boundary the way deployed pixel arithmetic does; sweeping both
separates the guarantee as proved from the guarantee as deployed.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from fractions import Fraction

import numpy as np

from .certify import conservative_quantile
from .dgauss import NoiseParams, build_cdf_table, _weights

WRAPPED = "wrapped"
CLAMPED = "clamped"


@dataclass(frozen=True)
class TinyDomain:
    """A per-coordinate range [-half_width, half_width], fully enumerable."""

    d: int
    half_width: int

    def __post_init__(self):
        if not 1 <= self.d <= 3:
            raise ValueError("d must lie in [1, 3]")
        if not 1 <= self.half_width <= 8:
            raise ValueError("half_width must lie in [1, 8]")
        if self.size() > 20000:
            raise ValueError("domain too large to enumerate")

    @property
    def modulus(self) -> int:
        return 2 * self.half_width + 1

    def size(self) -> int:
        return self.modulus**self.d

    def points(self):
        rng = range(-self.half_width, self.half_width + 1)
        return itertools.product(*([rng] * self.d))

    def add(self, x, n, mode: str):
        w, m = self.half_width, self.modulus
        if mode == WRAPPED:
            return tuple((xi + ni + w) % m - w for xi, ni in zip(x, n))
        if mode == CLAMPED:
            return tuple(min(max(xi + ni, -w), w) for xi, ni in zip(x, n))
        raise ValueError(f"unknown mode {mode!r}")

    def index(self, x) -> tuple:
        return tuple(xi + self.half_width for xi in x)


@dataclass(frozen=True)
class TabularClassifier:
    """A total map from every domain point to a class label."""

    domain: TinyDomain
    table: np.ndarray  # integer labels, shape (modulus,) * d
    num_classes: int

    def __post_init__(self):
        expected = (self.domain.modulus,) * self.domain.d
        if self.table.shape != expected:
            raise ValueError(f"table shape {self.table.shape} != {expected}")
        if self.table.min() < 0 or self.table.max() >= self.num_classes:
            raise ValueError("labels out of range")

    def label(self, x) -> int:
        return int(self.table[self.domain.index(x)])


def random_tabular(domain: TinyDomain, num_classes: int, seed: int) -> TabularClassifier:
    gen = np.random.Generator(np.random.PCG64(seed))
    table = gen.integers(0, num_classes, size=(domain.modulus,) * domain.d)
    return TabularClassifier(domain=domain, table=table, num_classes=num_classes)


def _noise_support(sigma: NoiseParams):
    ws, _total = _weights(sigma.sigma_num, sigma.sigma_den, sigma.trunc)
    return ws, range(-sigma.trunc, sigma.trunc + 1)


def smoothed_numerators(
    f: TabularClassifier, x, sigma: NoiseParams, mode: str = WRAPPED
) -> tuple[list, int]:
    """Per-class unnormalized masses and the common denominator.

    The numerators are exact integer sums of products of per-coordinate
    noise weights; dividing by the denominator gives the class
    probabilities of the smoothed classifier at x.
    """
    if sigma.mu != 0:
        raise ValueError("smoothing noise must be centered")
    if sigma.trunc > f.domain.half_width:
        raise ValueError("noise truncation exceeds the domain half-width")
    ws, support = _noise_support(sigma)
    dom = f.domain
    total = ws[0] + 2 * sum(ws[1:])
    numer = [0] * f.num_classes
    for n in itertools.product(*([support] * dom.d)):
        weight = 1
        for ni in n:
            weight *= ws[abs(ni)]
        numer[f.label(dom.add(x, n, mode))] += weight
    return numer, total**dom.d


def exact_smoothed_prob(
    f: TabularClassifier, x, sigma: NoiseParams, c: int, mode: str = WRAPPED
) -> Fraction:
    """Exact P[f(x (+) noise) = c] over the discrete Gaussian noise."""
    if not 0 <= c < f.num_classes:
        raise ValueError("class out of range")
    numer, den = smoothed_numerators(f, x, sigma, mode)
    return Fraction(numer[c], den)


def smoothed_argmax(numer: list) -> tuple[int, int]:
    """(argmax label with lowest-index ties, its numerator)."""
    best = max(range(len(numer)), key=lambda c: (numer[c], -c))
    return best, numer[best]


class SmoothedTable:
    """All smoothed class numerators of one classifier, precomputed."""

    def __init__(self, f: TabularClassifier, sigma: NoiseParams, mode: str = WRAPPED):
        self.f = f
        self.sigma = sigma
        self.mode = mode
        self.numer: dict[tuple, list] = {}
        for x in f.domain.points():
            numer, den = smoothed_numerators(f, x, sigma, mode)
            self.numer[x] = numer
            self.den = den

    def prob(self, x, c: int) -> Fraction:
        return Fraction(self.numer[x][c], self.den)

    def argmax(self, x) -> tuple[int, Fraction]:
        c, num = smoothed_argmax(self.numer[x])
        return c, Fraction(num, self.den)


# ---------------------------------------------------------------------------
# Likelihood-ratio structure checks (ratio ordering and the NP lemma)
# ---------------------------------------------------------------------------

_EQ_SLACK_BITS = 100  # fixed-point weight tables match true ratios far closer


def _ratio_parts(z, x, delta, ws, trunc):
    """(numerator, denominator) of pmf_Y(z)/pmf_X(z), or None if off-support."""
    num = 1
    den = 1
    for zi, xi, di in zip(z, x, delta):
        a = zi - xi - di
        b = zi - xi
        if abs(a) > trunc or abs(b) > trunc:
            return None
        num *= ws[abs(a)]
        den *= ws[abs(b)]
    return num, den


def likelihood_ratio_order_check(
    f_domain: TinyDomain, x, delta, sigma: NoiseParams
) -> bool:
    """Verify the ratio pmf_Y/pmf_X orders exactly like the inner product.

    Enumerates every pair of points whose shifted and unshifted positions
    both stay inside the truncated noise support (where the exponential
    cancellation is an identity), comparing exact cross-products. Pairs at
    equal inner product must agree to within the weight-table quantization;
    strictly ordered pairs must order strictly.
    """
    ws, _ = _noise_support(sigma)
    trunc = sigma.trunc
    pts = []
    for z in f_domain.points():
        parts = _ratio_parts(z, x, delta, ws, trunc)
        if parts is not None:
            inner = sum(zi * di for zi, di in zip(z, delta))
            pts.append((inner, parts[0], parts[1]))
    for (i1, n1, d1), (i2, n2, d2) in itertools.combinations(pts, 2):
        lhs = n1 * d2
        rhs = n2 * d1
        if i1 == i2:
            slack = (lhs + rhs) >> _EQ_SLACK_BITS
            if abs(lhs - rhs) > slack:
                return False
        elif i1 < i2:
            if lhs > rhs:
                return False
        else:
            if lhs < rhs:
                return False
    return True


def lemma_np_check(p_x: dict, p_y: dict, alpha: Fraction, h: dict) -> tuple:
    """Both directions of the discrete Neyman-Pearson lemma by enumeration.

    p_x, p_y map points to exact probabilities; h maps points to {0, 1}.
    Returns ((premise1, conclusion1), (premise2, conclusion2)) where part 1
    uses the low-ratio set {p_y/p_x <= alpha} and part 2 the high-ratio
    set. A sound lemma never shows premise True with conclusion False.
    """
    low = {z for z in p_x if p_x[z] > 0 and Fraction(p_y[z], 1) / p_x[z] <= alpha}
    high = {z for z in p_x if p_x[z] == 0 or Fraction(p_y[z], 1) / p_x[z] >= alpha}
    ph_x = sum(p_x[z] for z in p_x if h[z])
    ph_y = sum(p_y[z] for z in p_y if h[z])
    p_low_x = sum(p_x[z] for z in low)
    p_low_y = sum(p_y[z] for z in low)
    p_high_x = sum(p_x[z] for z in high)
    p_high_y = sum(p_y[z] for z in high)
    part1 = (ph_x >= p_low_x, ph_y >= p_low_y)
    part2 = (ph_x <= p_high_x, ph_y <= p_high_y)
    return part1, part2


def noise_distributions(
    domain: TinyDomain, x, delta, sigma: NoiseParams, mode: str = WRAPPED
) -> tuple[dict, dict]:
    """Exact laws of X = x (+) n and Y = (x + delta) (+) n over the domain."""
    ws, support = _noise_support(sigma)
    total = ws[0] + 2 * sum(ws[1:])
    den = total**domain.d
    p_x = {z: Fraction(0) for z in domain.points()}
    p_y = {z: Fraction(0) for z in domain.points()}
    y0 = domain.add(x, delta, mode)
    for n in itertools.product(*([support] * domain.d)):
        weight = 1
        for ni in n:
            weight *= ws[abs(ni)]
        p_x[domain.add(x, n, mode)] += Fraction(weight, den)
        p_y[domain.add(y0, n, mode)] += Fraction(weight, den)
    return p_x, p_y


# ---------------------------------------------------------------------------
# Certificate soundness sweep
# ---------------------------------------------------------------------------


@dataclass
class SweepRow:
    instance: str
    x: tuple
    certified: bool
    label: int
    p_a: Fraction
    quantile_z: int
    radius_sq_x4: int
    covered_count: int
    violations: int
    min_flip_sq: int | None  # smallest ||delta||^2 that changes the argmax
    margin_sq: int | None  # min_flip_sq - first uncovered norm, when certified


@dataclass
class SweepReport:
    mode: str
    rows: list

    @property
    def total_violations(self) -> int:
        return sum(r.violations for r in self.rows)

    @property
    def certified_count(self) -> int:
        return sum(1 for r in self.rows if r.certified)

    def to_csv(self) -> str:
        lines = [
            "instance,x,certified,label,p_a_num,p_a_den,quantile_z,"
            "radius_sq_x4,covered_count,violations,min_flip_sq,margin_sq"
        ]
        for r in self.rows:
            lines.append(
                ",".join(
                    str(v)
                    for v in (
                        r.instance,
                        ";".join(map(str, r.x)),
                        int(r.certified),
                        r.label,
                        r.p_a.numerator,
                        r.p_a.denominator,
                        r.quantile_z,
                        r.radius_sq_x4,
                        r.covered_count,
                        r.violations,
                        "" if r.min_flip_sq is None else r.min_flip_sq,
                        "" if r.margin_sq is None else r.margin_sq,
                    )
                )
            )
        return "\n".join(lines) + "\n"


def _domain_deltas(domain: TinyDomain):
    for delta in domain.points():
        yield delta, sum(di * di for di in delta)


def sweep_classifier(
    f: TabularClassifier,
    sigma: NoiseParams,
    mode: str = WRAPPED,
    instance_name: str = "f",
    xs=None,
) -> list:
    """Certify every requested point exactly and verify every covered delta.

    Uses the exact smoothed probability as the confidence bound (no
    Monte-Carlo), so any reported violation is a counterexample to the
    radius rule itself, not sampling noise.
    """
    table = SmoothedTable(f, sigma, mode)
    cdf = build_cdf_table(sigma)
    half = Fraction(1, 2)
    rows = []
    deltas = list(_domain_deltas(f.domain))
    for x in table.numer if xs is None else xs:
        c_a, p_a = table.argmax(x)
        if p_a <= half:
            rows.append(
                SweepRow(instance_name, x, False, c_a, p_a, 0, 0, 0, 0, None, None)
            )
            continue
        q = conservative_quantile(cdf, p_a)
        radius_sq_x4 = (2 * q) ** 2
        covered = 0
        violations = 0
        min_flip_sq = None
        for delta, dsq in deltas:
            z = f.domain.add(x, delta, mode)
            c_b, num_b = smoothed_argmax(table.numer[z])
            preserved = c_b == c_a
            if not preserved and (min_flip_sq is None or dsq < min_flip_sq):
                min_flip_sq = dsq
            if 4 * dsq < radius_sq_x4:
                covered += 1
                if not preserved:
                    violations += 1
        margin = None
        if min_flip_sq is not None:
            margin = 4 * min_flip_sq - radius_sq_x4
        rows.append(
            SweepRow(
                instance_name,
                x,
                True,
                c_a,
                p_a,
                q,
                radius_sq_x4,
                covered,
                violations,
                min_flip_sq,
                margin,
            )
        )
    return rows


def certificate_soundness_sweep(instances, mode: str = WRAPPED) -> SweepReport:
    """Run the exact certification sweep over (name, f, sigma) instances."""
    rows = []
    for name, f, sigma in instances:
        rows.extend(sweep_classifier(f, sigma, mode, instance_name=name))
    return SweepReport(mode=mode, rows=rows)


# ---------------------------------------------------------------------------
# Adversarial fixtures and worst-case classifiers
# ---------------------------------------------------------------------------


def ratio_sorted_points(domain: TinyDomain, x, delta, sigma: NoiseParams, mode: str):
    """Domain points sorted by the exact likelihood ratio p_Y/p_X ascending.

    Points with zero X-mass sort last (ratio +inf); pY = pX = 0 points are
    placed with them (they carry no mass either way).
    """
    p_x, p_y = noise_distributions(domain, x, delta, sigma, mode)
    finite = []
    infinite = []
    for z in domain.points():
        if p_x[z] > 0:
            finite.append((p_y[z] / p_x[z], z))
        else:
            infinite.append(z)
    finite.sort(key=lambda t: t[0])
    return [z for _, z in finite] + infinite, p_x, p_y


def worst_case_classifier(
    domain: TinyDomain,
    x,
    delta,
    sigma: NoiseParams,
    p_level: Fraction,
    mode: str = WRAPPED,
) -> tuple[TabularClassifier, Fraction, Fraction]:
    """A binary classifier adversarial for the given shift direction.

    Greedily assigns class 0 to the lowest likelihood-ratio points until
    their X-mass reaches p_level; everything else is class 1. Returns the
    classifier with its exact p_A = P[f(X) = 0] and P[f(Y) = 0]. This is
    the Neyman-Pearson extremal shape: among classifiers with top-class
    mass >= p_level it (greedily) minimizes the smoothed top-class mass
    after the shift.
    """
    order, p_x, p_y = ratio_sorted_points(domain, x, delta, sigma, mode)
    table = np.ones((domain.modulus,) * domain.d, dtype=np.int64)
    mass_x = Fraction(0)
    mass_y = Fraction(0)
    for z in order:
        if mass_x >= p_level:
            break
        table[domain.index(z)] = 0
        mass_x += p_x[z]
        mass_y += p_y[z]
    f = TabularClassifier(domain=domain, table=table, num_classes=2)
    return f, mass_x, mass_y
