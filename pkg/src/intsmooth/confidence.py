"""Exact binomial confidence machinery in rational arithmetic.

One-sided Clopper-Pearson lower bounds and two-sided binomial tests with no
floating-point operations anywhere: tail probabilities are exact integer
sums compared against rational thresholds, with rigorous geometric tail
bounds used only to terminate summation early (never to approximate the
decision).
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from math import comb, isqrt

DEFAULT_GRID_BITS = 20


@dataclass(frozen=True)
class BinomialCount:
    """Observed successes out of a fixed number of Bernoulli trials."""

    successes: int
    trials: int

    def __post_init__(self):
        if self.trials < 1:
            raise ValueError("trials must be positive")
        if not 0 <= self.successes <= self.trials:
            raise ValueError("successes must lie in [0, trials]")


def _validate_alpha(alpha) -> Fraction:
    alpha = Fraction(alpha)
    if not 0 < alpha < 1:
        raise ValueError("alpha must satisfy 0 < alpha < 1")
    return alpha


def _upper_tail_le(k: int, n: int, a: int, g: int, alpha: Fraction, c0: int) -> bool:
    """Exact decision of P[Bin(n, a/2**g) >= k] <= alpha, with c0 = C(n, k).

    Terms C(n,j) a**j b**(n-j) are accumulated against alpha * 2**(g*n) in
    scaled integers. Two rigorous shortcuts keep this fast: the binomial
    median bound settles probes at or below the empirical rate, and once
    the term ratio is below one a geometric remainder bound settles the
    comparison without summing to n.
    """
    if k == 0:
        return 1 <= alpha
    if a == 0:
        return True  # tail is zero for k >= 1
    b = (1 << g) - a
    if b == 0:
        return False  # p = 1 makes the tail one; alpha < 1
    # Median bound: k <= floor(n*p) implies the tail is at least 1/2.
    if k * (1 << g) <= n * a and alpha < Fraction(1, 2):
        return False
    an, ad = alpha.numerator, alpha.denominator
    rhs = an << (g * n)
    term = c0 * pow(a, k) * pow(b, n - k)
    partial = term
    j = k
    while True:
        scaled = ad * partial
        if scaled > rhs:
            return False
        if j == n:
            return scaled <= rhs
        nxt = term * a * (n - j) // ((j + 1) * b)
        # ratio after j+1 is (n-j-1)a / ((j+2)b), decreasing in j
        num_r = (n - j - 1) * a
        den_r = (j + 2) * b
        if num_r < den_r:
            # remaining sum <= nxt * den_r / (den_r - num_r)
            bound = nxt * den_r // (den_r - num_r) + 1
            if ad * (partial + nxt + bound) <= rhs:
                return True
        j += 1
        term = nxt
        partial += term


# Bisection brackets learned from earlier calls at the same (trials, alpha,
# grid); the bound is monotone in the success count, so neighbours bracket
# new queries tightly. Purely an accelerator: results are identical with or
# without a warm cache.
_bracket_cache: dict[tuple, dict[int, int]] = {}


def _hoeffding_floor(k: int, n: int, g: int, alpha: Fraction) -> int:
    """A grid index provably at or below the answer (Hoeffding tail bound).

    For p <= k/n - sqrt(ln(1/alpha) / (2n)) the upper tail is certainly
    within alpha; ln(1/alpha) is over-estimated through bit lengths so the
    bound stays rigorous in pure integer arithmetic.
    """
    ratio_bits = (alpha.denominator // alpha.numerator).bit_length()
    ln_inv_alpha_ub_scaled = 7 * (ratio_bits + 1)  # ln 2 < 0.7, scaled by 10
    # eps = sqrt(L / (2n)); grid units: floor(eps * 2**g)
    eps_grid = isqrt(ln_inv_alpha_ub_scaled * (1 << (2 * g)) // (20 * n)) + 1
    return max(0, k * (1 << g) // n - eps_grid)


def clopper_pearson_lower(
    count: BinomialCount, alpha, grid_bits: int = DEFAULT_GRID_BITS
) -> Fraction:
    """Conservative one-sided (1 - alpha) lower confidence bound.

    Returns the largest dyadic grid point p = j / 2**grid_bits whose exact
    binomial upper tail P[Bin(trials, p) >= successes] stays within alpha.
    Rounding down to the grid never exceeds the exact Clopper-Pearson bound,
    so the result is always statistically valid.
    """
    alpha = _validate_alpha(alpha)
    if grid_bits < 16:
        raise ValueError("grid_bits must be at least 16")
    k, n = count.successes, count.trials
    if k == 0:
        return Fraction(0)
    key = (n, alpha.numerator, alpha.denominator, grid_bits)
    seen = _bracket_cache.setdefault(key, {})
    if k in seen:
        return Fraction(seen[k], 1 << grid_bits)
    c0 = comb(n, k)

    def predicate(a: int) -> bool:
        return _upper_tail_le(k, n, a, grid_bits, alpha, c0)

    # Bracket [lo, hi): predicate(lo) True, predicate(hi) False.
    lo, hi = 0, 1 << grid_bits
    for k2, idx2 in seen.items():
        if k2 <= k and idx2 > lo:
            lo = idx2
        if k2 > k and idx2 + 1 < hi:
            hi = idx2 + 1
    if alpha < Fraction(1, 2):
        lo = max(lo, _hoeffding_floor(k, n, grid_bits, alpha))
        hi = min(hi, k * (1 << grid_bits) // n + 2)
    if not predicate(lo):
        lo = 0  # degenerate guard; bracket hints are advisory only
    if hi <= lo:
        hi = lo + 1
    elif predicate(hi - 1):
        lo = hi - 1
    while hi - lo > 1:
        mid = (lo + hi) // 2
        if predicate(mid):
            lo = mid
        else:
            hi = mid
    if len(seen) < 4096:
        seen[k] = lo
    return Fraction(lo, 1 << grid_bits)


def binomial_two_sided_pvalue(k: int, n: int) -> Fraction:
    """Exact two-sided p-value for H0: p = 1/2 given k successes in n trials.

    Computed as min(1, 2 * min(P[X >= k], P[X <= k])); the denominator
    always divides 2**n.
    """
    if n < 1:
        raise ValueError("n must be positive")
    if not 0 <= k <= n:
        raise ValueError("k must lie in [0, n]")
    # By symmetry at p = 1/2, min(P[X >= k], P[X <= k]) = P[X >= max(k, n-k)],
    # a sum of at most n/2 + 1 binomial coefficients, built incrementally.
    m = max(k, n - k)
    c = comb(n, m)
    total = c
    for j in range(m, n):
        c = c * (n - j) // (j + 1)
        total += c
    return min(Fraction(1), 2 * Fraction(total, 1 << n))
