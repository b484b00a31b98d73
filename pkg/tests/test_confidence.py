"""Exact binomial confidence machinery against brute-force oracles."""

import random
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intsmooth.confidence import (
    BinomialCount,
    binomial_two_sided_pvalue,
    clopper_pearson_lower,
)
from helpers import exact_binomial_upper_tail

GRID = Fraction(1, 2**20)


def test_count_validation():
    with pytest.raises(ValueError):
        BinomialCount(successes=5, trials=4)
    with pytest.raises(ValueError):
        BinomialCount(successes=-1, trials=4)
    with pytest.raises(ValueError):
        BinomialCount(successes=0, trials=0)


def test_alpha_and_grid_validation():
    c = BinomialCount(3, 10)
    for bad in (0, 1, Fraction(5, 4), -1):
        with pytest.raises(ValueError):
            clopper_pearson_lower(c, bad)
    with pytest.raises(ValueError):
        clopper_pearson_lower(c, Fraction(1, 20), grid_bits=8)


def test_cp_zero_successes():
    assert clopper_pearson_lower(BinomialCount(0, 50), Fraction(1, 20)) == 0


def test_cp_all_successes_closed_form():
    # with k = N the upper tail is p^N, so the bound is the largest grid
    # point with p^N <= alpha (grid floor of alpha^(1/N))
    alpha = Fraction(1, 1000)
    for n in (1, 7, 100):
        p = clopper_pearson_lower(BinomialCount(n, n), alpha)
        assert p**n <= alpha
        assert (p + GRID) ** n > alpha


def test_cp_81_of_100_vs_exact_tail_oracle():
    alpha = Fraction(1, 1000)
    p = clopper_pearson_lower(BinomialCount(81, 100), alpha)
    assert exact_binomial_upper_tail(81, 100, p) <= alpha
    assert exact_binomial_upper_tail(81, 100, p + GRID) > alpha


def test_cp_never_exceeds_exact_bound_small_sweep():
    alpha = Fraction(1, 20)
    for n in (1, 2, 3, 10, 17):
        for k in range(1, n + 1):
            p = clopper_pearson_lower(BinomialCount(k, n), alpha)
            assert exact_binomial_upper_tail(k, n, p) <= alpha


@given(
    n=st.integers(min_value=1, max_value=60),
    k1=st.integers(min_value=0, max_value=60),
    k2=st.integers(min_value=0, max_value=60),
)
@settings(max_examples=60, deadline=None)
def test_cp_monotone_in_successes(n, k1, k2):
    k1, k2 = min(k1, n), min(k2, n)
    if k1 > k2:
        k1, k2 = k2, k1
    alpha = Fraction(1, 20)
    p1 = clopper_pearson_lower(BinomialCount(k1, n), alpha)
    p2 = clopper_pearson_lower(BinomialCount(k2, n), alpha)
    assert p1 <= p2


def test_cp_monotone_in_alpha():
    c = BinomialCount(40, 50)
    p_strict = clopper_pearson_lower(c, Fraction(1, 1000))
    p_loose = clopper_pearson_lower(c, Fraction(1, 20))
    assert p_strict <= p_loose


@pytest.mark.slow
def test_cp_statistical_coverage():
    # 10^4 simulated Bernoulli(.7) experiments, N=100, alpha=.05: the bound
    # exceeds the true rate in at most alpha plus 3-sigma simulation slack
    alpha = Fraction(1, 20)
    rng = random.Random(424242)
    n, trials, p_true = 100, 10**4, 0.7
    exceed = 0
    for _ in range(trials):
        k = sum(rng.random() < p_true for _ in range(n))
        if clopper_pearson_lower(BinomialCount(k, n), alpha) > Fraction(7, 10):
            exceed += 1
    bound = 0.05 + 3 * (0.05 * 0.95 / trials) ** 0.5
    assert exceed / trials <= bound


def test_pvalue_balanced_is_one():
    assert binomial_two_sided_pvalue(5, 10) == 1


def test_pvalue_all_successes_closed_form():
    for n in (1, 3, 10, 25):
        expect = min(Fraction(1), 2 * Fraction(1, 2**n))
        assert binomial_two_sided_pvalue(n, n) == expect


def test_pvalue_8_of_10_oracle():
    assert binomial_two_sided_pvalue(8, 10) == Fraction(7, 64)


def test_pvalue_symmetry_and_denominator():
    for n in (5, 12, 30):
        for k in range(n + 1):
            p = binomial_two_sided_pvalue(k, n)
            assert p == binomial_two_sided_pvalue(n - k, n)
            assert (1 << n) % p.denominator == 0
            assert 0 < p <= 1


def test_pvalue_validation():
    with pytest.raises(ValueError):
        binomial_two_sided_pvalue(0, 0)
    with pytest.raises(ValueError):
        binomial_two_sided_pvalue(5, 4)
