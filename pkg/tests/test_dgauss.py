"""Discrete Gaussian machinery: exact identities, sampler law, serialization."""

from fractions import Fraction

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from intsmooth import rng as rngmod
from intsmooth.dgauss import (
    CdfTable,
    NoiseParams,
    build_cdf_table,
    default_trunc,
    fixed_exp_neg,
    inverse_cdf,
    inverse_cdf_floor,
    load_cdf_table,
    noise_params,
    pmf,
    sample,
    sample_noise_pool,
    save_cdf_table,
)
from intsmooth.errors import OutOfSupportError

# e**(-1/8) * 2**128 rounded, from a 60-digit mpmath evaluation
# (mp.exp(mp.mpf(-1)/8) * 2**128); frozen so the test needs no mpmath.
_EXP_NEG_EIGHTH_Q128 = 300298134811882980317033350418940119803


def test_fixed_exp_matches_independent_high_precision_value():
    got = fixed_exp_neg(1, 8)
    assert abs(got - _EXP_NEG_EIGHTH_Q128) <= 1


def test_fixed_exp_boundaries():
    assert fixed_exp_neg(0, 1) == 1 << 128
    assert fixed_exp_neg(128, 1) == 0
    with pytest.raises(ValueError):
        fixed_exp_neg(-1, 2)
    with pytest.raises(ValueError):
        fixed_exp_neg(1, 0)


def test_default_trunc_policy():
    assert default_trunc(1, 1) == 16
    assert default_trunc(2, 1) == 20
    assert default_trunc(5, 2) == 25  # ceil(25.0)
    assert default_trunc(8, 3) == 27  # ceil(26.67)


def test_noise_params_validation():
    with pytest.raises(ValueError):
        NoiseParams(mu=0, sigma_num=2, sigma_den=4, trunc=20)  # not reduced
    with pytest.raises(ValueError):
        NoiseParams(mu=0, sigma_num=0, sigma_den=1, trunc=20)
    with pytest.raises(ValueError):
        noise_params(Fraction(-1, 2))
    p = noise_params(Fraction(5, 2))
    assert (p.sigma_num, p.sigma_den, p.trunc) == (5, 2, 25)


def test_pmf_mode_at_location():
    p = noise_params(1, mu=0)
    peak = pmf(p, 0)
    assert all(pmf(p, z) < peak for z in p.support_range() if z != 0)


def test_pmf_symmetry_exact():
    p = noise_params(1)
    assert pmf(p, 3) == pmf(p, -3)
    p2 = noise_params(Fraction(3, 2), mu=5)
    assert pmf(p2, 5 + 4) == pmf(p2, 5 - 4)


def test_pmf_out_of_support():
    p = noise_params(1)
    with pytest.raises(OutOfSupportError):
        pmf(p, p.trunc + 1)


def test_pmf_sigma2_matches_series_oracle():
    # independent oracle: direct series evaluation of exp(-h^2/8) at high
    # precision, computed with mpmath and compared as floats at 1e-30
    mp = pytest.importorskip("mpmath")
    mp.mp.dps = 60
    p = noise_params(2)
    assert p.trunc == 20
    weights = [mp.exp(-mp.mpf(h * h) / 8) for h in range(-20, 21)]
    oracle = weights[20] / sum(weights)
    got = pmf(p, 0)
    assert abs(mp.mpf(got.numerator) / got.denominator - oracle) < mp.mpf(10) ** -30


def test_pmf_normalizes_exactly():
    for sigma in (1, 2, Fraction(5, 2)):
        p = noise_params(sigma)
        total = sum(pmf(p, z) for z in p.support_range())
        assert total == 1


def test_cdf_table_monotone_and_terminal():
    t = build_cdf_table(noise_params(2))
    assert all(a < b for a, b in zip(t.cum, t.cum[1:]))
    assert t.cum[-1] == 1


def test_cdf_requires_centered():
    with pytest.raises(ValueError):
        build_cdf_table(noise_params(1, mu=3))


def test_cdf_phi_zero_symmetry():
    t = build_cdf_table(noise_params(1))
    assert t.phi(0) > Fraction(1, 2)
    assert t.phi(0) - Fraction(1, 2) == t.pmf(0) / 2


def test_cdf_symmetry_identity_exact():
    t = build_cdf_table(noise_params(1))
    for z in t.support():
        assert t.phi(z) + t.phi(-z - 1) == 1


def test_cdf_matches_direct_summation_oracle():
    p = noise_params(2)
    t = build_cdf_table(p)
    acc = Fraction(0)
    for z in t.support():
        acc += pmf(p, z)
        assert t.phi(z) == acc


def test_inverse_cdf_roundtrip_all_support():
    t = build_cdf_table(noise_params(2))
    for z in t.support():
        assert inverse_cdf(t, t.phi(z)) == z


def test_inverse_cdf_median_and_top():
    for sigma in (1, 2, 8):
        t = build_cdf_table(noise_params(sigma))
        assert inverse_cdf(t, Fraction(1, 2)) == 0
        assert inverse_cdf(t, 1) == t.trunc


def test_inverse_cdf_domain():
    t = build_cdf_table(noise_params(1))
    with pytest.raises(ValueError):
        inverse_cdf(t, 0)
    with pytest.raises(ValueError):
        inverse_cdf(t, Fraction(3, 2))


def test_inverse_cdf_floor_is_lower_adjoint():
    t = build_cdf_table(noise_params(2))
    for z in t.support():
        assert inverse_cdf_floor(t, t.phi(z)) == z
    # strictly between atoms the floor version sits one step below
    p_between = (t.phi(1) + t.phi(2)) / 2
    assert inverse_cdf(t, p_between) == 2
    assert inverse_cdf_floor(t, p_between) == 1


@given(st.integers(min_value=1, max_value=10**6 - 1))
@settings(max_examples=200, deadline=None)
def test_quantile_galois_connection(j):
    t = _table_sigma2()
    p = Fraction(j, 10**6)
    z = inverse_cdf(t, p)
    assert t.phi(z) >= p
    assert z == -t.trunc or t.phi(z - 1) < p


_TABLES = {}


def _table_sigma2() -> CdfTable:
    if 2 not in _TABLES:
        _TABLES[2] = build_cdf_table(noise_params(2))
    return _TABLES[2]


def test_inverse_symmetry_relation():
    t = _table_sigma2()
    for j in range(1, 1000):
        p = Fraction(j, 1000)
        if p == 1:
            continue
        z = inverse_cdf(t, p)
        zneg = inverse_cdf(t, 1 - p) if p != 1 else None
        assert zneg in (-z, -z - 1)


# --- sampler ---------------------------------------------------------------


def test_sampler_deterministic_across_streams():
    p = noise_params(1)
    a = [sample(p, rngmod.stream(99, 0)) for _ in range(1)]
    b = [sample(p, rngmod.stream(99, 0)) for _ in range(1)]
    assert a == b
    xs = [sample(p, r) for r in [rngmod.stream(123, 4)] for _ in range(20)]
    r2 = rngmod.stream(123, 4)
    assert xs == [sample(p, r2) for _ in range(20)]


def test_sampler_respects_location_and_truncation():
    p = noise_params(1, mu=100, trunc=3)
    r = rngmod.stream(5, 0)
    vals = [sample(p, r) for _ in range(2000)]
    assert all(97 <= v <= 103 for v in vals)
    assert min(vals) <= 99 and max(vals) >= 101


@pytest.mark.slow
def test_sampler_mean_within_clt_bound():
    p = noise_params(2)
    r = rngmod.stream(7, 1)
    n = 10**5
    total = sum(sample(p, r) for _ in range(n))
    assert abs(total / n) < 3 * 2 / n**0.5


@pytest.mark.slow
def test_sampler_tv_distance_sigma8():
    p = noise_params(8)
    r = rngmod.stream(11, 0)
    n = 10**5
    counts = {}
    for _ in range(n):
        v = sample(p, r)
        counts[v] = counts.get(v, 0) + 1
    tv = sum(
        abs(Fraction(counts.get(z, 0), n) - pmf(p, z)) for z in p.support_range()
    ) / 2
    assert tv < 0.01


def test_noise_pool_shape_and_determinism():
    p = noise_params(1)
    pool = sample_noise_pool(p, 1, 4, rngmod.stream(3, 0))
    assert pool.shape == (1, 4)
    a = sample_noise_pool(p, 10, 3, rngmod.stream(3, 1))
    b = sample_noise_pool(p, 10, 3, rngmod.stream(3, 1))
    assert np.array_equal(a, b)


def test_noise_pool_rejects_degenerate():
    p = noise_params(1)
    with pytest.raises(ValueError):
        sample_noise_pool(p, 0, 4, rngmod.stream(0, 0))


@pytest.mark.slow
def test_noise_pool_tv_check():
    p = noise_params(2)
    pool = sample_noise_pool(p, 100, 500, rngmod.stream(13, 0))
    flat = pool.ravel()
    n = flat.size
    tv = sum(
        abs(Fraction(int((flat == z).sum()), n) - pmf(p, z)) for z in p.support_range()
    ) / 2
    assert tv < 0.01


# --- serialization ----------------------------------------------------------


def test_cdf_serialization_roundtrip(tmp_path):
    t = build_cdf_table(noise_params(2))
    path = tmp_path / "sigma2.irscdf"
    save_cdf_table(t, path)
    loaded = load_cdf_table(path)
    assert loaded.params == t.params
    assert len(loaded.cum) == len(t.cum)
    assert loaded.cum[-1] == 1
    assert all(a < b for a, b in zip(loaded.cum, loaded.cum[1:]))
    # quantile agreement on the certification grid
    for j in range(1, 64):
        p = Fraction(j, 64)
        assert inverse_cdf(loaded, p) == inverse_cdf(t, p)
        assert inverse_cdf_floor(loaded, p) == inverse_cdf_floor(t, p)


def test_cdf_serialization_bad_magic(tmp_path):
    path = tmp_path / "bad.irscdf"
    path.write_bytes(b"NOTCDF1" + b"\x00" * 64)
    with pytest.raises(Exception):
        load_cdf_table(path)


def test_cdf_serialization_truncated(tmp_path):
    t = build_cdf_table(noise_params(2))
    path = tmp_path / "t.irscdf"
    save_cdf_table(t, path)
    blob = path.read_bytes()
    path.write_bytes(blob[:-7])
    with pytest.raises(Exception):
        load_cdf_table(path)
