import math

import mpmath as mp
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats as sps

from sl2walk.stats import (
    CharFnGrid,
    EmpiricalSample,
    GridTooCoarseError,
    MomentAccumulator,
    acc_merge,
    acc_push,
    empirical_cf,
    jackknife_variance,
    ks_distance,
    make_t_grid,
    n_rho,
    n_rho_standardized,
    normal_cdf,
    standardize,
    tail_prob,
)

finite = st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False)


@given(st.lists(finite, min_size=2, max_size=60))
def test_push_matches_batch(xs):
    acc = MomentAccumulator()
    for x in xs:
        acc = acc_push(acc, x)
    ref = MomentAccumulator.from_values(xs)
    assert acc.count == ref.count
    assert acc.mean == pytest.approx(ref.mean, abs=1e-9)
    assert acc.m2 == pytest.approx(ref.m2, rel=1e-7, abs=1e-6)
    assert acc.m3 == pytest.approx(ref.m3, rel=1e-6, abs=1e-3)


@given(st.lists(finite, min_size=1, max_size=40), st.lists(finite, min_size=1, max_size=40))
def test_merge_matches_concatenation(xs, ys):
    merged = acc_merge(MomentAccumulator.from_values(xs), MomentAccumulator.from_values(ys))
    ref = MomentAccumulator.from_values(xs + ys)
    assert merged.mean == pytest.approx(ref.mean, abs=1e-9)
    assert merged.m2 == pytest.approx(ref.m2, rel=1e-7, abs=1e-6)
    assert merged.m3 == pytest.approx(ref.m3, rel=1e-6, abs=1e-2)


def test_accumulator_stats():
    x = np.random.default_rng(0).standard_exponential(200_000)
    acc = MomentAccumulator.from_values(x)
    assert acc.sample_variance == pytest.approx(np.var(x, ddof=1))
    assert acc.skewness == pytest.approx(sps.skew(x), rel=1e-9)
    assert acc.mean_se == pytest.approx(np.std(x, ddof=1) / math.sqrt(x.size))
    with pytest.raises(ValueError):
        acc_push(acc, math.inf)


def test_jackknife_matches_naive_delete_group():
    x = np.random.default_rng(1).normal(size=1000)
    var, se = jackknife_variance(x, groups=10)
    blocks = np.array_split(x, 10)
    reps = np.array([np.var(np.concatenate(blocks[:k] + blocks[k + 1:]), ddof=1) for k in range(10)])
    naive = math.sqrt(9 / 10 * np.sum((reps - reps.mean()) ** 2))
    assert var == pytest.approx(np.var(x, ddof=1))
    assert se == pytest.approx(naive, rel=1e-9)


def test_normal_cdf_against_mpmath():
    xs = np.linspace(-8, 8, 401)
    ref = np.array([float(mp.ncdf(x)) for x in xs])
    assert np.max(np.abs(normal_cdf(xs) - ref)) < 1e-7


def test_ks_distance_matches_scipy():
    x = np.random.default_rng(2).normal(size=5000)
    assert ks_distance(EmpiricalSample.from_values(x)) == pytest.approx(sps.kstest(x, "norm").statistic, abs=1e-12)


def test_ks_noise_floor_quantile():
    # under the null sqrt(N) D_N follows the Kolmogorov law
    n = 10_000
    ds = [ks_distance(EmpiricalSample.from_values(np.random.default_rng(s).normal(size=n))) for s in range(40)]
    q = sps.kstwobign.ppf(0.999) / math.sqrt(n)
    assert max(ds) < q


def test_tail_prob_and_standardize():
    s = EmpiricalSample.from_values([1, 2, 3, 4])
    assert tail_prob(s, 2) == 0.5
    assert tail_prob(s, 4) == 0.0
    z = standardize([1.0, 2.0, 3.0])
    assert z.mean() == pytest.approx(0) and z.std() == pytest.approx(1)
    with pytest.raises(ValueError):
        standardize([2.0, 2.0])
    with pytest.raises(ValueError):
        EmpiricalSample.from_values([1.0, 1.0]).standardized()


def test_empirical_cf_matches_direct_sum():
    x = np.random.default_rng(3).normal(size=3000)
    t = make_t_grid(1.7, 65)
    cf = empirical_cf(EmpiricalSample.from_values(x), t)
    ref = np.exp(1j * np.outer(x, t)).mean(axis=0)
    assert np.max(np.abs(cf.phi - ref)) < 1e-12
    # non-uniform symmetric grid takes the direct path
    t2 = np.array([-1.0, -0.3, 0.0, 0.3, 1.0])
    cf2 = empirical_cf(EmpiricalSample.from_values(x), t2)
    assert np.max(np.abs(cf2.phi - np.exp(1j * np.outer(x, t2)).mean(axis=0))) < 1e-12


def exp_cf(t):
    return np.exp(-1j * t) / (1 - 1j * t)


def mp_n_rho(cf, rho, points=4000):
    """Independent oracle: sup of |log(phi e^{t^2/2})|/t^3 on a fine grid, principal log."""
    best = mp.mpf(0)
    for k in range(1, points + 1):
        t = mp.mpf(rho) * k / (points + 1)
        best = max(best, abs(mp.log(cf(t)) + t * t / 2) / t**3)
    return float(best)


def test_n_rho_analytic_exponential():
    mp.mp.dps = 30
    mp_exp = lambda t: mp.exp(-1j * t) / (1 - 1j * t)  # noqa: E731
    for rho in (0.25, 0.5, 1.0):
        got = n_rho(CharFnGrid.from_function(make_t_grid(rho), exp_cf), rho)
        assert got == pytest.approx(mp_n_rho(mp_exp, rho, 500), rel=1e-3)
        # the supremum is the t -> 0 limit |kappa_3| / 6 = 1/3
        assert got == pytest.approx(1 / 3, rel=2e-3)


def test_n_rho_gaussian_is_zero():
    g = CharFnGrid.from_function(make_t_grid(1.0), lambda t: np.exp(-t * t / 2))
    assert n_rho(g, 1.0) < 1e-9


def test_n_rho_unbounded_when_cf_vanishes():
    a = math.sqrt(3)  # uniform on [-a, a] has unit variance and phi(pi / a) = 0
    cf = CharFnGrid.from_function(make_t_grid(2.0, 257), lambda t: np.sinc(a * t / np.pi))
    assert n_rho(cf, 2.0) == math.inf


def test_n_rho_grid_checks():
    cf = CharFnGrid.from_function(make_t_grid(1.0, 33), exp_cf)
    with pytest.raises(ValueError, match="spacing"):
        n_rho(cf, 1.0)
    with pytest.raises(ValueError):
        n_rho(cf, 0.0)
    # a fast-rotating CF (mean 150) cannot be unwrapped on a coarse grid
    shifted = CharFnGrid.from_function(make_t_grid(1.0, 129), lambda t: np.exp(150j * t - t * t / 2))
    with pytest.raises(GridTooCoarseError):
        n_rho(shifted, 1.0)


@settings(max_examples=10, deadline=None)
@given(st.integers(0, 2**31))
def test_n_rho_is_scale_and_shift_invariant(seed):
    x = np.random.default_rng(seed).gamma(3.0, size=20_000)
    a = n_rho_standardized(x, 0.5, 129)
    b = n_rho_standardized(5.0 * x - 7.0, 0.5, 129)
    assert a == pytest.approx(b, rel=1e-9)


def test_n_rho_empirical_exponential():
    x = np.random.default_rng(4).standard_exponential(400_000)
    assert n_rho_standardized(x, 0.25) == pytest.approx(1 / 3, rel=0.1)
