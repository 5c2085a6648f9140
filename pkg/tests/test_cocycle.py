import math

import mpmath as mp
import numpy as np
import pytest

from sl2walk.cocycle import (
    identity_product,
    log_norm,
    push,
    simulate_direction,
    simulate_direction_batch,
    simulate_split,
    simulate_split_batch,
    simulate_xi,
    simulate_xi_batch,
)
from sl2walk.measures import FiniteSupport, Stationary, draw_letters, preset
from sl2walk.sl2core import ProjectivePoint, SL2Matrix, proj_distance


def mp_log_norm(letters):
    m = mp.eye(2)
    for a, b, c, d in letters:
        m = mp.matrix([[a, b], [c, d]]) * m
    g = m.T * m
    t, det = g[0, 0] + g[1, 1], g[0, 0] * g[1, 1] - g[0, 1] * g[1, 0]
    return mp.log(mp.sqrt((t + mp.sqrt(t * t - 4 * det)) / 2))


def test_scaled_product_matches_extended_precision():
    mp.mp.dps = 50
    sch = preset("rot-hyp")
    rng = np.random.default_rng(17)
    for length in (1, 5, 40, 300):
        letters = [tuple(float(x[0]) for x in draw_letters(sch, i, rng, 1)) for i in range(1, length + 1)]
        p = identity_product()
        for a, b, c, d in letters:
            p = push(p, SL2Matrix(a, b, c, d))
        assert abs(log_norm(p) - float(mp_log_norm(letters))) < 1e-9


def test_push_overflow_free():
    p = identity_product()
    big = SL2Matrix.diag(1e100)
    for _ in range(100):
        p = push(p, big)
    assert log_norm(p) == pytest.approx(100 * 100 * math.log(10), rel=1e-12)


def test_xi_deterministic_diag():
    sch = Stationary(FiniteSupport((SL2Matrix.diag(2.0),), (1.0,)))
    xi = simulate_xi_batch(sch, 50, 10, np.random.default_rng(0))
    np.testing.assert_allclose(xi, 50 * math.log(2), rtol=1e-14)


def test_xi_checkpoints_match_separate_runs():
    sch = preset("drift")
    cp = simulate_xi_batch(sch, 30, 64, np.random.default_rng(5), checkpoints=[10, 30])
    full = simulate_xi_batch(sch, 30, 64, np.random.default_rng(5))
    np.testing.assert_array_equal(cp[30], full)
    assert simulate_xi(sch, 5, np.random.default_rng(1)) > 0


def test_split_pathwise_inequalities():
    for name in ("rot-hyp", "drift", "bernoulli-2x2"):
        r = simulate_split_batch(preset(name), 60, 60, 4000, np.random.default_rng(9))
        assert np.all(r["discrepancy"] >= -1e-9)
        assert np.all(r["discrepancy"] <= r["theta_bound"] + 1e-8)
        np.testing.assert_allclose(r["prefix"] + r["suffix"] - r["full"], r["discrepancy"])


def test_split_commuting_diag_has_zero_discrepancy():
    r = simulate_split_batch(preset("commuting-diag"), 30, 20, 500, np.random.default_rng(2))
    assert np.max(np.abs(r["discrepancy"])) < 1e-12
    s = simulate_split(preset("commuting-diag"), 3, 3, np.random.default_rng(0))
    assert abs(s.discrepancy) < 1e-12


def test_split_prefix_and_suffix_match_direct_products():
    sch = preset("rot-hyp")
    r = simulate_split_batch(sch, 10, 7, 1, np.random.default_rng(44))
    rng = np.random.default_rng(44)
    letters = [tuple(float(x[0]) for x in draw_letters(sch, i, rng, 1)) for i in range(1, 18)]
    mp.mp.dps = 40
    assert r["prefix"][0] == pytest.approx(float(mp_log_norm(letters[:10])), abs=1e-10)
    assert r["suffix"][0] == pytest.approx(float(mp_log_norm(letters[10:])), abs=1e-10)
    assert r["full"][0] == pytest.approx(float(mp_log_norm(letters)), abs=1e-10)


def test_direction_inverse_undoes_forward():
    sch = preset("rot-hyp")
    fwd = simulate_direction_batch(sch, 3, 13, 0.4, False, np.random.default_rng(6), 50)
    back = simulate_direction_batch(sch, 3, 13, fwd, True, np.random.default_rng(6), 50)
    d = np.abs(np.mod(back - 0.4 + np.pi / 2, np.pi) - np.pi / 2)
    assert np.max(d) < 1e-8


def test_direction_scalar_and_errors():
    p = simulate_direction(preset("rot-hyp"), 0, 5, ProjectivePoint(0.2), False, np.random.default_rng(1))
    assert 0 <= p.theta < math.pi
    with pytest.raises(ValueError):
        simulate_direction_batch(preset("rot-hyp"), 5, 5, 0.0, False, np.random.default_rng(1), 2)


def test_direction_of_diag_converges_to_expanding_axis():
    sch = Stationary(FiniteSupport((SL2Matrix.diag(3.0),), (1.0,)))
    p = simulate_direction(sch, 0, 40, ProjectivePoint(1.0), False, np.random.default_rng(0))
    assert proj_distance(p, ProjectivePoint(0.0)) < 1e-12
