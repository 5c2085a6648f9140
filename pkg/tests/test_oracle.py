import itertools
import math

import numpy as np
import pytest

from sl2walk.experiments.oracle import (
    MAX_WORDS,
    NotEnumerable,
    enumerate_products,
    exact_split,
    exact_xi,
    is_enumerable,
)
from sl2walk.measures import FiniteSupport, Periodic, preset
from sl2walk.sl2core import SL2Matrix, multiply, operator_norm

# Exhaustive values for the bernoulli-2x2 preset, computed independently with
# exact integer products and 40-digit logarithms.
L12 = 3.8184789354985682
VAR12 = 3.3113454216230851
ER_66 = (0.68043657846119694, 1.3193294759890701, 3.8959731056148643)


def test_bernoulli_exact_values():
    sch = preset("bernoulli-2x2")
    ex = exact_xi(sch, 12)
    assert ex["mean"] == pytest.approx(L12, rel=1e-13)
    assert ex["var"] == pytest.approx(VAR12, rel=1e-12)
    sp = exact_split(sch, 6, 6)
    assert (sp["mean"], sp["m2"], sp["m3"]) == pytest.approx(ER_66, rel=1e-12)
    assert sp["mean_full"] == pytest.approx(L12, rel=1e-13)


def test_enumeration_matches_direct_loop():
    a = SL2Matrix.rot_diag_rot(0.2, 1.5, 0.9)
    b = SL2Matrix.rot_diag_rot(1.1, 2.5, 0.3)
    c = SL2Matrix.rot(0.7)
    s1 = FiniteSupport((a, b), (0.3, 0.7))
    s2 = FiniteSupport((b, c, a), (0.2, 0.5, 0.3))
    sch = Periodic((s1, s2))
    ent, prob = enumerate_products(sch, 1, 4)
    assert prob.sum() == pytest.approx(1.0)
    want = {}
    supports = [s1, s2, s1, s2]
    for word in itertools.product(*[range(len(s.atoms)) for s in supports]):
        m = SL2Matrix.identity()
        p = 1.0
        for s, k in zip(supports, word):
            m = multiply(s.atoms[k], m)
            p *= s.probs[k]
        want[word] = (math.log(operator_norm(m)), p)
    mean = sum(x * p for x, p in want.values())
    assert exact_xi(sch, 4)["mean"] == pytest.approx(mean, rel=1e-12)
    assert len(ent) == len(want)


def test_not_enumerable():
    assert not is_enumerable(preset("rot-hyp"), 3)
    assert is_enumerable(preset("bernoulli-2x2"), 20)
    assert not is_enumerable(preset("bernoulli-2x2"), 21)
    with pytest.raises(NotEnumerable):
        exact_xi(preset("bernoulli-2x2"), 21)
    assert MAX_WORDS == 2**20


def test_commuting_diag_has_zero_discrepancy():
    sp = exact_split(preset("commuting-diag"), 4, 4)
    assert abs(sp["mean"]) < 1e-12 and abs(sp["m3"]) < 1e-12
    ex = exact_xi(preset("commuting-diag"), 4)
    assert ex["mean"] == pytest.approx(4 * 0.5 * (math.log(2) + math.log(3)))
    assert ex["var"] == pytest.approx(4 * 0.25 * math.log(1.5) ** 2)
