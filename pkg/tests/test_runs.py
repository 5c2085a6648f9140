import json
import math

import numpy as np
import pytest

from sl2walk.experiments import ExperimentRefused, reevaluate, run_experiment, validate_config
from sl2walk.experiments.report import DEGENERATE, HYPOTHESES_NOT_MET, PASS
from sl2walk.experiments.runs import max_ball_mass, synthetic_perturbation_exact, theta_triples

DIAG2 = {"type": "stationary", "sampler": {"type": "finite_support", "atoms": [
    {"matrix": [2, 0, 0, 0.5], "p": 1.0}]}}
IDENTITY = {"type": "stationary", "sampler": {"type": "finite_support", "atoms": [
    {"matrix": [1, 0, 0, 1], "p": 1.0}]}}


def run(name, **doc):
    doc.setdefault("preset", "rot-hyp")
    if "schedule" in doc:
        doc.pop("preset")
    return run_experiment(name, validate_config(doc, name))


def statuses(rep):
    return {v["name"]: v["status"] for v in rep.verdicts}


def check_report(rep):
    body = json.loads(rep.to_json())
    assert reevaluate(body) == body["verdicts"]
    for r in body["records"]:
        assert "count" in r and "se" in r and "estimate" in r
    for v in body["verdicts"]:
        assert "threshold" in v
    return body


def test_lln_deterministic_diag():
    rep = run("lln", schedule=DIAG2, n_grid=[10, 20], trials=50)
    for r in rep.records:
        assert r["per_step"] == pytest.approx(math.log(2), rel=1e-14)
        assert r["se"] < 1e-12
    assert statuses(rep)["growth_rate_positive"] == PASS
    check_report(rep)


def test_lln_refuses_rotations():
    with pytest.raises(ExperimentRefused) as exc:
        run("lln", preset="degenerate-rotation", trials=10)
    assert exc.value.diagnostic["verdict"] == "isometric"


def test_lln_and_var_match_enumeration():
    rep = run("lln", preset="bernoulli-2x2", n_grid=[12], trials=50_000)
    assert abs(rep.records[0]["oracle_z"]) <= 4
    rep = run("var", preset="bernoulli-2x2", n_grid=[12], trials=50_000)
    assert abs(rep.records[0]["oracle_z"]) <= 4
    assert statuses(rep)["oracle_agreement"] == PASS


def test_var_degenerate():
    rep = run("var", preset="degenerate-rotation", n_grid=[50], trials=200)
    assert statuses(rep) == {"variance_growth": DEGENERATE}
    rep = run("var", schedule=DIAG2, n_grid=[50], trials=200)
    assert statuses(rep) == {"variance_growth": DEGENERATE}


def test_clt_degenerate_and_synthetic():
    rep = run("clt", schedule=DIAG2, n_grid=[30], trials=500)
    assert statuses(rep) == {"ks_n30": DEGENERATE}
    rep = run("clt", n_grid=[1, 4, 64], trials=40_000, params={"synthetic": "uniform-sum"})
    ks = [r["estimate"] for r in rep.records]
    # Berry-Esseen-type decay for sums of uniforms, down to the sampling floor
    assert ks[0] > ks[1] > ks[2]
    assert ks[2] < 3 * rep.records[2]["noise_floor"]
    check_report(rep)


def test_rmoments_commuting_and_oracle():
    rep = run("rmoments", preset="commuting-diag", n_grid=[5, 10], trials=300)
    assert all(abs(r["m1"]) < 1e-12 and abs(r["m3"]) < 1e-12 for r in rep.records)
    assert rep.hard_failures == 0
    rep = run("rmoments", preset="bernoulli-2x2", n_grid=[6], trials=50_000)
    assert max(abs(rep.records[0][f"oracle_z{k}"]) for k in (1, 2, 3)) <= 4
    check_report(rep)


def test_rtail_commuting_is_degenerate():
    rep = run("rtail", preset="commuting-diag", n_grid=[20], trials=500)
    assert all(r["estimate"] == 0 for r in rep.records)
    assert statuses(rep)["tail_slope_n20"] == DEGENERATE


def test_rtail_flags_small_x():
    rep = run("rtail", n_grid=[30], trials=2000, x_grid=[0.5, 2.0, 4.0])
    regimes = {r["x"]: r["regime"] for r in rep.records}
    assert regimes[0.5].startswith("outside") and regimes[2.0] == "power-law"
    check_report(rep)


def test_regularity_regimes_and_refusal():
    rep = run("regularity", n_grid=[20], trials=4000, r_grid=[2.0, 0.1, 0.01])
    rec = {r["r"]: r for r in rep.records}
    assert rec[2.0]["estimate"] == 1.0 and rec[2.0]["regime"].startswith("outside")
    # rot-hyp makes the image direction exactly uniform: P(hit) = 2r / pi
    assert rec[0.1]["estimate"] >= 0.2 / math.pi - 4 * rec[0.1]["se"]
    check_report(rep)
    with pytest.raises(ExperimentRefused):
        run("regularity", preset="degenerate-rotation", trials=10)


def test_max_ball_mass():
    assert max_ball_mass(np.zeros(10), 0.01) == 1.0
    assert max_ball_mass(np.array([0.0, 3.14, 1.0, 2.0]), 0.01) == 0.5  # wraps around pi
    x = np.random.default_rng(0).uniform(0, math.pi, 200_000)
    assert max_ball_mass(x, 0.05) == pytest.approx(0.1 / math.pi, rel=0.1)


def test_atoms_point_mass_and_identity():
    rep = run("atoms", schedule=IDENTITY, n_grid=[0, 1, 4], trials=200)
    assert [r["estimate"] for r in rep.records] == [1.0, 1.0, 1.0]
    assert list(statuses(rep).values()) == [DEGENERATE]
    rep = run("atoms", n_grid=[0, 2, 8], trials=20_000)
    assert rep.records[0]["estimate"] == 1.0
    assert rep.records[-1]["estimate"] < 0.1
    check_report(rep)


def test_cf_contraction_gaussian_and_exp():
    rep = run("cf-contraction", trials=100_000, params={"source": "gaussian"})
    r = rep.records[0]
    assert r["n_prime_x"] < 0.05 and r["n_prime_sum"] < 0.05
    rep = run("cf-contraction", trials=400_000)
    r = rep.records[0]
    assert r["analytic_n_prime_x"] == pytest.approx(1 / 3, rel=2e-3)
    assert r["analytic_n_prime_sum"] == pytest.approx(math.sqrt(2) / 6, rel=2e-3)
    for key in ("n_prime_x", "n_prime_y"):
        assert r[key] == pytest.approx(r["analytic_n_prime_x"], rel=0.05)
    assert r["n_prime_sum"] == pytest.approx(r["analytic_n_prime_sum"], rel=0.05)
    check_report(rep)


def test_cf_perturbation_commuting_equality():
    rep = run("cf-perturbation", preset="commuting-diag", n_grid=[10, 20], trials=4000)
    for r in rep.records:
        assert r["estimate"] < 1e-25
        assert r["N_Y"] == pytest.approx(r["N_X"], rel=1e-6)
    assert statuses(rep)["r_decay"] == DEGENERATE


def test_cf_perturbation_synthetic_matches_exact():
    rep = run("cf-perturbation", trials=400_000, rho_grid=[0.25], params={"synthetic": 0.05})
    r = rep.records[0]
    assert r["estimate"] == pytest.approx(r["exact_C_r"], rel=0.02)
    assert r["K_r"] == pytest.approx(r["exact_K_r"], rel=0.02)
    assert r["margin"] == pytest.approx(r["exact_margin"], rel=0.05)
    assert list(statuses(rep).values()) == [PASS]


def test_cf_perturbation_hypotheses_gate():
    rep = run("cf-perturbation", trials=100_000, rho_grid=[0.5], params={"synthetic": 0.3})
    assert list(statuses(rep).values()) == [HYPOTHESES_NOT_MET]


def test_synthetic_exact_small_eps():
    ex = synthetic_perturbation_exact(1e-3, 0.25)
    # r = Y - X is +-eps up to O(eps^2), so E|r|^3 ~ eps^3
    assert ex["C_r"] == pytest.approx(9.99999250000375e-10, rel=1e-6)
    assert ex["C_X"] == pytest.approx(12 / math.e - 2, rel=1e-3)


def test_theta_triples_examples():
    out = theta_triples(np.random.default_rng(0), 50_000, 10.0, 0.5, 10.0)
    ok = out["accepted"]
    assert np.all(out["theta"][ok] <= out["x"][ok])
    rep = run("theta-check", trials=20_000)
    assert rep.hard_failures == 0 and 0 < rep.diagnostics["acceptance_rate"] < 1


def test_rank_one_two_point_closed_form():
    h1 = [2.0, 1.0, 1.0, 1.0]
    h2 = [1.0, 0.0, 3.0, 1.0]
    sched = {"type": "stationary", "sampler": {"type": "finite_support", "atoms": [
        {"matrix": h1, "p": 0.5}, {"matrix": h2, "p": 0.5}]}}
    rep = run("rank-one", schedule=sched, n_grid=[1], trials=40_000, params={"grid": 4})
    for r in rep.records:
        v = np.array([math.cos(r["v"]), math.sin(r["v"])])
        ell = np.array([math.cos(r["alpha"]), math.sin(r["alpha"])])
        y1 = math.log(abs(ell @ (np.reshape(h1, (2, 2)) @ v)))
        y2 = math.log(abs(ell @ (np.reshape(h2, (2, 2)) @ v)))
        exact = (y1 - y2) ** 2 / 4
        assert abs(r["estimate"] - exact) <= 4 * r["se"] + 1e-3 * exact


def test_rank_one_deterministic_rotation_flagged():
    sched = {"type": "stationary", "sampler": {"type": "finite_support", "atoms": [
        {"matrix": [math.cos(0.3), -math.sin(0.3), math.sin(0.3), math.cos(0.3)], "p": 1.0}]}}
    rep = run("rank-one", schedule=sched, n_grid=[3], trials=100, params={"grid": 4})
    assert statuses(rep) == {"eps0_positive": DEGENERATE}


@pytest.mark.parametrize("name,doc", [
    ("lln", {"trials": 20_000, "n_grid": [5, 20]}),
    ("var", {"trials": 20_000, "n_grid": [5, 20]}),
    ("rmoments", {"trials": 20_000, "n_grid": [5]}),
    ("atoms", {"trials": 20_000, "n_grid": [0, 3]}),
    ("theta-check", {"trials": 70_000}),
])
def test_worker_count_does_not_change_report(name, doc):
    bodies = {run(name, **dict(doc, workers=w)).to_json() for w in (1, 4, 8)}
    assert len(bodies) == 1


def test_runtime_only_in_nondeterministic_body():
    rep = run("simulate", trials=100)
    assert "runtime" not in rep.body(True)
    assert rep.body(False)["runtime"]["workers"] == 1
    assert rep.to_csv().splitlines()[0].startswith("experiment,estimate,se,count")
