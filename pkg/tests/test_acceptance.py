"""Acceptance criteria, one test each; the terminal summary prints a PASS/FAIL line per criterion."""

import json
import math
import time

import numpy as np
import pytest

from hiersim import matkit
from hiersim.cli import main
from hiersim.montecarlo import bounded_trial, impulse_trial
from hiersim.scenario import PUBLISHED_EPS, load_scenario
from hiersim.simcore import simulate
from hiersim.synthesis import LinearSystem, impulse_series_limit, synthesize, verify_certificate

from oracles import corridor_matrices, kron_lyapunov, random_hurwitz, random_spd

N_MC = 100


def _corridor_certificate():
    m = corridor_matrices()
    B_d = m["B_d"]
    sys1, sys2 = LinearSystem(m["A1"], m["B1"], m["C1"]), LinearSystem(m["A2"], m["B2"], m["C2"])
    t0 = time.perf_counter()
    cert = synthesize(sys1, sys2, K=m["K"], lam=1.1, B_d=B_d)
    report = verify_certificate(cert, sys1, sys2, B_d=B_d)
    return cert, report, time.perf_counter() - t0, B_d


@pytest.mark.acceptance("AC1", "corridor certificate valid, exact embedding, under 1 s")
def test_ac1_certificate_validity(record_property):
    cert, report, elapsed, _ = _corridor_certificate()
    checks = report.checks
    record_property("detail", f"{elapsed:.3f} s, {checks['output_bound'].detail}, {checks['decay'].detail}")
    assert checks["output_bound"].passed and checks["decay"].passed
    assert report.passed
    assert elapsed < 1.0
    assert cert.lam == 1.1
    np.testing.assert_array_equal(cert.P, np.vstack([np.eye(2), np.zeros((4, 2))]))
    np.testing.assert_array_equal(cert.Q, np.zeros((2, 2)))
    m = corridor_matrices()
    np.testing.assert_array_equal(cert.P @ m["A2"], m["A1"] @ cert.P + m["B1"] @ cert.Q)
    np.testing.assert_array_equal(m["C1"] @ cert.P, m["C2"])


@pytest.mark.acceptance("AC2", "corridor eps formulas at 1e-10, nominal eps in [0.15, 0.35]")
def test_ac2_corridor_eps_formulas(record_property):
    scn = load_scenario("preset:corridor")
    cert, _, _, B_d = _corridor_certificate()
    eps = scn.all_eps(cert)
    record_property("detail", ", ".join(f"{k} {v:.4f} (published {PUBLISHED_EPS[k]})" for k, v in eps.items()))
    assert 0.15 <= eps["none"] <= 0.35
    # Coefficients recomputed from LAPACK, not from the package.
    w, v = np.linalg.eigh(cert.M)
    sqrtM = (v * np.sqrt(w)) @ v.T
    c_dist = np.linalg.norm(sqrtM @ B_d, 2) / 1.1
    assert cert.c_dist == pytest.approx(c_dist, abs=1e-10)
    assert eps["bounded"] - eps["none"] == pytest.approx(c_dist * 1.0, abs=1e-10)
    b_max = np.linalg.norm(B_d, 2)
    factor = max(1.0, 1.0 / (2.5 * 1.1))
    assert eps["impulse"] - eps["none"] == pytest.approx(factor * b_max * math.sqrt(w.max()), abs=1e-10)


def _violations(trials):
    return sum(t.violations for t in trials)


@pytest.mark.acceptance("AC3", f"{N_MC} random pairs under bounded disturbances, zero violations, under 60 s")
def test_ac3_bounded_monte_carlo(record_property):
    t0 = time.perf_counter()
    trials = [bounded_trial(seed) for seed in range(N_MC)]
    elapsed = time.perf_counter() - t0
    worst = max(t.max_error / t.eps for t in trials)
    record_property("detail", f"{_violations(trials)} violations, worst error/eps {worst:.3f}, {elapsed:.1f} s")
    assert max(t.n1 for t in trials) <= 6 and max(t.n2 for t in trials) <= 3
    assert _violations(trials) == 0
    assert elapsed < 60.0


@pytest.mark.acceptance("AC4", f"{N_MC} random pairs per dwell time under impulse trains, zero violations")
def test_ac4_impulse_monte_carlo(record_property):
    details, failures = [], []
    for factor in (0.3, 1.0, 3.0):
        trials = [impulse_trial(seed, factor) for seed in range(N_MC)]
        for t in trials:
            assert t.t_dwell == pytest.approx(factor / t.lam)
        v = sum(t.violations for t in trials)
        vt = sum(t.violations_tight for t in trials)
        excess = max(t.jump_excess for t in trials)
        events = sum(t.events for t in trials)
        details.append(f"{factor}/lam: {v}+{vt} violations, {events} jumps, max excess {excess:.1e}")
        if v or vt or excess > 1e-9 or events < N_MC:
            failures.append(factor)
    record_property("detail", "; ".join(details))
    assert not failures


@pytest.mark.acceptance("AC5", "impulse series limit times x equals 1 on a 50-point grid")
def test_ac5_series_limit(record_property):
    xs = np.linspace(1.0 / 50, 1.0, 50)
    err = max(abs(impulse_series_limit(x) * x - 1.0) for x in xs)
    record_property("detail", f"max error {err:.1e}")
    assert err <= 1e-9


@pytest.mark.acceptance("AC6", "Lyapunov solver matches the Kronecker oracle on 50 instances")
def test_ac6_lyapunov_oracle(record_property):
    rng = np.random.default_rng(2024)
    worst = 0.0
    for i in range(50):
        n = 1 + i % 5
        a, q = random_hurwitz(rng, n), random_spd(rng, n)
        worst = max(worst, float(np.max(np.abs(matkit.solve_lyapunov(a, q) - kron_lyapunov(a, q)))))
    record_property("detail", f"max abs difference {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.acceptance("AC7", "scalar interfaced pair follows V(t) = exp(-2t)")
def test_ac7_scalar_closed_form(record_property):
    one = [[1.0]]
    sys1 = sys2 = LinearSystem([[0.0]], one, one)
    cert = synthesize(sys1, sys2, K=[[-2.0]], P=one, Q=[[0.0]], R=one)
    x1 = [1.0 / math.sqrt(cert.M[0, 0])]
    trace = simulate(sys1, sys2, cert, lambda t: np.zeros(1), x1, [0.0], None, 0.01, 2.0)
    assert trace.V[0] == pytest.approx(1.0, abs=1e-15)
    errs = []
    for t in (0.5, 1.0, 2.0):
        k = int(round(t / 0.01))
        assert trace.t[k] == pytest.approx(t)
        errs.append(abs(trace.V[k] - math.exp(-2.0 * t)))
    record_property("detail", f"max error {max(errs):.1e}")
    assert max(errs) <= 1e-6


@pytest.mark.acceptance("AC8", "corridor reproduce under 120 s, corrected runs safe, naive runs violate")
def test_ac8_reproduce(tmp_path, record_property, capsys):
    t0 = time.perf_counter()
    code = main(["reproduce", "--out", str(tmp_path)])
    elapsed = time.perf_counter() - t0
    rows = {r["experiment"]: r for r in json.loads((tmp_path / "summary.json").read_text())["experiments"]}
    record_property("detail", f"{elapsed:.1f} s, " + ", ".join(
        f"{k} {r['n_violations']}" for k, r in rows.items()))
    assert code == 0
    assert elapsed < 120.0
    for name in ("bounded_corrected", "impulse_corrected", "nominal"):
        assert rows[name]["n_violations"] == 0 and rows[name]["goal_reached"], name
    for name in ("bounded_naive", "impulse_naive"):
        assert rows[name]["n_violations"] >= 1, name
    for name in ("bounded_corrected", "impulse_corrected"):
        report = json.loads((tmp_path / name / "report.json").read_text())
        assert report["final_goal_distance"] <= 1.0 + report["eps"], name
