"""Acceptance criteria 1-8, one test each.

Each test records its outcome in ``conftest.ACCEPTANCE``; the terminal summary
prints one PASS/FAIL line per criterion.  Run standalone with
``python3 tests/test_acceptance.py``.
"""

import json
import sys
import time

import numpy as np

from conftest import ACCEPTANCE, TIMINGS, random_pd, random_stable
from privsynth.cli import main as cli_main
from privsynth.estimation import solve_lyapunov_direct, solve_lyapunov_iterative
from privsynth.infoflow import finite_horizon_mutual_info, mutual_info_rate
from privsynth.model import PrivacyMechanism, assemble_closed_loop
from privsynth.perf import baseline_lqr_cost, distorted_lqr_cost
from privsynth.sdp import solve
from privsynth.sim import empirical_lqr_cost, replicate, simulate
from test_sdp import lyapunov_lmi, maxdet_box, scalar_lyapunov, trace_min_unit


def _record(k, ok, detail):
    ACCEPTANCE[k] = (bool(ok), detail)
    print(f"criterion {k}: {'PASS' if ok else 'FAIL'} - {detail}")
    assert ok, detail


def test_criterion_1_lyapunov_oracles(case_study):
    plant, filt = case_study
    rng = np.random.default_rng(2024)
    systems = [(random_stable(rng, n), random_pd(rng, n, 0.0)) for n in rng.integers(2, 9, size=50)]
    mech = PrivacyMechanism(np.eye(4), np.zeros((4, 4)), 1e-3 * np.eye(3))
    cl = assemble_closed_loop(plant, mech, filt)
    systems.append((cl.Acal, cl.Bcal))
    t0 = time.perf_counter()
    worst = 0.0
    for A, B in systems:
        d = solve_lyapunov_direct(A, B).Sigma_zeta
        it, _ = solve_lyapunov_iterative(A, B)
        worst = max(worst, np.linalg.norm(d - it.Sigma_zeta, "fro"))
    elapsed = time.perf_counter() - t0
    _record(1, worst < 1e-9 and elapsed < 5,
            f"{len(systems)} systems, worst Frobenius gap {worst:.2e} (< 1e-9), {elapsed:.2f} s (< 5 s)")


def test_criterion_2_finite_horizon_leakage(case_study, synth_007, identity_mech):
    plant, filt = case_study
    mechs = {"full_G": synth_007["full_G"].mechanism, "identity_G": synth_007["identity_G"].mechanism,
             "identity": identity_mech}
    t0 = time.perf_counter()
    errs = {}
    for name, mech in mechs.items():
        rate = mutual_info_rate(plant, mech, filt).rate_nats
        fh = finite_horizon_mutual_info(plant, mech, filt, 500)
        errs[name] = abs(fh.per_step_terms[-1] - rate) / abs(rate)
    elapsed = time.perf_counter() - t0
    worst = max(errs.values())
    _record(2, worst < 1e-6 and elapsed < 10,
            f"worst relative error at k=500 {worst:.2e} (< 1e-6) over {', '.join(errs)}, {elapsed:.2f} s (< 10 s)")


def test_criterion_3_sdp_examples(case_study):
    t0 = time.perf_counter()
    s1 = solve(trace_min_unit())
    s2 = solve(scalar_lyapunov())
    s3 = solve(maxdet_box())
    prob, exact = lyapunov_lmi(case_study)
    s4 = solve(prob)
    elapsed = time.perf_counter() - t0
    errs = [
        abs(s1.values["S"][0, 0] - 1.0),
        abs(s2.values["S"][0, 0] - 4 / 3) / (4 / 3),
        np.abs(s3.values["P"] - 2 * np.eye(2)).max() / 2,
        abs(np.trace(s4.values["S"]) - np.trace(exact)) / np.trace(exact),
    ]
    statuses = {s1.status, s2.status, s3.status, s4.status}
    ok = max(errs) < 1e-6 and statuses == {"optimal"} and elapsed < 10
    _record(3, ok, f"worst relative error {max(errs):.2e} (< 1e-6), statuses {sorted(statuses)}, "
                   f"{elapsed:.2f} s (< 10 s)")


def _feasible(points):
    return [p for p in points if p.ok]


def test_criterion_4_bound_validity(case_study, default_sweep):
    plant, filt = case_study
    worst_bound, worst_sigma, n = -np.inf, np.inf, 0
    for p in _feasible(default_sweep):
        mech = p.result.mechanism
        cl = assemble_closed_loop(plant, mech, filt)
        exact = solve_lyapunov_direct(cl.Acal, cl.Bcal)
        rate = mutual_info_rate(plant, mech, filt, exact.Sigma_e).rate_nats
        worst_bound = max(worst_bound, rate - p.result.bound_nats)
        worst_sigma = min(worst_sigma, np.linalg.eigvalsh(p.result.solver_sigma - exact.Sigma_zeta).min())
        n += 1
    ok = n > 0 and worst_bound <= 1e-6 and worst_sigma >= -1e-7
    _record(4, ok, f"{n} mechanisms, max(rate - bound) {worst_bound:.2e} (<= 1e-6), "
                   f"min eig(Sigma - Sigma_zeta) {worst_sigma:.2e} (>= -1e-7)")


def test_criterion_5_constraint_satisfaction(case_study, default_sweep):
    plant, filt = case_study
    c_inf = baseline_lqr_cost(plant)[0]
    worst_excess, worst_z, n = -np.inf, 0.0, 0
    for p in _feasible(default_sweep):
        mech = p.result.mechanism
        closed = distorted_lqr_cost(plant, mech)[0]
        worst_excess = max(worst_excess, closed - c_inf - p.epsilon)
        est = empirical_lqr_cost(simulate(plant, mech, filt, 10_000, seed=1), plant.Q, plant.R)
        worst_z = max(worst_z, abs(est.mean - closed) / est.stderr)
        n += 1
    ok = n > 0 and worst_excess <= 1e-6 and worst_z <= 3
    _record(5, ok, f"{n} sweep points, max(C~ - C - eps) {worst_excess:.2e} (<= 1e-6), "
                   f"worst Monte-Carlo deviation {worst_z:.2f} SE (<= 3) at N=1e4")


def test_criterion_6_sweep_shape(default_sweep):
    rates = {}
    for mode in ("full_G", "identity_G"):
        # an infeasible budget counts as an unbounded rate
        rates[mode] = {p.epsilon: (p.exact_rate if p.ok else np.inf) for p in default_sweep if p.mode == mode}
    eps = sorted(rates["full_G"])
    mono = all(all(r[b] <= r[a] + 1e-6 for a, b in zip(eps, eps[1:])) for r in rates.values())
    dominated = all(rates["full_G"][e] <= rates["identity_G"][e] + 1e-12 for e in eps)
    at_007 = rates["full_G"][min(eps, key=lambda e: abs(e - 0.07))]
    elapsed = TIMINGS.get("default_sweep", float("nan"))
    checks = {"a": mono, "b": dominated, "c": at_007 <= 0.05, "runtime": elapsed < 300}
    _record(6, all(checks.values()),
            f"(a) monotone {mono}, (b) full <= identity {dominated}, (c) full_G rate at 0.07 = {at_007:.6f} nats "
            f"(<= 0.05: {checks['c']}), sweep {elapsed:.0f} s (< 300 s)")


def test_criterion_7_adversary_degradation(case_study, synth_007, identity_mech):
    plant, filt = case_study
    t0 = time.perf_counter()
    with_m = replicate(plant, synth_007["full_G"].mechanism, filt, 10_000, seed=1, replications=10)
    without = replicate(plant, identity_mech, filt, 10_000, seed=1, replications=10)
    elapsed = time.perf_counter() - t0
    ratio = with_m.mean_mse / without.mean_mse
    _record(7, ratio >= 2 and elapsed < 120,
            f"MSE with mechanism {with_m.mean_mse:.4f}, without {without.mean_mse:.4f}, ratio {ratio:.2f} (>= 2), "
            f"{elapsed:.1f} s (< 120 s)")


def test_criterion_8_determinism(tmp_path):
    outputs = []
    for i in range(2):
        out = tmp_path / f"run{i}"
        codes = [cli_main(["synth", "--epsilon", "0.07", "--out", str(out)])]
        codes.append(cli_main(["simulate", "--mechanism", str(out / "mechanism_full_G.json"), "--epsilon", "0.07",
                               "--seed", "1", "--trace", "--out", str(out)]))
        files = sorted(p.name for p in out.iterdir())
        outputs.append((codes, {name: (out / name).read_bytes() for name in files}))
    (codes_a, files_a), (codes_b, files_b) = outputs
    same = files_a == files_b
    ok = codes_a == [0, 0] and codes_b == [0, 0] and same
    json.loads(files_a["metrics.json"])
    _record(8, ok, f"exit codes {codes_a}/{codes_b}, {len(files_a)} files byte-identical: {same}")


if __name__ == "__main__":
    import pytest

    sys.exit(pytest.main([__file__, "-q", "-p", "no:cacheprovider"]))
