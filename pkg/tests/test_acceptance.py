"""End-to-end acceptance checks; each test reports one PASS/FAIL line in the terminal summary."""

import filecmp
import math
import time
from dataclasses import replace

import numpy as np
import pytest

from adkf.baseline import centralized_track
from adkf.bounds import (DIRECTED, UNDIRECTED, certify_gamma, cov_lower_bound, max_delay_bound,
                         resolve_bound_params)
from adkf.cli import main
from adkf.consensus import InfoPair, run_rounds
from adkf.fusion import matrix_weights, vector_weights
from adkf.graph import consensus_rounds, random_tree
from adkf.model import SensorModel, simulate_measurements
from adkf.simulate import generate_run, run_estimator, run_monte_carlo, steady_state

from conftest import ACCEPTANCE_LINES

MC_RUNS = 200


def report(number, ok, detail, elapsed, budget):
    ok = bool(ok) and elapsed < budget
    ACCEPTANCE_LINES.append(f"criterion {number}: {'PASS' if ok else 'FAIL'} {detail} ({elapsed:.2f}s, budget {budget:g}s)")
    return ok


def bounded(records, label):
    """Late-horizon MSE does not grow relative to the middle of the run."""
    rows = [r.mse for r in records if r.estimator == label]
    K = len(rows)
    mid = np.mean(rows[int(0.4 * K):int(0.6 * K)], axis=0)
    late = steady_state(records, label)
    return bool(np.all(np.isfinite(rows)) and np.all(late <= 1.5 * mid))


def fmt(v):
    return "[" + ", ".join(f"{x:.4g}" for x in v) + "]"


def test_criterion_1_consensus_exact_on_trees():
    rng = np.random.default_rng(101)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(100):
        n = int(rng.integers(2, 13))
        top = random_tree(n, rng)
        own, psi_sum, om_sum = [], np.zeros(3), np.zeros((3, 3))
        for j in range(n):
            m = int(rng.integers(1, 3))
            H = rng.standard_normal((m, 3))
            A = rng.standard_normal((m, m))
            R = A @ A.T + 0.2 * np.eye(m)
            y = rng.standard_normal(m)
            s = SensorModel(j + 1, H, R)
            own.append(InfoPair(s.info_vector(y), s.info_matrix()))
            # brute force, independent of the sensor helpers
            Ri = np.linalg.inv(R)
            psi_sum += H.T @ Ri @ y
            om_sum += H.T @ Ri @ H
        theta, omega = run_rounds(top, own, gates=np.ones((n, n)) - np.eye(n), rounds=consensus_rounds(top))
        err_t = np.abs(theta - psi_sum).max() / np.abs(psi_sum).max()
        err_o = np.abs(omega - om_sum).max() / np.abs(om_sum).max()
        worst = max(worst, err_t, err_o)
    ok = report(1, worst <= 1e-9, f"worst relative error {worst:.3g} over 100 trees", time.perf_counter() - t0, 10)
    assert ok


def test_criterion_2_centralized_equivalence(tree_scenario):
    sc = tree_scenario.with_overrides(dt=0, unit_weights=True, fusion="none", horizon=500)
    t0 = time.perf_counter()
    data = generate_run(sc, 0)
    out = run_estimator(sc, data, "proposed")
    ys = simulate_measurements(sc.sensors, data.truth, sc.seed, 0)
    ref = centralized_track(sc.system, sc.sensors, ys)
    x_ref = np.array([e.state for e in ref])
    p_ref = np.array([e.cov for e in ref])
    err_x = np.abs(out.local - x_ref[:, None]).max()
    err_p = np.abs(out.cov - p_ref[:, None]).max()
    ok = report(2, max(err_x, err_p) <= 1e-6, f"max |x - x_c| {err_x:.3g}, max |P - P_c| {err_p:.3g}",
                time.perf_counter() - t0, 5)
    assert ok


def test_criterion_3_delay_ordering(tree_scenario):
    t0 = time.perf_counter()
    pos, ok = [], True
    for dt in (0, 2, 4):
        sc = tree_scenario.with_overrides(dt=dt, runs=MC_RUNS, estimators=["proposed"], fusion="none")
        recs = run_monte_carlo(sc)
        pos.append(float(steady_state(recs, "proposed")[0]))
        ok &= bounded(recs, "proposed")
    ok &= pos[0] <= pos[1] <= pos[2]
    ok = report(3, ok, f"position mse d_t=0,2,4: {fmt(pos)}", time.perf_counter() - t0, 120)
    assert ok


def test_criterion_4_buffering_beats_dropping(tree_scenario):
    t0 = time.perf_counter()
    sc = tree_scenario.with_overrides(dt=3, runs=MC_RUNS, estimators=["proposed", "drop_late"], fusion="none")
    recs = run_monte_carlo(sc)
    prop, drop = steady_state(recs, "proposed"), steady_state(recs, "drop_late")
    ok = report(4, np.all(prop < 0.95 * drop), f"proposed {fmt(prop)} vs drop-late {fmt(drop)}",
                time.perf_counter() - t0, 120)
    assert ok


def test_criterion_5_directed_not_better(tree_scenario, digraph_scenario):
    t0 = time.perf_counter()
    out = {}
    ok = True
    for sc in (tree_scenario, digraph_scenario):
        sc = sc.with_overrides(runs=MC_RUNS, estimators=["proposed"], fusion="none")
        recs = run_monte_carlo(sc)
        out[sc.topology.directed] = steady_state(recs, "proposed")
        ok &= bounded(recs, "proposed")
    ok &= bool(np.all(out[True] >= out[False]))
    ok = report(5, ok, f"digraph {fmt(out[True])} vs tree {fmt(out[False])}", time.perf_counter() - t0, 120)
    assert ok


def test_criterion_6_fusion_optimality(tree_scenario):
    t0 = time.perf_counter()
    sc = tree_scenario.with_overrides(fusion="none")
    data = generate_run(sc, 0)
    out = run_estimator(sc, data, "proposed", fusion="matrix")
    K = sc.horizon
    start = K - math.ceil(0.2 * K) + 1
    blocks = out.cross[start:]
    mw = matrix_weights(blocks, degenerate="pinv")
    vw = vector_weights(blocks, degenerate="pinv")
    diag = np.stack([blocks[:, i, i] for i in range(sc.n)], axis=1)
    gap = np.linalg.eigvalsh(diag - mw.fused_cov[:, None]).min()
    sum_err = np.abs(mw.blocks.sum(axis=1) - np.eye(3)).max()
    tr = np.trace(mw.fused_cov, axis1=-2, axis2=-1) - np.trace(vw.fused_cov, axis1=-2, axis2=-1)
    ok = gap >= -1e-9 and sum_err <= 1e-10 and np.all(tr <= 1e-12 * np.trace(vw.fused_cov, axis1=-2, axis2=-1))
    ok = report(6, ok, f"min lambda(P_ii - P_f) {gap:.3g}, |sum Gamma - I| {sum_err:.3g}, "
                f"max tr(P_f) - tr(P_f vector) {tr.max():.3g}", time.perf_counter() - t0, 30)
    assert ok


@pytest.mark.parametrize("which", ["tree", "digraph"])
def test_criterion_7_information_floor(which, tree_scenario, digraph_scenario):
    sc = tree_scenario if which == "tree" else digraph_scenario
    regime = DIRECTED if sc.topology.directed else UNDIRECTED
    t0 = time.perf_counter()
    d_t = sc.delay.max_delay
    params, _ = resolve_bound_params(sc.system, sc.sensors, sc.topology, d_t, regime)
    k0 = (params.Z + 1) * d_t
    out = run_estimator(sc.with_overrides(fusion="none"), generate_run(sc, 0), "proposed")
    ok, parts = True, []
    for off in range(d_t + 1):
        floor = cov_lower_bound(params, regime, k0, k0 - off).info_floor
        seen = out.min_eig[k0:, off].min()
        ok &= seen >= floor
        parts.append(f"k-s={off}: {seen:.3g} >= {floor:.3g}")
    ok = report(7, ok, f"{regime}: " + "; ".join(parts), time.perf_counter() - t0, 60)
    assert ok


def test_criterion_8_delay_bound_round_trip(tree_scenario):
    sc = tree_scenario
    params, _ = resolve_bound_params(sc.system, sc.sensors, sc.topology, sc.delay.max_delay)
    t0 = time.perf_counter()
    # targets spanning several delay steps (each step lowers the floor by ~1e-28)
    targets = np.logspace(1, 120, 10)
    ok, ds = True, []
    for target in targets:
        d = max_delay_bound(params, target)
        ds.append(d)
        p = replace(params, d_t=d)
        k = (p.Z + 1) * d
        floor = cov_lower_bound(p, UNDIRECTED, k, k).info_floor
        ok &= d >= 0 and floor >= (1.0 / target) * (1 - 0.01)
        # d is the largest such delay
        q = replace(params, d_t=d + 1)
        kq = (q.Z + 1) * (d + 1)
        ok &= cov_lower_bound(q, UNDIRECTED, kq, kq).info_floor < 1.0 / target
    ok &= all(a <= b for a, b in zip(ds, ds[1:])) and ds[-1] > ds[0]
    ok = report(8, ok, f"d_t max over targets 1e1..1e120: {ds}", time.perf_counter() - t0, 1)
    assert ok


def test_criterion_9_contraction_certificate(tree_scenario):
    sc = tree_scenario
    t0 = time.perf_counter()
    params, details = resolve_bound_params(sc.system, sc.sensors, sc.topology, sc.delay.max_delay)
    cap = details["beta_bar"] * np.eye(sc.system.state_dim)
    worst = certify_gamma(sc.system, cap, params.gamma_hat, samples=1000, rng=np.random.default_rng(9))
    ok = report(9, worst >= -1e-9, f"gamma_hat {params.gamma_hat:.4g}, worst eigenvalue {worst:.3g} over 1000 samples",
                time.perf_counter() - t0, 5)
    assert ok


def test_criterion_10_determinism(tmp_path, capsys):
    t0 = time.perf_counter()
    # 40 runs keep three full-horizon invocations inside the time budget
    base = ["run", "--scenario", "tracking_tree", "--seed", "77", "--runs", "40"]
    paths = [tmp_path / f"m{i}.csv" for i in range(3)]
    codes = [main(base + ["--out", str(paths[0])]),
             main(base + ["--out", str(paths[1])]),
             main(base + ["--out", str(paths[2]), "--workers", "2"])]
    capsys.readouterr()
    same = all(filecmp.cmp(paths[0], p, shallow=False) for p in paths[1:])
    ok = report(10, codes == [0, 0, 0] and same, f"exit codes {codes}, identical CSV: {same}",
                time.perf_counter() - t0, 120)
    assert ok
