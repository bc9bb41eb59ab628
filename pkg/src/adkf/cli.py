"""Command line entry point: run, bounds, validate, oracle."""

from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from .bounds import (DIRECTED, UNDIRECTED, BoundError, BoundUndefined, cov_lower_bound, max_delay_bound,
                     resolve_bound_params)
from .consensus import InfoPair, run_rounds
from .filter import FilterError
from .fusion import FusionError, matrix_weights, vector_weights
from .graph import TopologyError, consensus_rounds, random_tree
from .model import ModelError, validate_model
from .network import NetworkError
from .scenario import ScenarioError, bundled_names, load_scenario
from .simulate import NumericalAbort, emit_metrics, run_monte_carlo, steady_state

EXIT_OK = 0
EXIT_INVALID = 2
EXIT_NUMERICAL = 3
EXIT_UNDEFINED = 4

log = logging.getLogger("adkf")


def _scenario(args, validate=True):
    sc = load_scenario(args.scenario, validate=validate)
    estimators = None
    if getattr(args, "estimators", None):
        estimators = [e.strip() for e in args.estimators.split(",") if e.strip()]
    return sc.with_overrides(seed=args.seed, runs=getattr(args, "runs", None), dt=args.dt_override,
                             estimators=estimators, fusion=getattr(args, "fusion", None))


def cmd_run(args) -> int:
    sc = _scenario(args)
    log.info("running %s: %d runs x %d steps, d_t=%d, estimators=%s", sc.name, sc.runs, sc.horizon,
             sc.delay.max_delay, ",".join(sc.estimators))
    records = run_monte_carlo(sc, workers=args.workers)
    emit_metrics(records, args.out, sc.state_names)
    for label in sc.estimators:
        ss = steady_state(records, label)
        line = " ".join(f"{n}={v:.6g}" for n, v in zip(sc.state_names, ss))
        print(f"{label:12s} steady-state mse: {line}")
    print(f"wrote {args.out}")
    return EXIT_OK


def cmd_bounds(args) -> int:
    sc = _scenario(args)
    regime = args.regime or (DIRECTED if sc.topology.directed else UNDIRECTED)
    d_t = sc.delay.max_delay
    params, details = resolve_bound_params(sc.system, sc.sensors, sc.topology, d_t, regime)
    print(f"scenario        {sc.name}")
    print(f"regime          {regime}")
    print(f"d_t             {d_t}  (configured)")
    print(f"eta             {params.eta:.6g}  (computed: 1/sigma_max(Phi))")
    print(f"gamma_hat       {params.gamma_hat:.6g}  (computed: tight contraction constant at beta_bar I)")
    print(f"omega_min       {params.omega_min:.6g}  (computed: min positive entry of W^sigma)")
    print(f"n_bar           {details['n_bar']}  (computed: observability horizon)")
    print(f"Z               {params.Z}  (computed: n + n_bar)")
    print(f"alpha_bar       {params.alpha_bar:.6g}  (computed: Gramian lower constant, extended window)")
    print(f"alpha           {params.alpha:.6g}  (computed: Gramian lower constant)")
    print(f"beta_bar        {details['beta_bar']:.6g}  (computed: Gramian upper constant)")
    k0 = (params.Z + 1) * d_t
    for off in range(d_t + 1):
        res = cov_lower_bound(params, regime, k0, k0 - off)
        print(f"floor k-s={off:<3d} lambda_min(P^-1) >= {res.info_floor:.6g}  (log {res.log_floor:.6g})")
    if args.target is not None:
        d_max = max_delay_bound(params, args.target, k_minus_s=0, regime=regime)
        print(f"d_t max         {d_max}  (for P <= {args.target:g})")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args, validate=False)
    report = validate_model(sc.system, sc.sensors)
    rounds = consensus_rounds(sc.topology)
    print(f"scenario   {sc.name}: {sc.n} sensors, {sc.topology.edge_count} links, "
          f"{'directed' if sc.topology.directed else 'undirected'}, rounds={rounds}")
    print(f"eta        {report.eta:.6g}")
    print(f"observable {report.observable} (horizon {report.horizon})")
    print(f"delays     max {sc.delay.max_delay}, horizon {sc.horizon}, runs {sc.runs}, fusion {sc.fusion}")
    if not report.ok:
        for v in report.violations:
            print(f"violation  {v}")
        return EXIT_INVALID
    print("ok")
    return EXIT_OK


def cmd_oracle(args) -> int:
    """Brute-force checks on small random instances."""
    rng = np.random.default_rng(args.seed or 0)
    worst = 0.0
    for _ in range(args.trials):
        n = int(rng.integers(2, 13))
        top = random_tree(n, rng)
        own = [InfoPair(rng.standard_normal(3), np.eye(3) * rng.uniform(0.1, 2)) for _ in range(n)]
        total = sum(own[1:], own[0])
        ones = np.ones((n, n))
        theta, omega = run_rounds(top, own, gates=ones - np.eye(n), rounds=consensus_rounds(top))
        err = max(np.abs(theta - total.info_vec).max() / max(1.0, np.abs(total.info_vec).max()),
                  np.abs(omega - total.info_mat).max() / max(1.0, np.abs(total.info_mat).max()))
        worst = max(worst, float(err))
    print(f"consensus  {args.trials} random trees, worst relative error {worst:.3g}")
    ok = worst <= 1e-9

    fusion_worst = np.inf
    for _ in range(args.trials):
        n, nx = int(rng.integers(2, 5)), 3
        A = rng.standard_normal((n * nx, n * nx + 2))
        xi = A @ A.T + 0.1 * np.eye(n * nx)
        blocks = xi.reshape(n, nx, n, nx).swapaxes(1, 2)
        w = matrix_weights(blocks)
        v = vector_weights(blocks)
        for i in range(n):
            fusion_worst = min(fusion_worst, float(np.linalg.eigvalsh(blocks[i, i] - w.fused_cov)[0]))
        ok &= np.allclose(w.blocks.sum(axis=0), np.eye(nx), atol=1e-10)
        ok &= np.trace(w.fused_cov) <= np.trace(v.fused_cov) + 1e-9
    print(f"fusion     {args.trials} random covariances, worst lambda_min(P_ii - P_f) {fusion_worst:.3g}")
    ok &= fusion_worst >= -1e-9
    print("ok" if ok else "FAILED")
    return EXIT_OK if ok else EXIT_NUMERICAL


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="adkf", description="Delay-tolerant distributed Kalman filtering")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, scenario_required=True):
        sp.add_argument("--scenario", required=scenario_required,
                        help=f"scenario file or bundled name ({', '.join(bundled_names())})")
        sp.add_argument("--seed", type=int, default=None)
        sp.add_argument("--dt-override", type=int, default=None)

    r = sub.add_parser("run", help="simulate and write per-instant MSE as CSV")
    common(r)
    r.add_argument("--out", required=True)
    r.add_argument("--runs", type=int, default=None)
    r.add_argument("--estimators", default=None, help="comma separated: proposed,drop_late,centralized")
    r.add_argument("--fusion", choices=["matrix", "vector", "none"], default=None)
    r.add_argument("--workers", type=int, default=1)
    r.set_defaults(func=cmd_run)

    b = sub.add_parser("bounds", help="print the information floor and the maximum delay")
    common(b)
    b.add_argument("--target", type=float, default=None, help="admissible error covariance level")
    b.add_argument("--regime", choices=[UNDIRECTED, DIRECTED], default=None)
    b.set_defaults(func=cmd_bounds)

    v = sub.add_parser("validate", help="check a scenario and its model assumptions")
    common(v)
    v.set_defaults(func=cmd_validate)

    o = sub.add_parser("oracle", help="brute-force consensus and fusion checks")
    o.add_argument("--seed", type=int, default=0)
    o.add_argument("--trials", type=int, default=100)
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(message)s")
    try:
        return args.func(args)
    except BoundUndefined as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_UNDEFINED
    except (NumericalAbort, FusionError, FilterError) as exc:
        print(f"numerical abort: {exc}", file=sys.stderr)
        return EXIT_NUMERICAL
    except (ScenarioError, ModelError, TopologyError, NetworkError, BoundError) as exc:
        print(f"invalid: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
