"""Monte-Carlo driver: truth, measurements, delays, estimators, fusion and MSE records."""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import kernels
from .consensus import LinkArrays
from .fusion import FusionError, fuse, matrix_weights, vector_weights
from .graph import consensus_rounds
from .model import simulate_measurements, simulate_truth
from .network import delay_schedule
from .scenario import Scenario

CSV_HEADER = ("estimator", "run_group", "k", "component", "mse", "fused_mse", "min_eig_info")
STEADY_FRACTION = 0.2


class NumericalAbort(ArithmeticError):
    def __init__(self, message, run=None, k=None, estimator=None):
        super().__init__(message)
        self.run, self.k, self.estimator = run, k, estimator


@dataclass
class RunData:
    truth: np.ndarray      # (K+1, nx)
    psi: np.ndarray        # (K+1, n, nx)   H^T R^{-1} y, zero at k = 0
    info: np.ndarray       # (K+1, n, nx, nx)
    delays: np.ndarray     # (E, K+1)

    @property
    def arrival(self) -> np.ndarray:
        return np.arange(self.delays.shape[1])[None, :] + self.delays


@dataclass
class EstimatorOutput:
    label: str
    local: np.ndarray           # (K+1, n, nx)
    cov: np.ndarray             # (K+1, n, nx, nx)
    min_eig: np.ndarray         # (K+1, window+1) indexed by k - s
    rounds_used: np.ndarray
    cross: np.ndarray | None = None
    fused: np.ndarray | None = None
    fused_cov: np.ndarray | None = None


@dataclass
class MetricsRecord:
    estimator: str
    run_group: str
    k: int
    mse: np.ndarray                   # (nx,) mean over runs and sensors
    fused_mse: np.ndarray | None      # (nx,)
    per_sensor_mse: np.ndarray        # (n, nx)
    min_eig_info: float               # min over runs, sensors and window stamps


def generate_run(sc: Scenario, run: int) -> RunData:
    K = sc.horizon
    truth = simulate_truth(sc.system, K, sc.seed, run)
    ys = simulate_measurements(sc.sensors, truth, sc.seed, run)
    n, nx = sc.n, sc.system.state_dim
    psi = np.zeros((K + 1, n, nx))
    info = np.zeros((K + 1, n, nx, nx))
    for i, sensor in enumerate(sc.sensors):
        if callable(sensor.obs_matrix) or callable(sensor.meas_cov):
            for k in range(1, K + 1):
                psi[k, i] = sensor.info_vector(ys[i][k], k)
                info[k, i] = sensor.info_matrix(k)
        else:
            gain = np.linalg.solve(sensor.meas_cov, sensor.obs_matrix)   # R^{-1} H
            psi[1:, i] = ys[i][1:] @ gain
            info[1:, i] = sensor.info_matrix()
    dseed = sc.seed if sc.delay_seed is None else sc.delay_seed
    delays = delay_schedule(sc.delay, sc.topology.links, K, dseed, run, n)
    return RunData(truth, psi, info, delays)


def _fuse(out: EstimatorOutput, mode: str, mu0, p0):
    if mode == "none" or out.cross is None:
        return
    blocks = out.cross[1:]
    rule = matrix_weights if mode == "matrix" else vector_weights
    weights = rule(blocks, degenerate="pinv")
    fused = np.empty(out.local.shape[:1] + out.local.shape[2:])
    fused_cov = np.empty(out.cov.shape[:1] + out.cov.shape[2:])
    fused[0], fused_cov[0] = mu0, p0
    fused[1:] = fuse(out.local[1:], weights)
    fused_cov[1:] = weights.fused_cov
    out.fused, out.fused_cov = fused, fused_cov


def run_estimator(sc: Scenario, data: RunData, label: str, fusion: str | None = None, run: int = 0) -> EstimatorOutput:
    """Drive one estimator over a generated run."""
    fusion = sc.fusion if fusion is None else fusion
    K = sc.horizon
    phi, q = sc.system.stacked(K)
    mu0, p0 = sc.system.init_mean.astype(float), sc.system.init_cov.astype(float)
    if label == "centralized":
        psi = data.psi.sum(axis=1, keepdims=True)
        info = data.info.sum(axis=1, keepdims=True)
        empty = np.zeros(0, dtype=np.int64)
        res = kernels.run_filter(phi, q, mu0, p0, psi, info, empty, empty, np.zeros(0), np.zeros(2, dtype=np.int64),
                                 empty, np.zeros((0, K + 1), dtype=np.int64), 0, 1, False)
        track = False
    elif label in ("proposed", "drop_late"):
        arrays = LinkArrays.from_topology(sc.topology, sc.unit_weights)
        window = sc.delay.max_delay if label == "proposed" else 0
        track = fusion != "none" and sc.n > 1
        res = kernels.run_filter(phi, q, mu0, p0, data.psi, data.info, arrays.src, arrays.dst, arrays.weight,
                                 arrays.in_ptr, arrays.in_edge, data.arrival, window, consensus_rounds(sc.topology), track)
    else:
        raise ValueError(f"unknown estimator {label!r}")
    x, p, e, min_eig, rounds_used, status, bad_k = res
    if status != kernels.OK:
        raise NumericalAbort(f"{label}: information matrix became singular at run {run}, instant {bad_k}",
                             run=run, k=int(bad_k), estimator=label)
    out = EstimatorOutput(label, x, p, min_eig, rounds_used, e if track else None)
    try:
        _fuse(out, fusion, mu0, p0)
    except FusionError as exc:
        raise NumericalAbort(f"{label}: fusion failed in run {run}: {exc}", run=run, estimator=label) from exc
    return out


def _run_one(args):
    sc, run = args
    data = generate_run(sc, run)
    result = {}
    for label in sc.estimators:
        out = run_estimator(sc, data, label, run=run)
        err = (out.local - data.truth[:, None, :]) ** 2
        ferr = None if out.fused is None else (out.fused - data.truth) ** 2
        result[label] = (err, ferr, out.min_eig.min(axis=1))
    return result


def run_monte_carlo(sc: Scenario, workers: int = 1) -> list[MetricsRecord]:
    """Records ordered by (estimator, k) for k = 1..horizon.

    Runs are reduced in run order, so the result does not depend on ``workers``.
    """
    tasks = [(sc, r) for r in range(sc.runs)]
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = pool.map(_run_one, tasks)
            acc = _reduce(sc, results)
    else:
        acc = _reduce(sc, map(_run_one, tasks))
    records = []
    group = sc.name
    for label in sc.estimators:
        err, ferr, eig = acc[label]
        for k in range(1, sc.horizon + 1):
            per_sensor = err[k] / sc.runs
            records.append(MetricsRecord(
                label, group, k, per_sensor.mean(axis=0),
                None if ferr is None else ferr[k] / sc.runs,
                per_sensor, float(eig[k])))
    return records


def _reduce(sc, results):
    acc = {}
    for res in results:
        for label, (err, ferr, eig) in res.items():
            if label not in acc:
                acc[label] = [err.copy(), None if ferr is None else ferr.copy(), eig.copy()]
            else:
                a = acc[label]
                a[0] += err
                if ferr is not None:
                    a[1] += ferr
                np.minimum(a[2], eig, out=a[2])
    return acc


def steady_state(records: list[MetricsRecord], estimator: str, field: str = "mse") -> np.ndarray:
    """Average of ``field`` over the last 20% of instants."""
    rows = [r for r in records if r.estimator == estimator]
    if not rows:
        raise KeyError(estimator)
    horizon = max(r.k for r in rows)
    start = horizon - max(1, int(math.ceil(STEADY_FRACTION * horizon))) + 1
    vals = [getattr(r, field) for r in rows if r.k >= start]
    if any(v is None for v in vals):
        raise ValueError(f"{estimator} has no {field}")
    return np.mean(vals, axis=0)


def _fmt(v) -> str:
    return repr(float(v))


def emit_metrics(records: list[MetricsRecord], path, component_names=None) -> Path:
    """Write one CSV row per (estimator, k, component)."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for r in records:
            for c in range(len(r.mse)):
                name = component_names[c] if component_names else str(c)
                fused = "" if r.fused_mse is None else _fmt(r.fused_mse[c])
                w.writerow((r.estimator, r.run_group, r.k, name, _fmt(r.mse[c]), fused, _fmt(r.min_eig_info)))
    return path
