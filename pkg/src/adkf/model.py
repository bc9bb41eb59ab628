"""Linear target dynamics, sensor measurement models and noise generation."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np

Provider = Union[np.ndarray, Callable[[int], np.ndarray]]

# stream kinds for keyed noise generation
PROCESS, MEASUREMENT, DELAY, INITIAL = 0, 1, 2, 3


class ModelError(ValueError):
    pass


def _at(value, k):
    return np.asarray(value(k), dtype=float) if callable(value) else value


def _as_matrix(value, name):
    if callable(value):
        return value
    arr = np.atleast_2d(np.asarray(value, dtype=float))
    if arr.ndim != 2:
        raise ModelError(f"{name} must be a matrix, got shape {arr.shape}")
    return arr


def is_psd(mat, tol=1e-12):
    mat = np.asarray(mat, dtype=float)
    if not np.allclose(mat, mat.T, atol=1e-10, rtol=0):
        return False
    return bool(np.linalg.eigvalsh(mat).min() >= -tol * max(1.0, np.abs(mat).max()))


def sqrt_psd(cov):
    """Return L with L @ L.T == cov for a symmetric PSD ``cov`` (zero modes allowed)."""
    vals, vecs = np.linalg.eigh(np.asarray(cov, dtype=float))
    return vecs * np.sqrt(np.clip(vals, 0.0, None))


def noise_rng(seed, run, kind, ident=0):
    """Independent generator keyed by (seed, run, kind, ident).

    Draw order within a stream follows the time index, so any subset of
    runs or sensors can be regenerated on its own.
    """
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=(int(run), int(kind), int(ident)))
    return np.random.Generator(np.random.Philox(ss))


@dataclass(frozen=True)
class SystemModel:
    """x_{k+1} = Phi_k x_k + w_k with w_k ~ N(0, Q_k).

    ``transition`` and ``process_cov`` are either constant matrices or
    callables of the step index.
    """

    transition: Provider
    process_cov: Provider
    init_mean: np.ndarray
    init_cov: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "transition", _as_matrix(self.transition, "transition"))
        object.__setattr__(self, "process_cov", _as_matrix(self.process_cov, "process_cov"))
        object.__setattr__(self, "init_mean", np.atleast_1d(np.asarray(self.init_mean, dtype=float)))
        object.__setattr__(self, "init_cov", _as_matrix(self.init_cov, "init_cov"))
        n = self.state_dim
        for name in ("init_cov",):
            if getattr(self, name).shape != (n, n):
                raise ModelError(f"{name} must be {n}x{n}")
        if not callable(self.transition) and self.transition.shape != (n, n):
            raise ModelError(f"transition must be {n}x{n}")
        if not callable(self.process_cov) and self.process_cov.shape != (n, n):
            raise ModelError(f"process_cov must be {n}x{n}")

    @property
    def state_dim(self) -> int:
        return self.init_mean.shape[0]

    def transition_at(self, k: int) -> np.ndarray:
        return _at(self.transition, k)

    def process_cov_at(self, k: int) -> np.ndarray:
        return _at(self.process_cov, k)

    def stacked(self, horizon: int) -> tuple[np.ndarray, np.ndarray]:
        """Phi_k and Q_k for k = 0..horizon as (horizon+1, n, n) arrays."""
        n = self.state_dim
        if callable(self.transition):
            phi = np.stack([self.transition_at(k) for k in range(horizon + 1)])
        else:
            phi = np.broadcast_to(self.transition, (horizon + 1, n, n)).copy()
        if callable(self.process_cov):
            q = np.stack([self.process_cov_at(k) for k in range(horizon + 1)])
        else:
            q = np.broadcast_to(self.process_cov, (horizon + 1, n, n)).copy()
        return phi, q


def constant_acceleration(period: float, process_var: float = 1.0, init_var: float = 1.0) -> SystemModel:
    """Position/velocity/acceleration model sampled every ``period`` seconds."""
    T = float(period)
    phi = np.array([[1.0, T, T * T / 2.0], [0.0, 1.0, T], [0.0, 0.0, 1.0]])
    return SystemModel(phi, process_var * np.eye(3), np.zeros(3), init_var * np.eye(3))


@dataclass(frozen=True)
class SensorModel:
    """y^i_k = H^i_k x_k + v^i_k with v^i_k ~ N(0, R^i_k)."""

    sensor_id: int
    obs_matrix: Provider
    meas_cov: Provider

    def __post_init__(self):
        object.__setattr__(self, "obs_matrix", _as_matrix(self.obs_matrix, "obs_matrix"))
        object.__setattr__(self, "meas_cov", _as_matrix(self.meas_cov, "meas_cov"))
        if not callable(self.obs_matrix) and not callable(self.meas_cov):
            m = self.obs_matrix.shape[0]
            if self.meas_cov.shape != (m, m):
                raise ModelError(f"sensor {self.sensor_id}: meas_cov must be {m}x{m}")

    def obs_matrix_at(self, k: int = 0) -> np.ndarray:
        return _at(self.obs_matrix, k)

    def meas_cov_at(self, k: int = 0) -> np.ndarray:
        return _at(self.meas_cov, k)

    def info_matrix(self, k: int = 0) -> np.ndarray:
        """H^T R^{-1} H."""
        H, R = self.obs_matrix_at(k), self.meas_cov_at(k)
        out = H.T @ np.linalg.solve(R, H)
        return 0.5 * (out + out.T)

    def info_vector(self, y, k: int = 0) -> np.ndarray:
        """H^T R^{-1} y."""
        H, R = self.obs_matrix_at(k), self.meas_cov_at(k)
        return H.T @ np.linalg.solve(R, np.atleast_1d(np.asarray(y, dtype=float)))


def step_truth(model: SystemModel, state, rng=None, k: int = 0) -> np.ndarray:
    """Advance the true state one step; ``rng=None`` gives the noiseless map."""
    x = np.atleast_1d(np.asarray(state, dtype=float))
    if x.shape != (model.state_dim,):
        raise ModelError(f"state has shape {x.shape}, expected ({model.state_dim},)")
    out = model.transition_at(k) @ x
    if rng is not None:
        out = out + sqrt_psd(model.process_cov_at(k)) @ rng.standard_normal(model.state_dim)
    return out


def measure(sensor: SensorModel, state, rng=None, k: int = 0) -> np.ndarray:
    H = sensor.obs_matrix_at(k)
    x = np.atleast_1d(np.asarray(state, dtype=float))
    if H.shape[1] != x.shape[0]:
        raise ModelError(f"sensor {sensor.sensor_id}: H has {H.shape[1]} columns, state has {x.shape[0]}")
    out = H @ x
    if rng is not None:
        out = out + sqrt_psd(sensor.meas_cov_at(k)) @ rng.standard_normal(H.shape[0])
    return out


def simulate_truth(model: SystemModel, horizon: int, seed: int, run: int = 0) -> np.ndarray:
    """True states x_0..x_horizon as a (horizon+1, n) array."""
    n = model.state_dim
    x = np.empty((horizon + 1, n))
    init = noise_rng(seed, run, INITIAL)
    x[0] = model.init_mean + sqrt_psd(model.init_cov) @ init.standard_normal(n)
    rng = noise_rng(seed, run, PROCESS)
    z = rng.standard_normal((horizon, n))
    const_q = None if callable(model.process_cov) else sqrt_psd(model.process_cov)
    for k in range(horizon):
        L = const_q if const_q is not None else sqrt_psd(model.process_cov_at(k))
        x[k + 1] = model.transition_at(k) @ x[k] + L @ z[k]
    return x


def simulate_measurements(sensors: Sequence[SensorModel], truth: np.ndarray, seed: int, run: int = 0) -> list[np.ndarray]:
    """Per-sensor measurement arrays, row k is y^i_k (row 0 unused, left as NaN)."""
    out = []
    horizon = truth.shape[0] - 1
    for idx, sensor in enumerate(sensors):
        rng = noise_rng(seed, run, MEASUREMENT, idx)
        m = sensor.obs_matrix_at(0).shape[0]
        z = rng.standard_normal((horizon, m))
        y = np.full((horizon + 1, m), np.nan)
        if callable(sensor.obs_matrix) or callable(sensor.meas_cov):
            for k in range(1, horizon + 1):
                H, R = sensor.obs_matrix_at(k), sensor.meas_cov_at(k)
                y[k] = H @ truth[k] + sqrt_psd(R) @ z[k - 1]
        else:
            y[1:] = truth[1:] @ sensor.obs_matrix.T + z @ sqrt_psd(sensor.meas_cov).T
        out.append(y)
    return out


@dataclass
class GramianReport:
    gramian: np.ndarray
    alpha: float
    beta: float
    alpha_bar: float
    beta_bar: float
    horizon: int


def _window_gramian(system, sensors, k, last):
    n = system.state_dim
    M = np.zeros((n, n))
    O = np.eye(n)
    for l in range(k, last + 1):
        info = sum((s.info_matrix(l) for s in sensors), np.zeros((n, n)))
        M += O.T @ info @ O
        phi = system.transition_at(l)
        if np.linalg.cond(phi) > 1e12:
            raise ModelError(f"transition matrix at step {l} is singular")
        O = phi @ O
    return 0.5 * (M + M.T)


def observability_gramian(system: SystemModel, sensors: Sequence[SensorModel], k: int = 0, horizon: int = 0) -> GramianReport:
    """Windowed observability Gramian over k..k+horizon and its eigenvalue bounds.

    The extended window k..k+horizon+n-1 (n = number of sensors) gives
    alpha_bar and beta_bar.
    """
    if horizon < 0:
        raise ModelError("horizon must be nonnegative")
    M = _window_gramian(system, sensors, k, k + horizon)
    ev = np.linalg.eigvalsh(M)
    ext = _window_gramian(system, sensors, k, k + horizon + max(len(sensors), 1) - 1)
    ev_ext = np.linalg.eigvalsh(ext)
    return GramianReport(M, float(ev[0]), float(ev[-1]), float(ev_ext[0]), float(ev_ext[-1]), horizon)


def find_observability_horizon(system, sensors, k=0, tol=1e-9, max_horizon=200) -> GramianReport:
    """Smallest window length whose Gramian has lambda_min > tol."""
    for h in range(max_horizon + 1):
        rep = observability_gramian(system, sensors, k, h)
        if rep.alpha > tol:
            return rep
    raise ModelError(f"system not observable within {max_horizon} steps")


@dataclass
class ValidationReport:
    eta: float
    observable: bool
    horizon: int | None
    violations: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.violations

    def raise_if_invalid(self):
        if self.violations:
            raise ModelError("; ".join(self.violations))


def transition_eta(system: SystemModel, steps: Sequence[int] = (0,)) -> float:
    """Minimum singular value of Phi_k^{-1} over ``steps``."""
    etas = []
    for k in steps:
        phi = system.transition_at(k)
        sv = np.linalg.svd(phi, compute_uv=False)
        if sv[-1] <= 1e-12 * max(sv[0], 1.0):
            return 0.0
        etas.append(1.0 / sv[0])  # smallest singular value of the inverse
    return float(min(etas))


def validate_model(system: SystemModel, sensors: Sequence[SensorModel], steps: Sequence[int] = (0,)) -> ValidationReport:
    """Check the standing assumptions; never raises, see ``raise_if_invalid``."""
    violations = []
    eta = transition_eta(system, steps)
    if eta <= 0.0:
        violations.append("transition not invertible")
    for k in steps:
        if not is_psd(system.process_cov_at(k)):
            violations.append("process_cov not PSD")
            break
    if not is_psd(system.init_cov):
        violations.append("init_cov not PSD")
    for s in sensors:
        R = s.meas_cov_at(steps[0])
        if not is_psd(R) or np.linalg.eigvalsh(R).min() <= 0:
            violations.append(f"meas_cov of sensor {s.sensor_id} not positive definite")
        H = s.obs_matrix_at(steps[0])
        if H.shape[1] != system.state_dim:
            violations.append(f"obs_matrix of sensor {s.sensor_id} has {H.shape[1]} columns, expected {system.state_dim}")
    observable, horizon = False, None
    if not violations:
        try:
            rep = find_observability_horizon(system, sensors, k=steps[0], max_horizon=4 * system.state_dim)
            observable, horizon = True, rep.horizon
        except ModelError:
            violations.append("system not uniformly observable")
    return ValidationReport(eta, observable, horizon, violations)
