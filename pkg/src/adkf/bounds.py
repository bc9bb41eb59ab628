"""Closed-form information floors and the maximum admissible delay.

The floor on lambda_min([P^i_k(s)]^{-1}) for k >= (Z+1) d_t and s in D_t(k) is

    omega_min * varpi^Z * g * gamma^(s-k+d_t) * eta^(2(Z d_t - 1) + 2(s-k+d_t))

with varpi = gamma^d_t, Z = n + n_bar and g = alpha_bar (undirected) or
alpha (strongly connected digraph). Everything is evaluated in log space
because the floor is usually far below 1e-100.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Sequence

import numpy as np

from .graph import Topology, min_positive_power_entry
from .model import SensorModel, SystemModel, find_observability_horizon, transition_eta

UNDIRECTED = "undirected"
DIRECTED = "directed"


class BoundError(ValueError):
    pass


class BoundUndefined(BoundError):
    pass


@dataclass(frozen=True)
class BoundParams:
    eta: float
    gamma_hat: float
    omega_min: float
    Z: int
    alpha_bar: float
    alpha: float
    d_t: int
    vartheta: float | None = None

    @property
    def varpi(self) -> float:
        return self.gamma_hat ** self.d_t

    def validate(self):
        if not (0 < self.gamma_hat <= 1):
            raise BoundError(f"gamma_hat must lie in (0, 1], got {self.gamma_hat}")
        if self.eta <= 0 or self.omega_min <= 0 or self.Z < 1 or self.d_t < 0:
            raise BoundError("eta, omega_min must be positive, Z >= 1, d_t >= 0")
        if self.alpha <= 0 or self.alpha_bar <= 0:
            raise BoundError("Gramian constants must be positive")


@dataclass(frozen=True)
class BoundResult:
    info_floor: float
    log_floor: float
    regime: str


def _invariants(system: SystemModel, k: int = 0):
    F = system.transition_at(k)
    Finv = np.linalg.inv(F)
    B = Finv @ system.process_cov_at(k) @ Finv.T
    return Finv, 0.5 * (B + B.T)


def _psd_sqrt(M):
    vals, vecs = np.linalg.eigh(0.5 * (M + M.T))
    return (vecs * np.sqrt(np.clip(vals, 0, None))) @ vecs.T


def upsilon(system: SystemModel, omega, k: int = 0) -> np.ndarray:
    """(Phi Omega^{-1} Phi^T + Q)^{-1}, written so that singular Omega is allowed."""
    Finv, B = _invariants(system, k)
    nx = B.shape[0]
    omega = np.asarray(omega, dtype=float)
    inner = omega @ np.linalg.inv(np.eye(nx) + B @ omega)
    out = Finv.T @ inner @ Finv
    return 0.5 * (out + out.T)


def contraction_gamma(system: SystemModel, omega_cap, k: int = 0) -> float:
    """Largest gamma <= 1 with upsilon(Omega) >= gamma Phi^{-T} Omega Phi^{-1} for all 0 <= Omega <= omega_cap.

    The worst case is attained at Omega = omega_cap, giving
    1 / (1 + lambda_max(omega_cap^{1/2} B omega_cap^{1/2})) with B = Phi^{-1} Q Phi^{-T}.
    """
    F = system.transition_at(k)
    if np.linalg.cond(F) > 1e12:
        raise BoundError("transition matrix is singular")
    _, B = _invariants(system, k)
    S = _psd_sqrt(np.asarray(omega_cap, dtype=float))
    lam = float(np.linalg.eigvalsh(S @ B @ S)[-1])
    return 1.0 / (1.0 + max(lam, 0.0))


def contraction_gamma_upper(system: SystemModel, omega_floor, k: int = 0) -> float:
    """Smallest gamma with upsilon(Omega) <= gamma Phi^{-T} Omega Phi^{-1} for all Omega >= omega_floor.

    The mirrored statement of ``contraction_gamma``; not used by the floors.
    """
    _, B = _invariants(system, k)
    S = _psd_sqrt(np.asarray(omega_floor, dtype=float))
    lam = float(np.linalg.eigvalsh(S @ B @ S)[0])
    return 1.0 / (1.0 + max(lam, 0.0))


def sample_below(omega_cap, count: int, rng) -> np.ndarray:
    """Random matrices 0 <= Omega <= omega_cap; every tenth one sits on the cap."""
    S = _psd_sqrt(np.asarray(omega_cap, dtype=float))
    nx = S.shape[0]
    out = np.empty((count, nx, nx))
    for t in range(count):
        V, _ = np.linalg.qr(rng.standard_normal((nx, nx)))
        u = np.ones(nx) if t % 10 == 0 else rng.uniform(0, 1, nx)
        U = (V * u) @ V.T
        out[t] = S @ U @ S
    return out


def certify_gamma(system: SystemModel, omega_cap, gamma: float, samples: int = 1000, rng=None, k: int = 0) -> float:
    """Worst lambda_min(upsilon(Omega) - gamma Phi^{-T} Omega Phi^{-1}) over sampled Omega."""
    rng = np.random.default_rng(0) if rng is None else rng
    Finv, _ = _invariants(system, k)
    worst = np.inf
    for om in sample_below(omega_cap, samples, rng):
        gap = upsilon(system, om, k) - gamma * Finv.T @ om @ Finv
        worst = min(worst, float(np.linalg.eigvalsh(0.5 * (gap + gap.T))[0]))
    return worst


def _log_floor(p: BoundParams, regime: str, offset: int, d_t: int | None = None) -> float:
    d = p.d_t if d_t is None else d_t
    g = p.alpha_bar if regime == UNDIRECTED else p.alpha
    e = d - offset  # s - k + d_t
    return (math.log(p.omega_min) + p.Z * d * math.log(p.gamma_hat) + math.log(g)
            + e * math.log(p.gamma_hat) + (2 * (p.Z * d - 1) + 2 * e) * math.log(p.eta))


def cov_lower_bound(params: BoundParams, regime: str, k: int, s: int) -> BoundResult:
    """Information floor at instant k for stamp s (requires k >= (Z+1) d_t, s in D_t(k))."""
    if regime not in (UNDIRECTED, DIRECTED):
        raise BoundError(f"unknown regime {regime!r}")
    params.validate()
    d = params.d_t
    if k < (params.Z + 1) * d:
        raise BoundError(f"k = {k} is inside the warm-up phase (< {(params.Z + 1) * d})")
    if not (k - d <= s <= k):
        raise BoundError(f"s = {s} is outside D_t({k})")
    lf = _log_floor(params, regime, k - s)
    return BoundResult(math.exp(lf), lf, regime)


def max_delay_bound(params: BoundParams, target: float, k_minus_s: int = 0, regime: str = UNDIRECTED) -> int:
    """Largest integer d_t whose floor still guarantees P <= ``target``.

    Solves floor(d_t) >= 1/target; the floor is geometric in d_t with ratio
    (gamma_hat eta^2)^(Z+1). A negative result means even d_t = 0 misses the
    target.
    """
    if target <= 0:
        raise BoundError("target must be positive")
    p = replace(params, d_t=max(params.d_t, 0))
    p.validate()
    log_base = (p.Z + 1) * (math.log(p.gamma_hat) + 2 * math.log(p.eta))
    if abs(log_base) < 1e-15:
        raise BoundUndefined("bound undefined: attenuation-free regime (gamma_hat * eta^2 = 1)")
    if log_base > 0:
        raise BoundUndefined("bound undefined: the floor grows with the delay, no finite maximum")
    c0 = _log_floor(p, regime, k_minus_s, d_t=0)
    rhs = -math.log(target) - c0
    # d * log_base >= rhs, with log_base < 0
    return int(math.floor(rhs / log_base + 1e-12))


def resolve_bound_params(system: SystemModel, sensors: Sequence[SensorModel], topology: Topology, d_t: int,
                         regime: str | None = None, k: int = 0) -> tuple[BoundParams, dict]:
    """Compute every constant of the floor from the models; also returns the raw pieces."""
    regime = regime or (DIRECTED if topology.directed else UNDIRECTED)
    n = topology.node_count
    gram = find_observability_horizon(system, sensors, k=k)
    Z = n + gram.horizon
    eta = transition_eta(system, [k])
    nx = system.state_dim
    gamma_hat = contraction_gamma(system, gram.beta_bar * np.eye(nx), k)
    powers = range(1, Z + 1) if regime == UNDIRECTED else range(n, Z + 1)
    omega_min = min_positive_power_entry(topology.weight_matrix, powers)
    params = BoundParams(eta=eta, gamma_hat=gamma_hat, omega_min=omega_min, Z=Z,
                         alpha_bar=gram.alpha_bar, alpha=gram.alpha, d_t=d_t)
    details = {"regime": regime, "n_bar": gram.horizon, "beta": gram.beta, "beta_bar": gram.beta_bar}
    return params, details
