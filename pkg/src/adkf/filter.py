"""Local information-form estimator with buffered reprocessing.

At instant k sensor i restarts from its anchor x_{k-1}(k - d_t - 1), the
last estimate whose packets are all guaranteed to have arrived, and re-runs
predict -> consensus -> update for every stamp s = k - d_t, ..., k using the
packets that are in its buffer by k.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .consensus import InfoPair, init_message, run_rounds
from .graph import Topology, consensus_rounds
from .model import SensorModel, SystemModel
from .network import NetworkState

COND_LIMIT = 1e12


class FilterError(ArithmeticError):
    pass


def _sym(a):
    return 0.5 * (a + a.T)


def _spd_inverse(a, what="matrix"):
    a = _sym(np.asarray(a, dtype=float))
    ev = np.linalg.eigvalsh(a)
    if ev[0] <= 0 or ev[-1] > COND_LIMIT * ev[0]:
        raise FilterError(f"{what} is numerically singular (eigenvalues {ev[0]:.3g}..{ev[-1]:.3g})")
    L = np.linalg.cholesky(a)
    Li = np.linalg.inv(L)
    return _sym(Li.T @ Li)


@dataclass(frozen=True)
class LocalEstimate:
    sensor_id: int
    k: int
    s: int
    state: np.ndarray
    cov: np.ndarray


AnchorState = LocalEstimate


def predict(est: LocalEstimate, system: SystemModel) -> LocalEstimate:
    """Prior at s+1 from the posterior at s (uses Phi_s, Q_s)."""
    F = system.transition_at(est.s)
    x = F @ est.state
    P = _sym(F @ est.cov @ F.T) + system.process_cov_at(est.s)
    return LocalEstimate(est.sensor_id, est.k, est.s + 1, x, P)


def update(prior: LocalEstimate, theta, omega) -> LocalEstimate:
    """[P]^{-1} = [P-]^{-1} + Omega and x = P([P-]^{-1} x- + Theta)."""
    prior_info = _spd_inverse(prior.cov, "prior covariance")
    info = _sym(prior_info + np.asarray(omega, dtype=float))
    P = _spd_inverse(info, "posterior information")
    x = P @ (prior_info @ prior.state + np.asarray(theta, dtype=float))
    return LocalEstimate(prior.sensor_id, prior.k, prior.s, x, P)


def kalman_gain(prior_cov, H, R) -> np.ndarray:
    H = np.atleast_2d(H)
    S = H @ prior_cov @ H.T + np.atleast_2d(R)
    if np.linalg.cond(S) > COND_LIMIT:
        raise FilterError("innovation covariance is singular")
    return np.linalg.solve(S, H @ prior_cov).T


def covariance_update(prior: LocalEstimate, H, R, y) -> LocalEstimate:
    """Gain/covariance form of the single-sensor update."""
    H = np.atleast_2d(H)
    K = kalman_gain(prior.cov, H, R)
    x = prior.state + K @ (np.atleast_1d(y) - H @ prior.state)
    P = prior.cov - K @ H @ prior.cov
    return LocalEstimate(prior.sensor_id, prior.k, prior.s, x, _sym(P))


def reprocess(anchor: AnchorState, network: NetworkState, k: int, topology: Topology, system: SystemModel,
              own: dict[int, list[InfoPair]], rounds: int | None = None) -> list[LocalEstimate]:
    """Re-filter stamps anchor.s+1..k for sensor ``anchor.sensor_id`` at instant k.

    ``own[s]`` holds every sensor's pair for stamp s. Returns the estimates for
    each reprocessed stamp; the last one is x_k(k).
    """
    i = anchor.sensor_id
    rounds = consensus_rounds(topology) if rounds is None else rounds
    est = LocalEstimate(i, k, anchor.s, anchor.state, anchor.cov)
    trail = []
    for s in range(anchor.s + 1, k + 1):
        if s not in own:
            raise FilterError(f"no own measurement stored for stamp {s}")
        theta, omega = run_rounds(topology, own[s], network.gate_matrix(s, k), rounds)
        est = update(predict(est, system), theta[i], omega[i])
        trail.append(est)
    return trail


class FilterBank:
    """Object-level anti-delay filter for all sensors (reference implementation).

    Slow but direct; the vectorised simulator must agree with it.
    ``drop_late`` keeps only packets that arrive with zero delay and never
    revisits past stamps.
    """

    def __init__(self, system: SystemModel, sensors: Sequence[SensorModel], topology: Topology,
                 delays: np.ndarray, max_delay: int, drop_late: bool = False, rounds: int | None = None):
        self.system = system
        self.sensors = list(sensors)
        self.topology = topology
        self.window = 0 if drop_late else max_delay
        delays = np.asarray(delays)
        if drop_late:
            # anything late is never delivered
            delays = np.where(delays > 0, 10 ** 9, 0)
        self.network = NetworkState(topology, delays, max_delay=max_delay)
        self.rounds = consensus_rounds(topology) if rounds is None else rounds
        n = len(self.sensors)
        init = [LocalEstimate(i, 0, 0, system.init_mean.copy(), system.init_cov.copy()) for i in range(n)]
        self.history = {0: init}  # stamp -> latest estimates of every sensor
        self.own: dict[int, list[InfoPair]] = {}
        self.k = 0

    def step(self, measurements: Sequence[np.ndarray]) -> list[LocalEstimate]:
        k = self.k + 1
        self.own[k] = [init_message(sen, y, k) for sen, y in zip(self.sensors, measurements)]
        self.network.advance(k, {i: self.own[k][i] for i in range(len(self.sensors))})
        anchor_s = max(0, k - self.window - 1)
        out = []
        new_hist = {}
        for i in range(len(self.sensors)):
            trail = reprocess(self.history[anchor_s][i], self.network, k, self.topology, self.system, self.own, self.rounds)
            for est in trail:
                new_hist.setdefault(est.s, [None] * len(self.sensors))[i] = est
            out.append(trail[-1])
        self.history.update(new_hist)
        for s in [s for s in self.history if s < anchor_s]:
            del self.history[s]
        for s in [s for s in self.own if s <= k - self.window - 1]:
            del self.own[s]
        self.k = k
        return out
