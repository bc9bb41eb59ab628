"""Finite-time consensus on information pairs.

Each node starts from its own pair (H^T R^{-1} y, H^T R^{-1} H). In every
round node i forms the aggregate

    Theta_i(t) = psi_i + sum_{j in N_i} w_ij(k, s) * m_{j->i}(t-1)

and relays m_{i->j}(t) = psi_i + sum_{l in N_i, l != j} w_il(k, s) * m_{l->i}(t-1),
i.e. the aggregate with j's own echo removed. On a tree with unit weights
every aggregate equals the network-wide sum after ``diameter`` rounds.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from . import kernels
from .graph import Topology
from .model import SensorModel


class ConsensusError(ValueError):
    pass


@dataclass(frozen=True)
class InfoPair:
    info_vec: np.ndarray
    info_mat: np.ndarray

    def __add__(self, other: "InfoPair") -> "InfoPair":
        return InfoPair(self.info_vec + other.info_vec, self.info_mat + other.info_mat)

    def scaled(self, w: float) -> "InfoPair":
        return InfoPair(w * self.info_vec, w * self.info_mat)

    @classmethod
    def zeros(cls, nx: int) -> "InfoPair":
        return cls(np.zeros(nx), np.zeros((nx, nx)))


def init_message(sensor: SensorModel, y, k: int = 0) -> InfoPair:
    R = sensor.meas_cov_at(k)
    if np.linalg.cond(R) > 1e12:
        raise ConsensusError(f"sensor {sensor.sensor_id}: measurement covariance is singular")
    return InfoPair(sensor.info_vector(y, k), sensor.info_matrix(k))


def aggregate(own: InfoPair, incoming: Mapping[int, tuple[InfoPair, float]]) -> tuple[np.ndarray, np.ndarray]:
    """Theta = psi_own + sum_j w_j psi_j and likewise Omega."""
    theta = own.info_vec.copy()
    omega = own.info_mat.copy()
    for j, (pair, w) in incoming.items():
        if w < 0:
            raise ConsensusError(f"negative weight for neighbour {j}")
        if pair.info_vec.shape != theta.shape:
            raise ConsensusError("dimension mismatch")
        if w:
            theta = theta + w * pair.info_vec
            omega = omega + w * pair.info_mat
    return theta, omega


@dataclass
class RoundState:
    """Synchronous message-passing state at one instant.

    ``gates[i, j]`` is the gated weight node i applies to node j.
    ``messages[(i, j)]`` is the current-round message from i to j.
    """

    instant: int
    topology: Topology
    own: list[InfoPair]
    gates: np.ndarray
    round: int = 0
    messages: dict = field(default_factory=dict)
    aggregates: dict = field(default_factory=dict)

    def __post_init__(self):
        if not self.messages:
            self.messages = {link: self.own[link[0]] for link in self.topology.links}

    def step(self) -> None:
        t = self.round + 1
        aggs = {}
        for i in range(self.topology.node_count):
            incoming = {j: (self.messages[(j, i)], self.gates[i, j]) for j in self.topology.in_neighbors[i]}
            aggs[i] = aggregate(self.own[i], incoming)
        new = {link: outgoing_message(link[0], link[1], t, self) for link in self.topology.links}
        self.aggregates = aggs
        self.messages = new
        self.round = t


def outgoing_message(i: int, j: int, t: int, state: RoundState) -> InfoPair:
    """Message i -> j for round t, built from the round t-1 messages in ``state``."""
    if (i, j) not in state.topology.link_index:
        raise ConsensusError(f"({i}, {j}) is not a link")
    if t < 1:
        raise ConsensusError("round must be >= 1")
    if state.round != t - 1:
        raise ConsensusError(f"state is at round {state.round}, need {t - 1}")
    out = state.own[i]
    for l in state.topology.in_neighbors[i]:
        if l == j:
            continue
        w = state.gates[i, l]
        if w:
            out = out + state.messages[(l, i)].scaled(w)
    return out


@dataclass(frozen=True)
class LinkArrays:
    """Flat edge arrays consumed by the kernels."""

    src: np.ndarray
    dst: np.ndarray
    weight: np.ndarray
    in_ptr: np.ndarray
    in_edge: np.ndarray

    @classmethod
    def from_topology(cls, topology: Topology, unit_weights: bool = False) -> "LinkArrays":
        links = topology.links
        src = np.array([a for a, _ in links], dtype=np.int64)
        dst = np.array([b for _, b in links], dtype=np.int64)
        W = topology.weight_matrix
        weight = np.ones(len(links)) if unit_weights else np.array([W[b, a] for a, b in links], dtype=float)
        order = np.lexsort((src, dst)) if len(links) else np.zeros(0, dtype=np.int64)
        counts = np.bincount(dst, minlength=topology.node_count) if len(links) else np.zeros(topology.node_count, dtype=np.int64)
        in_ptr = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        return cls(src, dst, weight, in_ptr, order.astype(np.int64))

    def gates_from_matrix(self, gates: np.ndarray) -> np.ndarray:
        return np.array([gates[b, a] for a, b in zip(self.src, self.dst)], dtype=float)


def run_rounds(topology: Topology, own: list[InfoPair], gates: np.ndarray | None = None, rounds: int = 1):
    """Run ``rounds`` synchronous rounds; returns Theta (n, nx) and Omega (n, nx, nx).

    ``gates`` defaults to the topology's weight matrix (everything arrived).
    """
    if rounds < 1:
        raise ConsensusError("rounds must be >= 1")
    n = topology.node_count
    nx = own[0].info_vec.shape[0]
    arrays = LinkArrays.from_topology(topology)
    g = arrays.gates_from_matrix(topology.weight_matrix if gates is None else np.asarray(gates, dtype=float))
    if (g < 0).any():
        raise ConsensusError("gated weights must be nonnegative")
    payload = np.empty((n, nx + nx * nx))
    for i, pair in enumerate(own):
        payload[i, :nx] = pair.info_vec
        payload[i, nx:] = pair.info_mat.ravel()
    agg = kernels.consensus_rounds(payload, arrays.src, arrays.dst, g, arrays.in_ptr, arrays.in_edge, int(rounds))
    theta = agg[:, :nx]
    omega = agg[:, nx:].reshape(n, nx, nx)
    return theta, 0.5 * (omega + np.swapaxes(omega, 1, 2))


def contribution_coefficients(topology: Topology, gates: np.ndarray | None = None, rounds: int = 1) -> np.ndarray:
    """C[i, j] = weight with which node j's own pair enters Theta_i."""
    n = topology.node_count
    arrays = LinkArrays.from_topology(topology)
    g = arrays.gates_from_matrix(topology.weight_matrix if gates is None else np.asarray(gates, dtype=float))
    return kernels.consensus_rounds(np.eye(n), arrays.src, arrays.dst, g, arrays.in_ptr, arrays.in_edge, int(rounds))
