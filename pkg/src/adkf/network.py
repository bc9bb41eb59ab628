"""Time-varying transmission delays, time-stamped packets and per-sensor buffers."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Sequence

import numpy as np

from .graph import Topology
from .model import DELAY, noise_rng


class NetworkError(ValueError):
    pass


@dataclass(frozen=True)
class DelayProfile:
    """Distribution of per-packet delays over {0, ..., max_delay}."""

    max_delay: int
    probs: tuple[float, ...]

    def __post_init__(self):
        if self.max_delay < 0:
            raise NetworkError("max_delay must be nonnegative")
        p = np.asarray(self.probs, dtype=float)
        if p.shape != (self.max_delay + 1,) or (p < 0).any() or abs(p.sum() - 1.0) > 1e-9:
            raise NetworkError(f"probs must be {self.max_delay + 1} nonnegative values summing to 1")

    @classmethod
    def uniform(cls, max_delay: int) -> "DelayProfile":
        return cls(max_delay, tuple([1.0 / (max_delay + 1)] * (max_delay + 1)))

    @classmethod
    def point_mass(cls, value: int, max_delay: int | None = None) -> "DelayProfile":
        d = value if max_delay is None else max_delay
        probs = [0.0] * (d + 1)
        probs[value] = 1.0
        return cls(d, tuple(probs))


def sample_delay(profile: DelayProfile, rng) -> int:
    return int(rng.choice(profile.max_delay + 1, p=profile.probs))


def delay_schedule(profile: DelayProfile, links: Sequence[tuple[int, int]], horizon: int, seed: int, run: int = 0, node_count: int | None = None) -> np.ndarray:
    """Delays d[e, s] for every directed link e and stamp s = 0..horizon.

    Each link draws from its own keyed stream, so a link's schedule does not
    depend on which other links exist.
    """
    n = node_count if node_count is not None else 1 + max((max(l) for l in links), default=0)
    out = np.zeros((len(links), horizon + 1), dtype=np.int64)
    if profile.max_delay == 0:
        return out
    p = np.asarray(profile.probs)
    for e, (a, b) in enumerate(links):
        rng = noise_rng(seed, run, DELAY, a * n + b)
        out[e] = rng.choice(profile.max_delay + 1, size=horizon + 1, p=p)
    return out


def transmission_window(k: int, d_t: int) -> range:
    """Stamps whose packets may still be in flight or newly usable at instant k."""
    if k < 0:
        raise NetworkError("k must be nonnegative")
    if k <= d_t + 1:
        return range(0, k + 1)
    return range(k - d_t, k + 1)


@dataclass(frozen=True)
class Packet:
    src: int
    dst: int
    stamp: int
    payload: Any
    arrival: int


@dataclass
class DelayBuffer:
    """Buffer of one sensor: one cell per (neighbour, stamp) over the last L stamps."""

    owner: int
    neighbors: tuple[int, ...]
    length: int
    now: int = 0
    cells: dict = field(default_factory=dict)

    @property
    def oldest(self) -> int:
        return self.now - self.length + 1

    def shift(self, k: int) -> None:
        """Move to instant k, discarding stamps older than k - L + 1."""
        if k < self.now:
            raise NetworkError(f"time regression: {k} < {self.now}")
        self.now = k
        for key in [key for key in self.cells if key[1] < self.oldest]:
            del self.cells[key]

    def store(self, packet: Packet) -> None:
        if packet.src not in self.neighbors:
            raise NetworkError(f"sensor {packet.src} is not a neighbour of {self.owner}")
        if packet.stamp < self.oldest:
            raise NetworkError(f"packet ({packet.src}, {packet.stamp}) arrived after its cell was discarded")
        if (packet.src, packet.stamp) in self.cells:
            raise NetworkError(f"duplicate packet ({packet.src}, {packet.stamp})")
        self.cells[(packet.src, packet.stamp)] = packet

    def occupancy(self) -> int:
        return len(self.cells)


def gamma(buffer: DelayBuffer, src: int, stamp: int, now: int) -> int:
    """1 iff the packet from ``src`` stamped ``stamp`` is in the buffer at ``now``."""
    if stamp > now:
        raise NetworkError("stamp lies in the future")
    if src == buffer.owner:
        return 1
    if now != buffer.now:
        raise NetworkError(f"buffer is at instant {buffer.now}, queried at {now}")
    if stamp < buffer.oldest:
        raise NetworkError(f"stamp {stamp} is older than the buffer window")
    return int((src, stamp) in buffer.cells)


def gated_weight(topology: Topology, buffer: DelayBuffer, i: int, j: int, s: int, k: int) -> float:
    if i == j:
        return 1.0
    if (j, i) not in topology.link_index:
        raise NetworkError(f"{j} does not send to {i}")
    return gamma(buffer, j, s, k) * float(topology.weight_matrix[i, j])


class NetworkState:
    """Packets in flight plus every sensor's buffer; single writer advances time."""

    def __init__(self, topology: Topology, delays: np.ndarray, buffer_length: int | None = None, max_delay: int | None = None):
        self.topology = topology
        self.delays = np.asarray(delays)
        d_t = int(self.delays.max()) if max_delay is None else max_delay
        self.max_delay = d_t
        self.buffer_length = d_t + 2 if buffer_length is None else buffer_length
        if self.buffer_length < d_t + 1:
            raise NetworkError("buffer length must be at least max_delay + 1")
        self.buffers = [DelayBuffer(i, tuple(topology.in_neighbors[i]), self.buffer_length, now=-1) for i in range(topology.node_count)]
        self.in_flight: list[Packet] = []
        self.now = -1

    def advance(self, k: int, payloads: dict[int, Any] | None = None) -> list[Packet]:
        """Shift buffers to k, deliver packets due at k, then send the stamp-k packets."""
        if k <= self.now:
            raise NetworkError(f"time regression: {k} <= {self.now}")
        self.now = k
        for buf in self.buffers:
            buf.shift(k)
        if payloads is not None:
            for e, (a, b) in enumerate(self.topology.links):
                d = int(self.delays[e, k])
                self.in_flight.append(Packet(a, b, k, payloads.get(a), k + d))
        arrived = [p for p in self.in_flight if p.arrival <= k]
        self.in_flight = [p for p in self.in_flight if p.arrival > k]
        for p in arrived:
            self.buffers[p.dst].store(p)
        return arrived

    def gate_matrix(self, s: int, k: int) -> np.ndarray:
        """Gated weights (n x n) for stamp s as seen at instant k."""
        n = self.topology.node_count
        G = np.zeros((n, n))
        for a, b in self.topology.links:
            G[b, a] = gated_weight(self.topology, self.buffers[b], b, a, s, k)
        return G
