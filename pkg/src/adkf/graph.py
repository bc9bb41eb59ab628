"""Sensor-network communication topology."""

from __future__ import annotations

import enum
import warnings
from collections import deque
from dataclasses import dataclass
from functools import cached_property

import numpy as np


class TopologyError(ValueError):
    pass


class TopologyKind(enum.Enum):
    UNDIRECTED_TREE = "undirected_tree"
    CONNECTED_UNDIRECTED = "connected_undirected"
    STRONGLY_CONNECTED_DIGRAPH = "strongly_connected_digraph"
    INVALID = "invalid"


@dataclass(frozen=True)
class TopologyClass:
    kind: TopologyKind
    diameter: int | None


@dataclass(frozen=True, eq=False)
class Topology:
    """Communication graph on nodes 0..node_count-1.

    ``links`` holds directed (sender, receiver) pairs; an undirected edge
    contributes both directions. ``weights[i, j]`` is the weight node i
    applies to what it receives from j. When ``weights`` is None the
    1/|N_i| rule is used.
    """

    node_count: int
    links: tuple[tuple[int, int], ...]
    directed: bool = False
    weights: np.ndarray | None = None

    @classmethod
    def undirected(cls, node_count, edges, weights=None):
        links = set()
        for a, b in edges:
            if a == b:
                continue
            links.add((int(a), int(b)))
            links.add((int(b), int(a)))
        return cls._build(node_count, links, False, weights)

    @classmethod
    def directed_graph(cls, node_count, arcs, weights=None):
        links = {(int(a), int(b)) for a, b in arcs if a != b}
        return cls._build(node_count, links, True, weights)

    @classmethod
    def _build(cls, node_count, links, directed, weights):
        if node_count < 1:
            raise TopologyError("node_count must be >= 1")
        for a, b in links:
            if not (0 <= a < node_count and 0 <= b < node_count):
                raise TopologyError(f"link ({a}, {b}) references a missing node")
        if weights is not None:
            weights = np.asarray(weights, dtype=float)
            if weights.shape != (node_count, node_count) or (weights < 0).any():
                raise TopologyError("weights must be a nonnegative node_count x node_count matrix")
        return cls(int(node_count), tuple(sorted(links)), directed, weights)

    @cached_property
    def in_neighbors(self) -> list[list[int]]:
        nb = [[] for _ in range(self.node_count)]
        for src, dst in self.links:
            nb[dst].append(src)
        return nb

    @cached_property
    def out_neighbors(self) -> list[list[int]]:
        nb = [[] for _ in range(self.node_count)]
        for src, dst in self.links:
            nb[src].append(dst)
        return nb

    @property
    def edge_count(self) -> int:
        return len(self.links) if self.directed else len(self.links) // 2

    @cached_property
    def weight_matrix(self) -> np.ndarray:
        if self.weights is not None:
            return self.weights
        return default_weights(self)

    @cached_property
    def link_index(self) -> dict[tuple[int, int], int]:
        return {link: e for e, link in enumerate(self.links)}

    def relabel(self, perm) -> "Topology":
        """Copy with node v renamed perm[v]."""
        perm = list(perm)
        links = {(perm[a], perm[b]) for a, b in self.links}
        weights = None
        if self.weights is not None:
            inv = np.argsort(perm)
            weights = self.weights[np.ix_(inv, inv)]
        return Topology._build(self.node_count, links, self.directed, weights)


def _bfs(adj, start):
    dist = [-1] * len(adj)
    dist[start] = 0
    queue = deque([start])
    while queue:
        u = queue.popleft()
        for v in adj[u]:
            if dist[v] < 0:
                dist[v] = dist[u] + 1
                queue.append(v)
    return dist


def _all_distances(topology):
    return [_bfs(topology.out_neighbors, v) for v in range(topology.node_count)]


def classify(topology: Topology) -> TopologyClass:
    dists = _all_distances(topology)
    reach_all = all(d >= 0 for row in dists for d in row)
    if not reach_all:
        return TopologyClass(TopologyKind.INVALID, None)
    diam = max(max(row) for row in dists)
    if topology.directed:
        return TopologyClass(TopologyKind.STRONGLY_CONNECTED_DIGRAPH, diam)
    if topology.edge_count == topology.node_count - 1:
        return TopologyClass(TopologyKind.UNDIRECTED_TREE, diam)
    return TopologyClass(TopologyKind.CONNECTED_UNDIRECTED, diam)


def diameter(topology: Topology) -> int:
    """Largest shortest-path hop count over ordered node pairs."""
    cls = classify(topology)
    if cls.kind is TopologyKind.INVALID:
        raise TopologyError("graph is not (strongly) connected")
    return cls.diameter


def consensus_rounds(topology: Topology) -> int:
    """Rounds of message passing used per instant (diameter, at least 1)."""
    cls = classify(topology)
    if cls.kind is TopologyKind.INVALID:
        raise TopologyError("graph is not (strongly) connected")
    if cls.kind is TopologyKind.CONNECTED_UNDIRECTED:
        warnings.warn("graph has cycles; consensus aggregates may double count", stacklevel=2)
    return max(1, cls.diameter)


def default_weights(topology: Topology) -> np.ndarray:
    """omega_ij = 1/|N_i| for j in N_i (in-neighbours), 0 elsewhere."""
    n = topology.node_count
    W = np.zeros((n, n))
    for i, nbrs in enumerate(topology.in_neighbors):
        if not nbrs:
            if n > 1:
                raise TopologyError(f"node {i} has no neighbours")
            continue
        W[i, nbrs] = 1.0 / len(nbrs)
    return W


def effective_weights(W) -> np.ndarray:
    """Weight matrix with the unit self weight applied at i = j."""
    W = np.array(W, dtype=float)
    np.fill_diagonal(W, 1.0)
    return W


def weight_power_positive(W, s: int, include_self: bool = True) -> bool:
    """True iff every entry of W^s is strictly positive.

    With ``include_self`` the diagonal is first set to the unit self weight,
    which is the matrix the consensus recursion actually iterates.
    """
    if s < 1:
        raise ValueError("s must be >= 1")
    M = effective_weights(W) if include_self else np.asarray(W, dtype=float)
    return bool((np.linalg.matrix_power(M, s) > 0).all())


def min_positive_power_entry(W, powers) -> float:
    """Smallest strictly positive entry of (W with unit diagonal)^sigma over ``powers``."""
    M = effective_weights(W)
    best = np.inf
    P = np.eye(M.shape[0])
    last = 0
    for sigma in sorted(powers):
        P = P @ np.linalg.matrix_power(M, sigma - last)
        last = sigma
        pos = P[P > 0]
        if pos.size:
            best = min(best, float(pos.min()))
    if not np.isfinite(best):
        raise TopologyError("no positive entries in the requested weight powers")
    return best


def tree_diameter_two_sweep(topology: Topology) -> int:
    d0 = _bfs(topology.out_neighbors, 0)
    far = int(np.argmax(d0))
    return max(_bfs(topology.out_neighbors, far))


def random_tree(n: int, rng) -> Topology:
    """Uniform-ish random labelled tree (random attachment)."""
    edges = [(int(rng.integers(0, v)), v) for v in range(1, n)]
    perm = rng.permutation(n)
    return Topology.undirected(n, [(perm[a], perm[b]) for a, b in edges])
