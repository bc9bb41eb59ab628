import numpy as np
import pytest
from hypothesis import given, strategies as st

from adkf.consensus import (ConsensusError, InfoPair, LinkArrays, RoundState, aggregate, contribution_coefficients,
                            init_message, outgoing_message, run_rounds)
from adkf.graph import Topology, consensus_rounds, random_tree
from adkf.kernels import backend
from adkf.model import SensorModel


def pair(v, nx=1):
    return InfoPair(np.full(nx, float(v)), np.full((nx, nx), float(v)))


def unit(top):
    n = top.node_count
    return np.ones((n, n)) - np.eye(n)


def test_init_message_examples():
    m = init_message(SensorModel(1, [[1, 0, 0]], [[1.0]]), [2.0])
    assert np.allclose(m.info_vec, [2, 0, 0]) and np.allclose(m.info_mat, np.diag([1, 0, 0]))
    m = init_message(SensorModel(1, [[0, 0, 1]], [[0.1]]), [1.0])
    assert np.allclose(m.info_vec, [0, 0, 10]) and np.allclose(m.info_mat, np.diag([0, 0, 10]))
    m = init_message(SensorModel(1, [[1, 0, 0]], [[0.8]]), [0.8])
    assert np.allclose(m.info_vec, [1, 0, 0])


def test_init_message_singular_r():
    with pytest.raises(ConsensusError):
        init_message(SensorModel(1, np.eye(2), [[1.0, 1.0], [1.0, 1.0]]), [1.0, 1.0])


def test_aggregate_examples():
    own = pair(1)
    assert aggregate(own, {})[0][0] == 1
    assert aggregate(own, {2: (pair(5), 0.0)})[0][0] == 1
    assert aggregate(own, {2: (pair(2), 1.0), 3: (pair(3), 1.0)})[0][0] == 6
    with pytest.raises(ConsensusError):
        aggregate(own, {2: (pair(2), -1.0)})


def test_outgoing_messages_on_path():
    top = Topology.undirected(3, [(0, 1), (1, 2)])  # a=0, i=1, b=2
    own = [pair(1), pair(10), pair(100)]
    st_ = RoundState(0, top, own, unit(top))
    st_.step()
    assert outgoing_message(1, 2, 2, st_).info_vec[0] == 11
    # leaf 0 only has neighbour 1: always its own pair
    assert outgoing_message(0, 1, 2, st_).info_vec[0] == 1
    with pytest.raises(ConsensusError):
        outgoing_message(1, 2, 5, st_)
    with pytest.raises(ConsensusError):
        outgoing_message(0, 2, 2, st_)


def test_zero_measurement_relay():
    top = Topology.undirected(2, [(0, 1)])
    st_ = RoundState(0, top, [InfoPair.zeros(2), pair(3, 2)], unit(top))
    st_.step()
    m = outgoing_message(0, 1, 2, st_)
    assert not m.info_vec.any() and not m.info_mat.any()


def test_single_node_rounds():
    top = Topology.undirected(1, [])
    theta, omega = run_rounds(top, [pair(4, 2)], rounds=5)
    assert np.allclose(theta, 4) and np.allclose(omega, 4)


@pytest.mark.parametrize("top", [Topology.undirected(3, [(0, 1), (1, 2)]),
                                 Topology.undirected(4, [(0, 1), (0, 2), (0, 3)])])
def test_small_trees_reach_global_sum(top):
    own = [pair(v) for v in (1, 2, 3, 4)[:top.node_count]]
    theta, _ = run_rounds(top, own, unit(top), consensus_rounds(top))
    assert np.allclose(theta, sum(v for v in (1, 2, 3, 4)[:top.node_count]))


def reference_rounds(top, own, gates, rounds):
    st_ = RoundState(0, top, own, gates)
    for _ in range(rounds):
        st_.step()
    return np.array([st_.aggregates[i][0] for i in range(top.node_count)])


@given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.integers(1, 6))
def test_kernel_matches_object_rounds(n, seed, rounds):
    rng = np.random.default_rng(seed)
    top = random_tree(n, rng) if n > 1 else Topology.undirected(1, [])
    own = [InfoPair(rng.standard_normal(2), np.eye(2)) for _ in range(n)]
    gates = top.weight_matrix * (rng.uniform(size=(n, n)) < 0.7)
    theta, _ = run_rounds(top, own, gates, rounds)
    assert np.allclose(theta, reference_rounds(top, own, gates, rounds), atol=1e-12)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_backends_agree(n, seed):
    rng = np.random.default_rng(seed)
    top = Topology.directed_graph(n, [(i, (i + 1) % n) for i in range(n)] + [(0, n // 2)])
    a = LinkArrays.from_topology(top)
    own = rng.standard_normal((n, 5))
    gate = a.weight * (rng.uniform(size=a.weight.shape) < 0.8)
    args = (own, a.src, a.dst, gate, a.in_ptr, a.in_edge, 4)
    assert np.allclose(backend("numba").consensus_rounds(*args), backend("numpy").consensus_rounds(*args), atol=1e-12)


@given(st.integers(2, 12), st.integers(0, 2**32 - 1))
def test_unit_weight_trees_count_each_node_once(n, seed):
    top = random_tree(n, np.random.default_rng(seed))
    C = contribution_coefficients(top, unit(top), consensus_rounds(top))
    assert np.allclose(C, 1.0)


def test_missing_packet_removes_subtree():
    top = Topology.undirected(3, [(0, 1), (1, 2)])
    gates = unit(top)
    gates[1, 0] = 0.0       # node 1 has not received node 0's packet
    C = contribution_coefficients(top, gates, 2)
    assert C[1].tolist() == [0.0, 1.0, 1.0]
    assert C[2].tolist() == [0.0, 1.0, 1.0]
    assert C[0].tolist() == [1.0, 1.0, 1.0]


def test_rounds_must_be_positive():
    with pytest.raises(ConsensusError):
        run_rounds(Topology.undirected(1, []), [pair(1)], rounds=0)
