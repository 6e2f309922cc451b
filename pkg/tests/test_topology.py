import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import random_connected_graph
from radmm.topology import (
    ConnectivityRetriesExceededError,
    DisconnectedError,
    DuplicateEdgeError,
    Graph,
    SelfLoopError,
    build_graph,
    build_matrices,
    complete_graph,
    random_geometric_graph,
)


def test_smallest_connected_graph():
    g = build_graph(2, [(0, 1)])
    assert g.num_slots == 2
    assert g.degrees.tolist() == [1, 1]
    assert g.slot_index == {(0, 1): 0, (1, 0): 1}


def test_three_node_path_slot_ordering():
    g = build_graph(3, [(0, 1), (1, 2)])
    assert g.num_slots == 4
    assert g.degrees.tolist() == [1, 2, 1]
    assert g.slots == [(0, 1), (1, 0), (1, 2), (2, 1)]


def test_disconnected_rejected():
    with pytest.raises(DisconnectedError):
        build_graph(3, [(0, 1)])


def test_self_loop_and_duplicate_rejected():
    with pytest.raises(SelfLoopError):
        build_graph(3, [(0, 0), (0, 1), (1, 2)])
    with pytest.raises(DuplicateEdgeError):
        build_graph(3, [(0, 1), (1, 0), (1, 2)])


def test_two_node_matrices():
    m = build_matrices(build_graph(2, [(0, 1)]), 1)
    assert np.array_equal(m.A, np.eye(2))
    assert np.array_equal(m.P, np.array([[0.0, 1.0], [1.0, 0.0]]))


def test_three_node_path_matrices():
    m = build_matrices(build_graph(3, [(0, 1), (1, 2)]), 1)
    assert np.array_equal(
        m.A, np.array([[1, 0, 0], [0, 1, 0], [0, 1, 0], [0, 0, 1]], dtype=float)
    )
    # swaps rows 0<->1 and 2<->3
    expect = np.zeros((4, 4))
    expect[0, 1] = expect[1, 0] = expect[2, 3] = expect[3, 2] = 1.0
    assert np.array_equal(m.P, expect)


@pytest.mark.parametrize("n", [1, 2, 3])
def test_structural_identities_random_graphs(n):
    rng = np.random.default_rng(10 + n)
    for _ in range(10):
        g = random_connected_graph(rng)
        m = build_matrices(g, n)
        assert np.array_equal(m.P @ m.P, np.eye(n * g.num_slots))
        blocks = np.kron(np.diag(g.degrees.astype(float)), np.eye(n))
        assert np.array_equal(m.A.T @ m.A, blocks)
        # each row of A selects exactly one coordinate
        assert (m.A.sum(axis=1) == 1.0).all()
        assert ((m.A == 0) | (m.A == 1)).all()


@given(st.integers(min_value=0, max_value=2**31 - 1))
@settings(max_examples=25, deadline=None)
def test_slot_table_invariants(seed):
    g = random_connected_graph(np.random.default_rng(seed))
    assert g.degrees.sum() == g.num_slots
    # bijection onto 0..M-1 and closure under mirroring
    assert sorted(g.slot_index.values()) == list(range(g.num_slots))
    for (i, j), s in g.slot_index.items():
        assert g.slot_index[(j, i)] == g.mirror[s]
    # owner blocks contiguous in degree order
    for i in range(g.num_nodes):
        a, b = g.owner_starts[i], g.owner_starts[i + 1]
        assert all(g.owner[k] == i for k in range(a, b))
        assert [g.origin[k] for k in range(a, b)] == sorted(g.neighbors[i])


def test_geometric_two_nodes_max_radius_complete():
    g = random_geometric_graph(2, np.sqrt(2), seed=0)
    assert g.edges == [(0, 1)]


def test_geometric_reproducible():
    g1 = random_geometric_graph(25, 0.4, seed=7)
    g2 = random_geometric_graph(25, 0.4, seed=7)
    assert g1.edges == g2.edges
    g3 = random_geometric_graph(25, 0.4, seed=8)
    assert g3.edges != g1.edges


def test_geometric_unreachable_radius():
    with pytest.raises(ConnectivityRetriesExceededError):
        random_geometric_graph(5, 1e-9, seed=0, max_attempts=10)


def test_complete_graph():
    g = complete_graph(4)
    assert len(g.edges) == 6
    assert g.degrees.tolist() == [3, 3, 3, 3]


def test_json_roundtrip_normalizes_edges():
    g = build_graph(3, [(2, 1), (1, 0)])
    d = json.loads(g.to_json())
    assert d == {"n_nodes": 3, "edges": [[0, 1], [1, 2]]}
    g2 = Graph.from_json(g.to_json())
    assert g2.edges == g.edges and g2.num_nodes == g.num_nodes
