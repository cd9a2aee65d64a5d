import networkx as nx
import numpy as np
import pytest

from netlod.network import (INF, NetworkError, SpatialNetwork, boundary_nodes, dist_to_set,
                            element_boundary, graph_distance, node_set, patch, read_network,
                            write_network)

from conftest import labels_partition, line_net


def test_graph_distance_examples(p3):
    assert graph_distance(p3, [0, 1, 2], 0, 2) == 3.0
    assert graph_distance(p3, [0, 1, 2], 1, 1) == 0.0
    assert graph_distance(p3, [0, 2], 0, 2) == INF


def test_graph_distance_outside_set(p3):
    with pytest.raises(NetworkError):
        graph_distance(p3, [0, 1], 0, 2)


def test_dist_to_set_examples(p3):
    np.testing.assert_array_equal(dist_to_set(p3, [0, 1, 2], [0]), [0, 1, 3])
    np.testing.assert_array_equal(dist_to_set(p3, [0, 1, 2], [0, 1, 2]), [0, 0, 0])
    d = dist_to_set(p3, [0, 2], [0])
    assert d[0] == 0 and d[1] == INF
    with pytest.raises(NetworkError):
        dist_to_set(p3, [0, 1, 2], [])


def test_boundary_nodes_examples(unit_p5):
    np.testing.assert_array_equal(boundary_nodes(unit_p5, [0, 1, 2]), [2])
    assert boundary_nodes(unit_p5, range(5), range(5)).size == 0
    np.testing.assert_array_equal(boundary_nodes(unit_p5, [2]), [2])
    with pytest.raises(NetworkError):
        boundary_nodes(unit_p5, [0, 1], [1, 2])


def test_element_boundary_examples():
    net = line_net([0.0, 1.0, 3.0], dirichlet=(0,), boundary=(0,))
    np.testing.assert_array_equal(element_boundary(net, [0, 1, 2]), [0])
    net5 = line_net([0, 1, 2, 3, 4], dirichlet=(0, 4))
    np.testing.assert_array_equal(element_boundary(net5, [2]), [2])
    np.testing.assert_array_equal(element_boundary(net5, [1, 2, 3]), [1, 3])


def test_patch_examples(unit_p5, p5_split):
    np.testing.assert_array_equal(patch(unit_p5, p5_split, [1], 1), [0, 1])
    np.testing.assert_array_equal(patch(unit_p5, p5_split, [1], 0), [1])
    np.testing.assert_array_equal(patch(unit_p5, p5_split, [0], 10), [0, 1])
    with pytest.raises(NetworkError):
        patch(unit_p5, p5_split, [0], -1)


def test_patch_monotone_and_saturates(small_setup):
    part = small_setup.part
    prev = set()
    for ell in range(12):
        cur = set(patch(small_setup.net, part, [0], ell))
        assert prev <= cur
        prev = cur
    assert prev == set(range(part.n_elements))


def test_invariants_rejected():
    c = np.array([[0.0, 0], [1, 0], [2, 0]])
    with pytest.raises(NetworkError):
        SpatialNetwork(c, [[0, 1], [1, 2]], [False] * 3)
    with pytest.raises(NetworkError):
        SpatialNetwork(c, [[0, 0], [1, 2]], [True, False, False])
    with pytest.raises(NetworkError):
        SpatialNetwork(c, [[0, 1], [1, 0], [1, 2]], [True, False, False])
    with pytest.raises(NetworkError):
        SpatialNetwork(c, [[0, 1]], [True, False, False])
    with pytest.raises(NetworkError):
        SpatialNetwork(np.zeros((2, 2)), [[0, 1]], [True, False])
    with pytest.raises(NetworkError):
        SpatialNetwork(c, [[0, 1], [1, 2]], [True, False, False], weights=[1.0, -1.0])


def test_immutable(p3):
    with pytest.raises(ValueError):
        p3.coords[0, 0] = 5.0


def test_node_set():
    np.testing.assert_array_equal(node_set([3, 1, 3]), [1, 3])
    with pytest.raises(NetworkError):
        node_set([5], 3)


def test_roundtrip(tmp_path, small_fiber):
    rng = np.random.default_rng(0)
    net = small_fiber.with_weights(rng.uniform(0.1, 1, small_fiber.n_edges))
    write_network(net, tmp_path / "n.txt")
    back = read_network(tmp_path / "n.txt")
    np.testing.assert_array_equal(back.coords, net.coords)
    np.testing.assert_array_equal(back.edges, net.edges)
    np.testing.assert_array_equal(back.weights, net.weights)
    np.testing.assert_array_equal(back.dirichlet, net.dirichlet)
    np.testing.assert_array_equal(back.domain_boundary, net.domain_boundary)


def test_distances_match_networkx(small_fiber):
    net = small_fiber
    G = nx.Graph()
    for (u, v), w in zip(net.edges, net.lengths):
        G.add_edge(int(u), int(v), weight=float(w))
    rng = np.random.default_rng(1)
    S = np.sort(rng.choice(net.n_nodes, net.n_nodes * 2 // 3, replace=False))
    H = G.subgraph(S.tolist())
    R = S[:5]
    ref = nx.multi_source_dijkstra_path_length(H, set(R.tolist()))
    d = dist_to_set(net, S, R)
    for k, x in enumerate(S):
        if x in ref:
            assert d[k] == pytest.approx(ref[x], rel=1e-13)
        else:
            assert d[k] == INF
