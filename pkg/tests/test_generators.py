import numpy as np
import pytest

from netlod.generators import (CardboardConfig, FemGridConfig, FiberConfig, brute_force_pairs,
                               candidate_pairs, clip_segments, gen_cardboard, gen_fem_grid,
                               gen_fiber_network, network_from_segments, refine_long_edges,
                               sample_segments, segment_intersections, source_vector)
from netlod.network import NetworkError
from netlod.operators import assemble_mass, assemble_stiffness, same_pattern

from conftest import SMALL_FIBER, line_net


def test_clip_examples():
    seg = np.array([[[-0.5, 0.5], [0.5, 0.5]],     # crosses x = 0
                    [[0.2, 0.2], [0.4, 0.6]],      # inside
                    [[1.5, 0.5], [2.0, 0.5]],      # outside
                    [[0.5, -0.5], [0.5, 1.5]]])    # crosses both y bounds
    kept, out, flags = clip_segments(seg)
    np.testing.assert_array_equal(kept, [0, 1, 3])
    np.testing.assert_array_equal(out[0], [[0.0, 0.5], [0.5, 0.5]])
    np.testing.assert_array_equal(out[1], seg[1])
    np.testing.assert_array_equal(out[2], [[0.5, 0.0], [0.5, 1.0]])
    np.testing.assert_array_equal(flags, [[True, False], [False, False], [True, True]])


def test_clipped_points_stay_in_square():
    rng = np.random.default_rng(0)
    seg = rng.uniform(-0.3, 1.3, (500, 2, 2))
    _, out, flags = clip_segments(seg)
    assert out.min() >= 0.0 and out.max() <= 1.0
    on = np.any((out == 0.0) | (out == 1.0), axis=2)
    np.testing.assert_array_equal(on, flags)


@pytest.mark.parametrize("seed", range(5))
def test_grid_intersections_match_brute_force(seed):
    cfg = FiberConfig(n_lines=50, line_length=0.3, seed=seed)
    seg, _ = sample_segments(cfg)
    (I, J, t, u), _ = segment_intersections(seg, cfg.line_length)
    (Ib, Jb, tb, ub), _ = segment_intersections(seg, None)
    assert set(zip(I, J)) == set(zip(Ib, Jb))
    ci, cj = candidate_pairs(seg, 0.05)
    bi, bj = brute_force_pairs(seg)
    assert set(zip(Ib, Jb)) <= set(zip(ci, cj)) <= set(zip(bi, bj))


def test_candidate_pairs_small_inputs():
    assert len(candidate_pairs(np.zeros((0, 2, 2)), 0.1)[0]) == 0
    assert len(candidate_pairs(np.zeros((1, 2, 2)), 0.1)[0]) == 0


def test_fiber_network_properties(small_fiber):
    net = small_fiber
    deg = net.degree
    assert np.all((deg >= 2) | net.domain_boundary)
    assert np.all(net.lengths <= SMALL_FIBER.max_edge_length + 1e-12)
    assert np.all(net.dirichlet == net.domain_boundary)
    on = np.any((net.coords == 0.0) | (net.coords == 1.0), axis=1)
    np.testing.assert_array_equal(on, net.dirichlet)
    raw = gen_fiber_network(FiberConfig(150, 0.2, seed=1))
    assert np.all(raw.lengths <= 0.2 + 1e-12)


def test_fiber_determinism():
    cfg = FiberConfig(n_lines=200, line_length=0.2, seed=7)
    a, b = gen_fiber_network(cfg), gen_fiber_network(cfg)
    np.testing.assert_array_equal(a.coords, b.coords)
    np.testing.assert_array_equal(a.edges, b.edges)
    c = gen_fiber_network(FiberConfig(n_lines=200, line_length=0.2, seed=8))
    assert c.n_nodes != a.n_nodes or not np.array_equal(c.coords, a.coords)


def test_two_crossing_segments_prune_to_nothing():
    seg = np.array([[[0.2, 0.2], [0.8, 0.8]], [[0.2, 0.8], [0.8, 0.2]]])
    with pytest.raises(NetworkError):
        network_from_segments(seg, np.zeros((2, 2), bool))


def test_crossing_segments_touching_boundary():
    seg = np.array([[[0.0, 0.5], [1.0, 0.5]], [[0.5, 0.0], [0.5, 0.7]]])
    flags = np.array([[True, True], [True, False]])
    net = network_from_segments(seg, flags)
    # the dangling end at (0.5, 0.7) is pruned; the cross point is shared
    assert net.n_nodes == 4 and net.n_edges == 3
    assert net.dirichlet.sum() == 3


def test_collinear_overlap_is_an_error():
    seg = np.array([[[0.0, 0.5], [0.6, 0.5]], [[0.4, 0.5], [1.0, 0.5]]])
    with pytest.raises(NetworkError, match="collinear"):
        network_from_segments(seg, np.ones((2, 2), bool))


def test_refine_long_edges():
    net = line_net([0.0, 1.0, 1.25])
    ref = refine_long_edges(net, 0.3)
    assert ref.n_nodes == 3 + 3
    assert np.all(ref.lengths <= 0.3 + 1e-12)
    assert ref.lengths.sum() == pytest.approx(net.lengths.sum())
    assert refine_long_edges(net, 2.0) is net
    with pytest.raises(ValueError):
        FiberConfig(max_edge_length=0.0)


def test_cardboard():
    cfg = CardboardConfig(FiberConfig(400, 0.2, seed=1), shared_layout=True, connect_radius=1e-3)
    net = gen_cardboard(cfg)
    assert net.iso_dim == 2 and net.coords.shape[1] == 3
    assert len(net.meta["layer_sizes"]) == 3 and min(net.meta["layer_sizes"]) > 0
    top = net.coords[:, 2] == cfg.amplitude + cfg.delta
    assert top.any()
    with pytest.raises(NetworkError, match="disconnected"):
        gen_cardboard(CardboardConfig(FiberConfig(400, 0.2, seed=1), connect_radius=0.0))
    with pytest.raises(ValueError):
        CardboardConfig(connect_radius=-1.0)


def test_fem_grid_examples():
    net, K = gen_fem_grid(FemGridConfig(m=2, constant_coefficient=1.0))
    A = K.matrix.toarray()
    assert A[4, 4] == pytest.approx(4.0)
    np.testing.assert_allclose(A.sum(axis=1), 0.0, atol=1e-14)
    np.testing.assert_allclose(K @ np.ones(9), 0.0, atol=1e-14)
    assert same_pattern(K.matrix, assemble_stiffness(net, 0.0).matrix)
    np.testing.assert_array_equal(np.flatnonzero(~net.dirichlet), [4])
    assert net.meta["alpha"] == 0.0


def test_fem_grid_random_coefficient():
    net, K = gen_fem_grid(FemGridConfig(m=8, seed=3))
    A = K.matrix
    assert abs(A - A.T).max() == 0
    np.testing.assert_allclose(A @ np.ones(net.n_nodes), 0.0, atol=1e-13)
    _, K2 = gen_fem_grid(FemGridConfig(m=8, seed=3))
    assert (K2.matrix != A).nnz == 0
    # a = 1 reproduces the five-point Laplacian at interior nodes
    _, K1 = gen_fem_grid(FemGridConfig(m=8, constant_coefficient=1.0))
    c = 4 * 9 + 4
    row = K1.matrix[c].toarray().ravel()
    assert row[c] == pytest.approx(4.0)
    assert sorted(row[np.flatnonzero(row)].round(12)) == [-1, -1, -1, -1, 4]


def test_source_examples(unit_p3, small_fiber):
    M = assemble_mass(unit_p3, 1.0)
    np.testing.assert_allclose(source_vector(unit_p3, M, "g2"), [0.5, 1.0, 0.5])
    np.testing.assert_allclose(source_vector(unit_p3, M, "g1"), 0.0)
    Mf = assemble_mass(small_fiber)
    f = source_vector(small_fiber, Mf, "g1")
    x, y = small_fiber.coords.T
    np.testing.assert_allclose(f, Mf.matrix.diagonal() * np.sin(x) * np.sin(y))
    np.testing.assert_allclose(source_vector(small_fiber, Mf, lambda x, y: 2 + 0 * x),
                               2 * Mf.matrix.diagonal())
