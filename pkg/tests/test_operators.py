import numpy as np
import pytest
import scipy.sparse as sp

from netlod.operators import (NumericalError, SparseSymOperator, assemble_mass,
                              assemble_stiffness, assemble_weighted_laplacian,
                              check_k_assumptions, dual_norm_rhs, localize, quadratic_form,
                              same_pattern, seminorm, write_matrix)

from conftest import line_net


def dense(op):
    return op.matrix.toarray()


def test_mass_examples(p3, unit_p3):
    np.testing.assert_allclose(dense(assemble_mass(p3, 1.0)), np.diag([0.5, 1.5, 1.0]))
    np.testing.assert_allclose(assemble_mass(p3, 2.0).matrix.diagonal(), p3.degree / 2)
    for a in (0.0, 0.7, 2.0):
        np.testing.assert_allclose(dense(assemble_mass(unit_p3, a)), np.diag([0.5, 1.0, 0.5]))


def test_alpha_range(p3):
    with pytest.raises(ValueError):
        assemble_mass(p3, 2.5)
    with pytest.raises(ValueError):
        assemble_stiffness(p3, -0.1)


def test_stiffness_examples(p3, unit_p3):
    np.testing.assert_allclose(dense(assemble_stiffness(p3, 1.0)),
                               [[1, -1, 0], [-1, 1.5, -0.5], [0, -0.5, 0.5]])
    np.testing.assert_allclose(dense(assemble_stiffness(unit_p3, 1.0)),
                               [[1, -1, 0], [-1, 2, -1], [0, -1, 1]])
    L = assemble_stiffness(p3, 1.0)
    assert quadratic_form(L, np.ones(3)) == 0.0


def test_weighted_laplacian_examples(small_fiber):
    L = assemble_stiffness(small_fiber)
    K1 = assemble_weighted_laplacian(small_fiber, 1.0, np.ones(small_fiber.n_edges))
    np.testing.assert_array_equal(dense(L), dense(K1))
    w = np.random.default_rng(0).uniform(0.1, 1, small_fiber.n_edges)
    K = assemble_weighted_laplacian(small_fiber, 1.0, w)
    K3 = assemble_weighted_laplacian(small_fiber, 1.0, 3 * w)
    np.testing.assert_allclose(dense(K3), 3 * dense(K), rtol=1e-15)
    net = line_net([0.0, 1.0])
    np.testing.assert_allclose(dense(assemble_weighted_laplacian(net, 1.0, [0.1])),
                               [[0.1, -0.1], [-0.1, 0.1]])
    with pytest.raises(ValueError):
        assemble_weighted_laplacian(net, 1.0, [0.0])


def test_localize_examples(unit_p3):
    L = assemble_stiffness(unit_p3, 1.0)
    np.testing.assert_allclose(localize(L, [0, 1, 2]).matrix.toarray(), dense(L))
    np.testing.assert_allclose(localize(L, [0]).matrix.toarray(),
                               [[0.5, -0.5, 0], [-0.5, 0.5, 0], [0, 0, 0]])
    np.testing.assert_allclose(localize(L, [0, 1], "principal-submatrix").matrix.toarray(),
                               [[1, -1], [-1, 2]])
    with pytest.raises(ValueError):
        localize(L, [])


def test_node_sums_reproduce_operator(small_fiber):
    w = np.random.default_rng(1).uniform(0.1, 1, small_fiber.n_edges)
    K = assemble_weighted_laplacian(small_fiber, 1.0, w)
    total = sum(K.node_sum([x]) for x in range(small_fiber.n_nodes))
    assert abs(total - K.matrix).max() <= 1e-14 * abs(K.matrix).max()
    M = assemble_mass(small_fiber)
    np.testing.assert_allclose(M.node_sum([3]).toarray()[3, 3], M.matrix[3, 3])


def test_node_sum_is_psd(small_fiber):
    K = assemble_stiffness(small_fiber)
    rng = np.random.default_rng(2)
    S = rng.choice(small_fiber.n_nodes, 40, replace=False)
    A = K.node_sum(S).toarray()
    assert np.linalg.eigvalsh(A).min() > -1e-10


def test_quadratic_form_edge_sum(small_fiber):
    w = np.random.default_rng(3).uniform(0.1, 1, small_fiber.n_edges)
    K = assemble_weighted_laplacian(small_fiber, 1.0, w)
    c = w / small_fiber.lengths
    u, v = small_fiber.edges.T
    for seed in range(5):
        x = np.random.default_rng(seed).standard_normal(small_fiber.n_nodes)
        ref = np.sum(c * (x[u] - x[v]) ** 2)
        assert quadratic_form(K, x) == pytest.approx(ref, rel=1e-12)


def test_spectral_bounds_by_weights(small_fiber):
    w = np.random.default_rng(4).uniform(0.1, 1, small_fiber.n_edges)
    K = assemble_weighted_laplacian(small_fiber, 1.0, w)
    L = assemble_stiffness(small_fiber)
    free = small_fiber.free_nodes
    rng = np.random.default_rng(5)
    for _ in range(100):
        v = np.zeros(small_fiber.n_nodes)
        v[free] = rng.standard_normal(len(free))
        r = quadratic_form(K, v) / quadratic_form(L, v)
        assert w.min() - 1e-12 <= r <= w.max() + 1e-12


def test_seminorm_examples(unit_p3, small_fiber):
    L = assemble_stiffness(unit_p3)
    assert seminorm(assemble_stiffness(small_fiber), np.ones(small_fiber.n_nodes)) == 0.0
    assert seminorm(L, [1.0, 0, 0]) == pytest.approx(1.0)
    M = assemble_mass(unit_p3)
    assert seminorm(localize(M, [0]), [2.0, 0, 0]) == pytest.approx(np.sqrt(2))
    neg = SparseSymOperator(-sp.eye(2), "stiffness")
    with pytest.raises(NumericalError):
        seminorm(neg, [1.0, 1.0])
    tiny = SparseSymOperator(-1e-15 * sp.eye(2), "stiffness")
    assert seminorm(tiny, [1.0, 1.0]) == 0.0


def test_dual_norm_examples(p3):
    M = assemble_mass(p3)
    one = np.ones(3)
    nrm, ft = dual_norm_rhs(M, M @ one)
    assert nrm == pytest.approx(seminorm(M, one))
    np.testing.assert_allclose(ft, one)
    assert dual_norm_rhs(M, np.zeros(3))[0] == 0.0
    M4 = SparseSymOperator(sp.diags([4.0]), "mass")
    assert dual_norm_rhs(M4, [2.0])[0] == pytest.approx(1.0)


def test_symmetry_required():
    with pytest.raises(ValueError):
        SparseSymOperator(sp.csr_matrix(np.array([[1.0, 2.0], [0.0, 1.0]])), "stiffness")
    with pytest.raises(ValueError):
        SparseSymOperator(sp.eye(2), "nonsense")


def test_pattern_and_checks(small_fiber):
    w = np.random.default_rng(6).uniform(0.1, 1, small_fiber.n_edges)
    K = assemble_weighted_laplacian(small_fiber, 1.0, w)
    L = assemble_stiffness(small_fiber)
    assert same_pattern(K.matrix, L.matrix)
    chk = check_k_assumptions(K, L, small_fiber.free_nodes)
    assert chk["symmetric"] and chk["same_pattern"] and chk["psd_probe"]
    assert w.min() <= chk["ratio_min"] <= chk["ratio_max"] <= w.max()


def test_write_matrix(tmp_path, unit_p3):
    L = assemble_stiffness(unit_p3)
    write_matrix(L, tmp_path / "L.txt")
    lines = (tmp_path / "L.txt").read_text().splitlines()
    assert lines[0] == f"3 {L.matrix.nnz} symmetric"
    i, j, v = lines[1].split()
    assert float(v) == L.matrix[int(i), int(j)]
