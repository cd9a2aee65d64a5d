"""Mass, stiffness and weighted-Laplacian operators on spatial networks.

Every operator is split into per-node contributions ``K = sum_x K_x``: an
off-diagonal entry ``K[x, y] = -c`` is read as an edge conductance ``c``
whose term ``c (e_x - e_y)(e_x - e_y)^T`` is shared half/half between ``x``
and ``y``; what remains on the diagonal belongs to the node itself. For the
Laplacian kinds this is exactly the edge-halving of the defining sums, and
for a diagonal mass matrix it gives ``M_x = M[x, x] e_x e_x^T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp

from .network import SpatialNetwork, node_set

PSD_TOL = 1e-12
KINDS = ("mass", "stiffness", "weighted-laplacian", "fem-assembled")


class NumericalError(ArithmeticError):
    pass


def _csr(A) -> sp.csr_matrix:
    A = sp.csr_matrix(A)
    A.sum_duplicates()
    A.sort_indices()
    return A


@dataclass(frozen=True, eq=False)
class SparseSymOperator:
    matrix: sp.csr_matrix
    kind: str
    alpha: float = 1.0

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown operator kind {self.kind!r}")
        A = _csr(self.matrix)
        if A.shape[0] != A.shape[1]:
            raise ValueError("operator must be square")
        if abs(A - A.T).max() > 1e-14 * max(abs(A).max(), 1.0):
            raise ValueError("operator must be symmetric")
        object.__setattr__(self, "matrix", A)

    @property
    def shape(self):
        return self.matrix.shape

    def __matmul__(self, v):
        return self.matrix @ v

    @cached_property
    def _split(self):
        A = self.matrix.tocoo()
        upper = A.row < A.col
        i, j = A.row[upper], A.col[upper]
        c = -A.data[upper]
        rowsum_off = np.zeros(A.shape[0])
        np.add.at(rowsum_off, i, c)
        np.add.at(rowsum_off, j, c)
        own = self.matrix.diagonal() - rowsum_off
        return i, j, c, own

    def node_sum(self, S) -> sp.csr_matrix:
        """Matrix of ``sum_{x in S} K_x``."""
        n = self.shape[0]
        mask = np.zeros(n, bool)
        mask[np.asarray(S, dtype=np.int64)] = True
        i, j, c, own = self._split
        share = 0.5 * (mask[i].astype(float) + mask[j])
        hit = share > 0
        i, j, w = i[hit], j[hit], (c * share)[hit]
        d = np.zeros(n)
        np.add.at(d, i, w)
        np.add.at(d, j, w)
        d += np.where(mask, own, 0.0)
        rows = np.r_[i, j, np.arange(n)]
        cols = np.r_[j, i, np.arange(n)]
        vals = np.r_[-w, -w, d]
        return _csr(sp.coo_matrix((vals, (rows, cols)), shape=(n, n)))

    def edge_conductances(self):
        """``(i, j, c)`` arrays read off the strict upper triangle."""
        i, j, c, _ = self._split
        return i, j, c

    def restrict(self, free) -> sp.csr_matrix:
        free = np.asarray(free)
        return self.matrix[free][:, free]


@dataclass(frozen=True, eq=False)
class LocalizedOperator:
    parent: SparseSymOperator
    nodes: np.ndarray
    mode: str

    @cached_property
    def matrix(self) -> sp.csr_matrix:
        if self.mode == "node-sum":
            return self.parent.node_sum(self.nodes)
        return self.parent.restrict(self.nodes)

    def __matmul__(self, v):
        return self.matrix @ v


def _check_alpha(alpha):
    if not 0.0 <= alpha <= 2.0:
        raise ValueError("alpha must lie in [0, 2]")


def assemble_mass(net: SpatialNetwork, alpha: float = 1.0) -> SparseSymOperator:
    _check_alpha(alpha)
    if np.any(net.degree == 0):
        raise ValueError("isolated node has zero mass")
    ell = net.lengths ** (2.0 - alpha)
    diag = np.zeros(net.n_nodes)
    np.add.at(diag, net.edges[:, 0], 0.5 * ell)
    np.add.at(diag, net.edges[:, 1], 0.5 * ell)
    return SparseSymOperator(sp.diags(diag, format="csr"), "mass", alpha)


def _laplacian(net, cond):
    n = net.n_nodes
    u, v = net.edges.T
    d = np.zeros(n)
    np.add.at(d, u, cond)
    np.add.at(d, v, cond)
    rows = np.r_[u, v, np.arange(n)]
    cols = np.r_[v, u, np.arange(n)]
    return sp.coo_matrix((np.r_[-cond, -cond, d], (rows, cols)), shape=(n, n))


def assemble_stiffness(net: SpatialNetwork, alpha: float = 1.0) -> SparseSymOperator:
    _check_alpha(alpha)
    return SparseSymOperator(_laplacian(net, net.lengths ** -alpha), "stiffness", alpha)


def assemble_weighted_laplacian(net: SpatialNetwork, alpha: float = 1.0,
                                weights=None) -> SparseSymOperator:
    _check_alpha(alpha)
    w = net.weights if weights is None else np.asarray(weights, float)
    if w.shape != (net.n_edges,):
        raise ValueError("one weight per edge required")
    if np.any(w <= 0):
        raise ValueError("edge weights must be positive")
    return SparseSymOperator(_laplacian(net, w * net.lengths ** -alpha),
                             "weighted-laplacian", alpha)


def random_edge_weights(net: SpatialNetwork, low=0.1, high=1.0, seed=0) -> np.ndarray:
    rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed)))
    return low + (high - low) * rng.random(net.n_edges)


def localize(op: SparseSymOperator, S, mode: str = "node-sum") -> LocalizedOperator:
    if mode not in ("node-sum", "principal-submatrix"):
        raise ValueError(f"unknown localization mode {mode!r}")
    S = node_set(S, op.shape[0])
    if S.size == 0:
        raise ValueError("node set must be nonempty")
    return LocalizedOperator(op, S, mode)


def quadratic_form(op, v) -> float:
    A = op.matrix if hasattr(op, "matrix") else op
    v = np.asarray(v, float)
    return float(v @ (A @ v))


def seminorm(op, v, tol: float = PSD_TOL) -> float:
    """``sqrt((A v, v))`` for a positive semi-definite form ``A``."""
    v = np.asarray(v, float)
    q = quadratic_form(op, v)
    if q < 0:
        if q < -tol * max(float(v @ v), np.finfo(float).tiny):
            raise NumericalError(f"quadratic form is negative ({q:.3e})")
        return 0.0
    return float(np.sqrt(q))


def dual_norm_rhs(mass: SparseSymOperator, f) -> tuple[float, np.ndarray]:
    """``(|f|_{M^-1}, M^-1 f)`` for a diagonal positive mass operator."""
    m = mass.matrix.diagonal()
    f = np.asarray(f, float)
    ftilde = f / m
    return float(np.sqrt(np.sum(f * ftilde))), ftilde


def same_pattern(A, B) -> bool:
    A, B = _csr(A), _csr(B)
    return (A.shape == B.shape and np.array_equal(A.indptr, B.indptr)
            and np.array_equal(A.indices, B.indices))


def check_k_assumptions(K: SparseSymOperator, L: SparseSymOperator, free=None,
                        n_probe: int = 20, seed: int = 0) -> dict:
    """Structural checks of an operator against the stiffness operator ``L``.

    Symmetry, equal sparsity pattern, and the positivity of ``(Kv, v)`` on
    random free-node probes. Per-node PSD splittings are not checked.
    """
    A = K.matrix
    rng = np.random.default_rng(seed)
    n = A.shape[0]
    free = np.arange(n) if free is None else np.asarray(free)
    ratios = []
    for _ in range(n_probe):
        v = np.zeros(n)
        v[free] = rng.standard_normal(len(free))
        ratios.append(quadratic_form(K, v) / quadratic_form(L, v))
    return {
        "symmetric": bool(abs(A - A.T).max() <= 1e-14 * abs(A).max()),
        "same_pattern": same_pattern(A, L.matrix),
        "psd_probe": bool(min(ratios) > 0),
        "ratio_min": float(min(ratios)),
        "ratio_max": float(max(ratios)),
    }


def write_matrix(op, path) -> None:
    """Coordinate text export: header ``n nnz symmetric`` then ``i j value``."""
    A = (op.matrix if hasattr(op, "matrix") else sp.csr_matrix(op)).tocoo()
    lines = [f"{A.shape[0]} {A.nnz} symmetric"]
    lines += [f"{i} {j} {v:.17g}" for i, j, v in zip(A.row, A.col, A.data)]
    Path(path).write_text("\n".join(lines) + "\n")
