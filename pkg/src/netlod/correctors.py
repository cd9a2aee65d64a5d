"""Element correctors on patches and the multiscale bases built from them.

A corrector for element ``T`` on the patch ``N^ell(T)`` solves the
constrained problem

    find w supported on the free patch nodes with q_K(w) = 0 for all K,
    (K w, z) = (K_T v, z) for all such z,

as the saddle-point system ``[[A, C^T], [C, 0]] (w, lam) = (r, 0)``.
"""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .coarse_space import CoarseSpace
from .network import patch
from .operators import SparseSymOperator, assemble_stiffness, seminorm

log = logging.getLogger(__name__)

GLOBAL = None
VARIANTS = ("ideal", "naive", "stabilized")
RESIDUAL_TOL = 1e-10


class CorrectorError(RuntimeError):
    pass


@dataclass(eq=False)
class CorrectorProblem:
    """Saddle-point system of one patch; factorized lazily and reused for many loads."""

    element: int
    ell: int | None
    patch_elements: np.ndarray
    nodes: np.ndarray
    free: np.ndarray
    A: sp.csr_matrix
    C: sp.csr_matrix
    constraint_elements: np.ndarray
    tol: float = RESIDUAL_TOL

    @property
    def size(self) -> int:
        return len(self.free)

    @cached_property
    def _lu(self):
        m = self.C.shape[0]
        kkt = sp.bmat([[self.A, self.C.T], [self.C, None]], format="csc")
        try:
            return spla.splu(kkt, permc_spec="COLAMD")
        except RuntimeError as exc:
            raise CorrectorError(f"factorization failed for element {self.element} "
                                 f"(patch of {self.size} free nodes, {m} constraints)") from exc

    def solve(self, rhs) -> np.ndarray:
        """Corrector values on ``free`` for load functional(s) ``rhs`` (free-node rows)."""
        rhs = np.asarray(rhs.toarray() if sp.issparse(rhs) else rhs, float)
        vec = rhs.ndim == 1
        R = rhs.reshape(len(self.free), -1)
        m = self.C.shape[0]
        b = np.vstack([R, np.zeros((m, R.shape[1]))])
        x = self._lu.solve(b)
        for attempt in range(3):
            w, lam = x[:len(self.free)], x[len(self.free):]
            r1 = self.A @ w + self.C.T @ lam - R
            r2 = self.C @ w
            rn = np.linalg.norm(R, axis=0)
            scale = np.maximum(rn, np.finfo(float).tiny)
            ok1 = np.linalg.norm(r1, axis=0) <= self.tol * scale
            cscale = abs(self.C).sum(axis=1).max() * np.abs(w).max(axis=0)
            ok2 = np.abs(r2).max(axis=0, initial=0.0) <= self.tol * np.maximum(cscale, 1e-300)
            ok2 |= rn == 0
            if np.all(ok1 & ok2):
                return w[:, 0] if vec else w
            # iterative refinement
            x = x - self._lu.solve(np.vstack([r1, r2]))
        raise CorrectorError(f"residual check failed for element {self.element} "
                             f"(patch of {self.size} free nodes)")


def _patch_key(elements):
    return np.asarray(elements, np.int64).tobytes()


class CorrectorFactory:
    """Builds patch problems for one coarse space and caches factorizations.

    Problems whose patches coincide (e.g. saturated or global patches) share a
    single factorization.
    """

    def __init__(self, K: SparseSymOperator, coarse: CoarseSpace, tol: float = RESIDUAL_TOL):
        self.K = K
        self.coarse = coarse
        self.tol = tol
        self._cache: dict[bytes, CorrectorProblem] = {}
        self.factorizations = 0

    def patch_elements(self, T: int, ell: int | None) -> np.ndarray:
        part = self.coarse.partition
        if ell is GLOBAL:
            return np.arange(part.n_elements)
        return patch(self.coarse.net, part, [T], ell)

    def problem(self, T: int, ell: int | None) -> CorrectorProblem:
        pe = self.patch_elements(T, ell)
        key = _patch_key(pe)
        prob = self._cache.get(key)
        if prob is None:
            prob = self._build(T, ell, pe)
            self._cache[key] = prob
            self.factorizations += 1
        return prob

    def _build(self, T, ell, pe):
        coarse = self.coarse
        net = coarse.net
        lab = coarse.partition.labels
        nodes = np.flatnonzero(np.isin(lab, pe))
        free = nodes[~net.dirichlet[nodes]]
        A = self.K.restrict(free).tocsr()
        flab = lab[free]
        kept = np.unique(flab)
        row = np.searchsorted(kept, flab)
        C = sp.csr_matrix((coarse.mdiag[free], (row, np.arange(len(free)))),
                          shape=(len(kept), len(free)))
        return CorrectorProblem(T, ell, pe, nodes, free, A, C, kept, self.tol)

    def rhs(self, T: int, v) -> np.ndarray:
        """Load ``K_T v`` on all nodes."""
        return self.K.node_sum(self.coarse.partition.elements[T]) @ v

    def correct(self, T: int, v, ell: int | None) -> np.ndarray:
        """``C_T^ell v`` as a full nodal vector."""
        prob = self.problem(T, ell)
        out = np.zeros(self.coarse.n)
        out[prob.free] = prob.solve(self.rhs(T, v)[prob.free])
        return out


def corrector_rhs(K: SparseSymOperator, T, v, free=None) -> np.ndarray:
    """Vector of ``w -> (K_T v, w)``, optionally restricted to ``free`` nodes."""
    r = K.node_sum(T) @ np.asarray(v, float)
    return r if free is None else r[free]


def solve_corrector(problem: CorrectorProblem, rhs) -> np.ndarray:
    """Solve ``problem`` for the free-node load ``rhs``; returns values on the patch free nodes."""
    return problem.solve(rhs)


@dataclass(eq=False)
class MultiscaleBasis:
    variant: str
    ell: int | None
    Phi: sp.csc_matrix
    patch_sizes: np.ndarray
    corrector_solves: int
    factorizations: int
    meta: dict = field(default_factory=dict)

    @property
    def n_columns(self) -> int:
        return self.Phi.shape[1]

    def dump(self, directory) -> None:
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        Phi = self.Phi.tocsc()
        for k in range(self.n_columns):
            col = Phi[:, k]
            lines = [f"{i} {x:.17g}" for i, x in zip(col.indices, col.data)]
            (out / f"basis_{k:04d}.txt").write_text("\n".join(lines) + "\n")
        ell = "global" if self.ell is GLOBAL else self.ell
        manifest = [f"variant = {self.variant}", f"ell = {ell}",
                    f"columns = {self.n_columns}",
                    "patch_sizes = " + " ".join(str(int(s)) for s in self.patch_sizes)]
        (out / "manifest.txt").write_text("\n".join(manifest) + "\n")


def _inputs(coarse: CoarseSpace, variant: str) -> sp.csc_matrix:
    if variant in ("ideal", "naive"):
        return coarse.bubbles.tocsc()
    if variant == "stabilized":
        return coarse.stabilized_inputs.tocsc()
    raise ValueError(f"unknown variant {variant!r}")


def build_basis(net, K: SparseSymOperator, coarse: CoarseSpace, variant: str,
                ell: int | None = GLOBAL, factory: CorrectorFactory | None = None,
                workers: int = 1) -> MultiscaleBasis:
    """Columns ``(1 - C^ell) b_T`` (ideal/naive) or ``(1 - C^ell) P_H b_T`` (stabilized)."""
    if variant == "ideal":
        ell = GLOBAL
    if ell is not GLOBAL and ell < 0:
        raise ValueError("ell must be non-negative")
    factory = factory or CorrectorFactory(K, coarse)
    V = _inputs(coarse, variant)
    N = coarse.N
    elements = coarse.partition.elements

    def work(Tp):
        R = sp.csc_matrix(K.node_sum(elements[Tp]) @ V)
        R.eliminate_zeros()
        cols = np.flatnonzero(np.diff(R.indptr))
        if cols.size == 0:
            return Tp, None, cols, None
        prob = factory.problem(Tp, ell)
        W = prob.solve(R[prob.free][:, cols])
        return Tp, prob, cols, W

    # factorizations are created in element order so the cache stays deterministic
    for Tp in range(N):
        factory.problem(Tp, ell)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            results = list(pool.map(work, range(N)))
    else:
        results = [work(Tp) for Tp in range(N)]

    rows, cols_all, vals = [], [], []
    solves = 0
    patch_sizes = np.zeros(N, np.int64)
    for Tp, prob, cols, W in results:
        patch_sizes[Tp] = 0 if prob is None else len(prob.nodes)
        if prob is None:
            continue
        solves += len(cols)
        rr, cc = np.nonzero(W)
        rows.append(prob.free[rr])
        cols_all.append(cols[cc])
        vals.append(W[rr, cc])
    if rows:
        corr = sp.csc_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols_all))),
                             shape=V.shape)
    else:
        corr = sp.csc_matrix(V.shape)
    Phi = sp.csc_matrix(V - corr)
    Phi.eliminate_zeros()
    return MultiscaleBasis(variant, ell, Phi, patch_sizes, solves, factory.factorizations)


def global_corrector(K: SparseSymOperator, coarse: CoarseSpace, T: int, v,
                     factory: CorrectorFactory | None = None) -> np.ndarray:
    factory = factory or CorrectorFactory(K, coarse)
    return factory.correct(T, v, GLOBAL)


def decay_profile(net, coarse: CoarseSpace, K: SparseSymOperator, T: int, v,
                  stiff: SparseSymOperator | None = None,
                  factory: CorrectorFactory | None = None) -> np.ndarray:
    """``|C_T v|_{L, N minus N^ell(T)}`` for ``ell = 0 .. saturation``."""
    stiff = stiff or assemble_stiffness(net, K.alpha)
    phi = global_corrector(K, coarse, T, v, factory)
    part = coarse.partition
    sat = part.saturation_ell(T)
    out = []
    for ell in range(sat + 1):
        inside = patch(net, part, [T], ell)
        rest = np.flatnonzero(~np.isin(part.labels, inside))
        if rest.size == 0:
            out.append(0.0)
            continue
        out.append(seminorm(stiff.node_sum(rest), phi))
    return np.array(out)


def fit_decay_rate(profile, skip_zero: bool = True) -> float:
    """Least-squares slope of ``log(profile)`` against ``ell`` (negative means decay)."""
    y = np.asarray(profile, float)
    x = np.arange(len(y))
    keep = y > 0 if skip_zero else np.ones_like(y, bool)
    if keep.sum() < 2:
        return float("nan")
    return float(np.polyfit(x[keep], np.log(y[keep]), 1)[0])
