"""Element averages, piecewise-constant projection, bubbles, partition of
unity and the quasi-interpolations built from them.

All operators are available as explicit sparse matrices on the full node
vector and as actions (``pi_H``, ``bubble_op``, ``i_H``, ``p_H``).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

from .network import NetworkError, SpatialNetwork, boundary_nodes, element_boundary, node_set
from .operators import SparseSymOperator
from .partition import Partition


class CoarseSpaceError(NetworkError):
    pass


def element_average(mass: SparseSymOperator, T, v) -> float:
    """Mass-weighted average ``(M_T v, 1) / |1|_{M,T}^2``."""
    T = node_set(T)
    if T.size == 0:
        raise ValueError("element must be nonempty")
    m = mass.matrix.diagonal()[T]
    return float(m @ np.asarray(v, float)[T] / m.sum())


def _dist_within(net, S, sources):
    """Distances inside ``S`` from the subset ``sources`` (global node ids)."""
    sub = net.adjacency[S][:, S]
    loc = np.searchsorted(S, sources)
    return csgraph.dijkstra(sub, directed=False, indices=loc, min_only=True)


def _columns(n, supports, values, ncols):
    rows = np.concatenate(supports) if supports else np.empty(0, np.int64)
    cols = np.concatenate([np.full(len(s), k) for k, s in enumerate(supports)]) if supports \
        else np.empty(0, np.int64)
    vals = np.concatenate(values) if values else np.empty(0)
    A = sp.csc_matrix((vals, (rows, cols)), shape=(n, ncols))
    A.eliminate_zeros()
    return A


@dataclass(eq=False)
class CoarseSpace:
    """Coarse-scale objects attached to one partition.

    ``radius`` is the dilation used for the partition-of-unity supports; it
    defaults to half the nominal mesh size. ``with_pu=False`` skips the
    partition of unity (only needed for the stabilized variant).
    """

    net: SpatialNetwork
    partition: Partition
    mass: SparseSymOperator
    radius: float | None = None
    with_pu: bool = True

    def __post_init__(self):
        if self.radius is None:
            self.radius = 0.5 * self.partition.H_nominal
        self.n = self.net.n_nodes
        self.N = self.partition.n_elements
        self.mdiag = self.mass.matrix.diagonal()
        self.element_mass = np.bincount(self.partition.labels, weights=self.mdiag,
                                        minlength=self.N)
        if self.with_pu:
            self._build_pu()

    # -- averages and projection ------------------------------------------

    @cached_property
    def Q(self) -> sp.csr_matrix:
        """``(N, n)`` matrix of element average functionals."""
        lab = self.partition.labels
        vals = self.mdiag / self.element_mass[lab]
        return sp.csr_matrix((vals, (lab, np.arange(self.n))), shape=(self.N, self.n))

    @cached_property
    def indicators(self) -> sp.csc_matrix:
        lab = self.partition.labels
        return sp.csc_matrix((np.ones(self.n), (np.arange(self.n), lab)), shape=(self.n, self.N))

    def q(self, v) -> np.ndarray:
        return self.Q @ v

    def pi_H(self, v):
        return self.indicators @ (self.Q @ v)

    @cached_property
    def Pi(self) -> sp.csr_matrix:
        return (self.indicators @ self.Q).tocsr()

    # -- bubbles -----------------------------------------------------------

    @cached_property
    def bubbles(self) -> sp.csc_matrix:
        """Columns ``b_T``: distance to the element boundary, unit element average."""
        supports, values = [], []
        for k, T in enumerate(self.partition.elements):
            supports.append(T)
            values.append(self.bubble(k))
        return _columns(self.n, supports, values, self.N)

    def bubble_raw(self, k: int) -> np.ndarray:
        """Unnormalized bubble on the nodes of element ``k`` (aligned with the element)."""
        T = self.partition.elements[k]
        dT = element_boundary(self.net, T)
        if dT.size == 0:
            raise CoarseSpaceError(f"element {k} has an empty boundary")
        b = _dist_within(self.net, T, dT)
        if not np.all(np.isfinite(b)):
            raise CoarseSpaceError(f"element {k} has nodes unreachable from its boundary")
        return b

    def bubble(self, k: int) -> np.ndarray:
        T = self.partition.elements[k]
        b = self.bubble_raw(k)
        mT = self.element_mass[k]
        qb = float(self.mdiag[T] @ b / mT)
        if qb < 1e-14 * max(self.partition.H, 1e-300) * mT:
            raise CoarseSpaceError(f"bubble of element {k} has zero average "
                                   f"(all {len(T)} nodes on the element boundary)")
        return b / qb

    @cached_property
    def B(self) -> sp.csr_matrix:
        """Bubble operator ``B_H = sum_T b_T q_T``."""
        return (self.bubbles @ self.Q).tocsr()

    def bubble_op(self, v):
        return self.bubbles @ (self.Q @ v)

    # -- partition of unity ------------------------------------------------

    def _build_pu(self):
        net, part = self.net, self.partition
        supports, raw = [], []
        for k, T in enumerate(part.elements):
            d = csgraph.dijkstra(net.adjacency, directed=False, indices=T, min_only=True,
                                 limit=self.radius * (1 + 1e-12))
            U = np.flatnonzero(d <= self.radius)
            U = np.union1d(U, T)
            on_bnd = net.on_boundary[U]
            dU = np.union1d(U[on_bnd], boundary_nodes(net, U))
            dU = np.setdiff1d(dU, T[net.on_boundary[T]])
            if dU.size == 0:
                raise CoarseSpaceError(f"support of element {k} has an empty boundary; "
                                       "the partition of unity is degenerate")
            lam = _dist_within(net, U, dU)
            if not np.all(np.isfinite(lam)):
                raise CoarseSpaceError(f"support of element {k} not reachable from its boundary")
            supports.append(U)
            raw.append(lam)
        Lraw = _columns(self.n, supports, raw, self.N)
        denom = np.asarray(Lraw.sum(axis=1)).ravel()
        bad = np.flatnonzero(denom <= 0)
        if bad.size:
            raise CoarseSpaceError(
                f"partition of unity denominator vanishes at {bad.size} node(s) "
                f"(e.g. node {bad[0]}); increase the overlap radius (now {self.radius:g})")
        self.supports = supports
        self.Lambda = sp.csc_matrix(sp.diags(1.0 / denom) @ Lraw)
        self.Lambda.eliminate_zeros()
        dir_rows = self.Lambda[net.dirichlet_nodes]
        self.conforming = np.asarray(abs(dir_rows).sum(axis=0)).ravel() == 0
        nonconf = np.flatnonzero(~self.conforming)
        touched = np.zeros(self.N, bool)
        for K in nonconf:
            touched[np.unique(part.labels[supports[K]])] = True
        self.constant_preserving = ~touched

    @property
    def K_H(self) -> np.ndarray:
        return np.flatnonzero(self.conforming)

    @property
    def G_H(self) -> np.ndarray:
        return np.flatnonzero(self.constant_preserving)

    @cached_property
    def I(self) -> sp.csr_matrix:
        """Quasi-interpolation ``I_H = sum_{T in K_H} Lambda_T q_T``."""
        D = sp.diags(self.conforming.astype(float))
        return (self.Lambda @ D @ self.Q).tocsr()

    def i_H(self, v):
        return self.Lambda @ (self.conforming * (self.Q @ v))

    @cached_property
    def P(self) -> sp.csr_matrix:
        """``P_H = I_H + B_H (1 - I_H)``."""
        return (self.I + self.B - self.B @ self.I).tocsr()

    def p_H(self, v):
        iv = self.i_H(v)
        return iv + self.bubble_op(v - iv)

    @cached_property
    def stabilized_inputs(self) -> sp.csc_matrix:
        """Columns ``P_H b_T``, formed without the (element-dense) matrix ``P``."""
        Bub = self.bubbles
        Ib = sp.csc_matrix(self.Lambda @ sp.diags(self.conforming.astype(float)) @ (self.Q @ Bub))
        return sp.csc_matrix(Ib + Bub @ (self.Q @ (Bub - Ib)))

    # -- diagnostics --------------------------------------------------------

    def lipschitz_constant(self) -> float:
        """``H * max_T max_edges |Lambda_T(x) - Lambda_T(y)| / |x - y|``."""
        u, v = self.net.edges.T
        Lr = self.Lambda.tocsr()
        diff = abs(Lr[u] - Lr[v])
        slope = sp.diags(1.0 / self.net.lengths) @ diff
        return float(slope.max() * self.partition.H_nominal) if slope.nnz else 0.0

    def support_layers(self) -> int:
        """Smallest ``k`` with every PU support inside the ``k``-th patch of its element."""
        G = self.partition.element_graph
        hops = csgraph.shortest_path(G, unweighted=True)
        k = 0
        for T, U in enumerate(self.supports):
            k = max(k, int(hops[T, np.unique(self.partition.labels[U])].max()))
        return k

    def dump_columns(self, which: str, directory) -> None:
        """Write ``b_T`` or ``Lambda_T`` as ``node value`` files, one per element."""
        A = {"bubble": self.bubbles, "pu": self.Lambda}[which].tocsc()
        out = Path(directory)
        out.mkdir(parents=True, exist_ok=True)
        for k in range(self.N):
            col = A[:, k]
            lines = [f"{i} {x:.17g}" for i, x in zip(col.indices, col.data)]
            (out / f"{which}_{k:04d}.txt").write_text("\n".join(lines) + "\n")


def build_pu(net: SpatialNetwork, partition: Partition, mass: SparseSymOperator,
             radius: float | None = None) -> CoarseSpace:
    return CoarseSpace(net, partition, mass, radius=radius)


def conforming_sets(coarse: CoarseSpace) -> tuple[np.ndarray, np.ndarray]:
    return coarse.K_H, coarse.G_H
