"""Coarse partitions by greedy N-center clustering, mesh-size measures and
shape diagnostics."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla
from scipy.sparse import csgraph

from .network import (NetworkError, SpatialNetwork, element_adjacency, node_set,
                      restricted_adjacency)
from .operators import SparseSymOperator

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class Partition:
    """Disjoint connected elements covering the node set.

    ``labels[x]`` is the element id of node ``x``; element ``k`` has center
    ``centers[k]``.
    """

    net: SpatialNetwork
    labels: np.ndarray
    centers: np.ndarray
    H_T: np.ndarray | None = None
    d: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        labels = np.asarray(self.labels, dtype=np.int64)
        object.__setattr__(self, "labels", labels)
        object.__setattr__(self, "centers", np.asarray(self.centers, dtype=np.int64))
        if labels.shape != (self.net.n_nodes,) or labels.min() < 0:
            raise NetworkError("every node needs an element label")
        if np.any(labels[self.centers] != np.arange(len(self.centers))):
            raise NetworkError("each center must lie in its own element")
        if self.H_T is None:
            object.__setattr__(self, "H_T", measure_H(self.net, self)[1])

    @property
    def n_elements(self) -> int:
        return len(self.centers)

    @cached_property
    def elements(self) -> list[np.ndarray]:
        order = np.argsort(self.labels, kind="stable")
        cuts = np.searchsorted(self.labels[order], np.arange(1, self.n_elements))
        return [np.sort(e) for e in np.split(order, cuts)]

    @cached_property
    def element_graph(self) -> sp.csr_matrix:
        return element_adjacency(self.net, self.labels, self.n_elements)

    @property
    def H(self) -> float:
        return float(np.max(self.H_T))

    @property
    def H_nominal(self) -> float:
        return self.n_elements ** (-1.0 / self.d)

    def element_nodes(self, element_ids) -> np.ndarray:
        mask = np.isin(self.labels, np.asarray(element_ids))
        return np.flatnonzero(mask)

    def saturation_ell(self, T: int) -> int:
        """Smallest ``ell`` whose patch around ``T`` is the whole element set."""
        dist = csgraph.shortest_path(self.element_graph, unweighted=True, indices=T)
        return int(np.max(dist))

    def write(self, path) -> None:
        Path(path).write_text("".join(f"{x} {k}\n" for x, k in enumerate(self.labels)))


@dataclass(frozen=True)
class PartitionDiagnostics:
    sigma: float
    max_edge_length: float
    H: float
    H_nominal: float
    H_T: np.ndarray
    mass: np.ndarray
    vol: np.ndarray
    C_po: np.ndarray

    def write_csv(self, path) -> None:
        rows = ["element,H_T,mass,vol,C_po"]
        for k in range(len(self.H_T)):
            rows.append(f"{k},{self.H_T[k]:.17g},{self.mass[k]:.17g},{int(self.vol[k])},"
                        f"{self.C_po[k]:.17g}")
        Path(path).write_text("\n".join(rows) + "\n")


def default_start(net: SpatialNetwork) -> int:
    """Smallest-index node among those farthest from the Dirichlet set."""
    d = csgraph.dijkstra(net.adjacency, directed=False, indices=net.dirichlet_nodes,
                         min_only=True)
    return int(np.flatnonzero(d == d.max())[0])


def _gonzalez(net, n_centers, start, candidates=None):
    n = net.n_nodes
    pool = np.ones(n, bool) if candidates is None else np.zeros(n, bool)
    if candidates is not None:
        pool[np.asarray(candidates)] = True
    if not 1 <= n_centers <= pool.sum():
        raise ValueError(f"number of centers must lie in [1, {int(pool.sum())}]")
    centers = [int(start)]
    rows = [csgraph.dijkstra(net.adjacency, directed=False, indices=start)]
    mind = rows[0].copy()
    for _ in range(n_centers - 1):
        score = np.where(pool, mind, -1.0)
        score[centers] = -1.0
        nxt = int(np.argmax(score))
        centers.append(nxt)
        rows.append(csgraph.dijkstra(net.adjacency, directed=False, indices=nxt))
        np.minimum(mind, rows[-1], out=mind)
    return np.array(centers), np.vstack(rows)


def gonzalez_centers(net: SpatialNetwork, n_centers: int, start: int | None = None,
                     candidates=None) -> np.ndarray:
    """Greedy farthest-point centers; ties go to the lowest node index.

    ``candidates`` optionally limits which nodes may become centers.
    """
    start = default_start(net) if start is None else start
    return _gonzalez(net, n_centers, start, candidates)[0]


def _repair(net, labels, centers):
    """Reattach stray components of disconnected elements to a neighbour."""
    u, v = net.edges.T
    n_elements = len(centers)
    repaired = 0
    for _ in range(net.n_nodes):
        same = labels[u] == labels[v]
        G = sp.coo_matrix((np.ones(same.sum()), (u[same], v[same])),
                          shape=(net.n_nodes,) * 2)
        ncomp, comp = csgraph.connected_components(G, directed=False)
        if ncomp == n_elements:
            return labels, repaired
        # the component holding the center is the one an element keeps
        main = comp[centers]
        stray = np.setdiff1d(np.arange(ncomp), main)
        c = int(stray[0])
        members = comp == c
        cross = (members[u] != members[v])
        other = np.where(members[u[cross]], labels[v[cross]], labels[u[cross]])
        counts = np.bincount(other, minlength=n_elements)
        labels = labels.copy()
        labels[members] = int(np.argmax(counts))
        repaired += 1
    raise NetworkError("connectivity repair did not converge")


def assign_to_centers(net: SpatialNetwork, centers, d: int | None = None,
                      distances: np.ndarray | None = None) -> Partition:
    """Nearest-center assignment; ties go to the center listed first."""
    centers = np.asarray(centers, dtype=np.int64)
    if centers.size == 0 or len(np.unique(centers)) != len(centers):
        raise ValueError("centers must be nonempty and distinct")
    if distances is None:
        distances = csgraph.dijkstra(net.adjacency, directed=False, indices=centers)
    if not np.all(np.isfinite(distances.min(axis=0))):
        raise NetworkError("node unreachable from every center")
    labels = np.argmin(distances, axis=0)
    labels[centers] = np.arange(len(centers))
    labels, repaired = _repair(net, labels, centers)
    if repaired:
        log.info("connectivity repair moved %d components", repaired)
    return Partition(net, labels, centers, d=d or net.iso_dim, meta={"repaired": repaired})


def gonzalez_partition(net: SpatialNetwork, n_elements: int, start: int | None = None,
                       d: int | None = None, free_centers: bool = True) -> Partition:
    """Greedy N-center partition.

    With ``free_centers`` only non-Dirichlet nodes are eligible as centers, so
    no element can consist of Dirichlet nodes alone.
    """
    start = default_start(net) if start is None else start
    cand = net.free_nodes if free_centers else None
    centers, dist = _gonzalez(net, n_elements, start, cand)
    part = assign_to_centers(net, centers, d=d, distances=dist)
    part.meta["start"] = int(start)
    part.meta["covering_radius"] = float(dist.min(axis=0).max())
    return part


def covering_radius(net: SpatialNetwork, centers) -> float:
    d = csgraph.dijkstra(net.adjacency, directed=False, indices=np.asarray(centers))
    return float(d.min(axis=0).max())


def measure_H(net: SpatialNetwork, partition) -> tuple[float, np.ndarray]:
    """Exact within-element graph diameters and their maximum."""
    labels = partition.labels
    n_el = len(partition.centers)
    H_T = np.zeros(n_el)
    for k in range(n_el):
        T = np.flatnonzero(labels == k)
        if len(T) < 2:
            continue
        D = csgraph.dijkstra(restricted_adjacency(net, T), directed=False)
        if not np.all(np.isfinite(D)):
            raise NetworkError(f"element {k} is not connected")
        H_T[k] = D.max()
    return float(H_T.max()), H_T


def internal_laplacian(stiff: SparseSymOperator, T) -> sp.csr_matrix:
    """Principal block on ``T`` of the form built from edges inside ``T`` only."""
    T = node_set(T)
    i, j, c = stiff.edge_conductances()
    n = stiff.shape[0]
    inside = np.zeros(n, bool)
    inside[T] = True
    keep = inside[i] & inside[j]
    loc = np.full(n, -1)
    loc[T] = np.arange(len(T))
    a, b, w = loc[i[keep]], loc[j[keep]], c[keep]
    m = len(T)
    dd = np.zeros(m)
    np.add.at(dd, a, w)
    np.add.at(dd, b, w)
    return sp.coo_matrix((np.r_[-w, -w, dd], (np.r_[a, b, np.arange(m)], np.r_[b, a, np.arange(m)])),
                         shape=(m, m)).tocsr()


def poincare_constant(L: sp.spmatrix, m: np.ndarray, tol: float = 1e-8, maxiter: int = 500,
                      block: int = 4, seed: int = 0) -> float:
    """``1/sqrt(lambda_2)`` of the pencil ``(L, diag(m))`` on mean-zero vectors.

    Block inverse iteration with Rayleigh-Ritz on the M-orthogonal complement of
    constants. Returns ``nan`` when the eigenvalue has not converged.
    """
    n = len(m)
    if n == 1:
        return 0.0
    one = np.ones(n) / np.sqrt(m.sum())

    def deflate(X):
        return X - np.outer(one, one @ (m[:, None] * X))

    if n <= block + 2:
        w = sla.eigh(L.toarray(), np.diag(m), eigvals_only=True)
        return float(1.0 / np.sqrt(w[1]))
    # The shift only makes the factorization definite. Right-hand sides are
    # M-orthogonal to constants, so a tiny shift costs no accuracy, while a
    # shift comparable to lambda_2 would stall the iteration (short edges
    # make the diagonal of L huge compared to lambda_2).
    shift = 1e-10 * L.diagonal().max() / m.max()
    A = (L + shift * sp.diags(m)).tocsc()
    lu = spla.splu(A)
    k = min(block, n - 1)
    X = deflate(np.random.default_rng(seed).standard_normal((n, k)))
    lam_old = np.inf
    for _ in range(maxiter):
        X = deflate(lu.solve(m[:, None] * X))
        # M-orthonormalize
        G = X.T @ (m[:, None] * X)
        R = np.linalg.cholesky(G)
        X = np.linalg.solve(R, X.T).T
        Hm = X.T @ (L @ X)
        w, V = np.linalg.eigh(0.5 * (Hm + Hm.T))
        X = X @ V
        lam = w[0]
        if abs(lam - lam_old) <= tol * abs(lam):
            return float(1.0 / np.sqrt(lam))
        lam_old = lam
    return float("nan")


def diagnostics(net: SpatialNetwork, partition: Partition, mass: SparseSymOperator,
                stiff: SparseSymOperator, tol: float = 1e-8, maxiter: int = 500) -> PartitionDiagnostics:
    mdiag = mass.matrix.diagonal()
    masses = np.array([mdiag[T].sum() for T in partition.elements])
    cpo = np.zeros(partition.n_elements)
    lab = partition.labels
    inner = lab[net.edges[:, 0]] == lab[net.edges[:, 1]]
    # vol_T(T): sum of within-T degrees, i.e. twice the number of inner edges
    vols = 2.0 * np.bincount(lab[net.edges[inner, 0]], minlength=partition.n_elements)
    for k, T in enumerate(partition.elements):
        Lint = internal_laplacian(stiff, T)
        cpo[k] = poincare_constant(Lint, mdiag[T], tol=tol, maxiter=maxiter)
    return PartitionDiagnostics(
        sigma=float(masses.max() / masses.min()),
        max_edge_length=float(net.lengths.max()),
        H=partition.H,
        H_nominal=partition.H_nominal,
        H_T=partition.H_T.copy(),
        mass=masses,
        vol=vols,
        C_po=cpo,
    )


@dataclass(frozen=True)
class PartitionHierarchy:
    counts: tuple[int, ...]
    partitions: tuple[Partition, ...]

    @property
    def H_nominal(self) -> np.ndarray:
        return np.array([p.H_nominal for p in self.partitions])

    @property
    def H_measured(self) -> np.ndarray:
        return np.array([p.H for p in self.partitions])

    @property
    def H_min(self) -> float:
        return float(self.H_measured.min())

    def __getitem__(self, N: int) -> Partition:
        return self.partitions[self.counts.index(N)]


def build_hierarchy(net: SpatialNetwork, counts, start: int | None = None,
                    d: int | None = None, free_centers: bool = True) -> PartitionHierarchy:
    counts = tuple(int(c) for c in counts)
    if any(b <= a for a, b in zip(counts, counts[1:])):
        raise ValueError("element counts must be strictly increasing")
    start = default_start(net) if start is None else start
    parts = tuple(gonzalez_partition(net, N, start=start, d=d, free_centers=free_centers)
                  for N in counts)
    return PartitionHierarchy(counts, parts)
