"""Spatial networks and graph-metric primitives.

Node indices are dense and 0-based; node sets are sorted, duplicate-free
``int64`` arrays. Unreachable distances are ``numpy.inf``.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph

INF = np.inf


class NetworkError(ValueError):
    """Raised when a network or node set violates its invariants."""


def node_set(nodes, n_nodes: int | None = None) -> np.ndarray:
    """Normalize ``nodes`` to a sorted, duplicate-free index array."""
    arr = np.unique(np.asarray(nodes, dtype=np.int64).ravel())
    if n_nodes is not None and arr.size and (arr[0] < 0 or arr[-1] >= n_nodes):
        raise NetworkError("node index out of range")
    return arr


def _readonly(a):
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True, eq=False)
class SpatialNetwork:
    """Immutable embedded graph.

    Parameters
    ----------
    coords : (n, dim) array
        Node positions, ``dim`` in {2, 3}.
    edges : (m, 2) int array
        Undirected edges. Stored with ``u < v`` and sorted lexicographically.
    dirichlet : (n,) bool array
        Membership in the Dirichlet boundary.
    domain_boundary : (n,) bool array, optional
        Nodes lying on the boundary of the embedding domain. Defaults to
        ``dirichlet``.
    weights : (m,) array, optional
        Positive edge weights (default 1).
    iso_dim : int
        Isoperimetric dimension used for the ``H = N**(-1/d)`` convention.
    """

    coords: np.ndarray
    edges: np.ndarray
    dirichlet: np.ndarray
    domain_boundary: np.ndarray | None = None
    weights: np.ndarray | None = None
    iso_dim: int = 2
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim != 2 or coords.shape[1] not in (2, 3):
            raise NetworkError("coords must have shape (n, 2) or (n, 3)")
        n = coords.shape[0]
        if n < 2:
            raise NetworkError("a network needs at least two nodes")
        edges = np.asarray(self.edges, dtype=np.int64).reshape(-1, 2)
        weights = (np.ones(len(edges)) if self.weights is None
                   else np.asarray(self.weights, dtype=float).ravel())
        if weights.shape != (len(edges),):
            raise NetworkError("one weight per edge required")
        if np.any(edges < 0) or np.any(edges >= n):
            raise NetworkError("edge endpoint out of range")
        if np.any(edges[:, 0] == edges[:, 1]):
            raise NetworkError("self-loops are not allowed")
        edges = np.sort(edges, axis=1)
        order = np.lexsort((edges[:, 1], edges[:, 0]))
        edges, weights = edges[order], weights[order]
        if len(edges) > 1 and np.any(np.all(edges[1:] == edges[:-1], axis=1)):
            raise NetworkError("duplicate edges are not allowed")
        if np.any(weights <= 0):
            raise NetworkError("edge weights must be positive")
        dirichlet = np.asarray(self.dirichlet, dtype=bool).ravel()
        bnd = dirichlet if self.domain_boundary is None else self.domain_boundary
        bnd = np.asarray(bnd, dtype=bool).ravel()
        if dirichlet.shape != (n,) or bnd.shape != (n,):
            raise NetworkError("per-node flags must have length n")
        if not dirichlet.any():
            raise NetworkError("at least one Dirichlet node is required")

        for name, val in (("coords", coords), ("edges", edges), ("weights", weights),
                          ("dirichlet", dirichlet), ("domain_boundary", bnd)):
            object.__setattr__(self, name, _readonly(val))

        if np.any(self.lengths <= 0):
            raise NetworkError("edge lengths must be strictly positive")
        ncomp = csgraph.connected_components(self.adjacency, directed=False,
                                             return_labels=False)
        if ncomp != 1:
            raise NetworkError(f"network is not connected ({ncomp} components)")

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def n_edges(self) -> int:
        return self.edges.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @cached_property
    def lengths(self) -> np.ndarray:
        d = self.coords[self.edges[:, 0]] - self.coords[self.edges[:, 1]]
        return _readonly(np.sqrt(np.einsum("ij,ij->i", d, d)))

    @cached_property
    def adjacency(self) -> sp.csr_matrix:
        """Symmetric CSR matrix of edge lengths."""
        n = self.n_nodes
        u, v = self.edges.T
        A = sp.coo_matrix((np.r_[self.lengths, self.lengths], (np.r_[u, v], np.r_[v, u])),
                          shape=(n, n)).tocsr()
        A.sort_indices()
        return A

    @cached_property
    def degree(self) -> np.ndarray:
        return _readonly(np.diff(self.adjacency.indptr))

    @cached_property
    def dirichlet_nodes(self) -> np.ndarray:
        return _readonly(np.flatnonzero(self.dirichlet))

    @cached_property
    def free_nodes(self) -> np.ndarray:
        return _readonly(np.flatnonzero(~self.dirichlet))

    @cached_property
    def on_boundary(self) -> np.ndarray:
        """Nodes treated as lying on the domain boundary (flag or Dirichlet)."""
        return _readonly(self.domain_boundary | self.dirichlet)

    def with_weights(self, weights) -> "SpatialNetwork":
        return SpatialNetwork(self.coords, self.edges, self.dirichlet, self.domain_boundary,
                              weights, self.iso_dim, dict(self.meta))

    def __repr__(self):
        return (f"SpatialNetwork(n_nodes={self.n_nodes}, n_edges={self.n_edges}, "
                f"dim={self.dim}, dirichlet={int(self.dirichlet.sum())})")


def restricted_adjacency(net: SpatialNetwork, S) -> sp.csr_matrix:
    """Length adjacency of the subgraph induced by ``S`` (local indexing)."""
    S = np.asarray(S)
    return net.adjacency[S][:, S]


def _local_index(S, nodes, what="node"):
    pos = np.searchsorted(S, nodes)
    pos = np.minimum(pos, len(S) - 1)
    ok = S[pos] == nodes
    if not np.all(ok):
        raise NetworkError(f"{what} not contained in the node set")
    return pos


def graph_distance(net: SpatialNetwork, S, x: int, y: int) -> float:
    """Shortest path length from ``x`` to ``y`` using only nodes of ``S``."""
    S = node_set(S, net.n_nodes)
    ix, iy = _local_index(S, np.array([x, y]))
    if ix == iy:
        return 0.0
    d = csgraph.dijkstra(restricted_adjacency(net, S), directed=False, indices=ix)
    return float(d[iy])


def dist_to_set(net: SpatialNetwork, S, R, limit: float = INF) -> np.ndarray:
    """Distances ``dist_S(x, R)`` for every ``x`` in ``S`` (aligned with sorted ``S``)."""
    S = node_set(S, net.n_nodes)
    R = node_set(R, net.n_nodes)
    if R.size == 0:
        raise NetworkError("target set R is empty")
    loc = _local_index(S, R, "target node")
    return csgraph.dijkstra(restricted_adjacency(net, S), directed=False, indices=loc,
                            min_only=True, limit=limit)


def boundary_nodes(net: SpatialNetwork, R, S=None) -> np.ndarray:
    """Nodes of ``R`` with a neighbour in ``S \\ R`` (``S`` defaults to all nodes)."""
    n = net.n_nodes
    R = node_set(R, n)
    in_R = np.zeros(n, bool)
    in_R[R] = True
    if S is None:
        in_S = np.ones(n, bool)
    else:
        S = node_set(S, n)
        in_S = np.zeros(n, bool)
        in_S[S] = True
        if np.any(in_R & ~in_S):
            raise NetworkError("R must be a subset of S")
    outside = in_S & ~in_R
    u, v = net.edges.T
    hits = np.r_[u[in_R[u] & outside[v]], v[in_R[v] & outside[u]]]
    return node_set(hits)


def element_boundary(net: SpatialNetwork, T) -> np.ndarray:
    """Domain-boundary nodes of ``T`` together with its graph boundary."""
    T = node_set(T, net.n_nodes)
    return node_set(np.r_[T[net.on_boundary[T]], boundary_nodes(net, T)])


def element_adjacency(net: SpatialNetwork, labels: np.ndarray, n_elements: int) -> sp.csr_matrix:
    """Boolean element graph: two elements are adjacent if an edge joins them."""
    a, b = labels[net.edges[:, 0]], labels[net.edges[:, 1]]
    cross = a != b
    A = sp.coo_matrix((np.ones(2 * cross.sum(), bool),
                       (np.r_[a[cross], b[cross]], np.r_[b[cross], a[cross]])),
                      shape=(n_elements, n_elements)).tocsr()
    A.sum_duplicates()
    return A


def patch(net: SpatialNetwork, partition, S, ell: int) -> np.ndarray:
    """Element ids of the ``ell``-th order patch of the element set ``S``."""
    if ell < 0:
        raise NetworkError("ell must be non-negative")
    A = partition.element_graph
    current = np.zeros(A.shape[0], bool)
    current[np.asarray(S, dtype=np.int64)] = True
    for _ in range(ell):
        grown = current | (A @ current.astype(np.int8) > 0)
        if np.array_equal(grown, current):
            break
        current = grown
    return np.flatnonzero(current)


# -- text format -------------------------------------------------------------

def write_network(net: SpatialNetwork, path) -> None:
    """Write ``net`` in the plain-text network format (17 significant digits)."""
    path = Path(path)
    lines = [f"{net.n_nodes} {net.n_edges} {net.dim}"]
    for i in range(net.n_nodes):
        xs = " ".join(f"{c:.17g}" for c in net.coords[i])
        lines.append(f"{i} {xs} {int(net.dirichlet[i])} {int(net.domain_boundary[i])}")
    for (u, v), w in zip(net.edges, net.weights):
        lines.append(f"{u} {v} {w:.17g}")
    path.write_text("\n".join(lines) + "\n")


def read_network(path, iso_dim: int = 2) -> SpatialNetwork:
    with open(path) as fh:
        n, m, dim = (int(t) for t in fh.readline().split())
        coords = np.empty((n, dim))
        dirichlet = np.empty(n, bool)
        bnd = np.empty(n, bool)
        for _ in range(n):
            tok = fh.readline().split()
            i = int(tok[0])
            coords[i] = [float(t) for t in tok[1:1 + dim]]
            dirichlet[i] = tok[1 + dim] == "1"
            bnd[i] = tok[2 + dim] == "1"
        edges = np.empty((m, 2), np.int64)
        weights = np.empty(m)
        for k in range(m):
            u, v, w = fh.readline().split()
            edges[k] = int(u), int(v)
            weights[k] = float(w)
    return SpatialNetwork(coords, edges, dirichlet, bnd, weights, iso_dim)
