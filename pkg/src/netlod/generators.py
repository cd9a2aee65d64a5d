"""Generators for the experiment families: planar fiber networks, layered
cardboard-like networks, a structured P1 finite element system, and source
vectors.

Randomness comes from ``numpy.random.Generator`` (PCG64) seeded through
``numpy.random.SeedSequence``. Stream layout for a fiber network with seed
``s``: ``SeedSequence(s).spawn(2)`` gives the primary stream (all lines drawn
at once as angle, midpoint-x, midpoint-y) and the resampling stream (used, in
line order, to redraw lines with collinear overlaps). Cardboard layers use
``SeedSequence(s).spawn(3)`` for bottom, middle and top.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse import csgraph
from scipy.spatial import cKDTree

from .network import NetworkError, SpatialNetwork
from .operators import SparseSymOperator

RNG_NAME = "numpy.PCG64/SeedSequence"
GENERATOR_VERSION = "1"

COLLINEAR_TOL = 1e-12
MERGE_TOL = 1e-12


@dataclass(frozen=True)
class FiberConfig:
    # defaults give the full-scale net (~138k nodes); a line reaches 0.1 to
    # each side of its midpoint
    n_lines: int = 4000
    line_length: float = 0.2
    midpoint_box: tuple[float, float] = (-0.05, 1.05)
    seed: int = 0
    # split longer edges into equal pieces (None keeps the raw network)
    max_edge_length: float | None = None

    def __post_init__(self):
        if self.max_edge_length is not None and self.max_edge_length <= 0:
            raise ValueError("max_edge_length must be positive")
        if self.n_lines < 1:
            raise ValueError("n_lines must be >= 1")
        if self.line_length <= 0:
            raise ValueError("line_length must be positive")


@dataclass(frozen=True)
class CardboardConfig:
    fiber: FiberConfig = FiberConfig()
    delta: float = 1e-6
    amplitude: float = 1 / 8
    frequency: float = 12 * np.pi
    connect_radius: float = 1e-4
    # reuse one planar layout for all three layers instead of independent draws
    shared_layout: bool = False

    def __post_init__(self):
        if self.delta <= 0:
            raise ValueError("delta must be positive")
        if self.connect_radius < 0:
            raise ValueError("connect_radius must be non-negative")


@dataclass(frozen=True)
class FemGridConfig:
    m: int = 64
    seed: int = 0
    coefficient_range: tuple[float, float] = (0.1, 1.0)
    constant_coefficient: float | None = None

    def __post_init__(self):
        if self.m < 2:
            raise ValueError("m must be >= 2")


FULL_FIBER = FiberConfig()
FULL_CARDBOARD = CardboardConfig()


# -- segments ----------------------------------------------------------------

def _draw_lines(rng, count, cfg: FiberConfig):
    lo, hi = cfg.midpoint_box
    u = rng.random((count, 3))
    theta = np.pi * u[:, 0]
    mid = lo + (hi - lo) * u[:, 1:]
    half = 0.5 * cfg.line_length * np.column_stack([np.cos(theta), np.sin(theta)])
    return np.stack([mid - half, mid + half], axis=1)


def clip_segments(seg: np.ndarray):
    """Clip segments ``(k, 2, 2)`` to the closed unit square.

    Returns ``(kept_index, clipped, on_boundary)`` where ``on_boundary`` is a
    ``(k', 2)`` flag per endpoint. Endpoints produced by clipping are snapped
    exactly onto the boundary.
    """
    p, q = seg[:, 0], seg[:, 1]
    d = q - p
    t0 = np.zeros(len(seg))
    t1 = np.ones(len(seg))
    side0 = np.full(len(seg), -1)
    side1 = np.full(len(seg), -1)
    with np.errstate(divide="ignore", invalid="ignore"):
        for ax in (0, 1):
            for bound, code in ((0.0, 2 * ax), (1.0, 2 * ax + 1)):
                # inside condition: sign * (p + t d - bound) >= 0
                sign = 1.0 if bound == 0.0 else -1.0
                num = sign * (p[:, ax] - bound)
                den = sign * d[:, ax]
                t = -num / den
                entering = den > 0
                leaving = den < 0
                upd0 = entering & (t > t0)
                t0 = np.where(upd0, t, t0)
                side0 = np.where(upd0, code, side0)
                upd1 = leaving & (t < t1)
                t1 = np.where(upd1, t, t1)
                side1 = np.where(upd1, code, side1)
                parallel_out = (den == 0) & (num < 0)
                t0 = np.where(parallel_out, 2.0, t0)
    keep = t1 - t0 > 1e-14
    idx = np.flatnonzero(keep)
    a = p[idx] + t0[idx, None] * d[idx]
    b = p[idx] + t1[idx, None] * d[idx]
    out = np.clip(np.stack([a, b], axis=1), 0.0, 1.0)
    flags = np.zeros((len(idx), 2), bool)
    for end, side in ((0, side0[idx]), (1, side1[idx])):
        hit = side >= 0
        ax = side[hit] // 2
        val = (side[hit] % 2).astype(float)
        rows = np.flatnonzero(hit)
        out[rows, end, ax] = val
        pts = out[:, end]
        flags[:, end] = np.any((pts == 0.0) | (pts == 1.0), axis=1)
    return idx, out, flags


def _pair_intersections(seg, I, J):
    """Intersection parameters for candidate pairs; returns (mask, t, u, collinear)."""
    p, r = seg[I, 0], seg[I, 1] - seg[I, 0]
    q, s = seg[J, 0], seg[J, 1] - seg[J, 0]
    qp = q - p
    denom = r[:, 0] * s[:, 1] - r[:, 1] * s[:, 0]
    nr = np.linalg.norm(r, axis=1)
    ns = np.linalg.norm(s, axis=1)
    parallel = np.abs(denom) <= COLLINEAR_TOL * nr * ns
    cross_qp_r = qp[:, 0] * r[:, 1] - qp[:, 1] * r[:, 0]
    collinear = parallel & (np.abs(cross_qp_r) <= COLLINEAR_TOL * nr * np.maximum(nr, 1.0))
    if np.any(collinear):
        # overlap test of projections onto r
        rr = nr[collinear] ** 2
        a = np.einsum("ij,ij->i", qp[collinear], r[collinear]) / rr
        b = a + np.einsum("ij,ij->i", s[collinear], r[collinear]) / rr
        lo, hi = np.minimum(a, b), np.maximum(a, b)
        overlap = (hi >= 0) & (lo <= 1)
        collinear = collinear.copy()
        collinear[np.flatnonzero(collinear)[~overlap]] = False
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (qp[:, 0] * s[:, 1] - qp[:, 1] * s[:, 0]) / denom
        u = cross_qp_r / denom
    hit = ~parallel & (t >= 0) & (t <= 1) & (u >= 0) & (u <= 1)
    return hit, t, u, collinear


def candidate_pairs(seg: np.ndarray, cell: float):
    """Segment pairs sharing a uniform grid cell of size ``cell`` (i < j)."""
    if len(seg) < 2:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    lo = np.minimum(seg[:, 0], seg[:, 1])
    hi = np.maximum(seg[:, 0], seg[:, 1])
    c0 = np.floor(lo / cell).astype(np.int64)
    c1 = np.floor(hi / cell).astype(np.int64)
    ncell = int(np.ceil(1.0 / cell)) + 3
    owners, cells = [], []
    span = c1 - c0
    for dx in range(int(span[:, 0].max()) + 1):
        for dy in range(int(span[:, 1].max()) + 1):
            ok = (dx <= span[:, 0]) & (dy <= span[:, 1])
            k = np.flatnonzero(ok)
            owners.append(k)
            cells.append((c0[k, 0] + dx + 1) * ncell + (c0[k, 1] + dy + 1))
    owners = np.concatenate(owners)
    cells = np.concatenate(cells)
    order = np.lexsort((owners, cells))
    owners, cells = owners[order], cells[order]
    bounds = np.flatnonzero(np.diff(cells)) + 1
    starts = np.r_[0, bounds]
    ends = np.r_[bounds, len(cells)]
    I, J = [], []
    for a, b in zip(starts, ends):
        if b - a < 2:
            continue
        ii, jj = np.triu_indices(b - a, 1)
        I.append(owners[a + ii])
        J.append(owners[a + jj])
    if not I:
        return np.empty(0, np.int64), np.empty(0, np.int64)
    key = np.unique(np.concatenate(I) * len(seg) + np.concatenate(J))
    return key // len(seg), key % len(seg)


def brute_force_pairs(seg: np.ndarray):
    I, J = np.triu_indices(len(seg), 1)
    return I.astype(np.int64), J.astype(np.int64)


def segment_intersections(seg: np.ndarray, cell: float | None = None):
    """All intersecting pairs ``(I, J, t, u)`` plus collinear-overlap pairs."""
    if cell is None:
        I, J = brute_force_pairs(seg)
    else:
        I, J = candidate_pairs(seg, cell)
    hit, t, u, collinear = _pair_intersections(seg, I, J)
    return (I[hit], J[hit], t[hit], u[hit]), (I[collinear], J[collinear])


def network_from_segments(seg: np.ndarray, on_boundary: np.ndarray, cell: float | None = None,
                          iso_dim: int = 2) -> SpatialNetwork:
    """Planar network whose nodes are segment endpoints and intersections.

    Keeps the largest connected component and iteratively strips degree-one
    nodes that are not on the domain boundary. Boundary nodes are Dirichlet.
    """
    seg = np.asarray(seg, float)
    k = len(seg)
    (I, J, t, u), collinear = segment_intersections(seg, cell)
    if len(collinear[0]):
        raise NetworkError("collinear overlapping segments")
    # endpoints: nodes 0..2k-1, intersections: 2k..
    pts = np.concatenate([seg.reshape(-1, 2), seg[I, 0] + t[:, None] * (seg[I, 1] - seg[I, 0])])
    bnd = np.concatenate([np.asarray(on_boundary, bool).ravel(), np.zeros(len(I), bool)])
    inter_ids = 2 * k + np.arange(len(I))
    owner = np.concatenate([np.repeat(np.arange(k), 2), I, J])
    param = np.concatenate([np.tile([0.0, 1.0], k), t, u])
    node = np.concatenate([np.arange(2 * k), inter_ids, inter_ids])

    # merge coincident points
    pairs = cKDTree(pts).query_pairs(MERGE_TOL, output_type="ndarray")
    n = len(pts)
    if len(pairs):
        G = sp.coo_matrix((np.ones(len(pairs)), (pairs[:, 0], pairs[:, 1])), shape=(n, n))
        _, rep = csgraph.connected_components(G, directed=False)
        first = np.full(rep.max() + 1, n)
        np.minimum.at(first, rep, np.arange(n))
        canon = first[rep]
        bnd_merged = np.zeros(n, bool)
        np.logical_or.at(bnd_merged, canon, bnd)
        bnd = bnd_merged
        node = canon[node]
    order = np.lexsort((param, owner))
    owner, node = owner[order], node[order]
    same = owner[1:] == owner[:-1]
    a, b = node[:-1][same], node[1:][same]
    keep = a != b
    e = np.sort(np.column_stack([a[keep], b[keep]]), axis=1)
    e = np.unique(e, axis=0)

    used = np.zeros(n, bool)
    used[e.ravel()] = True
    G = sp.coo_matrix((np.ones(len(e)), (e[:, 0], e[:, 1])), shape=(n, n))
    ncomp, lab = csgraph.connected_components(G, directed=False)
    sizes = np.bincount(lab[used], minlength=ncomp) if used.any() else np.zeros(ncomp)
    alive = used & (lab == np.argmax(sizes)) if used.any() else used
    e = e[alive[e[:, 0]]]

    while True:
        deg = np.bincount(e.ravel(), minlength=n)
        hanging = (deg == 1) & ~bnd
        if not hanging.any():
            break
        e = e[~(hanging[e[:, 0]] | hanging[e[:, 1]])]
    alive = np.zeros(n, bool)
    alive[e.ravel()] = True
    ids = np.flatnonzero(alive)
    if len(ids) < 2:
        raise NetworkError("fewer than two nodes remain after pruning")
    remap = np.full(n, -1)
    remap[ids] = np.arange(len(ids))
    flags = bnd[ids]
    if not flags.any():
        raise NetworkError("no Dirichlet node remains in the network")
    return SpatialNetwork(pts[ids], remap[e], flags, flags, None, iso_dim)


def refine_long_edges(net: SpatialNetwork, h_max: float) -> SpatialNetwork:
    """Split every edge longer than ``h_max`` into equal pieces.

    Inserted nodes are interior, of degree two, and inherit the edge weight.
    New node ids follow the original ones in edge order.
    """
    pieces = np.ceil(net.lengths / h_max - 1e-12).astype(np.int64).clip(1)
    if np.all(pieces == 1):
        return net
    coords = [net.coords]
    edges, weights = [net.edges[pieces == 1]], [net.weights[pieces == 1]]
    nxt = net.n_nodes
    for e in np.flatnonzero(pieces > 1):
        k = pieces[e]
        u, v = net.edges[e]
        t = np.arange(1, k)[:, None] / k
        coords.append(net.coords[u] + t * (net.coords[v] - net.coords[u]))
        chain = np.r_[u, nxt + np.arange(k - 1), v]
        nxt += k - 1
        edges.append(np.column_stack([chain[:-1], chain[1:]]))
        weights.append(np.full(k, net.weights[e]))
    coords = np.concatenate(coords)
    flags = np.zeros(len(coords), bool)
    bnd = flags.copy()
    flags[:net.n_nodes] = net.dirichlet
    bnd[:net.n_nodes] = net.domain_boundary
    return SpatialNetwork(coords, np.concatenate(edges), flags, bnd, np.concatenate(weights),
                          net.iso_dim, dict(net.meta))


def sample_segments(cfg: FiberConfig):
    """Draw and clip the lines of ``cfg``; collinear overlaps are redrawn."""
    main, resample = (np.random.Generator(np.random.PCG64(s))
                      for s in np.random.SeedSequence(cfg.seed).spawn(2))
    lines = _draw_lines(main, cfg.n_lines, cfg)
    for _ in range(100):
        kept, seg, flags = clip_segments(lines)
        _, (ci, cj) = segment_intersections(seg, cfg.line_length)
        if len(ci) == 0:
            return seg, flags
        bad = np.unique(kept[np.maximum(ci, cj)])
        lines[bad] = _draw_lines(resample, len(bad), cfg)
    raise NetworkError("could not resolve collinear overlaps")


def gen_fiber_network(cfg: FiberConfig) -> SpatialNetwork:
    seg, flags = sample_segments(cfg)
    if len(seg) == 0:
        raise NetworkError("no segment intersects the unit square")
    net = network_from_segments(seg, flags, cfg.line_length)
    if cfg.max_edge_length is not None:
        net = refine_long_edges(net, cfg.max_edge_length)
    net.meta.update(generator="fiber", config=cfg, rng=RNG_NAME, version=GENERATOR_VERSION)
    return net


def gen_cardboard(cfg: CardboardConfig) -> SpatialNetwork:
    """Three stacked fiber layers, the middle one corrugated, glued by short edges."""
    seeds = np.random.SeedSequence(cfg.fiber.seed).spawn(3)
    layers = []
    for k, ss in enumerate(seeds):
        seed = cfg.fiber.seed if cfg.shared_layout else int(ss.generate_state(1)[0])
        fc = FiberConfig(cfg.fiber.n_lines, cfg.fiber.line_length, cfg.fiber.midpoint_box, seed)
        layers.append(gen_fiber_network(fc))
    bottom, middle, top = layers
    top_z = cfg.amplitude + cfg.delta

    def lift(net, z):
        return np.column_stack([net.coords, z])

    c_bot = lift(bottom, np.full(bottom.n_nodes, -top_z))
    c_mid = lift(middle, cfg.amplitude * np.cos(cfg.frequency * middle.coords[:, 0]))
    c_top = lift(top, np.full(top.n_nodes, top_z))
    offs = np.cumsum([0, bottom.n_nodes, middle.n_nodes])
    coords = np.concatenate([c_bot, c_mid, c_top])
    edges = [bottom.edges, middle.edges + offs[1], top.edges + offs[2]]
    tree = cKDTree(c_mid)
    for c, off in ((c_bot, offs[0]), (c_top, offs[2])):
        dist, j = tree.query(c, distance_upper_bound=cfg.connect_radius)
        ok = np.isfinite(dist) & (dist > 0)
        edges.append(np.column_stack([np.flatnonzero(ok) + off, j[ok] + offs[1]]))
    edges = np.concatenate(edges)

    n = len(coords)
    G = sp.coo_matrix((np.ones(len(edges)), (edges[:, 0], edges[:, 1])), shape=(n, n))
    ncomp, lab = csgraph.connected_components(G, directed=False)
    big = np.argmax(np.bincount(lab))
    names = ("bottom", "middle", "top")
    for k, name in enumerate(names):
        if not np.any(lab[offs[k]:offs[k] + layers[k].n_nodes] == big):
            raise NetworkError(f"{name} layer is disconnected from the other layers")
    ids = np.flatnonzero(lab == big)
    remap = np.full(n, -1)
    remap[ids] = np.arange(len(ids))
    e = edges[(lab[edges[:, 0]] == big)]
    xy = coords[ids, :2]
    flags = np.any((xy == 0.0) | (xy == 1.0), axis=1)
    net = SpatialNetwork(coords[ids], remap[e], flags, flags, None, iso_dim=2)
    net.meta.update(generator="cardboard", config=cfg, rng=RNG_NAME, version=GENERATOR_VERSION,
                    layer_sizes=[int(np.sum((lab[offs[k]:offs[k] + layers[k].n_nodes] == big)))
                                 for k in range(3)])
    return net


# -- finite elements ----------------------------------------------------------

def gen_fem_grid(cfg: FemGridConfig) -> tuple[SpatialNetwork, SparseSymOperator]:
    """Structured right-triangle P1 mesh of the unit square and its stiffness matrix."""
    m = cfg.m
    ii, jj = np.meshgrid(np.arange(m + 1), np.arange(m + 1))
    coords = np.column_stack([ii.ravel() / m, jj.ravel() / m])
    idx = lambda i, j: j * (m + 1) + i  # noqa: E731
    ci, cj = (a.ravel() for a in np.meshgrid(np.arange(m), np.arange(m)))
    v00, v10, v11, v01 = idx(ci, cj), idx(ci + 1, cj), idx(ci + 1, cj + 1), idx(ci, cj + 1)
    # two triangles per cell, the right angle at v10 resp. v01; diagonal v00-v11
    tris = np.concatenate([np.column_stack([v00, v10, v11]), np.column_stack([v00, v01, v11])])
    if cfg.constant_coefficient is not None:
        a = np.full(len(tris), float(cfg.constant_coefficient))
    else:
        rng = np.random.Generator(np.random.PCG64(np.random.SeedSequence(cfg.seed)))
        lo, hi = cfg.coefficient_range
        a = lo + (hi - lo) * rng.random(len(tris))
    # local stiffness of a right isosceles triangle, vertex order (acute, right, acute)
    loc = 0.5 * np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    vals = (a[:, None] * loc.ravel()[None, :]).ravel()
    n = (m + 1) ** 2
    K = sp.coo_matrix((vals, (rows, cols)), shape=(n, n)).tocsr()
    K.sum_duplicates()
    K.sort_indices()
    edges = np.concatenate([np.column_stack([v00, v10]), np.column_stack([v00, v01]),
                            np.column_stack([v00, v11]),
                            np.column_stack([idx(np.arange(m), np.full(m, m)),
                                             idx(np.arange(m) + 1, np.full(m, m))]),
                            np.column_stack([idx(np.full(m, m), np.arange(m)),
                                             idx(np.full(m, m), np.arange(m) + 1)])])
    flags = np.any((coords == 0.0) | (coords == 1.0), axis=1)
    net = SpatialNetwork(coords, edges, flags, flags, None, iso_dim=2)
    net.meta.update(generator="fem", config=cfg, alpha=0.0, rng=RNG_NAME,
                    version=GENERATOR_VERSION)
    return net, SparseSymOperator(K, "fem-assembled", 0.0)


# -- sources -------------------------------------------------------------------

SOURCES = {
    "g1": lambda x, y: np.sin(x) * np.sin(y),
    "g2": lambda x, y: np.ones_like(x),
}


def source_vector(net: SpatialNetwork, mass: SparseSymOperator, g="g1") -> np.ndarray:
    """Nodal load ``M g``; for 3D networks ``g`` only sees the ``(x, y)`` coordinates."""
    func = SOURCES[g] if isinstance(g, str) else g
    vals = func(net.coords[:, 0], net.coords[:, 1])
    return mass.matrix.diagonal() * vals
