"""Experiment configuration and the convergence / localization studies.

A study shares one network, one operator and one reference solution across
all ``(N, ell, variant)`` cells. Rows are collected per cell and written in a
fixed order, so runs with the same seed give the same CSV apart from the
``seconds`` column.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, is_dataclass
from pathlib import Path

import numpy as np

from .coarse_space import CoarseSpace
from .correctors import GLOBAL, CorrectorFactory, VARIANTS, build_basis
from .generators import (CardboardConfig, FemGridConfig, FiberConfig, gen_cardboard,
                         gen_fem_grid, gen_fiber_network, source_vector)
from .network import SpatialNetwork, read_network
from .operators import (SparseSymOperator, assemble_mass, assemble_stiffness,
                        assemble_weighted_laplacian, random_edge_weights)
from .partition import Partition, default_start, gonzalez_partition
from .solver import galerkin_solve, reference_solve, relative_error_K

log = logging.getLogger(__name__)

CSV_HEADER = ("N", "H", "ell", "variant", "rel_err_K", "coarse_dim", "corrector_solves", "seconds")
NETWORKS = ("fiber", "cardboard", "fem", "file")
OPERATORS = ("weighted-laplacian", "stiffness", "fem")

# desk-scale fiber network used by the examples and the acceptance run
DESK_FIBER = FiberConfig(n_lines=1000, line_length=0.2, seed=1, max_edge_length=0.03)


@dataclass
class ExperimentConfig:
    network: str = "fiber"
    net_path: str | None = None
    fiber: FiberConfig = DESK_FIBER
    cardboard: CardboardConfig | None = None
    fem: FemGridConfig = FemGridConfig()
    operator: str = "weighted-laplacian"
    alpha: float = 1.0
    weight_range: tuple[float, float] = (0.1, 1.0)
    counts: tuple[int, ...] = (16, 32, 64, 128)
    ells: tuple = (1, 2, 3)
    variants: tuple[str, ...] = ("stabilized",)
    source: str = "g1"
    # seeds the edge weights; generator seeds live in the generator configs
    seed: int = 1
    out: str | None = None
    tol_corrector: float = 1e-10
    tol_reference: float = 1e-12
    tol_plateau: float = 0.9
    workers: int = 1

    def __post_init__(self):
        if self.network not in NETWORKS:
            raise ValueError(f"unknown network source {self.network!r}")
        if self.network == "file" and not self.net_path:
            raise ValueError("network 'file' needs net_path")
        if self.operator not in OPERATORS:
            raise ValueError(f"unknown operator {self.operator!r}")
        if (self.operator == "fem") != (self.network == "fem"):
            raise ValueError("the fem operator goes with the fem network and vice versa")
        self.counts = tuple(int(c) for c in self.counts)
        if not self.counts:
            raise ValueError("counts must be nonempty")
        self.ells = tuple(GLOBAL if e is None or e == "global" else int(e) for e in self.ells)
        if any(e is not GLOBAL and e < 1 for e in self.ells):
            raise ValueError("ell must be >= 1 for localized variants")
        self.variants = tuple(self.variants)
        for v in self.variants:
            if v not in VARIANTS:
                raise ValueError(f"unknown variant {v!r}")
        if self.source not in ("g1", "g2"):
            raise ValueError("source must be g1 or g2")
        if self.network == "fem":
            self.alpha = 0.0

    def cells(self):
        for N in self.counts:
            for variant in self.variants:
                for ell in ((GLOBAL,) if variant == "ideal" else self.ells):
                    yield N, variant, ell

    def to_dict(self) -> dict:
        def conv(x):
            if is_dataclass(x):
                return {k: conv(v) for k, v in asdict(x).items()}
            if isinstance(x, dict):
                return {k: conv(v) for k, v in x.items()}
            if isinstance(x, (list, tuple)):
                return [conv(v) for v in x]
            return x
        return conv(self)


@dataclass(eq=False)
class Problem:
    """Network, operators, load and reference solution of one configuration."""

    net: SpatialNetwork
    K: SparseSymOperator
    M: SparseSymOperator
    f: np.ndarray
    u: np.ndarray


def build_network(cfg: ExperimentConfig) -> tuple[SpatialNetwork, SparseSymOperator | None]:
    if cfg.network == "fiber":
        return gen_fiber_network(cfg.fiber), None
    if cfg.network == "cardboard":
        return gen_cardboard(cfg.cardboard or CardboardConfig(fiber=cfg.fiber)), None
    if cfg.network == "fem":
        return gen_fem_grid(cfg.fem)
    net = read_network(cfg.net_path)
    return net, None


def build_operator(cfg: ExperimentConfig, net: SpatialNetwork, K=None) -> SparseSymOperator:
    if cfg.operator == "fem":
        return K
    if cfg.operator == "stiffness":
        return assemble_stiffness(net, cfg.alpha)
    if cfg.network == "file":
        # files carry their own edge weights
        w = net.weights
    else:
        lo, hi = cfg.weight_range
        w = random_edge_weights(net, lo, hi, seed=cfg.seed)
    return assemble_weighted_laplacian(net, cfg.alpha, w)


def prepare(cfg: ExperimentConfig) -> Problem:
    net, K = build_network(cfg)
    K = build_operator(cfg, net, K)
    M = assemble_mass(net, cfg.alpha)
    f = source_vector(net, M, cfg.source)
    u = reference_solve(K, f, net.dirichlet, rtol=cfg.tol_reference)
    return Problem(net, K, M, f, u)


@dataclass
class StudyRow:
    N: int
    H: float
    ell: int | None
    variant: str
    rel_err_K: float
    coarse_dim: int
    corrector_solves: int
    seconds: float
    saturated: bool = False
    error: str | None = None

    def csv_fields(self) -> list[str]:
        ell = "global" if self.ell is GLOBAL else str(self.ell)
        return [str(self.N), f"{self.H:.17g}", ell, self.variant, f"{self.rel_err_K:.17g}",
                str(self.coarse_dim), str(self.corrector_solves), f"{self.seconds:.3f}"]


@dataclass
class StudyResult:
    config: ExperimentConfig
    rows: list[StudyRow]
    fits: dict = field(default_factory=dict)
    n_nodes: int = 0

    @property
    def failures(self) -> list[StudyRow]:
        return [r for r in self.rows if r.error is not None]

    def error(self, N, variant, ell) -> float:
        for r in self.rows:
            if r.N == N and r.variant == variant and r.ell == ell:
                return r.rel_err_K
        raise KeyError((N, variant, ell))

    def series(self, variant, ell=None, N=None) -> tuple[np.ndarray, np.ndarray]:
        """``(H, err)`` over levels for fixed ``ell``, or ``(ell, err)`` for fixed ``N``."""
        if N is None:
            rows = sorted((r for r in self.rows if r.variant == variant and r.ell == ell),
                          key=lambda r: r.N)
            return np.array([r.H for r in rows]), np.array([r.rel_err_K for r in rows])
        rows = sorted((r for r in self.rows if r.variant == variant and r.N == N
                       and r.ell is not GLOBAL), key=lambda r: r.ell)
        return np.array([r.ell for r in rows], float), np.array([r.rel_err_K for r in rows])

    def write_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(CSV_HEADER)
            for r in self.rows:
                w.writerow(r.csv_fields())

    def write_manifest(self, path, extra: dict | None = None) -> None:
        doc = {"config": self.config.to_dict(), "n_nodes": self.n_nodes,
               "fits": {k: v for k, v in self.fits.items()},
               "failures": [{"N": r.N, "ell": r.ell, "variant": r.variant, "error": r.error}
                            for r in self.failures]}
        doc.update(extra or {})
        Path(path).write_text(json.dumps(doc, indent=2, default=str) + "\n")


def read_csv(path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# -- fits --------------------------------------------------------------------

def loglog_slope(H, err) -> float:
    H, err = np.asarray(H, float), np.asarray(err, float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(np.log(H[ok]), np.log(err[ok]), 1)[0])


def plateau_flags(err, ratio: float = 0.9) -> np.ndarray:
    """Flag levels (ordered coarse to fine) whose error fell by less than ``ratio``."""
    err = np.asarray(err, float)
    flags = np.zeros(len(err), bool)
    flags[1:] = err[1:] / err[:-1] > ratio
    return flags


def convergence_fits(result: StudyResult, ratio: float = 0.9) -> dict:
    fits = {}
    for variant in result.config.variants:
        for ell in ((GLOBAL,) if variant == "ideal" else result.config.ells):
            H, err = result.series(variant, ell)
            flags = plateau_flags(err, ratio)
            key = f"{variant}/ell={'global' if ell is GLOBAL else ell}"
            # plateaued (localization-dominated) levels are left out of the fit
            fits[key] = {"slope": loglog_slope(H[~flags], err[~flags]),
                         "slope_all_levels": loglog_slope(H, err),
                         "plateaued_levels": [float(h) for h in H[flags]]}
    return fits


def decay_rate(ells, err) -> float:
    """Least-squares slope of ``log err`` against ``ell``."""
    ells, err = np.asarray(ells, float), np.asarray(err, float)
    ok = np.isfinite(err) & (err > 0)
    if ok.sum() < 2:
        return float("nan")
    return float(np.polyfit(ells[ok], np.log(err[ok]), 1)[0])


def geometric_mean_ratio(err) -> float:
    err = np.asarray(err, float)
    if len(err) < 2 or err[0] <= 0 or err[-1] <= 0:
        return float("nan")
    return float((err[-1] / err[0]) ** (1.0 / (len(err) - 1)))


def localization_fits(result: StudyResult) -> dict:
    fits = {}
    for N in result.config.counts:
        for variant in result.config.variants:
            if variant == "ideal":
                continue
            rows = sorted((r for r in result.rows if r.N == N and r.variant == variant),
                          key=lambda r: r.ell)
            live = [r for r in rows if not r.saturated]
            ells = [r.ell for r in live]
            err = [r.rel_err_K for r in live]
            fits[f"{variant}/N={N}"] = {
                "rate": decay_rate(ells, err),
                "geometric_mean_ratio": geometric_mean_ratio([r.rel_err_K for r in rows]),
                "saturated_ells": [r.ell for r in rows if r.saturated],
            }
    return fits


# -- running -----------------------------------------------------------------

def _level(problem: Problem, N: int, start: int) -> tuple[Partition, CoarseSpace]:
    part = gonzalez_partition(problem.net, N, start=start)
    return part, CoarseSpace(problem.net, part, problem.M)


def _run_level(problem: Problem, cfg: ExperimentConfig, N: int, start: int,
               cells, workers: int) -> list[StudyRow]:
    rows = []
    try:
        part, coarse = _level(problem, N, start)
    except Exception as exc:  # a failed level is recorded, the study goes on
        log.warning("N=%d: coarse space failed: %s", N, exc)
        return [StudyRow(N, N ** (-1.0 / 2), ell, v, math.nan, N, 0, 0.0, False, str(exc))
                for _, v, ell in cells]
    sat = max(part.saturation_ell(T) for T in range(part.n_elements))
    factory = CorrectorFactory(problem.K, coarse, tol=cfg.tol_corrector)
    for _, variant, ell in cells:
        t0 = time.perf_counter()
        saturated = ell is GLOBAL or ell >= sat
        try:
            basis = build_basis(problem.net, problem.K, coarse, variant, ell,
                                factory=factory, workers=workers)
            uH = galerkin_solve(problem.K, problem.f, basis).u_H
            err = relative_error_K(problem.K, problem.u, uH)
            rows.append(StudyRow(N, part.H_nominal, ell, variant, err, basis.n_columns,
                                 basis.corrector_solves, time.perf_counter() - t0, saturated))
        except Exception as exc:
            log.warning("cell N=%d ell=%s %s failed: %s", N, ell, variant, exc)
            rows.append(StudyRow(N, part.H_nominal, ell, variant, math.nan, N, 0,
                                 time.perf_counter() - t0, saturated, str(exc)))
        log.info("N=%d ell=%s %s err=%.3e", N, ell, variant, rows[-1].rel_err_K)
    return rows


def run_study(cfg: ExperimentConfig, problem: Problem | None = None) -> StudyResult:
    problem = problem or prepare(cfg)
    start = default_start(problem.net)
    cells = list(cfg.cells())
    by_level = {N: [c for c in cells if c[0] == N] for N in cfg.counts}
    if cfg.workers > 1 and len(cfg.counts) > 1:
        with ThreadPoolExecutor(cfg.workers) as pool:
            chunks = list(pool.map(lambda N: _run_level(problem, cfg, N, start, by_level[N], 1),
                                   cfg.counts))
    else:
        chunks = [_run_level(problem, cfg, N, start, by_level[N], cfg.workers)
                  for N in cfg.counts]
    order = {c: k for k, c in enumerate(cells)}
    rows = sorted((r for ch in chunks for r in ch), key=lambda r: order[(r.N, r.variant, r.ell)])
    return StudyResult(cfg, rows, n_nodes=problem.net.n_nodes)


def _finish(result: StudyResult, name: str) -> StudyResult:
    out = result.config.out
    if out:
        d = Path(out)
        d.mkdir(parents=True, exist_ok=True)
        result.write_csv(d / f"{name}.csv")
        result.write_manifest(d / f"{name}_manifest.json", {"study": name})
    return result


def run_convergence_study(cfg: ExperimentConfig, problem: Problem | None = None) -> StudyResult:
    """Error against ``H`` for every ``(ell, variant)``, with log-log slopes."""
    result = run_study(cfg, problem)
    result.fits = convergence_fits(result, cfg.tol_plateau)
    return _finish(result, "convergence")


def run_localization_study(cfg: ExperimentConfig, problem: Problem | None = None) -> StudyResult:
    """Error against ``ell`` for every ``(N, variant)``, with exponential decay fits."""
    result = run_study(cfg, problem)
    result.fits = localization_fits(result)
    return _finish(result, "localization")
