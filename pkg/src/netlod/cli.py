"""Command line interface: ``python -m netlod <command> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import studies
from .coarse_space import CoarseSpace, CoarseSpaceError
from .correctors import GLOBAL, VARIANTS, build_basis
from .generators import CardboardConfig, FemGridConfig
from .network import write_network
from .operators import (assemble_mass, assemble_stiffness, check_k_assumptions,
                        random_edge_weights, write_matrix)
from .partition import build_hierarchy, diagnostics
from .solver import galerkin_solve, relative_error_K, spectral_bounds_estimate
from .studies import DESK_FIBER, ExperimentConfig

log = logging.getLogger("netlod")


def _ints(s):
    return tuple(int(t) for t in s.split(",") if t)


def _ells(s):
    return tuple(GLOBAL if t == "global" else int(t) for t in s.split(",") if t)


def _words(s):
    return tuple(t for t in s.split(",") if t)


def _common(p, counts="16,32,64,128", ells="1,2,3", variant="stabilized", source="g1"):
    p.add_argument("--net", default="fiber",
                   help="fiber | cardboard | fem | path to a network file")
    p.add_argument("--alpha", type=float, default=1.0)
    p.add_argument("--operator", choices=studies.OPERATORS, default=None,
                   help="default: fem for --net fem, else weighted-laplacian")
    p.add_argument("--counts", type=_ints, default=_ints(counts))
    p.add_argument("--ell", type=_ells, default=_ells(ells))
    p.add_argument("--variant", type=_words, default=_words(variant),
                   help="comma list of " + ", ".join(VARIANTS))
    p.add_argument("--source", choices=("g1", "g2"), default=source)
    p.add_argument("--seed", type=int, default=1, help="edge-weight and generator seed")
    p.add_argument("--out", default=None)
    p.add_argument("--workers", type=int, default=1)
    p.add_argument("--tol-corrector", type=float, default=1e-10)
    p.add_argument("--tol-reference", type=float, default=1e-12)
    p.add_argument("--tol-plateau", type=float, default=0.9)
    g = p.add_argument_group("generator")
    g.add_argument("--lines", type=int, default=DESK_FIBER.n_lines)
    g.add_argument("--length", type=float, default=DESK_FIBER.line_length)
    g.add_argument("--max-edge", type=float, default=DESK_FIBER.max_edge_length,
                   help="refine longer edges; 0 disables")
    g.add_argument("--fem-m", type=int, default=64)
    g.add_argument("--coefficient", type=float, default=None,
                   help="constant FEM coefficient instead of random values")
    g.add_argument("--shared-layout", action="store_true",
                   help="cardboard: reuse one planar layout for all layers")


def config_from_args(a) -> ExperimentConfig:
    kind = a.net if a.net in ("fiber", "cardboard", "fem") else "file"
    fiber = replace(DESK_FIBER, n_lines=a.lines, line_length=a.length, seed=a.seed,
                    max_edge_length=a.max_edge or None)
    operator = a.operator or ("fem" if kind == "fem" else "weighted-laplacian")
    return ExperimentConfig(
        network=kind,
        net_path=a.net if kind == "file" else None,
        fiber=fiber,
        cardboard=CardboardConfig(fiber=fiber, shared_layout=a.shared_layout),
        fem=FemGridConfig(m=a.fem_m, seed=a.seed, constant_coefficient=a.coefficient),
        operator=operator,
        alpha=a.alpha,
        counts=a.counts,
        ells=a.ell,
        variants=a.variant,
        source=a.source,
        seed=a.seed,
        out=a.out,
        tol_corrector=a.tol_corrector,
        tol_reference=a.tol_reference,
        tol_plateau=a.tol_plateau,
        workers=a.workers,
    )


def _outdir(a) -> Path:
    out = Path(a.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_generate(a):
    cfg = config_from_args(a)
    net, K = studies.build_network(cfg)
    if cfg.operator == "weighted-laplacian" and cfg.network != "file":
        lo, hi = cfg.weight_range
        net = net.with_weights(random_edge_weights(net, lo, hi, seed=cfg.seed))
    out = _outdir(a)
    write_network(net, out / "network.txt")
    if K is not None:
        write_matrix(K, out / "K.txt")
    meta = {k: v for k, v in net.meta.items() if k != "config"}
    manifest = {"config": cfg.to_dict(), "n_nodes": net.n_nodes, "n_edges": net.n_edges,
                "n_dirichlet": int(net.dirichlet.sum()), "generator": meta}
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, default=str) + "\n")
    print(f"{net.n_nodes} nodes, {net.n_edges} edges, "
          f"{int(net.dirichlet.sum())} Dirichlet nodes -> {out}")


def cmd_partition(a):
    cfg = config_from_args(a)
    net, _ = studies.build_network(cfg)
    mass = assemble_mass(net, cfg.alpha)
    stiff = assemble_stiffness(net, cfg.alpha)
    out = _outdir(a)
    hier = build_hierarchy(net, cfg.counts)
    for N, part in zip(hier.counts, hier.partitions):
        part.write(out / f"partition_N{N}.txt")
        diagnostics(net, part, mass, stiff).write_csv(out / f"diagnostics_N{N}.csv")
        print(f"N={N}: H={part.H:.4g} H_nominal={part.H_nominal:.4g}")


def cmd_diagnose(a):
    cfg = config_from_args(a)
    net, K = studies.build_network(cfg)
    K = studies.build_operator(cfg, net, K)
    mass = assemble_mass(net, cfg.alpha)
    stiff = assemble_stiffness(net, cfg.alpha)
    print(f"nodes {net.n_nodes}  edges {net.n_edges}  max edge {net.lengths.max():.4g}")
    chk = check_k_assumptions(K, stiff, net.free_nodes)
    print("K checks: " + "  ".join(f"{k}={v}" for k, v in chk.items()))
    sb = spectral_bounds_estimate(K, stiff, net.free_nodes)
    flag = "" if sb.converged else " (approximate)"
    print(f"spectral bounds: gamma={sb.gamma:.4g} gamma'={sb.gamma_prime:.4g}{flag}")
    print("N,H,H_nominal,sigma,max_C_po,max_C_po/H_nominal,K_H,G_H")
    hier = build_hierarchy(net, cfg.counts)
    for N, part in zip(hier.counts, hier.partitions):
        d = diagnostics(net, part, mass, stiff)
        try:
            cs = CoarseSpace(net, part, mass)
            kh, gh = len(cs.K_H), len(cs.G_H)
        except CoarseSpaceError as exc:
            log.warning("N=%d: %s", N, exc)
            kh = gh = "-"
        cpo = float(np.nanmax(d.C_po))
        print(f"{N},{d.H:.6g},{d.H_nominal:.6g},{d.sigma:.6g},{cpo:.6g},"
              f"{cpo / d.H_nominal:.6g},{kh},{gh}")
        if a.out:
            d.write_csv(_outdir(a) / f"diagnostics_N{N}.csv")


def cmd_solve(a):
    cfg = config_from_args(a)
    prob = studies.prepare(cfg)
    N = cfg.counts[0]
    ell = cfg.ells[0]
    variant = cfg.variants[0]
    hier = build_hierarchy(prob.net, [N])
    cs = CoarseSpace(prob.net, hier.partitions[0], prob.M)
    basis = build_basis(prob.net, prob.K, cs, variant, ell, workers=cfg.workers)
    res = galerkin_solve(prob.K, prob.f, basis)
    err = relative_error_K(prob.K, prob.u, res.u_H)
    ell_s = "global" if basis.ell is GLOBAL else basis.ell
    print(f"N={N} ell={ell_s} variant={variant} rel_err_K={err:.6e} cond(G)={res.condition:.3e} "
          f"corrector_solves={basis.corrector_solves}")
    if a.out:
        out = _outdir(a)
        np.savetxt(out / "u_H.txt", res.u_H, fmt="%.17g")
        np.savetxt(out / "u.txt", prob.u, fmt="%.17g")


def _print_study(result):
    w = sys.stdout
    w.write(",".join(studies.CSV_HEADER) + "\n")
    for r in result.rows:
        w.write(",".join(r.csv_fields()) + "\n")
    for k, v in result.fits.items():
        w.write(f"# {k}: {v}\n")
    for r in result.failures:
        w.write(f"# failed N={r.N} ell={r.ell} {r.variant}: {r.error}\n")


def cmd_convergence(a):
    _print_study(studies.run_convergence_study(config_from_args(a)))


def cmd_localization(a):
    _print_study(studies.run_localization_study(config_from_args(a)))


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="netlod", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn, kw, hlp in [
        ("generate", cmd_generate, {}, "write a network (and FEM matrix) to --out"),
        ("partition", cmd_partition, {"counts": "16,64,256"}, "partitions and diagnostics"),
        ("diagnose", cmd_diagnose, {"counts": "16,64,256"}, "assumption checks"),
        ("solve", cmd_solve, {"counts": "64", "ells": "3"}, "one coarse solve"),
        ("convergence", cmd_convergence, {}, "error against H"),
        ("localization", cmd_localization, {"counts": "64", "ells": "1,2,3,4,5",
                                            "variant": "naive,stabilized",
                                            "source": "g2"}, "error against ell"),
    ]:
        sp_ = sub.add_parser(name, help=hlp)
        _common(sp_, **kw)
        sp_.set_defaults(func=fn)
    return p


def main(argv=None) -> int:
    a = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if a.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        a.func(a)
    except (ValueError, RuntimeError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    return 0
