"""Error against ell at fixed N for both localized variants.

    python scripts/localization.py --counts 16,64,256 --out results/localization
"""
import argparse
import logging

from netlod.studies import DESK_FIBER, ExperimentConfig, run_localization_study


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="results/localization")
    p.add_argument("--counts", default="16,64,256")
    p.add_argument("--max-ell", type=int, default=5)
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = ExperimentConfig(fiber=DESK_FIBER, counts=tuple(int(c) for c in a.counts.split(",")),
                           ells=tuple(range(1, a.max_ell + 1)), variants=("naive", "stabilized"),
                           source="g2", out=a.out, workers=a.workers)
    res = run_localization_study(cfg)
    for key, fit in res.fits.items():
        print(f"{key:20s} rate {fit['rate']:.3f}  ratio {fit['geometric_mean_ratio']:.3f}")
    # naive/stabilized contrast at ell = 2
    if 2 in cfg.ells:
        for N in cfg.counts:
            r = res.error(N, "naive", 2) / res.error(N, "stabilized", 2)
            print(f"N={N:4d} naive/stabilized at ell=2: {r:.3f}")


if __name__ == "__main__":
    main()
