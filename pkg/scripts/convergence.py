"""Error against H on the desk fiber network (stabilized and naive, ell = 1..3).

    python scripts/convergence.py --out results/convergence
"""
import argparse
import logging

from netlod.studies import DESK_FIBER, ExperimentConfig, run_convergence_study


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--out", default="results/convergence")
    p.add_argument("--source", default="g1")
    p.add_argument("--workers", type=int, default=1)
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    cfg = ExperimentConfig(fiber=DESK_FIBER, counts=(16, 32, 64, 128), ells=(1, 2, 3),
                           variants=("naive", "stabilized"), source=a.source, out=a.out,
                           workers=a.workers)
    res = run_convergence_study(cfg)
    for key, fit in res.fits.items():
        print(f"{key:20s} slope {fit['slope']:.3f}  plateaued at H={fit['plateaued_levels']}")


if __name__ == "__main__":
    main()
