"""Stabilized method on the structured P1 system (a = 1 or random coefficients).

    python scripts/fem_convergence.py --m 64 --random
"""
import argparse
import logging

from netlod.generators import FemGridConfig
from netlod.studies import ExperimentConfig, run_convergence_study


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--m", type=int, default=64)
    p.add_argument("--random", action="store_true", help="coefficients U[0.1, 1] per triangle")
    p.add_argument("--out", default="results/fem")
    a = p.parse_args()
    logging.basicConfig(level=logging.INFO, format="%(message)s")
    fem = FemGridConfig(m=a.m, constant_coefficient=None if a.random else 1.0)
    cfg = ExperimentConfig(network="fem", operator="fem", fem=fem, counts=(16, 32, 64),
                           ells=(2, 3), variants=("stabilized",), out=a.out)
    res = run_convergence_study(cfg)
    for key, fit in res.fits.items():
        print(f"{key:20s} slope {fit['slope']:.3f}")


if __name__ == "__main__":
    main()
