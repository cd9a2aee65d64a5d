"""Node counts of the full-scale fiber and cardboard generators over seeds.

    python scripts/generator_stats.py --seeds 5
"""
import argparse

import numpy as np

from netlod.generators import CardboardConfig, FiberConfig, gen_cardboard, gen_fiber_network


def main():
    p = argparse.ArgumentParser()
    p.add_argument("--seeds", type=int, default=5)
    p.add_argument("--cardboard", action="store_true")
    a = p.parse_args()
    counts = []
    for s in range(a.seeds):
        net = gen_fiber_network(FiberConfig(seed=s))
        counts.append(net.n_nodes)
        print(f"fiber seed {s}: {net.n_nodes} nodes, {net.n_edges} edges, "
              f"{int(net.dirichlet.sum())} Dirichlet")
    print(f"fiber mean {np.mean(counts):.0f} (sd {np.std(counts):.0f})")
    if a.cardboard:
        for s in range(a.seeds):
            net = gen_cardboard(CardboardConfig(fiber=FiberConfig(seed=s)))
            print(f"cardboard seed {s}: {net.n_nodes} nodes, layers {net.meta['layer_sizes']}")


if __name__ == "__main__":
    main()
