#!/usr/bin/env python3
"""Reproduce the asymmetric two-BS study: theoretical peaks (and optionally
simulated averages / re-optimized degrees) for networks (a)-(g) where
N1 = N2 varies against N3."""

import argparse
import time

from frameless.evolution import peak_search
from frameless.optimizer import OptimizationSpec, optimize
from frameless.simulator import SimulationSpec, monte_carlo
from frameless.topology import full_topology

# (N1=N2, N3) -> printed optimal degrees (G1=G2, G3) and peak throughput
TABLE2 = {
    "a": ((0, 10000), (0.0, 3.098), 0.874),
    "b": ((100, 10000), (1.388, 3.094), 0.893),
    "c": ((1000, 10000), (1.621, 3.063), 1.064),
    "d": ((10000, 10000), (1.812, 1.680), 1.676),
    "e": ((10000, 1000), (3.051, 1.869), 1.836),
    "f": ((10000, 100), (3.096, 0.302), 1.758),
    "g": ((10000, 0), (3.098, 0.0), 1.748),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--rows", nargs="+", default=list(TABLE2))
    ap.add_argument("--trials", type=int, default=0, help="simulate if > 0")
    ap.add_argument("--optimize", action="store_true")
    ap.add_argument("--fast", action="store_true")
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=2)
    args = ap.parse_args()

    for row in args.rows:
        (n1, n3), (g1, g3), expect = TABLE2[row]
        topo = full_topology(2, [n1, n1, n3])
        degrees = (g1, g1, g3)
        t0 = time.time()
        pk = peak_search(topo, degrees, "coop", persist_tables=False)
        print(
            f"({row}) N1={n1} N3={n3}: peak S={pk.throughput:.4f} "
            f"(printed {expect}) at T*={pk.t_star} ({time.time() - t0:.1f}s)"
        )
        if args.trials:
            mc = monte_carlo(
                SimulationSpec(topology=topo, mode="frameless", degrees=degrees,
                               alpha=0.8, master_seed=args.seed),
                trials=args.trials,
                workers=args.workers,
            )
            print(f"({row}) simulated S={mc.mean_throughput:.4f} +- {mc.stderr_throughput:.4f}")
        if args.optimize:
            spec = OptimizationSpec(topology=topo, alpha=0.8, mode="coop")
            res = optimize(spec, seed=args.seed, workers=args.workers, fast=args.fast)
            print(f"({row}) optimized G={[round(v, 3) for v in res.best_g]} S={res.throughput:.4f}")


if __name__ == "__main__":
    main()
