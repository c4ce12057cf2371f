#!/usr/bin/env python3
"""Reproduce the symmetric-network results: theoretical peak throughput,
simulated average throughput, and (optionally) the optimized target degrees
for M = 1..4 with 10^4 users per group.

M=4 exact analysis enumerates 3^14 walk-graph patterns per target group and
is skipped unless --allow-long-running is given (tables are cached after the
first run).
"""

import argparse
import time

from frameless.evolution import peak_search
from frameless.optimizer import OptimizationSpec, optimize
from frameless.simulator import SimulationSpec, monte_carlo
from frameless.topology import full_topology

TABLE1_DEGREES = {
    1: (3.10,),
    2: (1.81, 1.81, 1.68),
    3: (1.11, 1.11, 0.94, 1.11, 0.94, 0.94, 0.78),
    4: (
        0.69, 0.69, 0.52, 0.69, 0.52, 0.52, 0.46,
        0.69, 0.52, 0.52, 0.46, 0.52, 0.46, 0.46, 0.46,
    ),
}


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--m", type=int, nargs="+", default=[1, 2, 3])
    ap.add_argument("--trials", type=int, default=100)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--workers", type=int, default=2)
    ap.add_argument("--optimize", action="store_true", help="also rerun the DE search")
    ap.add_argument("--fast", action="store_true", help="reduced DE settings")
    ap.add_argument("--allow-long-running", action="store_true")
    ap.add_argument("--cache-dir", default=None)
    args = ap.parse_args()

    for m in args.m:
        if m >= 4 and not args.allow_long_running:
            print(f"M={m}: skipped (needs --allow-long-running)")
            continue
        topo = full_topology(m, [10000] * (2**m - 1))
        g = TABLE1_DEGREES[m]
        t0 = time.time()
        pk = peak_search(
            topo, g, "coop",
            cache_dir=args.cache_dir, workers=args.workers,
            allow_long=args.allow_long_running,
        )
        print(
            f"M={m}: theoretical peak S={pk.throughput:.4f} at T*={pk.t_star} "
            f"({time.time() - t0:.1f}s)"
        )
        t0 = time.time()
        mc = monte_carlo(
            SimulationSpec(topology=topo, mode="frameless", degrees=g,
                           alpha=0.8, master_seed=args.seed),
            trials=args.trials,
            workers=args.workers,
        )
        print(
            f"M={m}: simulated average S={mc.mean_throughput:.4f} "
            f"+- {mc.stderr_throughput:.4f} over {args.trials} trials "
            f"({time.time() - t0:.1f}s)"
        )
        if args.optimize:
            t0 = time.time()
            spec = OptimizationSpec(
                topology=topo, alpha=0.8, mode="coop",
                allow_long=args.allow_long_running, cache_dir=args.cache_dir,
            )
            res = optimize(spec, seed=args.seed, workers=args.workers, fast=args.fast)
            print(
                f"M={m}: optimized G={[round(v, 3) for v in res.best_g]} "
                f"S={res.throughput:.4f} ({time.time() - t0:.1f}s)"
            )


if __name__ == "__main__":
    main()
