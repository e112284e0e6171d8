#!/usr/bin/env python3
"""How does the optimal hand-off boundary move as the edge gets slower?

Sweeps the edge/cloud latency ratio and reports the brute-force best plan at
each value, for toy4 with pruning and for vgg16 with pruning disabled (where
only the boundary is searched).  Slower edges should pull the boundary
towards the cloud, i.e. the partition index should not increase.
"""

import argparse
import csv

from splitprune import graphs
from splitprune.brute import Grid, enumerate_best
from splitprune.oracles import default_surrogate
from splitprune.perf import Environment


def sweep(graph, grid, r_comps, cloud_seconds_per_flop, workers):
    oracle = default_surrogate(graph)
    rows = []
    for r_comp in r_comps:
        env = Environment.from_kbps(1280.0, r_comp=r_comp, acc_req=0.45,
                                    cloud_seconds_per_flop=cloud_seconds_per_flop)
        res = enumerate_best(graph, env, oracle, grid, keep_table=False,
                             workers=workers)
        rows.append((r_comp, res.best_plan, res.best_reward))
        print(f"  r_comp {r_comp:5.1f}: partition {res.best_plan.partition:2d}, "
              f"reward {res.best_reward:10.3f}, rates {res.best_plan.rates}")
    return rows


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--r-comps", default="10,20,80")
    parser.add_argument("--workers", type=int, default=2)
    parser.add_argument("--csv", default=None)
    args = parser.parse_args()
    r_comps = [float(v) for v in args.r_comps.split(",")]

    print("toy4, default rate grid, cloud at 1e-9 s/FLOP:")
    toy_rows = sweep(graphs.preset("toy4"), Grid(), r_comps, 1e-9, args.workers)

    print("vgg16, pruning disabled, cloud at 1e-12 s/FLOP:")
    vgg_rows = sweep(graphs.preset("vgg16"), Grid(rate_levels=(0.0,)), r_comps,
                     1e-12, args.workers)

    for name, rows in (("toy4", toy_rows), ("vgg16", vgg_rows)):
        parts = [plan.partition for _, plan, _ in rows]
        mono = all(a >= b for a, b in zip(parts, parts[1:]))
        print(f"{name}: partitions {parts} "
              f"({'non-increasing' if mono else 'NOT monotone'})")

    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(["model", "r_comp", "partition", "reward", "rates"])
            for name, rows in (("toy4", toy_rows), ("vgg16", vgg_rows)):
                for r_comp, plan, reward in rows:
                    writer.writerow([name, r_comp, plan.partition, reward,
                                     " ".join(str(r) for r in plan.rates)])
        print(f"table in {args.csv}")


if __name__ == "__main__":
    main()
