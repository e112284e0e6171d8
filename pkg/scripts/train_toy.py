#!/usr/bin/env python3
"""Train a planner on a toy preset and report its plan against brute force.

Example:
    python scripts/train_toy.py --preset toy3 --episodes 2000 --seed 0
"""

import argparse
import time

from splitprune import graphs
from splitprune.agent import PlannerAgent, TrainConfig, save_agent, write_metrics
from splitprune.brute import enumerate_best
from splitprune.oracles import default_surrogate
from splitprune.perf import Environment, reward_value


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--preset", default="toy3")
    parser.add_argument("--episodes", type=int, default=2000)
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--hidden", type=int, default=64)
    parser.add_argument("--batch-size", type=int, default=64)
    parser.add_argument("--r-comp", type=float, default=20.0)
    parser.add_argument("--acc-req", type=float, default=0.45)
    parser.add_argument("--cloud-seconds-per-flop", type=float, default=2e-8)
    parser.add_argument("--metrics", default=None, help="optional metrics CSV path")
    parser.add_argument("--checkpoint", default=None, help="optional checkpoint path")
    args = parser.parse_args()

    graph = graphs.preset(args.preset)
    env = Environment.from_kbps(1280.0, r_comp=args.r_comp, acc_req=args.acc_req,
                                cloud_seconds_per_flop=args.cloud_seconds_per_flop)
    oracle = default_surrogate(graph)
    cfg = TrainConfig(episodes=args.episodes, batch_size=args.batch_size,
                      hidden=(args.hidden, args.hidden), seed=args.seed)

    print(f"training on {args.preset}: {graph.n_conv} conv layers, "
          f"{len(graph.partition_points())} boundaries")
    start = time.time()
    agent = PlannerAgent(graph, env, oracle, cfg)
    rows = agent.train()
    plan, breakdown, acc = agent.plan()
    achieved = reward_value(breakdown.total, acc, env.acc_req)
    print(f"trained {args.episodes} episodes in {time.time() - start:.1f}s")
    print(f"plan: partition {plan.partition}, "
          f"rates {tuple(round(r, 3) for r in plan.rates)}")
    print(f"latency {breakdown.total * 1e3:.3f} ms, accuracy {acc:.4f}, "
          f"reward {achieved:.3f}")

    best = enumerate_best(graph, env, oracle, keep_table=False)
    print(f"grid optimum: partition {best.best_plan.partition}, "
          f"rates {best.best_plan.rates}, reward {best.best_reward:.3f}")
    print(f"achieved / optimum = {achieved / best.best_reward:.3f}")

    if args.metrics:
        write_metrics(args.metrics, rows)
        print(f"metrics in {args.metrics}")
    if args.checkpoint:
        save_agent(agent, args.checkpoint)
        print(f"checkpoint in {args.checkpoint}")


if __name__ == "__main__":
    main()
