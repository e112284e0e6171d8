"""Command-line surface.

Subcommands: train, plan, brute, sweep, presets, inspect.
Exit codes: 0 ok, 1 runtime error, 2 configuration error, 3 refused.
"""

from __future__ import annotations

import argparse
import json
import os
import shutil
import sys
from pathlib import Path

from . import agent as agent_mod, brute as brute_mod, graphs, perf
from .config import RunConfig, load_config
from .errors import ConfigError, RefusedError, SplitpruneError
from .graphs import Plan

EXIT_OK = 0
EXIT_RUNTIME = 1
EXIT_CONFIG = 2
EXIT_REFUSED = 3


def _common_overrides(args) -> dict:
    overrides = {}
    if getattr(args, "seed", None) is not None:
        overrides["seed"] = args.seed
    if getattr(args, "out_dir", None) is not None:
        overrides["out_dir"] = args.out_dir
    if getattr(args, "preset", None) is not None:
        overrides["model.preset"] = args.preset
    if getattr(args, "episodes", None) is not None:
        overrides["train.episodes"] = args.episodes
    if getattr(args, "r_comp", None) is not None:
        overrides["env.r_comp"] = args.r_comp
    if getattr(args, "acc_req", None) is not None:
        overrides["env.acc_req"] = args.acc_req
    return overrides


def _load(args) -> RunConfig:
    return load_config(args.config, _common_overrides(args))


def _plan_payload(plan: Plan, breakdown, acc) -> dict:
    return {
        "partition": plan.partition,
        "rates": list(plan.rates),
        "accuracy": acc,
        "t_edge": breakdown.t_edge,
        "t_trans": breakdown.t_trans,
        "t_cloud": breakdown.t_cloud,
        "total_latency": breakdown.total,
    }


def _print_plan(payload: dict, as_json: bool) -> None:
    if as_json:
        print(json.dumps(payload))
        return
    print(f"partition: {payload['partition']}")
    print("rates: " + ", ".join(f"{r:.4f}" for r in payload["rates"]))
    print(f"accuracy: {payload['accuracy']:.4f}")
    print(f"latency: total {payload['total_latency']:.6g} s "
          f"(edge {payload['t_edge']:.6g}, transfer {payload['t_trans']:.6g}, "
          f"cloud {payload['t_cloud']:.6g})")


def cmd_train(args) -> int:
    cfg = _load(args)
    graph = cfg.build_graph()
    env = cfg.build_env()
    oracle = cfg.build_oracle(graph)

    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    shutil.copyfile(cfg.source_path, out_dir / "config.toml")

    planner = agent_mod.PlannerAgent(graph, env, oracle, cfg.train)
    rows = planner.train()
    agent_mod.write_metrics(out_dir / "metrics.csv", rows)
    agent_mod.save_agent(planner, out_dir / "checkpoint.json")

    plan, breakdown, acc = planner.plan()
    payload = _plan_payload(plan, breakdown, acc)
    (out_dir / "plan.json").write_text(json.dumps(payload))
    print(f"trained {cfg.train.episodes} episodes on {graph.name} "
          f"(seed {cfg.seed}); artifacts in {out_dir}")
    _print_plan(payload, as_json=False)
    return EXIT_OK


def cmd_plan(args) -> int:
    cfg = _load(args)
    graph_cfg = cfg.build_graph()  # validated even though the checkpoint wins
    env = cfg.build_env()
    planner = agent_mod.load_agent(
        args.checkpoint, env, cfg.build_oracle(graph_cfg), cfg.train)
    plan, breakdown, acc = planner.plan()
    _print_plan(_plan_payload(plan, breakdown, acc), as_json=args.json)
    return EXIT_OK


def cmd_brute(args) -> int:
    cfg = _load(args)
    graph = cfg.build_graph()
    env = cfg.build_env()
    oracle = cfg.build_oracle(graph)
    grid = brute_mod.Grid(
        rate_levels=_parse_levels(args.levels) if args.levels else brute_mod.DEFAULT_LEVELS,
        options=tuple(int(v) for v in args.options.split(",")) if args.options else None,
    )
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(args.csv) if args.csv else out_dir / "brute_table.csv"
    result = brute_mod.enumerate_best(
        graph, env, oracle, grid, cap=args.cap, csv_path=csv_path,
        workers=args.workers, keep_table=False, r_max=cfg.train.r_max)
    plan = result.best_plan
    breakdown = perf.latency(graph, plan, env, cfg.train.r_max)
    acc = oracle.evaluate(graph, plan.rates)
    payload = _plan_payload(plan, breakdown, acc)
    payload["evaluations"] = result.evaluations
    payload["table"] = str(csv_path)
    _print_plan(payload, as_json=args.json)
    if not args.json:
        print(f"evaluated {result.evaluations} plans; table in {csv_path}")
    return EXIT_OK


def _parse_levels(text: str) -> tuple[float, ...]:
    if text == "fine":
        return brute_mod.FINE_LEVELS
    return tuple(float(v) for v in text.split(","))


def cmd_sweep(args) -> int:
    cfg = _load(args)
    if args.param not in ("r_comp", "r_tran_kbps", "acc_req"):
        raise ConfigError(f"unsupported sweep parameter {args.param!r}")
    values = [float(v) for v in args.values.split(",")]
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = Path(args.csv) if args.csv else out_dir / f"sweep_{args.param}.csv"

    graph = cfg.build_graph()
    rows = []
    for value in values:
        cfg.env_values[args.param] = value
        env = cfg.build_env()
        oracle = cfg.build_oracle(graph)
        if args.backend == "brute":
            grid = brute_mod.Grid(
                rate_levels=_parse_levels(args.levels) if args.levels
                else brute_mod.DEFAULT_LEVELS)
            result = brute_mod.enumerate_best(
                graph, env, oracle, grid, cap=args.cap, workers=args.workers,
                keep_table=False, r_max=cfg.train.r_max)
            plan = result.best_plan
            lat = perf.latency(graph, plan, env, cfg.train.r_max)
            acc = oracle.evaluate(graph, plan.rates)
            reward = result.best_reward
        else:
            if not args.checkpoint:
                raise ConfigError("--backend plan requires --checkpoint")
            planner = agent_mod.load_agent(args.checkpoint, env, oracle, cfg.train)
            plan, lat, acc = planner.plan()
            reward = perf.reward_value(lat.total, acc, env.acc_req)
        rows.append([value, plan.partition, *plan.rates, acc,
                     lat.t_edge, lat.t_trans, lat.t_cloud, reward])

    import csv as csv_lib
    with open(csv_path, "w", newline="") as fh:
        writer = csv_lib.writer(fh)
        writer.writerow([args.param, "partition"]
                        + [f"rate_{j}" for j in range(graph.n_conv)]
                        + ["acc", "t_edge", "t_trans", "t_cloud", "reward"])
        writer.writerows(rows)
    for row in rows:
        print(f"{args.param}={row[0]} -> partition {row[1]}, reward {row[-1]:.6g}")
    print(f"sweep table in {csv_path}")
    return EXIT_OK


def cmd_presets(args) -> int:
    for name in graphs.preset_names():
        g = graphs.preset(name)
        h, w, c = g.input_shape
        print(f"{name}: {g.n_conv} conv / {g.n_layers} layers, input {h}x{w}x{c}, "
              f"{len(g.partition_points())} boundaries")
    return EXIT_OK


def cmd_inspect(args) -> int:
    try:
        data = json.loads(Path(args.checkpoint).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise SplitpruneError(f"invalid checkpoint: {exc}") from None
    if not isinstance(data, dict) or data.get("format") != agent_mod.AGENT_FORMAT:
        raise SplitpruneError("not an agent checkpoint")
    graph = graphs.graph_from_dict(data["graph"])
    print(f"agent checkpoint v{data['version']}")
    print(f"graph: {graph.name} ({graph.n_conv} conv / {graph.n_layers} layers)")
    print(f"options: {data['options']}")
    print(f"hidden widths: {data['hidden']}, r_max: {data['r_max']}")
    print(f"episodes trained: {data['episodes_trained']}, "
          f"noise scale: {data['noise_initial'] * data['noise_decay'] ** data['episodes_trained']:.6g}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="splitprune",
        description="Plan edge/cloud partitioning and per-layer channel pruning.")
    sub = parser.add_subparsers(dest="command", required=True)

    def add_config_flags(p, with_train=False):
        p.add_argument("--config", required=True, help="TOML run configuration")
        p.add_argument("--seed", type=int, help="override the config seed")
        p.add_argument("--out-dir", dest="out_dir", help="override the output directory")
        p.add_argument("--preset", help="override the model preset")
        p.add_argument("--r-comp", dest="r_comp", type=float, help="override env.r_comp")
        p.add_argument("--acc-req", dest="acc_req", type=float, help="override env.acc_req")
        if with_train:
            p.add_argument("--episodes", type=int, help="override train.episodes")

    p = sub.add_parser("train", help="train a planner and write its artifacts")
    add_config_flags(p, with_train=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("plan", help="plan with a trained checkpoint")
    add_config_flags(p)
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--json", action="store_true", help="emit machine-readable output")
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("brute", help="exhaustive grid search (small models only)")
    add_config_flags(p)
    p.add_argument("--levels", help="comma-separated rate levels, or 'fine' for a 0.05 grid")
    p.add_argument("--options", help="comma-separated partition boundaries")
    p.add_argument("--cap", type=int, default=brute_mod.DEFAULT_CAP)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--csv", help="where to write the full table")
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_brute)

    p = sub.add_parser("sweep", help="re-plan across one environment parameter")
    add_config_flags(p)
    p.add_argument("--param", required=True, help="r_comp | r_tran_kbps | acc_req")
    p.add_argument("--values", required=True, help="comma-separated values")
    p.add_argument("--backend", choices=("brute", "plan"), default="brute")
    p.add_argument("--checkpoint", help="required for --backend plan")
    p.add_argument("--levels", help="rate levels for the brute backend")
    p.add_argument("--cap", type=int, default=brute_mod.DEFAULT_CAP)
    p.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    p.add_argument("--csv", help="where to write the comparison table")
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("presets", help="list built-in architectures")
    p.set_defaults(func=cmd_presets)

    p = sub.add_parser("inspect", help="summarize a checkpoint")
    p.add_argument("--checkpoint", required=True)
    p.set_defaults(func=cmd_inspect)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RefusedError as exc:
        print(f"refused: {exc}", file=sys.stderr)
        return EXIT_REFUSED
    except SplitpruneError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
