"""End-to-end acceptance checks, one test per criterion.

Each test prints a single [acceptance] PASS/FAIL line; run with -s (or rely
on pytest's captured-output report) to see them.
"""

import csv
import time

import numpy as np
import pytest

from splitprune import graphs, perf
from splitprune.agent import PlannerAgent, TrainConfig
from splitprune.brute import Grid, enumerate_best
from splitprune.cli import main as cli_main
from splitprune.graphs import Plan
from splitprune.nets import Mlp, soft_update
from splitprune.oracles import default_surrogate
from splitprune.perf import Environment, reward_value
from splitprune.replay import ReplayBuffer

from test_nets import fd_check, fd_check_input

# toys are evaluated on a slow-cloud calibration so rewards land in a range
# the value network can fit within the episode budget
TOY_ENV = dict(r_comp=20.0, acc_req=0.45, cloud_seconds_per_flop=2e-8)
GAP_TRAIN = dict(episodes=2000, batch_size=64, hidden=(64, 64))


def report(name: str, ok: bool, detail: str = "") -> None:
    line = f"[acceptance] {name}: {'PASS' if ok else 'FAIL'}"
    if detail:
        line += f"  ({detail})"
    print(line)
    assert ok, line


def test_1_gradient_correctness():
    start = time.monotonic()
    rng = np.random.default_rng(20240817)
    worst = 0.0
    for k in range(50):
        if k < 5:
            widths = (int(rng.integers(1, 64)), 300, 300, int(rng.integers(1, 16)))
        else:
            widths = tuple(int(rng.integers(1, 301)) for _ in range(4))
        head = "identity" if k % 2 == 0 else "sigmoid_scaled"
        net = Mlp.init(widths, rng, output_activation=head, output_high=0.9)
        x = rng.normal(size=(3, widths[0]))
        upstream = rng.normal(size=(3, widths[-1]))
        worst = max(worst, fd_check(net, x, upstream, rng, n_probes=8))
        worst = max(worst, fd_check_input(net, x, upstream, rng, n_probes=2))
    elapsed = time.monotonic() - start
    report("1 gradient correctness",
           worst < 1e-4 and elapsed < 30.0,
           f"max rel err {worst:.2e}, {elapsed:.1f}s")


@pytest.mark.slow
def test_2_oracle_gap_on_toys():
    start = time.monotonic()
    outcomes = {}
    for preset in ("toy3", "toy4"):
        graph = graphs.preset(preset)
        env = Environment.from_kbps(1280.0, **TOY_ENV)
        oracle = default_surrogate(graph)
        best = enumerate_best(graph, env, oracle, keep_table=False)
        wins = 0
        for seed in range(10):
            agent = PlannerAgent(graph, env, oracle,
                                 TrainConfig(seed=seed, **GAP_TRAIN))
            agent.train()
            plan, breakdown, acc = agent.plan()
            achieved = reward_value(breakdown.total, acc, env.acc_req)
            if achieved >= 0.95 * best.best_reward:
                wins += 1
        outcomes[preset] = wins
    elapsed = time.monotonic() - start
    ok = all(w >= 8 for w in outcomes.values()) and elapsed < 600.0
    report("2 oracle gap on toys", ok,
           f"toy3 {outcomes['toy3']}/10, toy4 {outcomes['toy4']}/10, {elapsed:.0f}s")


def test_3_reward_gate_invariant():
    start = time.monotonic()
    rng = np.random.default_rng(7)
    acc_req = 0.8
    checked = 0
    violations = 0
    for preset, n in (("toy3", 4000), ("toy4", 3000), ("vgg16", 3000)):
        graph = graphs.preset(preset)
        env = Environment.from_kbps(1280.0, r_comp=20.0, acc_req=acc_req)
        oracle = default_surrogate(graph)
        points = graph.partition_points()
        for _ in range(n):
            plan = Plan(int(rng.choice(points)),
                        tuple(rng.uniform(0.0, 0.9, size=graph.n_conv)))
            acc = oracle.evaluate(graph, plan.rates)
            r = perf.reward(graph, plan, env, acc)
            if (r == 0.0) != (acc < acc_req):
                violations += 1
            checked += 1
    elapsed = time.monotonic() - start
    report("3 reward gate invariant",
           checked == 10_000 and violations == 0 and elapsed < 10.0,
           f"{checked} plans, {violations} violations, {elapsed:.1f}s")


def test_4_partition_direction_vs_r_comp():
    start = time.monotonic()
    results = {}

    toy4 = graphs.preset("toy4")
    toy4_parts = []
    for r_comp in (10.0, 20.0, 80.0):
        env = Environment.from_kbps(1280.0, r_comp=r_comp, acc_req=0.45,
                                    cloud_seconds_per_flop=1e-9)
        res = enumerate_best(toy4, env, default_surrogate(toy4), keep_table=False)
        toy4_parts.append(res.best_plan.partition)
    results["toy4"] = toy4_parts

    vgg = graphs.preset("vgg16")
    vgg_parts = []
    for r_comp in (10.0, 20.0, 80.0):
        env = Environment.from_kbps(1280.0, r_comp=r_comp, acc_req=0.45,
                                    cloud_seconds_per_flop=1e-12)
        res = enumerate_best(vgg, env, default_surrogate(vgg),
                             Grid(rate_levels=(0.0,)), keep_table=False)
        vgg_parts.append(res.best_plan.partition)
    results["vgg16"] = vgg_parts

    elapsed = time.monotonic() - start
    monotone = all(
        all(a >= b for a, b in zip(parts, parts[1:])) for parts in results.values())
    report("4 partition direction vs r_comp",
           monotone and elapsed < 60.0,
           f"toy4 {results['toy4']}, vgg16 zero-prune {results['vgg16']}, {elapsed:.1f}s")


def test_5_latency_model_arithmetic():
    toy3 = graphs.preset("toy3")
    env = Environment.from_kbps(1280.0, r_comp=20.0, acc_req=0.75)
    checks = [
        perf.latency(toy3, Plan(2, (0.0,) * 3), env).t_trans == 0.0125,
        env.r_tran == 1_310_720,
        reward_value(0.020, acc=0.9, acc_req=0.5) == 50.0,
        perf.latency(toy3, Plan(0, (0.0,) * 3), env).t_edge == 0.0,
        perf.latency(toy3, Plan(4, (0.0,) * 3), env).t_trans == 0.0,
        perf.reward(toy3, Plan(2, (0.0,) * 3), env, acc=env.acc_req) > 0.0,
        graphs.layer_flops(graphs.preset("vgg16"), 0) == 353_894_400,
        graphs.input_bytes(graphs.preset("vgg16")) == 1_228_800,
        graphs.pruned_channels(64, 0.9) == 7,
    ]
    report("5 latency model arithmetic", all(checks),
           f"{sum(checks)}/{len(checks)} identities")


def test_6_schedule_conformance():
    toy3 = graphs.preset("toy3")
    env = Environment.from_kbps(1280.0, **TOY_ENV)
    agent = PlannerAgent(toy3, env, default_surrogate(toy3),
                         TrainConfig(episodes=5, batch_size=8, hidden=(8, 8),
                                     warmup_per_option=2, seed=0))
    noise_ok = True
    for k in (0, 1, 7, 100, 500):
        agent.episodes_trained = k
        noise_ok = noise_ok and agent.noise_scale == 0.9 * 0.995 ** k

    rng = np.random.default_rng(4)
    online = Mlp.init((4, 16, 2), rng)
    target0 = Mlp.init((4, 16, 2), rng)
    target = target0.copy()
    k, tau = 40, 0.01
    for _ in range(k):
        soft_update(target, online, tau)
    shrink = (1 - tau) ** k
    drift_ok = all(
        np.allclose(tp, (1 - shrink) * op + shrink * t0, atol=1e-12)
        for tp, op, t0 in zip(target.parameters(), online.parameters(),
                              target0.parameters()))

    buf = ReplayBuffer(3)
    for name, priority in (("a", 1.0), ("b", 2.0), ("c", 7.0)):
        buf.add(name, priority)
    draws = 10_000
    _, items = buf.sample(draws, np.random.default_rng(123))
    replay_ok = True
    for name, p in (("a", 0.1), ("b", 0.2), ("c", 0.7)):
        sigma = (p * (1 - p) * draws) ** 0.5
        replay_ok = replay_ok and abs(items.count(name) - p * draws) <= 3 * sigma

    report("6 schedule conformance", noise_ok and drift_ok and replay_ok,
           f"noise {noise_ok}, soft-update {drift_ok}, replay {replay_ok}")


def test_7_reproducibility(tmp_path):
    config = tmp_path / "run.toml"
    config.write_text(f"""
seed = 13
out_dir = "{tmp_path / 'a'}"

[env]
acc_req = 0.45
cloud_seconds_per_flop = 2e-8

[train]
episodes = 6
batch_size = 8
hidden = [8, 8]
warmup_per_option = 3
""")
    assert cli_main(["train", "--config", str(config)]) == 0
    assert cli_main(["train", "--config", str(config),
                     "--out-dir", str(tmp_path / "b")]) == 0
    same = all(
        (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()
        for name in ("metrics.csv", "checkpoint.json"))
    report("7 reproducibility", same, "metrics.csv and checkpoint.json byte-identical")


def test_8_warmup_conformance(tmp_path):
    toy3 = graphs.preset("toy3")
    env = Environment.from_kbps(1280.0, **TOY_ENV)
    cfg = TrainConfig(episodes=3, batch_size=16, hidden=(8, 8),
                      warmup_per_option=100, seed=5)
    agent = PlannerAgent(toy3, env, default_surrogate(toy3), cfg)
    rows = agent.train()
    from splitprune.agent import write_metrics
    path = tmp_path / "metrics.csv"
    write_metrics(path, rows)

    with open(path) as fh:
        log = list(csv.DictReader(fh))
    n_options = len(agent.options)
    warm = [r for r in log if r["loss_q"] == ""]
    counts = {}
    for r in warm:
        counts[r["option"]] = counts.get(r["option"], 0) + 1
    before_learning = all(r["loss_q"] == "" for r in log[: 100 * n_options])
    after_learning = all(r["loss_q"] != "" for r in log[100 * n_options:])
    ok = (len(warm) == 100 * n_options
          and all(c == 100 for c in counts.values())
          and len(counts) == n_options
          and before_learning and after_learning)
    report("8 warmup conformance", ok,
           f"{len(warm)} warm-up rows, per-option counts {sorted(counts.values())}")
