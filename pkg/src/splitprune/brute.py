"""Exhaustive reference search over discretized plans.

Ground truth for small instances: every combination of grid rates and
admissible boundaries is evaluated, and the best plan is returned under a
total order (highest reward, then lowest partition, then lowest rates), so
the answer never depends on evaluation order or parallelism.
"""

from __future__ import annotations

import csv
import itertools
from dataclasses import dataclass
from multiprocessing import get_context
from pathlib import Path
from typing import Sequence

from . import graphs, perf
from .errors import DomainError, RefusedError
from .graphs import LayerGraph, Plan
from .perf import Environment, LatencyBreakdown
from .oracles import AccuracyOracle

DEFAULT_LEVELS = (0.0, 0.25, 0.5, 0.75, 0.9)
FINE_LEVELS = tuple(round(0.05 * i, 2) for i in range(19))  # 0.00 .. 0.90
DEFAULT_CAP = 1_000_000
_CHUNK = 64


@dataclass(frozen=True)
class Grid:
    """Rate levels and boundaries to enumerate; ``options=None`` means all."""

    rate_levels: tuple[float, ...] = DEFAULT_LEVELS
    options: tuple[int, ...] | None = None

    def __post_init__(self):
        if not self.rate_levels:
            raise DomainError("rate_levels must be non-empty")
        if any(b <= a for a, b in zip(self.rate_levels, self.rate_levels[1:])):
            raise DomainError("rate_levels must be strictly ascending")
        if self.rate_levels[0] < 0.0:
            raise DomainError("rate levels must be non-negative")


@dataclass(frozen=True)
class BruteRow:
    partition: int
    rates: tuple[float, ...]
    acc: float
    latency: LatencyBreakdown
    reward: float


@dataclass(frozen=True)
class BruteResult:
    best_plan: Plan
    best_reward: float
    table: tuple[BruteRow, ...]
    evaluations: int


def _resolve_options(graph: LayerGraph, grid: Grid) -> tuple[int, ...]:
    if grid.options is None:
        return graph.partition_points()
    admissible = set(graph.partition_points())
    for opt in grid.options:
        if opt not in admissible:
            raise DomainError(f"partition {opt} is not an admissible boundary")
    return tuple(grid.options)


def _eval_chunk(graph: LayerGraph, env: Environment, oracle: AccuracyOracle,
                options: Sequence[int], combos: Sequence[tuple[float, ...]],
                r_max: float) -> list[BruteRow]:
    rows = []
    for rates in combos:
        pruned = graphs.apply_prune(graph, rates, r_max)
        flops = [graphs.layer_flops(pruned, i) for i in range(pruned.n_layers)]
        total = sum(flops)
        acc = oracle.evaluate(graph, rates)
        prefix = 0
        prefix_by_boundary = {0: 0}
        for i, f in enumerate(flops):
            prefix += f
            prefix_by_boundary[i + 1] = prefix
        for p in options:
            edge = prefix_by_boundary[p]
            breakdown = LatencyBreakdown(
                t_edge=env.r_comp * env.cloud_seconds_per_flop * edge,
                t_trans=perf.transmitted_bytes(pruned, p, env) / env.r_tran,
                t_cloud=env.cloud_seconds_per_flop * (total - edge),
            )
            rows.append(BruteRow(
                partition=p, rates=rates, acc=acc, latency=breakdown,
                reward=perf.reward_value(breakdown.total, acc, env.acc_req),
            ))
    return rows


def enumerate_best(graph: LayerGraph, env: Environment, oracle: AccuracyOracle,
                   grid: Grid = Grid(), cap: int = DEFAULT_CAP,
                   csv_path: str | Path | None = None, workers: int = 1,
                   keep_table: bool = True,
                   r_max: float = graphs.DEFAULT_R_MAX) -> BruteResult:
    """Evaluate every grid plan; refuse if the count exceeds ``cap``.

    Results are identical for any ``workers`` value: chunks are merged in
    submission order and the argmax uses a total tie order.
    """
    options = _resolve_options(graph, grid)
    count = len(options) * len(grid.rate_levels) ** graph.n_conv
    if count > cap:
        raise RefusedError(
            f"{count} grid plans exceed the cap of {cap}; shrink the grid or raise --cap"
        )
    for level in grid.rate_levels:
        if level > r_max:
            raise DomainError(f"rate level {level} exceeds r_max {r_max}")

    combos = list(itertools.product(grid.rate_levels, repeat=graph.n_conv))
    chunks = [combos[i:i + _CHUNK] for i in range(0, len(combos), _CHUNK)]
    if workers > 1 and len(chunks) > 1:
        ctx = get_context("fork")
        with ctx.Pool(workers) as pool:
            chunk_rows = pool.starmap(
                _eval_chunk,
                [(graph, env, oracle, options, chunk, r_max) for chunk in chunks],
            )
    else:
        chunk_rows = [_eval_chunk(graph, env, oracle, options, chunk, r_max)
                      for chunk in chunks]

    best_key = None
    best_row = None
    writer = None
    fh = None
    table: list[BruteRow] = []
    try:
        if csv_path is not None:
            fh = open(csv_path, "w", newline="")
            writer = csv.writer(fh)
            writer.writerow(["partition"]
                            + [f"rate_{j}" for j in range(graph.n_conv)]
                            + ["acc", "t_edge", "t_trans", "t_cloud", "reward"])
        for rows in chunk_rows:
            for row in rows:
                if writer is not None:
                    writer.writerow([row.partition, *row.rates, row.acc,
                                     row.latency.t_edge, row.latency.t_trans,
                                     row.latency.t_cloud, row.reward])
                if keep_table:
                    table.append(row)
                key = (-row.reward, row.partition, row.rates)
                if best_key is None or key < best_key:
                    best_key = key
                    best_row = row
    finally:
        if fh is not None:
            fh.close()
    plan = Plan(partition=best_row.partition, rates=best_row.rates)
    return BruteResult(best_plan=plan, best_reward=best_row.reward,
                       table=tuple(table), evaluations=count)
