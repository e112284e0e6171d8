"""End-to-end latency model and the reward it induces.

Edge compute time is modelled as cloud time scaled by ``r_comp``; cloud time
is linear in FLOPs via a calibration constant.  Transmission covers the one
feature tensor crossing the partition boundary.
"""

from __future__ import annotations

from dataclasses import dataclass

from . import graphs
from .errors import DomainError
from .graphs import LayerGraph, Plan

KILOBYTE = 1024  # 1280 KB/s -> 1,310,720 B/s


@dataclass(frozen=True)
class Environment:
    """Deployment conditions a plan is evaluated under.

    r_tran is in bytes/second; r_comp is the edge/cloud slowdown ratio for
    the same work; cloud_seconds_per_flop calibrates absolute cloud speed.
    By default an all-edge plan transmits nothing; set ``upload_result`` to
    charge for shipping the final output tensor.
    """

    r_tran: float
    r_comp: float
    acc_req: float
    cloud_seconds_per_flop: float = 1e-11
    upload_result: bool = False

    def __post_init__(self):
        if self.r_tran <= 0 or self.r_comp <= 0 or self.cloud_seconds_per_flop <= 0:
            raise DomainError("r_tran, r_comp and cloud_seconds_per_flop must be positive")
        if not 0.0 <= self.acc_req <= 1.0:
            raise DomainError(f"acc_req {self.acc_req} outside [0, 1]")

    @classmethod
    def from_kbps(cls, r_tran_kbps: float, **kwargs) -> "Environment":
        return cls(r_tran=r_tran_kbps * KILOBYTE, **kwargs)


@dataclass(frozen=True)
class LatencyBreakdown:
    t_edge: float
    t_trans: float
    t_cloud: float

    @property
    def total(self) -> float:
        return self.t_edge + self.t_trans + self.t_cloud


def transmitted_bytes(graph: LayerGraph, partition: int, env: Environment) -> int:
    """Bytes crossing the boundary: raw input at 0, nothing (by default) at the end."""
    if partition == 0:
        return graphs.input_bytes(graph)
    if partition == len(graph.layers):
        return graphs.output_bytes(graph, partition - 1) if env.upload_result else 0
    return graphs.output_bytes(graph, partition - 1)


def latency(graph: LayerGraph, plan: Plan, env: Environment,
            r_max: float = graphs.DEFAULT_R_MAX) -> LatencyBreakdown:
    graphs.validate_plan(graph, plan, r_max)
    pruned = graphs.apply_prune(graph, plan.rates, r_max)
    edge_flops = sum(graphs.layer_flops(pruned, i) for i in range(plan.partition))
    cloud_flops = sum(graphs.layer_flops(pruned, i) for i in range(plan.partition, len(pruned.layers)))
    return LatencyBreakdown(
        t_edge=env.r_comp * env.cloud_seconds_per_flop * edge_flops,
        t_trans=transmitted_bytes(pruned, plan.partition, env) / env.r_tran,
        t_cloud=env.cloud_seconds_per_flop * cloud_flops,
    )


def reward_value(total_latency: float, acc: float, acc_req: float) -> float:
    """Inverse latency when the accuracy floor is met (boundary counts), else 0."""
    return 1.0 / total_latency if acc >= acc_req else 0.0


def reward(graph: LayerGraph, plan: Plan, env: Environment, acc: float,
           r_max: float = graphs.DEFAULT_R_MAX) -> float:
    if not 0.0 <= acc <= 1.0:
        raise DomainError(f"accuracy {acc} outside [0, 1]")
    return reward_value(latency(graph, plan, env, r_max).total, acc, env.acc_req)
