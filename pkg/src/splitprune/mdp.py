"""Episodic decision process: pick a partition, then prune layer by layer.

One episode fixes a partition boundary and walks the conv layers in order,
choosing a pruning rate for each.  Nothing is measured along the way; the
single reward arrives at the end, once the full plan is known.

State vector layout (version 1), for a graph with L layers and C convs::

    [0]                r_tran / 1e7 (10 MB/s)
    [1]                r_comp / 100
    [2]                acc_req
    [3      : 3+L]     per-layer FLOPs / max original layer FLOPs
    [3+L    : 3+L+C]   conv output channels / max original conv channels
    [3+L+C  : 3+L+C+3] boundary summary: cumulative FLOPs before the
                       partition / total original FLOPs, channels at the
                       boundary / max original conv channels, transmitted
                       bytes / max original feature bytes
    [.. +C]            one-hot of the conv layer being decided (all 0 at
                       terminal states)
    [.. +C]            rates decided so far (0 for undecided layers)

FLOPs and channel features reflect the rates decided so far; undecided
layers appear unpruned.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Iterable, Sequence

import numpy as np

from . import graphs, perf
from .errors import DomainError
from .graphs import LayerGraph, Plan
from .perf import Environment, LatencyBreakdown
from .oracles import AccuracyOracle

LAYOUT_VERSION = 1
R_TRAN_NORM = 1e7
R_COMP_NORM = 100.0


@dataclass(frozen=True)
class StateLayout:
    """Index arithmetic for the flat state vector."""

    n_layers: int
    n_conv: int

    @property
    def length(self) -> int:
        return 3 + self.n_layers + 3 + 3 * self.n_conv

    @property
    def flops(self) -> slice:
        return slice(3, 3 + self.n_layers)

    @property
    def channels(self) -> slice:
        start = 3 + self.n_layers
        return slice(start, start + self.n_conv)

    @property
    def data(self) -> slice:
        start = 3 + self.n_layers + self.n_conv
        return slice(start, start + 3)

    @property
    def layer_onehot(self) -> slice:
        start = 3 + self.n_layers + self.n_conv + 3
        return slice(start, start + self.n_conv)

    @property
    def actions(self) -> slice:
        start = 3 + self.n_layers + 2 * self.n_conv + 3
        return slice(start, start + self.n_conv)

    def action_slot(self, conv_pos: int) -> int:
        return self.actions.start + conv_pos


@dataclass(frozen=True, eq=False)
class EnvState:
    """Observation before deciding the rate of conv layer ``cursor``."""

    option: int
    rates: tuple[float, ...]
    vector: np.ndarray

    @property
    def cursor(self) -> int:
        return len(self.rates)


@dataclass(frozen=True, eq=False)
class Episode:
    """One finished decision sequence and its terminal evaluation.

    ``terminal_state`` is the all-decided observation (layer one-hot all 0);
    it closes the sequence so every decided rate appears in some state.
    """

    option: int
    steps: tuple[tuple[EnvState, float], ...]
    terminal_state: EnvState
    terminal_reward: float
    final_acc: float
    latency: LatencyBreakdown

    @property
    def rates(self) -> tuple[float, ...]:
        return tuple(rate for _, rate in self.steps)

    @property
    def plan(self) -> Plan:
        return Plan(partition=self.option, rates=self.rates)


class PruneEnv:
    """Immutable context for rolling out pruning episodes on one graph.

    ``step`` is a pure function of the incoming state; everything an episode
    needs is carried inside the state, so replaying the same rates always
    reproduces the same vectors.
    """

    def __init__(self, graph: LayerGraph, env: Environment, oracle: AccuracyOracle,
                 r_max: float = graphs.DEFAULT_R_MAX):
        self.graph = graph
        self.env = env
        self.oracle = oracle
        self.r_max = r_max
        self.layout = StateLayout(graph.n_layers, graph.n_conv)
        self.options = graph.partition_points()
        # normalizers are frozen on the unpruned graph
        layer_flops = [graphs.layer_flops(graph, i) for i in range(graph.n_layers)]
        self._max_layer_flops = float(max(layer_flops))
        self._total_flops = float(sum(layer_flops))
        self._max_channels = float(max(graph.conv_out_channels()))
        self._max_bytes = float(max(
            graphs.input_bytes(graph),
            *(graphs.output_bytes(graph, i) for i in range(graph.n_layers)),
        ))

    def reset(self, option: int) -> EnvState:
        if option not in self.options:
            raise DomainError(
                f"partition {option} not admissible for {self.graph.name!r}; "
                f"valid boundaries: {self.options}"
            )
        return self.state_at(option, ())

    def state_at(self, option: int, rates: Sequence[float]) -> EnvState:
        """Pure state constructor; ``len(rates) == n_conv`` yields the terminal state."""
        rates = tuple(float(r) for r in rates)
        cursor = len(rates)
        if cursor > self.graph.n_conv:
            raise DomainError(f"{cursor} rates for {self.graph.n_conv} conv layers")
        padded = rates + (0.0,) * (self.graph.n_conv - cursor)
        partial = graphs.apply_prune(self.graph, padded, self.r_max)
        lay = self.layout
        vec = np.zeros(lay.length)
        vec[0] = self.env.r_tran / R_TRAN_NORM
        vec[1] = self.env.r_comp / R_COMP_NORM
        vec[2] = self.env.acc_req
        vec[lay.flops] = [graphs.layer_flops(partial, i) / self._max_layer_flops
                          for i in range(partial.n_layers)]
        vec[lay.channels] = [c / self._max_channels for c in partial.conv_out_channels()]
        vec[lay.data] = self._boundary_summary(partial, option)
        if cursor < self.graph.n_conv:
            vec[lay.layer_onehot.start + cursor] = 1.0
        vec[lay.actions] = padded
        return EnvState(option=option, rates=rates, vector=vec)

    def _boundary_summary(self, partial: LayerGraph, option: int) -> tuple[float, float, float]:
        cum = sum(graphs.layer_flops(partial, i) for i in range(option))
        if option == 0:
            channels = partial.input_shape[2]
        else:
            channels = partial.layers[option - 1].out_channels
        bytes_at = perf.transmitted_bytes(partial, option, self.env)
        return (cum / self._total_flops, channels / self._max_channels, bytes_at / self._max_bytes)

    def step(self, state: EnvState, rate: float) -> EnvState | Episode:
        """Advance one conv layer; returns the Episode after the last one."""
        if state.cursor >= self.graph.n_conv:
            raise DomainError("step on a terminal state")
        rate = float(rate)
        if not 0.0 <= rate <= self.r_max:
            raise DomainError(f"rate {rate} outside [0, {self.r_max}]")
        rates = state.rates + (rate,)
        if len(rates) == self.graph.n_conv:
            return self._assemble(state.option, rates, states=None)
        return self.state_at(state.option, rates)

    def _assemble(self, option: int, rates: tuple[float, ...],
                  states: list[EnvState] | None) -> Episode:
        if states is None:
            states = [self.state_at(option, rates[:t]) for t in range(len(rates))]
        plan = Plan(partition=option, rates=rates)
        breakdown = perf.latency(self.graph, plan, self.env, self.r_max)
        acc = self.oracle.evaluate(self.graph, rates)
        rew = perf.reward_value(breakdown.total, acc, self.env.acc_req)
        return Episode(
            option=option,
            steps=tuple(zip(states, rates)),
            terminal_state=self.state_at(option, rates),
            terminal_reward=rew,
            final_acc=acc,
            latency=breakdown,
        )

    def rollout(self, option: int, policy: Callable[[EnvState], float],
                noise: Callable[[], float] | None = None) -> Episode:
        """Run reset-to-terminal with ``policy``, optionally perturbed by ``noise``.

        Noise draws are added to the policy output and the sum is clamped to
        [0, r_max]; with a seeded noise stream the episode is reproducible.
        """
        state = self.reset(option)
        states: list[EnvState] = []
        rates: list[float] = []
        for _ in range(self.graph.n_conv):
            rate = float(policy(state))
            if noise is not None:
                rate += float(noise())
            rate = min(max(rate, 0.0), self.r_max)
            states.append(state)
            rates.append(rate)
            if len(rates) < self.graph.n_conv:
                state = self.state_at(option, tuple(rates))
        return self._assemble(option, tuple(rates), states)


def episode_to_dict(episode: Episode) -> dict:
    return {
        "option": episode.option,
        "steps": [
            {"rates": list(state.rates), "vector": state.vector.tolist(), "rate": rate}
            for state, rate in episode.steps
        ],
        "terminal_state": {
            "rates": list(episode.terminal_state.rates),
            "vector": episode.terminal_state.vector.tolist(),
        },
        "terminal_reward": episode.terminal_reward,
        "final_acc": episode.final_acc,
        "latency": {
            "t_edge": episode.latency.t_edge,
            "t_trans": episode.latency.t_trans,
            "t_cloud": episode.latency.t_cloud,
        },
    }


def episode_from_dict(data: dict) -> Episode:
    steps = tuple(
        (
            EnvState(
                option=data["option"],
                rates=tuple(s["rates"]),
                vector=np.array(s["vector"], dtype=float),
            ),
            s["rate"],
        )
        for s in data["steps"]
    )
    lat = data["latency"]
    term = data["terminal_state"]
    return Episode(
        option=data["option"],
        steps=steps,
        terminal_state=EnvState(
            option=data["option"],
            rates=tuple(term["rates"]),
            vector=np.array(term["vector"], dtype=float),
        ),
        terminal_reward=data["terminal_reward"],
        final_acc=data["final_acc"],
        latency=LatencyBreakdown(lat["t_edge"], lat["t_trans"], lat["t_cloud"]),
    )


def write_episodes(path: str | Path, episodes: Iterable[Episode]) -> None:
    """Append-friendly line-delimited JSON log; floats round-trip exactly."""
    with open(path, "w") as fh:
        for ep in episodes:
            fh.write(json.dumps(episode_to_dict(ep)) + "\n")


def read_episodes(path: str | Path) -> list[Episode]:
    out = []
    with open(path) as fh:
        for line in fh:
            if line.strip():
                out.append(episode_from_dict(json.loads(line)))
    return out
