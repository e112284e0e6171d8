"""Hierarchical planner: a value network ranks partition boundaries and one
actor per boundary emits pruning rates layer by layer.

The value network consumes the full decision state (which embeds the rates
chosen so far) and outputs one cumulative-reward estimate per boundary; it
is regressed on undiscounted terminal returns.  Actors are improved with a
deterministic policy gradient routed through the decided-rates slot of the
state vector, DDPG-style, with the value network frozen for that step.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import graphs
from .errors import DomainError, ParseError
from .graphs import LayerGraph, Plan
from .perf import Environment, LatencyBreakdown
from .mdp import Episode, EnvState, PruneEnv
from .nets import Adam, Mlp, soft_update
from .oracles import AccuracyOracle
from .replay import ReplayBuffer

AGENT_FORMAT = "splitprune-agent"
AGENT_VERSION = 1
EPSILON_MIN = 0.05
REPLAY_PER_CONV = 400

METRICS_COLUMNS = ("episode", "option", "reward", "t_edge", "t_trans", "t_cloud",
                   "acc", "loss_q", "loss_option", "noise_scale")

_STREAM_IDS = {"init": 1, "warmup": 2, "noise": 3, "explore": 4, "replay": 5}


def substream(seed: int, name: str) -> np.random.Generator:
    """Independent deterministic generator for one named purpose."""
    return np.random.default_rng((_STREAM_IDS[name], int(seed)))


@dataclass
class TrainConfig:
    episodes: int = 500
    batch_size: int = 128
    lr_q: float = 1e-3
    lr_option: float = 1e-4
    tau: float = 0.01
    warmup_per_option: int = 100
    hidden: tuple[int, ...] = (300, 300)
    noise_initial: float = 0.9
    noise_decay: float = 0.995
    r_max: float = graphs.DEFAULT_R_MAX
    replay_alpha: float = 0.6
    replay_eps: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        for name in ("episodes", "batch_size", "lr_q", "lr_option", "tau",
                     "warmup_per_option", "noise_initial", "noise_decay", "r_max",
                     "replay_alpha", "replay_eps"):
            if getattr(self, name) <= 0:
                raise DomainError(f"{name} must be positive")
        self.hidden = tuple(int(h) for h in self.hidden)


class PlannerAgent:
    """Value network + per-boundary actors for one graph/environment pair."""

    def __init__(self, graph: LayerGraph, env: Environment, oracle: AccuracyOracle,
                 cfg: TrainConfig, options: Sequence[int] | None = None):
        self.cfg = cfg
        self.session = PruneEnv(graph, env, oracle, r_max=cfg.r_max)
        self.options = tuple(options) if options is not None else self.session.options
        for opt in self.options:
            if opt not in self.session.options:
                raise DomainError(f"option {opt} is not an admissible boundary")
        self._col = {opt: i for i, opt in enumerate(self.options)}
        dim = self.session.layout.length

        init_rng = substream(cfg.seed, "init")
        self.q_net = Mlp.init((dim, *cfg.hidden, len(self.options)), init_rng)
        self.option_nets = [
            Mlp.init((dim, *cfg.hidden, 1), init_rng,
                     output_activation="sigmoid_scaled", output_high=cfg.r_max)
            for _ in self.options
        ]
        self.q_target = self.q_net.copy()
        self.option_targets = [net.copy() for net in self.option_nets]
        self.opt_q = Adam(self.q_net, cfg.lr_q)
        self.opt_options = [Adam(net, cfg.lr_option) for net in self.option_nets]

        self.buffer = ReplayBuffer(REPLAY_PER_CONV * graph.n_conv)
        self.episodes_trained = 0
        self._warm_rng = substream(cfg.seed, "warmup")
        self._noise_rng = substream(cfg.seed, "noise")
        self._explore_rng = substream(cfg.seed, "explore")
        self._replay_rng = substream(cfg.seed, "replay")
        # reset states are option-dependent but episode-independent
        self._init_states = np.stack([self.session.reset(o).vector for o in self.options])

    @property
    def graph(self) -> LayerGraph:
        return self.session.graph

    @property
    def noise_scale(self) -> float:
        return self.cfg.noise_initial * self.cfg.noise_decay ** self.episodes_trained

    # ------------------------------------------------------------------ acting

    def option_scores(self) -> np.ndarray:
        """Predicted return of each boundary, read at its own initial state."""
        q = self.q_net.forward(self._init_states)
        return q[np.arange(len(self.options)), np.arange(len(self.options))]

    def select_option(self, mode: str = "exploit") -> int:
        """Index into ``options``; ties resolve to the lowest index."""
        if mode not in ("exploit", "explore"):
            raise DomainError(f"unknown mode {mode!r}")
        if mode == "explore":
            eps = min(max(self.noise_scale, EPSILON_MIN), 1.0)
            if self._explore_rng.random() < eps:
                return int(self._explore_rng.integers(len(self.options)))
        return int(np.argmax(self.option_scores()))

    def act(self, option_col: int, state: EnvState, noisy: bool = False) -> float:
        rate = float(self.option_nets[option_col].forward(state.vector)[0])
        if noisy:
            rate += float(self._noise_rng.normal()) * self.noise_scale * self.cfg.r_max
        return min(max(rate, 0.0), self.cfg.r_max)

    def run_episode(self, option_col: int, noisy: bool = True) -> Episode:
        net = self.option_nets[option_col]
        policy = lambda state: float(net.forward(state.vector)[0])
        noise = None
        if noisy:
            scale = self.noise_scale * self.cfg.r_max
            noise = lambda: float(self._noise_rng.normal()) * scale
        return self.session.rollout(self.options[option_col], policy, noise)

    # ---------------------------------------------------------------- learning

    def warmup(self) -> list[Episode]:
        """Fill the buffer with uniformly random rates for every boundary.

        All warm-up entries get the maximum priority so they are sampled
        early once learning starts.
        """
        episodes = []
        policy = lambda state: float(self._warm_rng.uniform(0.0, self.cfg.r_max))
        for option in self.options:
            for _ in range(self.cfg.warmup_per_option):
                ep = self.session.rollout(option, policy)
                self.buffer.add(ep, priority=self.buffer.max_priority)
                episodes.append(ep)
        return episodes

    def train_q(self, episodes: Sequence[Episode], indices: Sequence[int] | None = None) -> float:
        """One regression step of predicted returns onto terminal returns.

        Every state an episode visits, terminal included, is regressed, so
        the value network is constrained along each decided-rate slot.
        """
        vectors, cols, returns, owners = [], [], [], []
        for k, ep in enumerate(episodes):
            col = self._col[ep.option]
            for state, _ in ep.steps:
                vectors.append(state.vector)
                cols.append(col)
                returns.append(ep.terminal_reward)
                owners.append(k)
            vectors.append(ep.terminal_state.vector)
            cols.append(col)
            returns.append(ep.terminal_reward)
            owners.append(k)
        x = np.stack(vectors)
        cols = np.array(cols)
        returns = np.array(returns)
        n = len(returns)
        picked = self.q_net.forward(x)[np.arange(n), cols]
        residual = picked - returns
        loss = float(0.5 * np.mean(residual ** 2))
        upstream = np.zeros((n, len(self.options)))
        upstream[np.arange(n), cols] = residual / n
        grads, _ = self.q_net.backward(x, upstream)
        self.opt_q.step(self.q_net, grads)
        if indices is not None:
            owners = np.array(owners)
            for k, idx in enumerate(indices):
                res = float(np.mean(np.abs(residual[owners == k])))
                self.buffer.update_priority(
                    idx, (res + self.cfg.replay_eps) ** self.cfg.replay_alpha)
        return loss

    def train_option(self, option_col: int, episodes: Sequence[Episode]) -> float:
        """Deterministic policy-gradient step on one boundary's actor.

        For each step, the rate stored in the following state's decided-rates
        slot is replaced by the actor's current output for the step's state;
        the value network (frozen here) is evaluated there and its mean
        ascended through that slot only.  Using the following state keeps the
        evaluation on the part of the input space the regression constrains.
        """
        actor = self.option_nets[option_col]
        slot_base = self.session.layout.actions.start
        vectors, q_vectors, slots = [], [], []
        for ep in episodes:
            if self._col[ep.option] != option_col:
                raise DomainError("episode does not belong to this option")
            following = [state for state, _ in ep.steps[1:]] + [ep.terminal_state]
            for (state, _), nxt in zip(ep.steps, following):
                vectors.append(state.vector)
                q_vectors.append(nxt.vector)
                slots.append(slot_base + state.cursor)
        x = np.stack(vectors)
        slots = np.array(slots)
        n = len(slots)
        actions = actor.forward(x)
        xq = np.stack(q_vectors)
        xq[np.arange(n), slots] = actions[:, 0]
        q = self.q_net.forward(xq)
        loss = float(np.mean(q[:, option_col]))
        upstream = np.zeros_like(q)
        upstream[:, option_col] = -1.0 / n  # ascend mean predicted return
        _, dx = self.q_net.backward(xq, upstream)
        d_action = dx[np.arange(n), slots].reshape(-1, 1)
        grads, _ = actor.backward(x, d_action)
        self.opt_options[option_col].step(actor, grads)
        return loss

    def _soft_update_targets(self) -> None:
        soft_update(self.q_target, self.q_net, self.cfg.tau)
        for tgt, net in zip(self.option_targets, self.option_nets):
            soft_update(tgt, net, self.cfg.tau)

    def train(self) -> list[dict]:
        """Warm up, then run the per-episode loop; returns metrics rows."""
        rows: list[dict] = []
        counter = 0
        for ep in self.warmup():
            rows.append(self._row(counter, ep, None, None))
            counter += 1
        for _ in range(self.cfg.episodes):
            col = self.select_option("explore")
            episode = self.run_episode(col, noisy=True)
            self.buffer.add(episode)
            indices, batch = self.buffer.sample(self.cfg.batch_size, self._replay_rng)
            loss_q = self.train_q(batch, indices)
            by_option: dict[int, list[Episode]] = {}
            for b in batch:
                by_option.setdefault(self._col[b.option], []).append(b)
            opt_loss_sum = 0.0
            opt_steps = 0
            for c in sorted(by_option):
                group = by_option[c]
                steps = sum(len(e.steps) for e in group)
                opt_loss_sum += self.train_option(c, group) * steps
                opt_steps += steps
            loss_option = opt_loss_sum / opt_steps
            self._soft_update_targets()
            row = self._row(counter, episode, loss_q, loss_option)
            self.episodes_trained += 1
            counter += 1
            rows.append(row)
        return rows

    def _row(self, counter: int, episode: Episode,
             loss_q: float | None, loss_option: float | None) -> dict:
        return {
            "episode": counter,
            "option": episode.option,
            "reward": episode.terminal_reward,
            "t_edge": episode.latency.t_edge,
            "t_trans": episode.latency.t_trans,
            "t_cloud": episode.latency.t_cloud,
            "acc": episode.final_acc,
            "loss_q": loss_q,
            "loss_option": loss_option,
            "noise_scale": self.noise_scale,
        }

    # ---------------------------------------------------------------- planning

    def plan(self) -> tuple[Plan, LatencyBreakdown, float]:
        """Greedy boundary choice plus a noiseless rollout of its actor."""
        col = self.select_option("exploit")
        episode = self.run_episode(col, noisy=False)
        return episode.plan, episode.latency, episode.final_acc

    # ------------------------------------------------------------- persistence

    def to_dict(self) -> dict:
        return {
            "format": AGENT_FORMAT,
            "version": AGENT_VERSION,
            "graph": graphs.graph_to_dict(self.graph),
            "options": list(self.options),
            "r_max": self.cfg.r_max,
            "hidden": list(self.cfg.hidden),
            "noise_initial": self.cfg.noise_initial,
            "noise_decay": self.cfg.noise_decay,
            "episodes_trained": self.episodes_trained,
            "q_net": self.q_net.to_dict(),
            "q_target": self.q_target.to_dict(),
            "option_nets": [n.to_dict() for n in self.option_nets],
            "option_targets": [n.to_dict() for n in self.option_targets],
        }


def save_agent(agent: PlannerAgent, path: str | Path) -> None:
    Path(path).write_text(json.dumps(agent.to_dict()))


def load_agent(path: str | Path, env: Environment, oracle: AccuracyOracle,
               cfg: TrainConfig | None = None) -> PlannerAgent:
    """Rebuild an agent around a stored checkpoint.

    The checkpoint's graph is authoritative; environment and oracle come from
    the caller.  Optimizer state is not persisted.
    """
    try:
        data = json.loads(Path(path).read_text())
    except (json.JSONDecodeError, UnicodeDecodeError) as exc:
        raise ParseError(f"invalid agent checkpoint: {exc}") from None
    if not isinstance(data, dict) or data.get("format") != AGENT_FORMAT:
        raise ParseError(f"not an agent checkpoint: format={data.get('format')!r}"
                         if isinstance(data, dict) else "not an agent checkpoint")
    if data.get("version") != AGENT_VERSION:
        raise ParseError(f"unsupported agent checkpoint version {data.get('version')!r}")
    graph = graphs.graph_from_dict(data["graph"])
    cfg = dataclasses.replace(cfg) if cfg is not None else TrainConfig()
    cfg.hidden = tuple(data["hidden"])
    cfg.r_max = data["r_max"]
    cfg.noise_initial = data["noise_initial"]
    cfg.noise_decay = data["noise_decay"]
    agent = PlannerAgent(graph, env, oracle, cfg, options=data["options"])
    agent.q_net = Mlp.from_dict(data["q_net"])
    agent.q_target = Mlp.from_dict(data["q_target"])
    agent.option_nets = [Mlp.from_dict(d) for d in data["option_nets"]]
    agent.option_targets = [Mlp.from_dict(d) for d in data["option_targets"]]
    agent.opt_q = Adam(agent.q_net, cfg.lr_q)
    agent.opt_options = [Adam(n, cfg.lr_option) for n in agent.option_nets]
    agent.episodes_trained = data["episodes_trained"]
    return agent


def write_metrics(path: str | Path, rows: Sequence[dict]) -> None:
    """CSV with one row per episode; empty loss cells mark warm-up rows."""
    import csv

    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(METRICS_COLUMNS)
        for row in rows:
            writer.writerow(["" if row[c] is None else row[c] for c in METRICS_COLUMNS])
