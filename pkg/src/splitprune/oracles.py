"""Accuracy oracles: what accuracy does a pruned network achieve?

Real measurement is expensive, so the default is an analytic surrogate that
degrades quadratically with per-layer pruning rates, weighted by how much
each layer computes.  A table oracle replays externally measured accuracies
from a text file for users who have them.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from . import graphs
from .errors import DomainError, NotFoundError, ParseError
from .graphs import LayerGraph


class AccuracyOracle:
    """Deterministic map from (graph, pruning rates) to accuracy in [0, 1]."""

    def evaluate(self, graph: LayerGraph, rates: Sequence[float]) -> float:
        raise NotImplementedError


def uniform_sensitivity(n: int) -> tuple[float, ...]:
    return (1.0 / n,) * n


def sensitivity_from_flops(graph: LayerGraph) -> tuple[float, ...]:
    """Per-conv-layer weights proportional to FLOPs share, summing to 1."""
    flops = [graphs.layer_flops(graph, i) for i in graph.conv_indices]
    total = sum(flops)
    return tuple(f / total for f in flops)


@dataclass(frozen=True)
class SurrogateParams:
    base_acc: float
    sensitivity: tuple[float, ...]
    exponent: float = 2.0
    drop_scale: float = 0.5

    def __post_init__(self):
        if not 0.0 <= self.base_acc <= 1.0:
            raise DomainError(f"base_acc {self.base_acc} outside [0, 1]")
        if self.exponent <= 0 or self.drop_scale < 0:
            raise DomainError("exponent must be positive and drop_scale non-negative")
        if any(w <= 0 for w in self.sensitivity):
            raise DomainError("sensitivity weights must be positive")
        if abs(sum(self.sensitivity) - 1.0) > 1e-9:
            raise DomainError(f"sensitivity weights sum to {sum(self.sensitivity)}, not 1")


class SurrogateOracle(AccuracyOracle):
    """acc = clamp(base - drop_scale * sum_l w_l * rate_l^exponent, 0, 1).

    Monotone non-increasing in every rate; the quadratic default makes light
    pruning cheap and aggressive pruning expensive.
    """

    def __init__(self, params: SurrogateParams):
        self.params = params

    def evaluate(self, graph: LayerGraph, rates: Sequence[float]) -> float:
        p = self.params
        if len(rates) != len(p.sensitivity):
            raise DomainError(
                f"expected {len(p.sensitivity)} rates, got {len(rates)}"
            )
        drop = p.drop_scale * sum(w * float(r) ** p.exponent
                                  for w, r in zip(p.sensitivity, rates))
        return min(1.0, max(0.0, p.base_acc - drop))


def default_surrogate(graph: LayerGraph, base_acc: float = 0.9,
                      exponent: float = 2.0, drop_scale: float = 0.5) -> SurrogateOracle:
    return SurrogateOracle(SurrogateParams(
        base_acc=base_acc,
        sensitivity=sensitivity_from_flops(graph),
        exponent=exponent,
        drop_scale=drop_scale,
    ))


class TableOracle(AccuracyOracle):
    """Exact lookup of measured accuracies keyed by quantized rate vectors.

    Keys are rates snapped to a fixed grid (default 0.05).  Misses fall back
    to the nearest stored key unless ``strict`` is set.
    """

    def __init__(self, entries: dict[tuple[float, ...], float],
                 grid: float = 0.05, strict: bool = False):
        self.grid = grid
        self.strict = strict
        self.entries = {self._quantize(k): v for k, v in entries.items()}

    def _quantize(self, rates: Sequence[float]) -> tuple[float, ...]:
        return tuple(round(round(float(r) / self.grid) * self.grid, 10) for r in rates)

    def evaluate(self, graph: LayerGraph, rates: Sequence[float]) -> float:
        key = self._quantize(rates)
        if key in self.entries:
            return self.entries[key]
        if self.strict or not self.entries:
            raise NotFoundError(f"no accuracy entry for rates {key}")
        # deterministic nearest neighbour: squared distance, then key order
        best = min(
            self.entries,
            key=lambda k: (sum((a - b) ** 2 for a, b in zip(k, key)), k),
        )
        return self.entries[best]

    @classmethod
    def from_file(cls, path: str | Path, grid: float = 0.05, strict: bool = False) -> "TableOracle":
        """Parse lines of the form ``r1,r2,...,rL -> acc``; '#' comments."""
        entries: dict[tuple[float, ...], float] = {}
        for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            left, sep, right = line.partition("->")
            if not sep:
                raise ParseError(f"line {lineno}: expected 'rates -> accuracy', got {raw!r}")
            try:
                key = tuple(float(tok) for tok in left.replace(",", " ").split())
                acc = float(right.strip())
            except ValueError as exc:
                raise ParseError(f"line {lineno}: {exc}") from None
            if not 0.0 <= acc <= 1.0:
                raise ParseError(f"line {lineno}: accuracy {acc} outside [0, 1]")
            entries[key] = acc
        return cls(entries, grid=grid, strict=strict)
