"""Layer-level descriptions of convolutional networks and channel pruning.

A network is a flat sequence of layer descriptors carrying kernel shapes,
channel counts and output spatial sizes; no weights are stored.  Everything
the planner needs (per-layer FLOPs, feature-map bytes, the effect of pruning
a fraction of output channels) is derived from these descriptors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from functools import cached_property
from pathlib import Path
from typing import Callable, Sequence

from .errors import DomainError, NotFoundError, ParseError

CONV = "conv"
POOL = "pool"
FC = "fc"
FLATTEN = "flatten"
ADD = "add"
KINDS = frozenset({CONV, POOL, FC, FLATTEN, ADD})

DEFAULT_R_MAX = 0.9
BYTES_PER_ELEMENT = 4
MIN_CHANNELS = 1

# ceil((1 - r) * c) is computed in floats; the epsilon keeps products that are
# integers in real arithmetic (e.g. 0.7 * 10) from rounding up one channel.
_CEIL_EPS = 1e-9


@dataclass(frozen=True)
class LayerDesc:
    """One layer of a network, described by shape and cost metadata only.

    ``skip_from`` is set on ``add`` layers and points at the layer whose
    output feeds the skip path (-1 means the raw network input).
    """

    kind: str
    in_channels: int
    out_channels: int
    out_spatial: tuple[int, int]
    kernel: tuple[int, int] | None = None
    stride: int = 1
    padding: int = 0
    skip_from: int | None = None

    @property
    def out_elements(self) -> int:
        h, w = self.out_spatial
        return self.out_channels * h * w


@dataclass(frozen=True)
class LayerGraph:
    """An ordered layer sequence plus the input tensor shape (H, W, C)."""

    name: str
    input_shape: tuple[int, int, int]
    layers: tuple[LayerDesc, ...]

    @cached_property
    def conv_indices(self) -> tuple[int, ...]:
        return tuple(i for i, l in enumerate(self.layers) if l.kind == CONV)

    @property
    def n_conv(self) -> int:
        return len(self.conv_indices)

    @property
    def n_layers(self) -> int:
        return len(self.layers)

    def conv_out_channels(self) -> tuple[int, ...]:
        return tuple(self.layers[i].out_channels for i in self.conv_indices)

    def partition_points(self) -> tuple[int, ...]:
        """Boundaries where the edge/cloud hand-off may happen.

        Boundary p means layers [0, p) run on the edge.  Boundaries that fall
        inside a residual block are excluded: cutting there would require
        transmitting both the main-path and the skip tensor.
        """
        forbidden: set[int] = set()
        for i, layer in enumerate(self.layers):
            if layer.kind == ADD:
                assert layer.skip_from is not None
                forbidden.update(range(layer.skip_from + 2, i + 1))
        return tuple(p for p in range(len(self.layers) + 1) if p not in forbidden)


@dataclass(frozen=True)
class Plan:
    """A deployment decision: partition boundary plus one rate per conv layer."""

    partition: int
    rates: tuple[float, ...]


def validate_rates(graph: LayerGraph, rates: Sequence[float], r_max: float = DEFAULT_R_MAX) -> tuple[float, ...]:
    rates = tuple(float(r) for r in rates)
    if len(rates) != graph.n_conv:
        raise DomainError(
            f"expected {graph.n_conv} pruning rates for {graph.name!r}, got {len(rates)}"
        )
    for j, r in enumerate(rates):
        if not 0.0 <= r <= r_max:
            raise DomainError(f"rate {r} for conv layer {j} outside [0, {r_max}]")
    return rates


def validate_plan(graph: LayerGraph, plan: Plan, r_max: float = DEFAULT_R_MAX) -> None:
    if not 0 <= plan.partition <= len(graph.layers):
        raise DomainError(
            f"partition {plan.partition} outside [0, {len(graph.layers)}] for {graph.name!r}"
        )
    validate_rates(graph, plan.rates, r_max)


def pruned_channels(channels: int, rate: float) -> int:
    """Channels kept when pruning a fraction ``rate``: ceil((1-r)*c), floor 1."""
    return max(MIN_CHANNELS, math.ceil((1.0 - rate) * channels - _CEIL_EPS))


def apply_prune(graph: LayerGraph, rates: Sequence[float], r_max: float = DEFAULT_R_MAX) -> LayerGraph:
    """Return the graph with conv output channels reduced per ``rates``.

    Downstream input channels (including flatten/fc fan-in and skip joins)
    are updated consistently; spatial sizes never change.
    """
    rates = validate_rates(graph, rates, r_max)
    h, w, channels = graph.input_shape[0], graph.input_shape[1], graph.input_shape[2]
    prev_spatial = (h, w)
    new_layers: list[LayerDesc] = []
    conv_pos = 0
    for layer in graph.layers:
        if layer.kind == CONV:
            out = pruned_channels(layer.out_channels, rates[conv_pos])
            conv_pos += 1
            new_layers.append(replace(layer, in_channels=channels, out_channels=out))
            channels = out
        elif layer.kind in (POOL, ADD):
            new_layers.append(replace(layer, in_channels=channels, out_channels=channels))
        elif layer.kind == FLATTEN:
            out = channels * prev_spatial[0] * prev_spatial[1]
            new_layers.append(replace(layer, in_channels=channels, out_channels=out))
            channels = out
        elif layer.kind == FC:
            fan_in = channels * prev_spatial[0] * prev_spatial[1]
            new_layers.append(replace(layer, in_channels=fan_in))
            channels = layer.out_channels
        else:  # pragma: no cover - construction forbids unknown kinds
            raise DomainError(f"unknown layer kind {layer.kind!r}")
        prev_spatial = layer.out_spatial
    return LayerGraph(name=graph.name, input_shape=graph.input_shape, layers=tuple(new_layers))


def check_channel_chain(graph: LayerGraph) -> None:
    """Raise DomainError if channel counts do not chain consistently."""
    rebuilt = apply_prune(graph, (0.0,) * graph.n_conv)
    for i, (a, b) in enumerate(zip(graph.layers, rebuilt.layers)):
        if (a.in_channels, a.out_channels) != (b.in_channels, b.out_channels):
            raise DomainError(
                f"layer {i} ({a.kind}) channels {a.in_channels}->{a.out_channels} "
                f"inconsistent with chain {b.in_channels}->{b.out_channels}"
            )


def _skip_shape(graph: LayerGraph, layer: LayerDesc) -> tuple[int, tuple[int, int]]:
    assert layer.skip_from is not None
    if layer.skip_from < 0:
        h, w, c = graph.input_shape
        return c, (h, w)
    src = graph.layers[layer.skip_from]
    return src.out_channels, src.out_spatial


def layer_flops(graph: LayerGraph, i: int) -> int:
    """FLOPs of layer ``i`` under the fixed per-kind cost formulas.

    conv: 2*kh*kw*Cin*Cout*H*W; fc: 2*fan_in*fan_out; pool: kh*kw*C*H*W;
    flatten: output element count; add: element count, plus a 1x1-projection
    term 2*Cskip*Cout*H*W when the skip path mismatches in shape.
    """
    layer = graph.layers[i]
    h, w = layer.out_spatial
    if layer.kind == CONV:
        kh, kw = layer.kernel
        return 2 * kh * kw * layer.in_channels * layer.out_channels * h * w
    if layer.kind == FC:
        return 2 * layer.in_channels * layer.out_channels
    if layer.kind == POOL:
        kh, kw = layer.kernel
        return kh * kw * layer.out_channels * h * w
    if layer.kind == FLATTEN:
        return layer.out_elements
    if layer.kind == ADD:
        skip_c, skip_spatial = _skip_shape(graph, layer)
        flops = layer.out_elements
        if skip_c != layer.out_channels or skip_spatial != layer.out_spatial:
            flops += 2 * skip_c * layer.out_channels * h * w
        return flops
    raise DomainError(f"unknown layer kind {layer.kind!r}")  # pragma: no cover


def total_flops(graph: LayerGraph) -> int:
    return sum(layer_flops(graph, i) for i in range(len(graph.layers)))


def output_bytes(graph: LayerGraph, i: int) -> int:
    return graph.layers[i].out_elements * BYTES_PER_ELEMENT


def input_bytes(graph: LayerGraph) -> int:
    h, w, c = graph.input_shape
    return h * w * c * BYTES_PER_ELEMENT


def _conv_out(size: int, kernel: int, stride: int, padding: int) -> int:
    out = (size + 2 * padding - kernel) // stride + 1
    if out <= 0:
        raise DomainError(f"kernel {kernel}/stride {stride} collapses spatial size {size}")
    return out


class _Builder:
    """Chains layer descriptors, deriving spatial sizes and input channels."""

    def __init__(self, input_shape: tuple[int, int, int]):
        self.input_shape = input_shape
        self.h, self.w = input_shape[0], input_shape[1]
        self.channels = input_shape[2]
        self.layers: list[LayerDesc] = []

    @property
    def index(self) -> int:
        return len(self.layers)

    def conv(self, kernel: int, out_channels: int, stride: int = 1, padding: int | None = None):
        if padding is None:
            padding = kernel // 2
        self.h = _conv_out(self.h, kernel, stride, padding)
        self.w = _conv_out(self.w, kernel, stride, padding)
        self.layers.append(LayerDesc(CONV, self.channels, out_channels, (self.h, self.w),
                                     kernel=(kernel, kernel), stride=stride, padding=padding))
        self.channels = out_channels
        return self

    def pool(self, kernel: int, stride: int, padding: int = 0):
        self.h = _conv_out(self.h, kernel, stride, padding)
        self.w = _conv_out(self.w, kernel, stride, padding)
        self.layers.append(LayerDesc(POOL, self.channels, self.channels, (self.h, self.w),
                                     kernel=(kernel, kernel), stride=stride, padding=padding))
        return self

    def flatten(self):
        out = self.channels * self.h * self.w
        self.layers.append(LayerDesc(FLATTEN, self.channels, out, (1, 1)))
        self.channels, self.h, self.w = out, 1, 1
        return self

    def fc(self, out_features: int):
        fan_in = self.channels * self.h * self.w
        self.layers.append(LayerDesc(FC, fan_in, out_features, (1, 1)))
        self.channels, self.h, self.w = out_features, 1, 1
        return self

    def add(self, skip_from: int):
        if not -1 <= skip_from < self.index:
            raise DomainError(f"skip source {skip_from} out of range for add at {self.index}")
        self.layers.append(LayerDesc(ADD, self.channels, self.channels, (self.h, self.w),
                                     skip_from=skip_from))
        return self

    def build(self, name: str) -> LayerGraph:
        return LayerGraph(name=name, input_shape=self.input_shape, layers=tuple(self.layers))


_VGG16_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, "M",
              512, 512, 512, "M", 512, 512, 512, "M"]
_VGG19_CFG = [64, 64, "M", 128, 128, "M", 256, 256, 256, 256, "M",
              512, 512, 512, 512, "M", 512, 512, 512, 512, "M"]


def _vgg(name: str, cfg: list, num_classes: int = 10) -> LayerGraph:
    b = _Builder((320, 320, 3))
    for v in cfg:
        if v == "M":
            b.pool(2, 2)
        else:
            b.conv(3, v)
    b.flatten().fc(num_classes)
    return b.build(name)


def _resnet34(num_classes: int = 10) -> LayerGraph:
    b = _Builder((320, 320, 3))
    b.conv(7, 64, stride=2, padding=3)
    b.pool(3, 2, padding=1)
    for channels, blocks, first_stride in ((64, 3, 1), (128, 4, 2), (256, 6, 2), (512, 3, 2)):
        for block in range(blocks):
            skip = b.index - 1
            b.conv(3, channels, stride=first_stride if block == 0 else 1)
            b.conv(3, channels)
            b.add(skip)
    b.pool(b.h, 1)  # global average pool
    b.flatten().fc(num_classes)
    return b.build("resnet34")


def _toy3() -> LayerGraph:
    b = _Builder((32, 32, 3))
    b.conv(3, 8, stride=2).conv(3, 16).conv(3, 32, stride=2).fc(10)
    return b.build("toy3")


def _toy4() -> LayerGraph:
    b = _Builder((32, 32, 3))
    b.conv(3, 16).pool(2, 2).conv(3, 32).pool(2, 2).conv(3, 64).pool(2, 2).conv(3, 64).fc(10)
    return b.build("toy4")


_PRESET_BUILDERS: dict[str, Callable[[], LayerGraph]] = {
    "vgg16": lambda: _vgg("vgg16", _VGG16_CFG),
    "vgg19": lambda: _vgg("vgg19", _VGG19_CFG),
    "resnet34": _resnet34,
    "toy3": _toy3,
    "toy4": _toy4,
}


def preset_names() -> tuple[str, ...]:
    return tuple(sorted(_PRESET_BUILDERS))


def register_preset(name: str, builder: Callable[[], LayerGraph]) -> None:
    _PRESET_BUILDERS[name] = builder


def preset(name: str) -> LayerGraph:
    try:
        builder = _PRESET_BUILDERS[name]
    except KeyError:
        raise NotFoundError(
            f"unknown preset {name!r}; valid presets: {', '.join(preset_names())}"
        ) from None
    return builder()


def parse_arch(text: str, name: str = "custom") -> LayerGraph:
    """Parse the one-layer-per-line architecture format.

    ::

        input H W C
        conv KxK OUT_CHANNELS STRIDE [PADDING]
        pool KxK STRIDE [PADDING]
        flatten
        fc OUT_FEATURES
        add BACK          # skip joins the output of BACK layers earlier

    '#' starts a comment; blank lines are ignored.
    """
    builder: _Builder | None = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        kind = parts[0].lower()
        try:
            if kind == "input":
                if builder is not None:
                    raise ValueError("duplicate input line")
                h, w, c = (int(p) for p in parts[1:4])
                builder = _Builder((h, w, c))
                continue
            if builder is None:
                raise ValueError("first line must declare: input H W C")
            if kind == "conv":
                k = _parse_kernel(parts[1])
                out_channels, stride = int(parts[2]), int(parts[3])
                padding = int(parts[4]) if len(parts) > 4 else None
                builder.conv(k, out_channels, stride, padding)
            elif kind == "pool":
                k = _parse_kernel(parts[1])
                stride = int(parts[2])
                padding = int(parts[3]) if len(parts) > 3 else 0
                builder.pool(k, stride, padding)
            elif kind == "flatten":
                builder.flatten()
            elif kind == "fc":
                builder.fc(int(parts[1]))
            elif kind == "add":
                back = int(parts[1])
                builder.add(builder.index - back)
            else:
                raise ValueError(f"unknown layer kind {kind!r}")
        except (ValueError, IndexError, DomainError) as exc:
            raise ParseError(f"line {lineno}: {exc}") from None
    if builder is None or not builder.layers:
        raise ParseError("architecture file declares no layers")
    return builder.build(name)


def _parse_kernel(token: str) -> int:
    h, _, w = token.lower().partition("x")
    if w and w != h:
        raise ValueError(f"only square kernels supported, got {token!r}")
    return int(h)


def load_arch(path: str | Path) -> LayerGraph:
    path = Path(path)
    return parse_arch(path.read_text(), name=path.stem)


def dump_arch(graph: LayerGraph) -> str:
    h, w, c = graph.input_shape
    lines = [f"input {h} {w} {c}"]
    for i, layer in enumerate(graph.layers):
        if layer.kind == CONV:
            k = layer.kernel[0]
            lines.append(f"conv {k}x{k} {layer.out_channels} {layer.stride} {layer.padding}")
        elif layer.kind == POOL:
            k = layer.kernel[0]
            lines.append(f"pool {k}x{k} {layer.stride} {layer.padding}")
        elif layer.kind == FLATTEN:
            lines.append("flatten")
        elif layer.kind == FC:
            lines.append(f"fc {layer.out_channels}")
        elif layer.kind == ADD:
            lines.append(f"add {i - layer.skip_from}")
    return "\n".join(lines) + "\n"


def graph_to_dict(graph: LayerGraph) -> dict:
    return {
        "name": graph.name,
        "input_shape": list(graph.input_shape),
        "layers": [
            {
                "kind": l.kind,
                "in_channels": l.in_channels,
                "out_channels": l.out_channels,
                "out_spatial": list(l.out_spatial),
                "kernel": list(l.kernel) if l.kernel else None,
                "stride": l.stride,
                "padding": l.padding,
                "skip_from": l.skip_from,
            }
            for l in graph.layers
        ],
    }


def graph_from_dict(data: dict) -> LayerGraph:
    layers = tuple(
        LayerDesc(
            kind=d["kind"],
            in_channels=d["in_channels"],
            out_channels=d["out_channels"],
            out_spatial=tuple(d["out_spatial"]),
            kernel=tuple(d["kernel"]) if d["kernel"] else None,
            stride=d["stride"],
            padding=d["padding"],
            skip_from=d["skip_from"],
        )
        for d in data["layers"]
    )
    return LayerGraph(name=data["name"], input_shape=tuple(data["input_shape"]), layers=layers)
