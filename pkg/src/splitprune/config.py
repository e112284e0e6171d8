"""Run configuration: one declarative TOML file with sections.

::

    seed = 7
    out_dir = "runs/demo"

    [model]
    preset = "toy3"            # or: file = "my_arch.txt"

    [env]
    r_tran_kbps = 1280.0
    r_comp = 20.0
    acc_req = 0.75
    cloud_seconds_per_flop = 1e-11
    upload_result = false

    [oracle]
    kind = "surrogate"         # or "table"
    base_acc = 0.9
    drop_scale = 0.5
    exponent = 2.0
    sensitivity = "flops"      # "flops" | "uniform" | [w1, w2, ...]
    # for kind = "table":
    # path = "accuracies.txt"
    # grid = 0.05
    # strict = false

    [train]
    episodes = 500
    batch_size = 128
    lr_q = 1e-3
    lr_option = 1e-4
    tau = 0.01
    warmup_per_option = 100
    hidden = [300, 300]
    noise_initial = 0.9
    noise_decay = 0.995
    r_max = 0.9
    replay_alpha = 0.6
    replay_eps = 1e-3

Unknown keys are rejected.  Command-line flags override file values.
"""

from __future__ import annotations

import sys
from dataclasses import dataclass, field, fields
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from . import graphs
from .agent import TrainConfig
from .errors import ConfigError, DomainError, NotFoundError, ParseError
from .graphs import LayerGraph
from .perf import Environment
from .oracles import (AccuracyOracle, SurrogateOracle, SurrogateParams,
                      TableOracle, sensitivity_from_flops, uniform_sensitivity)

_ENV_DEFAULTS = {
    "r_tran_kbps": 1280.0,
    "r_comp": 20.0,
    "acc_req": 0.75,
    "cloud_seconds_per_flop": 1e-11,
    "upload_result": False,
}

_ORACLE_DEFAULTS = {
    "kind": "surrogate",
    "base_acc": 0.9,
    "drop_scale": 0.5,
    "exponent": 2.0,
    "sensitivity": "flops",
    "path": None,
    "grid": 0.05,
    "strict": False,
}


@dataclass
class RunConfig:
    seed: int = 0
    out_dir: Path = Path("runs/default")
    preset: str | None = "toy3"
    arch_file: Path | None = None
    env_values: dict = field(default_factory=lambda: dict(_ENV_DEFAULTS))
    oracle_values: dict = field(default_factory=lambda: dict(_ORACLE_DEFAULTS))
    train: TrainConfig = field(default_factory=TrainConfig)
    source_path: Path | None = None

    def build_graph(self) -> LayerGraph:
        if self.arch_file is not None:
            arch = self.arch_file
            if self.source_path is not None and not arch.is_absolute():
                arch = self.source_path.parent / arch
            try:
                return graphs.load_arch(arch)
            except FileNotFoundError:
                raise ConfigError(f"architecture file not found: {arch}") from None
            except ParseError as exc:
                raise ConfigError(f"bad architecture file {arch}: {exc}") from None
        try:
            return graphs.preset(self.preset)
        except NotFoundError as exc:
            raise ConfigError(str(exc)) from None

    def build_env(self) -> Environment:
        v = self.env_values
        try:
            return Environment.from_kbps(
                r_tran_kbps=v["r_tran_kbps"],
                r_comp=v["r_comp"],
                acc_req=v["acc_req"],
                cloud_seconds_per_flop=v["cloud_seconds_per_flop"],
                upload_result=v["upload_result"],
            )
        except DomainError as exc:
            raise ConfigError(f"bad [env] section: {exc}") from None

    def build_oracle(self, graph: LayerGraph) -> AccuracyOracle:
        v = self.oracle_values
        try:
            if v["kind"] == "surrogate":
                sens = v["sensitivity"]
                if sens == "flops":
                    weights = sensitivity_from_flops(graph)
                elif sens == "uniform":
                    weights = uniform_sensitivity(graph.n_conv)
                elif isinstance(sens, (list, tuple)):
                    weights = tuple(float(w) for w in sens)
                else:
                    raise ConfigError(f"bad sensitivity spec {sens!r}")
                return SurrogateOracle(SurrogateParams(
                    base_acc=v["base_acc"], sensitivity=weights,
                    exponent=v["exponent"], drop_scale=v["drop_scale"]))
            if v["kind"] == "table":
                if not v["path"]:
                    raise ConfigError("[oracle] kind='table' requires a 'path'")
                path = Path(v["path"])
                if self.source_path is not None and not path.is_absolute():
                    path = self.source_path.parent / path
                try:
                    return TableOracle.from_file(path, grid=v["grid"], strict=v["strict"])
                except FileNotFoundError:
                    raise ConfigError(f"accuracy table not found: {path}") from None
                except ParseError as exc:
                    raise ConfigError(f"bad accuracy table {path}: {exc}") from None
            raise ConfigError(f"unknown oracle kind {v['kind']!r}")
        except DomainError as exc:
            raise ConfigError(f"bad [oracle] section: {exc}") from None


def _take(section: dict, defaults: dict, where: str) -> dict:
    unknown = set(section) - set(defaults)
    if unknown:
        raise ConfigError(f"unknown key(s) in [{where}]: {', '.join(sorted(unknown))}")
    merged = dict(defaults)
    merged.update(section)
    return merged


def load_config(path: str | Path, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a TOML run configuration.

    ``overrides`` maps dotted names (``seed``, ``train.episodes``,
    ``env.r_comp``, ``model.preset``, ``out_dir``) to replacement values and
    takes precedence over the file.
    """
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            raw = tomllib.load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"invalid TOML in {path}: {exc}") from None

    top_known = {"seed", "out_dir", "model", "env", "oracle", "train"}
    unknown = set(raw) - top_known
    if unknown:
        raise ConfigError(f"unknown top-level key(s): {', '.join(sorted(unknown))}")

    for section, value in overrides.items() if overrides else ():
        head, _, key = section.partition(".")
        if key:
            raw.setdefault(head, {})[key] = value
        else:
            raw[head] = value

    model = raw.get("model", {})
    model = _take(model, {"preset": None, "file": None}, "model")
    if model["preset"] is None and model["file"] is None:
        model["preset"] = "toy3"
    if model["preset"] is not None and model["file"] is not None:
        raise ConfigError("[model] must set either 'preset' or 'file', not both")

    env_values = _take(raw.get("env", {}), _ENV_DEFAULTS, "env")
    oracle_values = _take(raw.get("oracle", {}), _ORACLE_DEFAULTS, "oracle")

    train_defaults = {f.name: getattr(TrainConfig(), f.name) for f in fields(TrainConfig)}
    train_defaults.pop("seed")
    train_values = _take(raw.get("train", {}), train_defaults, "train")

    seed = raw.get("seed", 0)
    if not isinstance(seed, int):
        raise ConfigError(f"seed must be an integer, got {seed!r}")
    try:
        train = TrainConfig(seed=seed, **train_values)
    except DomainError as exc:
        raise ConfigError(f"bad [train] section: {exc}") from None

    return RunConfig(
        seed=seed,
        out_dir=Path(raw.get("out_dir", "runs/default")),
        preset=model["preset"],
        arch_file=Path(model["file"]) if model["file"] else None,
        env_values=env_values,
        oracle_values=oracle_values,
        train=train,
        source_path=path,
    )
