"""Run configuration: one YAML file, strict keys, seeded stages."""

from __future__ import annotations

import zlib
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import yaml


class ConfigError(ValueError):
    pass


@dataclass
class DataSection:
    kind: str = "rupture"
    n: int = 2000
    csv: str | None = None  # external simulation CSV; overrides `simulate`
    space: str | None = None  # parameter-space YAML; default: built-in space for `kind`
    outcome_column: str | None = None
    task: str | None = None
    fractions: dict = field(default_factory=lambda: {"train": 0.8, "validation": 0.0, "test": 0.2})


@dataclass
class SurrogateSection:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    subsample: float = 1.0
    monotone: dict = field(default_factory=dict)


@dataclass
class EnvironmentSection:
    direction: str = "maximize"
    invalid_penalty: float = -1.0
    range_margin: float = 0.1


@dataclass
class PpoSection:
    clip_eps: float = 0.2
    gamma: float = 0.99
    gae_lambda: float = 0.95
    learning_rate: float = 3e-4
    rollout_size: int = 2048
    minibatch: int = 64
    epochs_per_update: int = 10
    total_steps: int = 40960
    entropy_coef: float = 0.0
    value_coef: float = 0.5
    hidden: list = field(default_factory=lambda: [64, 64])


@dataclass
class GenerationSection:
    n: int = 5000
    bins: int = 10


@dataclass
class BayesoptSection:
    n_trials: int = 1000
    n_init: int = 20
    refit_every: int = 50
    resolution: int = 50
    contour_pairs: list = field(default_factory=list)


@dataclass
class OutputSection:
    scatter_pairs: list = field(default_factory=list)


@dataclass
class RunConfig:
    seed: int
    workspace: str = "workspace"
    data: DataSection = field(default_factory=DataSection)
    surrogate: SurrogateSection = field(default_factory=SurrogateSection)
    environment: EnvironmentSection = field(default_factory=EnvironmentSection)
    ppo: PpoSection = field(default_factory=PpoSection)
    generation: GenerationSection = field(default_factory=GenerationSection)
    bayesopt: BayesoptSection = field(default_factory=BayesoptSection)
    output: OutputSection = field(default_factory=OutputSection)

    def module_seed(self, module: str) -> int:
        return derive_seed(self.seed, module)


SECTIONS = {
    "data": DataSection, "surrogate": SurrogateSection, "environment": EnvironmentSection,
    "ppo": PpoSection, "generation": GenerationSection, "bayesopt": BayesoptSection,
    "output": OutputSection,
}


def derive_seed(global_seed: int, module: str) -> int:
    """Stage seed: the global seed XOR a fixed per-module tag."""
    return int(global_seed) ^ (zlib.crc32(module.encode()) & 0x7FFFFFFF)


def _build(cls, raw, prefix=""):
    if not isinstance(raw, dict):
        raise ConfigError(f"section {prefix.rstrip('.') or '<root>'} must be a mapping")
    known = {f.name: f for f in fields(cls)}
    for key in raw:
        if key not in known:
            raise ConfigError(f"unknown config key '{prefix}{key}'")
    kwargs = {}
    for name, f in known.items():
        if name not in raw:
            continue
        value = raw[name]
        if cls is RunConfig and name in SECTIONS:
            kwargs[name] = _build(SECTIONS[name], value or {}, f"{name}.")
        else:
            kwargs[name] = value
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(str(exc)) from None


def parse_config(raw: dict) -> RunConfig:
    raw = raw or {}
    if "seed" not in raw:
        raise ConfigError("missing required config key 'seed'")
    if "kind" not in (raw.get("data") or {}):
        raise ConfigError("missing required config key 'data.kind'")
    cfg = _build(RunConfig, raw)
    if not isinstance(cfg.seed, int):
        raise ConfigError("seed must be an integer")
    return cfg


def apply_override(raw: dict, assignment: str) -> dict:
    """Apply ``section.key=value`` (value parsed as YAML) to a raw config mapping."""
    if "=" not in assignment:
        raise ConfigError(f"override {assignment!r} must look like section.key=value")
    path, text = assignment.split("=", 1)
    keys = path.strip().split(".")
    node = raw
    for k in keys[:-1]:
        node = node.setdefault(k, {})
        if not isinstance(node, dict):
            raise ConfigError(f"override {assignment!r}: {k!r} is not a section")
    node[keys[-1]] = yaml.safe_load(text)
    return raw


def load_config(path, overrides=(), seed=None, workspace=None) -> RunConfig:
    with open(path, encoding="utf-8") as fh:
        raw = yaml.safe_load(fh) or {}
    for item in overrides:
        apply_override(raw, item)
    if seed is not None:
        raw["seed"] = seed
    if workspace is not None:
        raw["workspace"] = str(workspace)
    cfg = parse_config(raw)
    # relative paths in the config file resolve against its directory
    base = Path(path).resolve().parent
    data = cfg.data
    for key in ("csv", "space"):
        value = getattr(data, key)
        if value is not None and not Path(value).is_absolute():
            data = replace(data, **{key: str(base / value)})
    cfg.data = data
    return cfg
