"""Run configuration: one flat key/value namespace covering data, graph,
model, meta-learning, and evaluation settings.

Config files are plain text, one ``key = value`` per line, ``#`` comments
allowed.  Unknown keys are rejected.  Command-line overrides win over the
file; the fully resolved mapping is echoed into every output artifact.
"""

from __future__ import annotations

from dataclasses import dataclass, fields
from pathlib import Path
from typing import Any


class ConfigError(ValueError):
    pass


@dataclass
class RunConfig:
    # data
    slot_count: int = 48
    local_time: bool = False
    support_fraction: float = 0.8
    # synthetic population
    synth_users: int = 200
    synth_pois: int = 300
    synth_categories: int = 20
    grid_extent_km: float = 4.0
    fraction_routine: float = 0.64
    routine_categories: int = 2
    explorer_categories: int = 12
    days_per_user: int = 8
    checkins_per_day: int = 4
    poi_noise: float = 0.1
    time_consistency: float = 0.7
    uniform_pois: bool = False
    # hypergraph
    delta_km: float = 1.0
    # model
    dim: int = 64
    layers: int = 1
    residual: bool = True
    leaky_slope: float = 0.01
    # meta-learning
    alpha0: float = 0.1
    beta_ent: float = 1.0
    beta_outer: float = 1e-3
    inner_steps: int = 1
    meta_batch: int = 8
    epochs: int = 30
    clip_norm: float = 5.0
    # evaluation
    test_fraction: float = 0.2
    eval_ks: str = "5,10"
    repeats: int = 10
    # shared
    seed: int = 7
    threads: int = 1


KEY_DOCS: dict[str, str] = {
    "slot_count": "time discretization size: 24 (hour), 48 (hour x weekend), or 168 (hour of week)",
    "local_time": "split sessions and slots on local time using per-record offsets",
    "support_fraction": "chronological share of each user's instances used for adaptation",
    "synth_users": "synthetic population size",
    "synth_pois": "synthetic POI count",
    "synth_categories": "synthetic category count",
    "grid_extent_km": "side length of the synthetic POI lattice",
    "fraction_routine": "share of low-diversity users in the synthetic population",
    "routine_categories": "category breadth of routine users",
    "explorer_categories": "category breadth of explorer users",
    "days_per_user": "synthetic session days per user",
    "checkins_per_day": "synthetic check-ins per session day (>= 2)",
    "poi_noise": "probability of a uniform within-category POI pick instead of the nearest",
    "time_consistency": "probability a visit repeats the user's habitual category for that daily position",
    "uniform_pois": "ignore all structure and draw every POI uniformly",
    "delta_km": "distance threshold for spatial hyperedges, km",
    "dim": "embedding dimension shared by all node types",
    "layers": "hypergraph message-passing layers",
    "residual": "add the previous layer's features into each update",
    "leaky_slope": "negative-slope of the layer activation",
    "alpha0": "base inner learning rate",
    "beta_ent": "entropy sensitivity of the adaptive inner rate",
    "beta_outer": "outer-loop learning rate",
    "inner_steps": "gradient steps per task adaptation",
    "meta_batch": "tasks per outer update",
    "epochs": "meta-training epochs",
    "clip_norm": "global gradient-norm clip for both loops",
    "test_fraction": "share of users held out for cold-start evaluation",
    "eval_ks": "comma-separated cutoffs for recall/ndcg",
    "repeats": "experiment repetitions with derived seeds",
    "seed": "master seed for data, init, shuffling, and splits",
    "threads": "worker threads for task adaptation (results are identical for any value)",
}

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, raw: str) -> Any:
    kind = _FIELDS[key].type
    text = raw.strip()
    if kind == "bool":
        lowered = text.lower()
        if lowered in ("1", "true", "yes", "on"):
            return True
        if lowered in ("0", "false", "no", "off"):
            return False
        raise ConfigError(f"cannot parse boolean for {key!r}: {raw!r}")
    try:
        if kind == "int":
            return int(text)
        if kind == "float":
            return float(text)
    except ValueError:
        raise ConfigError(f"cannot parse {kind} for {key!r}: {raw!r}") from None
    return text


def apply_overrides(config: RunConfig, pairs: list[str]) -> RunConfig:
    """Apply ``key=value`` strings on top of a config; flags win."""
    for pair in pairs:
        if "=" not in pair:
            raise ConfigError(f"override must look like key=value, got {pair!r}")
        key, raw = pair.split("=", 1)
        key = key.strip()
        if key not in _FIELDS:
            raise ConfigError(f"unknown config key {key!r}")
        setattr(config, key, _coerce(key, raw))
    return config


def load_config(path: str | Path | None, overrides: list[str] | None = None) -> RunConfig:
    config = RunConfig()
    if path is not None:
        lines = Path(path).read_text(encoding="utf-8").splitlines()
        for lineno, line in enumerate(lines, start=1):
            stripped = line.strip()
            if not stripped or stripped.startswith("#"):
                continue
            if "=" not in stripped:
                raise ConfigError(f"expected key = value at line {lineno}: {line!r}")
            key, raw = stripped.split("=", 1)
            key = key.strip()
            if key not in _FIELDS:
                raise ConfigError(f"unknown config key {key!r} at line {lineno}")
            setattr(config, key, _coerce(key, raw))
    if overrides:
        apply_overrides(config, overrides)
    validate_config(config)
    return config


def validate_config(config: RunConfig) -> None:
    if config.slot_count not in (24, 48, 168):
        raise ConfigError(f"slot_count must be 24, 48, or 168, got {config.slot_count}")
    if not 0.0 < config.support_fraction < 1.0:
        raise ConfigError("support_fraction must lie strictly between 0 and 1")
    if not 0.0 < config.test_fraction < 1.0:
        raise ConfigError("test_fraction must lie strictly between 0 and 1")
    if config.delta_km <= 0:
        raise ConfigError("delta_km must be positive")
    if config.dim < 1 or config.layers < 0:
        raise ConfigError("dim must be >= 1 and layers >= 0")
    if min(config.alpha0, config.beta_ent, config.beta_outer) <= 0:
        raise ConfigError("alpha0, beta_ent, and beta_outer must be positive")
    if config.inner_steps < 1 or config.meta_batch < 1 or config.epochs < 0:
        raise ConfigError("inner_steps/meta_batch must be >= 1 and epochs >= 0")
    if config.repeats < 1 or config.threads < 1:
        raise ConfigError("repeats and threads must be >= 1")
    try:
        ks = parse_ks(config.eval_ks)
    except ValueError:
        raise ConfigError(f"eval_ks must be comma-separated integers, got {config.eval_ks!r}") from None
    if any(k < 1 for k in ks):
        raise ConfigError("every eval cutoff must be >= 1")


def parse_ks(text: str) -> list[int]:
    return [int(part) for part in str(text).split(",") if part.strip()]


def as_dict(config: RunConfig) -> dict:
    """Resolved mapping, with eval_ks expanded, for experiment plumbing."""
    out = {f.name: getattr(config, f.name) for f in fields(RunConfig)}
    out["eval_ks"] = parse_ks(config.eval_ks)
    return out


def help_text() -> str:
    lines = ["configuration keys (key = value per line, # comments):"]
    for f in fields(RunConfig):
        lines.append(f"  {f.name:<20} default {f.default!r:<8} {KEY_DOCS[f.name]}")
    return "\n".join(lines)
