"""Run configuration: defaults, flat key=value config files, precedence.

A RunConfig gathers every knob the command line exposes. Values resolve in
three layers: built-in defaults (the tuned values where one exists), then a
config file, then explicit command-line flags. The CROSSFLOW_SEED environment
variable overrides the seed last of all, so batch drivers can fan out seeds
without touching flags or files.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, fields
from typing import get_type_hints

from .agent import TrainConfig
from .encoder import GridSpec
from .signals import SignalTiming

ENV_SEED = "CROSSFLOW_SEED"


@dataclass(frozen=True)
class RunConfig:
    # run identity
    scenario: str = "a"
    controller: str = ""       # eval: comma-separated ids, empty = default set
    mode: str = "fd"           # eval study: fd | pd
    episodes: int = 50
    pairs: int = 300
    steps: int = 150_000
    seed: int = 0
    pcv: str = "uniform"       # "uniform" or "fixed:<rate>"
    out: str = "runs"
    jobs: int = 1
    checkpoint: str = ""
    checkpoint_every: int = 0
    # agent
    gamma: float = 0.99
    lr: float = 1e-4
    eps_min: float = 0.01
    eps_decay_steps: int = 2_000_000
    buffer_capacity: int = 1_000_000
    warmup: int = 100_000
    batch_size: int = 64
    tau: float = 1e-3
    # signal timing
    min_green: float = 10.0
    yellow: float = 3.0
    all_red: float = 2.0
    max_green: float = 0.0     # 0 disables the forced advance
    # detection grid
    cell_length: float = 8.0
    detection_range: float = 160.0
    # threshold ceilings (loss %)
    ceiling_acceptable: float = 40.0
    ceiling_optimal: float = 20.0
    # inspect-state
    at_time: float = 0.0


_FIELD_TYPES: dict[str, type] | None = None


def field_types() -> dict[str, type]:
    global _FIELD_TYPES
    if _FIELD_TYPES is None:
        hints = get_type_hints(RunConfig)
        _FIELD_TYPES = {f.name: hints[f.name] for f in fields(RunConfig)}
    return _FIELD_TYPES


def parse_value(name: str, text: str):
    try:
        typ = field_types()[name]
    except KeyError:
        raise ValueError(f"unknown config key {name!r}") from None
    if typ is str:
        return text
    try:
        return typ(text)
    except ValueError:
        raise ValueError(
            f"config key {name!r} expects {typ.__name__}, got {text!r}"
        ) from None


def load_config_file(path: str) -> dict:
    """Parse a flat key=value file: one pair per line, '#' starts a comment,
    blank lines ignored."""
    values: dict[str, object] = {}
    with open(path) as fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ValueError(f"{path}:{lineno}: expected key=value, "
                                 f"got {line!r}")
            key, text = line.split("=", 1)
            values[key.strip()] = parse_value(key.strip(), text.strip())
    return values


def merge_config(file_values: dict | None, cli_values: dict) -> RunConfig:
    """Defaults < config file < explicit flags; CROSSFLOW_SEED wins last."""
    data: dict[str, object] = {}
    if file_values:
        data.update(file_values)
    data.update(cli_values)
    env_seed = os.environ.get(ENV_SEED)
    if env_seed is not None:
        try:
            data["seed"] = int(env_seed)
        except ValueError:
            raise ValueError(
                f"{ENV_SEED} must be an integer, got {env_seed!r}") from None
    return RunConfig(**data)


def dump_config(cfg: RunConfig) -> str:
    """Serialise in the config-file format; loading the output reproduces
    cfg exactly (str() of int/float round-trips)."""
    lines = [f"{f.name}={getattr(cfg, f.name)}" for f in fields(cfg)]
    return "\n".join(lines) + "\n"


# -- adapters into the library configs ------------------------------------------


def timing_from(cfg: RunConfig) -> SignalTiming:
    return SignalTiming(min_green=cfg.min_green, yellow=cfg.yellow,
                        all_red=cfg.all_red,
                        max_green=cfg.max_green if cfg.max_green > 0 else None)


def grid_from(cfg: RunConfig) -> GridSpec:
    return GridSpec(cell_length=cfg.cell_length,
                    detection_range=cfg.detection_range)


def train_config_from(cfg: RunConfig) -> TrainConfig:
    return TrainConfig(
        scenario=cfg.scenario, steps=cfg.steps, seed=cfg.seed, pcv=cfg.pcv,
        gamma=cfg.gamma, lr=cfg.lr, eps_min=cfg.eps_min,
        eps_decay_steps=cfg.eps_decay_steps,
        buffer_capacity=cfg.buffer_capacity, warmup=cfg.warmup,
        batch_size=cfg.batch_size, tau=cfg.tau, timing=timing_from(cfg),
        grid=grid_from(cfg), checkpoint_every=cfg.checkpoint_every,
        out_dir=cfg.out)
