"""Experiment configuration: JSON document -> :class:`ExperimentConfig`.

Every key is optional; missing keys take the per-experiment defaults below.
Schema (all experiments)::

    {
      "experiment": "GaussianSweep",      # must match the CLI subcommand if given
      "K": 1024, "N": 200000, "d": 32,
      "repeats": 5,
      "base_seed": 0,
      "workers": 1,
      "record_timing": false,
      "mean_values": [0.0, 0.5, ...],      # mu (Gaussian) or nu (uniform) sweep
      "scale_values": [1, 2, ...],         # sigma or zeta sweep
      "disks": [{"offset": 2.0, "feature_radius": 1.0, "code_radius": 1.0}, ...],
      "trainer": {"learning_rate": 0.4, "lr_schedule": "cosine", ...},
      "strategies": ["Vanilla", "EMA", "Online", "Linear", "Wasserstein"],
      "source": "gaussian",                # Atomic: gaussian or uniform panels
      "lloyd": {"k": 256, "bins": 16, "grid": 100000, "exponent": 3.0}
    }
"""

from __future__ import annotations

import enum
import json
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any

from ..errors import ConfigError, WVQError
from ..sampling import MAX_SEED
from ..trainers import Strategy, TrainerConfig


class Experiment(str, enum.Enum):
    DISKS = "Disks"
    GAUSSIAN_SWEEP = "GaussianSweep"
    UNIFORM_SWEEP = "UniformSweep"
    VARIANCE_TABLE = "VarianceTable"
    ATOMIC = "Atomic"
    LLOYD_CHECK = "LloydCheck"


COMMANDS = {
    "disks": Experiment.DISKS,
    "gaussian-sweep": Experiment.GAUSSIAN_SWEEP,
    "uniform-sweep": Experiment.UNIFORM_SWEEP,
    "variance-table": Experiment.VARIANCE_TABLE,
    "atomic": Experiment.ATOMIC,
    "lloyd-check": Experiment.LLOYD_CHECK,
}
SLUGS = {exp: cmd for cmd, exp in COMMANDS.items()}

SHIFTS = [0.0, 0.5, 1.0, 1.5, 2.0, 2.5]
SCALES = [1.0, 2.0, 3.0, 4.0, 5.0, 6.0]
VARIANCES = [1e-4, 1e-3, 1e-2, 0.1, 1.0]

DEFAULT_DISKS = [
    # equal radii, centres approaching
    {"offset": 2.0, "feature_radius": 1.0, "code_radius": 1.0},
    {"offset": 1.5, "feature_radius": 1.0, "code_radius": 1.0},
    {"offset": 0.75, "feature_radius": 1.0, "code_radius": 1.0},
    {"offset": 0.0, "feature_radius": 1.0, "code_radius": 1.0},
    # shared centre, code radius inside then beyond the feature disk
    {"offset": 0.0, "feature_radius": 1.0, "code_radius": 0.5},
    {"offset": 0.0, "feature_radius": 1.0, "code_radius": 0.8},
    {"offset": 0.0, "feature_radius": 1.0, "code_radius": 1.25},
    {"offset": 0.0, "feature_radius": 1.0, "code_radius": 1.5},
]

ATOMIC_TRAINER = {
    "codebook_size": 2048, "steps": 200, "batch_size": 5000, "eval_size": 50000,
    "learning_rate": 0.4, "lr_schedule": "cosine",
}
ATOMIC_FULL_SCALE = {"codebook_size": 16384, "steps": 2000, "batch_size": 50000, "eval_size": 50000}

_DEFAULTS: dict[Experiment, dict[str, Any]] = {
    Experiment.DISKS: {"K": 400, "N": 10000, "d": 2, "repeats": 1},
    Experiment.GAUSSIAN_SWEEP: {"K": 1024, "N": 200000, "d": 32, "repeats": 5},
    Experiment.UNIFORM_SWEEP: {"K": 1024, "N": 200000, "d": 32, "repeats": 5},
    Experiment.VARIANCE_TABLE: {"K": 8192, "N": 100000, "d": 8, "repeats": 5,
                                "scale_values": VARIANCES},
    Experiment.ATOMIC: {"K": 2048, "N": 5000, "d": 8, "repeats": 1,
                        "mean_values": [0.0, 1.0, 2.0, 3.0, 4.0, 5.0]},
    Experiment.LLOYD_CHECK: {"K": 256, "N": 0, "d": 1, "repeats": 1},
}


@dataclass
class ExperimentConfig:
    experiment: Experiment
    K: int = 1024
    N: int = 200000
    d: int = 32
    repeats: int = 5
    base_seed: int = 0
    output_dir: Path = Path("results")
    workers: int = 1
    record_timing: bool = False
    mean_values: list[float] = field(default_factory=lambda: list(SHIFTS))
    scale_values: list[float] = field(default_factory=lambda: list(SCALES))
    disks: list[dict[str, float]] = field(default_factory=lambda: [dict(c) for c in DEFAULT_DISKS])
    trainer: TrainerConfig = field(default_factory=TrainerConfig)
    strategies: list[Strategy] = field(default_factory=lambda: list(Strategy))
    source: str = "gaussian"
    lloyd: dict[str, float] = field(default_factory=dict)
    full_scale: bool = False

    def validate(self) -> "ExperimentConfig":
        if self.repeats < 1:
            raise ConfigError("repeats must be >= 1")
        if self.K < 1 or self.d < 1 or self.N < 0 or self.workers < 1:
            raise ConfigError("K, d and workers must be positive, N non-negative")
        if self.experiment is not Experiment.LLOYD_CHECK and self.N < 1:
            raise ConfigError("N must be positive")
        if not 0 <= self.base_seed <= MAX_SEED:
            raise ConfigError("base_seed must be an unsigned 64-bit integer")
        if not self.mean_values or not self.scale_values:
            raise ConfigError("sweep lists must be non-empty")
        if any(s <= 0 for s in self.scale_values):
            raise ConfigError("scale values must be positive")
        if self.experiment is Experiment.DISKS:
            if not self.disks:
                raise ConfigError("disks list must be non-empty")
            if self.d != 2:
                raise ConfigError("the disk study is two-dimensional (d must be 2)")
            for case in self.disks:
                if set(case) - {"offset", "feature_radius", "code_radius"}:
                    raise ConfigError(f"unknown disk keys in {case}")
                if case.get("feature_radius", 1.0) < 0 or case.get("code_radius", 1.0) < 0:
                    raise ConfigError("disk radii must be non-negative")
        if not self.strategies:
            raise ConfigError("strategies must be non-empty")
        if self.source not in ("gaussian", "uniform"):
            raise ConfigError("source must be 'gaussian' or 'uniform'")
        return self


def _trainer_from(raw: dict[str, Any], base: dict[str, Any]) -> TrainerConfig:
    known = {f.name for f in fields(TrainerConfig)}
    unknown = set(raw) - known
    if unknown:
        raise ConfigError(f"unknown trainer keys: {sorted(unknown)}")
    try:
        return TrainerConfig(**{**base, **raw})
    except (TypeError, ValueError, WVQError) as exc:
        raise ConfigError(f"invalid trainer config: {exc}") from exc


def build_config(experiment: Experiment | str, raw: dict[str, Any] | None = None, *,
                 output_dir: str | Path | None = None, seed: int | None = None,
                 full_scale: bool = False) -> ExperimentConfig:
    """Merge a raw JSON mapping with the defaults for ``experiment``."""
    try:
        experiment = Experiment(experiment)
    except ValueError as exc:
        raise ConfigError(f"unknown experiment {experiment!r}") from exc
    raw = dict(raw or {})
    declared = raw.pop("experiment", None)
    if declared is not None and declared not in (experiment.value, SLUGS[experiment]):
        raise ConfigError(f"config is for {declared!r}, command runs {experiment.value!r}")
    allowed = {f.name for f in fields(ExperimentConfig)} - {"experiment"}
    unknown = set(raw) - allowed
    if unknown:
        raise ConfigError(f"unknown config keys: {sorted(unknown)}")

    values: dict[str, Any] = dict(_DEFAULTS[experiment])
    trainer_raw = raw.pop("trainer", {}) or {}
    values.update(raw)
    if full_scale:
        values["full_scale"] = True
    if seed is not None:
        values["base_seed"] = seed
    if output_dir is not None:
        values["output_dir"] = output_dir
    values["output_dir"] = Path(values.get("output_dir", "results"))

    if experiment is Experiment.ATOMIC:
        base = dict(ATOMIC_TRAINER)
        if values.get("full_scale"):
            base.update(ATOMIC_FULL_SCALE)
        if "K" in raw:
            base["codebook_size"] = raw["K"]
        if "N" in raw:
            base["batch_size"] = raw["N"]
        trainer = _trainer_from(trainer_raw, base)
        values["K"], values["N"] = trainer.codebook_size, trainer.batch_size
        values["trainer"] = trainer
    elif trainer_raw:
        raise ConfigError("'trainer' is only used by the atomic experiment")

    if "strategies" in values:
        try:
            values["strategies"] = [Strategy(s) for s in values["strategies"]]
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
    try:
        cfg = ExperimentConfig(experiment=experiment, **values)
        cfg.mean_values = [float(v) for v in cfg.mean_values]
        cfg.scale_values = [float(v) for v in cfg.scale_values]
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid config: {exc}") from exc
    return cfg.validate()


def load_config(path: str | Path | None, experiment: Experiment | str, **overrides) -> ExperimentConfig:
    raw: dict[str, Any] = {}
    if path is not None:
        try:
            raw = json.loads(Path(path).read_text())
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"config {path} is not valid JSON: {exc}") from exc
        if not isinstance(raw, dict):
            raise ConfigError("config must be a JSON object")
    return build_config(experiment, raw, **overrides)


def with_overrides(cfg: ExperimentConfig, **changes) -> ExperimentConfig:
    return replace(cfg, **changes).validate()
