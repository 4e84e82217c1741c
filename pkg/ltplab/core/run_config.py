"""
Experiment configuration: a TOML key tree with dotted-key overrides.

Sections map onto the domain config types. Any key not known to its section
raises ConfigError naming the full dotted key.
"""

from __future__ import annotations

import dataclasses
import logging
try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Iterable

from ltplab.controllers.bench import BenchConfig
from ltplab.controllers.datagen import LengthDistribution, TaskSpec
from ltplab.controllers.encoder import ModelConfig
from ltplab.controllers.pruning import DEFAULT_TEMPERATURE
from ltplab.controllers.trainer import Stage, StageConfig
from ltplab.core.config import DEFAULT_CONFIG, settings
from ltplab.core.errors import ConfigError

logger = logging.getLogger("ltplab.config")


@dataclass
class DataSettings:
    train_size: int = 2000
    eval_size: int = 500
    eval_seed_offset: int = 1


@dataclass
class PruneSettings:
    theta_final: float = 0.01
    final_ratio: float = 0.5
    counts: list[int] = field(default_factory=list)


@dataclass
class SweepSettings:
    lambdas: list[float] = field(default_factory=lambda: [0.001, 0.05, 0.2])
    temperatures: list[float] = field(default_factory=lambda: [1e-4, 2e-4, 5e-4, 1e-3, 2e-3])
    final_ratios: list[float] = field(default_factory=lambda: [0.2, 0.3, 0.4, 0.5, 0.6, 0.8])
    theta_finals: list[float] = field(default_factory=lambda: [0.005, 0.01, 0.02, 0.03, 0.05])


@dataclass
class RobustSettings:
    baseline_counts: list[int] = field(default_factory=list)


@dataclass
class RunConfig:
    data: DataSettings = field(default_factory=DataSettings)
    task: TaskSpec = field(default_factory=TaskSpec)
    model: ModelConfig = field(default_factory=ModelConfig)
    pretrain: StageConfig = field(default_factory=lambda: StageConfig(stage=Stage.PRETRAIN, epochs=4, temperature=None, lam=0.0))
    soft: StageConfig = field(default_factory=lambda: StageConfig(stage=Stage.SOFT, epochs=2))
    hard: StageConfig = field(default_factory=lambda: StageConfig(stage=Stage.HARD, epochs=2, temperature=None, lam=0.0))
    prune: PruneSettings = field(default_factory=PruneSettings)
    sweep: SweepSettings = field(default_factory=SweepSettings)
    bench: BenchConfig = field(default_factory=BenchConfig)
    robust: RobustSettings = field(default_factory=RobustSettings)
    output_dir: Path = field(default_factory=lambda: settings.OUTPUT_DIR)
    seed: int = 0

    def stage(self, stage: Stage) -> StageConfig:
        return {Stage.PRETRAIN: self.pretrain, Stage.SOFT: self.soft, Stage.HARD: self.hard}[Stage(stage)]

    def to_dict(self) -> dict:
        data = {}
        for name in SECTIONS:
            value = getattr(self, name)
            data[name] = value.to_dict() if hasattr(value, "to_dict") else dataclasses.asdict(value)
        data["output_dir"] = str(self.output_dir)
        data["seed"] = self.seed
        return data


SECTIONS = {
    "data": DataSettings,
    "task": TaskSpec,
    "model": ModelConfig,
    "pretrain": StageConfig,
    "soft": StageConfig,
    "hard": StageConfig,
    "prune": PruneSettings,
    "sweep": SweepSettings,
    "bench": BenchConfig,
    "robust": RobustSettings,
}
TOP_LEVEL = {"output_dir", "seed"}
SEEDED = ("task", "pretrain", "soft", "hard", "bench")
# TOML spelling -> dataclass field
ALIASES = {"lambda": "lam"}


# ----------------------------------
# Overrides
# ----------------------------------

def parse_value(raw: str) -> Any:
    """Parses a TOML literal, falling back to a bare string."""
    try:
        return tomllib.loads(f"value = {raw}")["value"]
    except tomllib.TOMLDecodeError:
        return raw


def apply_override(tree: dict, assignment: str) -> None:
    key, sep, raw = assignment.partition("=")
    key = key.strip()
    if not sep or not key:
        raise ConfigError(f"override '{assignment}' is not of the form a.b=value")

    node = tree
    parts = key.split(".")
    for part in parts[:-1]:
        child = node.setdefault(part, {})
        if not isinstance(child, dict):
            raise ConfigError(f"override '{key}': '{part}' is not a section")
        node = child
    node[parts[-1]] = parse_value(raw.strip())


# ----------------------------------
# Building
# ----------------------------------

def _field_names(cls) -> set[str]:
    return {f.name for f in dataclasses.fields(cls)}


def _build_section(name: str, cls, values: dict) -> Any:
    allowed = _field_names(cls)
    kwargs = {}
    for key, value in values.items():
        target = ALIASES.get(key, key)
        if target not in allowed:
            raise ConfigError(f"unknown config key '{name}.{key}'")
        kwargs[target] = value

    if cls is TaskSpec and isinstance(kwargs.get("lengths"), dict):
        lengths = kwargs["lengths"]
        unknown = set(lengths) - _field_names(LengthDistribution)
        if unknown:
            raise ConfigError(f"unknown config key 'task.lengths.{sorted(unknown)[0]}'")
        kwargs["lengths"] = LengthDistribution(**lengths)

    if cls is StageConfig:
        kwargs.setdefault("stage", name)
        if name != Stage.SOFT.value:
            kwargs.setdefault("temperature", None)
            kwargs.setdefault("lam", 0.0)
        if kwargs.get("lam") is None:
            kwargs["lam"] = 0.0

    try:
        return cls(**kwargs)
    except ConfigError:
        raise
    except (TypeError, ValueError) as e:
        raise ConfigError(f"invalid [{name}] section: {e}") from e


def build_run_config(tree: dict) -> RunConfig:
    for key in tree:
        if key not in SECTIONS and key not in TOP_LEVEL:
            raise ConfigError(f"unknown config key '{key}'")

    seed = int(tree.get("seed", 0))
    sections = {}
    for name, cls in SECTIONS.items():
        values = dict(tree.get(name, {}))
        if not isinstance(tree.get(name, {}), dict):
            raise ConfigError(f"config key '{name}' must be a table")
        if name in SEEDED:
            values.setdefault("seed", seed)
        sections[name] = _build_section(name, cls, values)

    task, model = sections["task"], sections["model"]
    if task.vocab_size > model.vocab_size or task.n_max > model.n_max:
        raise ConfigError(
            f"task (vocab={task.vocab_size}, n_max={task.n_max}) does not fit the model "
            f"(vocab={model.vocab_size}, n_max={model.n_max})"
        )
    if task.num_classes != model.num_classes:
        raise ConfigError(f"task has {task.num_classes} classes, model has {model.num_classes}")

    output_dir = Path(tree.get("output_dir", settings.OUTPUT_DIR))
    return RunConfig(**sections, output_dir=output_dir, seed=seed)


def load_run_config(
    path: str | Path | None = None,
    overrides: Iterable[str] = (),
    output_dir: str | Path | None = None,
    seed: int | None = None,
) -> RunConfig:
    """
    Reads the TOML file (the packaged default when ``path`` is None and it
    exists), applies ``a.b=value`` overrides, then the explicit flags.
    A ``seed`` flag replaces every section seed.
    """
    tree: dict = {}
    source = Path(path) if path is not None else DEFAULT_CONFIG
    if path is not None and not source.exists():
        raise ConfigError(f"config file not found: {source}")
    if source.exists():
        try:
            with open(source, "rb") as f:
                tree = tomllib.load(f)
        except tomllib.TOMLDecodeError as e:
            raise ConfigError(f"cannot parse {source}: {e}") from e

    for assignment in overrides:
        apply_override(tree, assignment)

    if seed is not None:
        tree["seed"] = seed
        for name in SEEDED:
            section = tree.setdefault(name, {})
            if isinstance(section, dict):
                section["seed"] = seed
    if output_dir is not None:
        tree["output_dir"] = str(output_dir)

    cfg = build_run_config(tree)
    logger.info(f"Config loaded | source={source if source.exists() else 'defaults'} | seed={cfg.seed}")
    return cfg
