"""
Configuration utility functions

Run configurations are YAML files loaded with OmegaConf. A file may name one
or more parents through `__inherit__` (paths relative to the including file);
dotlist overrides such as `train.seed=3` are merged last. The result is
validated against the RunConfig schema, so unknown keys and mistyped values
are rejected before any work starts.
"""

import os
from dataclasses import dataclass, field
from typing import Any, List, Optional, Union

from omegaconf import DictConfig, ListConfig, OmegaConf
from omegaconf.errors import OmegaConfBaseException

from ..utils.constants import CONFIG_SNAPSHOT


class ConfigError(ValueError):
    """Configuration file or override does not match the schema."""


@dataclass
class EnvConfig:
    # cartpole | boat | finite
    name: str = "cartpole"
    # Builder-specific parameters, checked by the environment's own dataclass
    params: Any = field(default_factory=dict)


@dataclass
class SpecConfig:
    formula: Optional[str] = None
    ap: List[str] = field(default_factory=list)
    # Built-in automaton name or path to a .ldba file
    automaton: Optional[str] = None
    # upper (automaton of the formula) | lower (automaton of its negation)
    mode: str = "upper"
    epsilon_exclusive: bool = True


@dataclass
class LabelingConfig:
    # proposition -> list of boxes, each box a mapping dimension -> [lo, hi]
    regions: Any = field(default_factory=dict)
    # finite environments: per-state list of propositions
    table: Any = field(default_factory=list)
    radius: float = 0.0


@dataclass
class StageConfig:
    radius: float = 0.0
    # proposition -> boxes replacing the base region during this stage
    regions: Any = None
    zeta: Optional[float] = None
    episodes: Optional[int] = None


@dataclass
class CurriculumConfig:
    stages: List[StageConfig] = field(default_factory=list)
    critic_fraction: float = 0.25
    flat: bool = False


@dataclass
class TrainSection:
    zeta: float = 0.999
    episodes: int = 2000
    horizon: int = 500
    actor_lr: float = 8e-4
    critic_lr: float = 8e-4
    entropy_coef: float = 0.01
    batch_size: int = 16
    # mask | penalty
    invalid_actions: str = "mask"
    invalid_action_penalty: float = 0.0
    actor_hidden: List[int] = field(default_factory=lambda: [7, 7])
    critic_hidden: List[int] = field(default_factory=lambda: [7])
    estimate_samples: int = 256


@dataclass
class EvalConfig:
    trajectories: int = 10000
    horizon: int = 500
    epsilon: float = 0.01
    greedy: bool = False
    checkpoint: Optional[str] = None
    # state vectors at which the critic value is reported
    probe_states: Any = field(default_factory=list)
    # number of trajectories written to trajectories.csv
    trajectory_limit: int = 100


@dataclass
class RunConfig:
    env: EnvConfig = field(default_factory=EnvConfig)
    spec: SpecConfig = field(default_factory=SpecConfig)
    labeling: LabelingConfig = field(default_factory=LabelingConfig)
    curriculum: CurriculumConfig = field(default_factory=CurriculumConfig)
    train: TrainSection = field(default_factory=TrainSection)
    eval: EvalConfig = field(default_factory=EvalConfig)
    out_dir: str = "runs/default"
    seed: int = 0
    workers: int = 1


def load_config(path: str, argv: List[str] = None) -> DictConfig:
    """
    Load a run configuration. Will resolve inheritance, apply dotlist
    overrides and validate against RunConfig.
    """
    try:
        config = _load_raw(path)
        if argv:
            config = OmegaConf.merge(config, OmegaConf.from_dotlist(list(argv)))
        return OmegaConf.merge(OmegaConf.structured(RunConfig), config)
    except OmegaConfBaseException as e:
        raise ConfigError(f"{path}: {e}") from None


def _load_raw(path: str) -> DictConfig:
    if not os.path.isfile(path):
        raise ConfigError(f"config file not found: {path}")
    config = OmegaConf.load(path)
    if not isinstance(config, DictConfig):
        raise ConfigError(f"{path}: top level must be a mapping")
    return resolve_inheritance(config, os.path.dirname(os.path.abspath(path)))


def resolve_inheritance(config: DictConfig, base_dir: str) -> DictConfig:
    """
    Resolve inheritance if the config contains:
    __inherit__: path/to/parent.yaml or a ListConfig of such paths.
    Later parents override earlier ones; the child overrides all of them.
    """
    inherit = config.pop("__inherit__", None)
    if not inherit:
        return config

    inherit_list = inherit if isinstance(inherit, ListConfig) else [inherit]
    parent_config = None
    for parent_path in inherit_list:
        if not isinstance(parent_path, str):
            raise ConfigError(f"__inherit__ entries must be paths, got {parent_path!r}")
        if not os.path.isabs(parent_path):
            parent_path = os.path.join(base_dir, parent_path)
        parent = _load_raw(parent_path)
        parent_config = parent if parent_config is None else OmegaConf.merge(parent_config, parent)

    if len(config.keys()) > 0:
        return OmegaConf.merge(parent_config, config)
    return parent_config


def to_container(value: Union[DictConfig, ListConfig, Any]) -> Any:
    """Plain Python containers for the free-form sections (regions, params)."""
    if isinstance(value, (DictConfig, ListConfig)):
        return OmegaConf.to_container(value, resolve=True)
    return value


def save_config(config: DictConfig, run_dir: str) -> str:
    """Write the effective configuration into the run directory."""
    os.makedirs(run_dir, exist_ok=True)
    path = os.path.join(run_dir, CONFIG_SNAPSHOT)
    OmegaConf.save(config, path, resolve=True)
    return path
