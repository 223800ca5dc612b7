"""Shared fixtures: labellings, finite fixtures and small training configurations."""

import os

import numpy as np
import pytest

from src.core.a2c import TrainConfig
from src.envs.base import FiniteMdpEnvironment
from src.envs.boat import BOAT_DIMS, default_boat_regions
from src.envs.cartpole import CARTPOLE_DIMS, default_cartpole_regions
from src.envs.finite import reach_fixture
from src.envs.labeling import Labeling, TableLabeling
from src.logic.automata import load_automaton_file

REPO_ROOT = os.path.dirname(os.path.dirname(os.path.abspath(__file__)))


@pytest.fixture
def repo_root() -> str:
    return REPO_ROOT


@pytest.fixture
def config_path():
    def resolve(name: str) -> str:
        return os.path.join(REPO_ROOT, "configs", name)
    return resolve


@pytest.fixture
def example_automaton():
    def load(name: str):
        return load_automaton_file(os.path.join(REPO_ROOT, "docs", "examples", f"{name}.ldba"))
    return load


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def cartpole_labeling() -> Labeling:
    return Labeling.from_config(CARTPOLE_DIMS, default_cartpole_regions())


@pytest.fixture
def boat_labeling() -> Labeling:
    return Labeling.from_config(BOAT_DIMS, default_boat_regions())


@pytest.fixture
def reach_problem():
    """Reach fixture (target sink w.p. 0.7) as an environment plus its table labelling."""
    mdp, table = reach_fixture(0.7)
    return FiniteMdpEnvironment(mdp), TableLabeling(table), mdp, table


@pytest.fixture
def small_cfg():
    def make(**overrides) -> TrainConfig:
        values = dict(
            zeta=0.9,
            episodes=64,
            horizon=30,
            actor_lr=0.01,
            critic_lr=0.01,
            batch_size=16,
            estimate_samples=8,
        )
        values.update(overrides)
        return TrainConfig(**values)
    return make
