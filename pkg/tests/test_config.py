"""
Tests for YAML loading, inheritance, dotlist overrides and schema validation.
"""

import os

import pytest
from omegaconf import OmegaConf

from src.common.config import ConfigError, load_config, save_config
from src.core.guided import build_curriculum
from src.core.run import build_problem, train_config_from


# ======================== Helpers ========================

def write(path, text):
    path.write_text(text, encoding="utf-8")
    return str(path)


# ======================== Loading ========================

class TestLoadConfig:
    def test_inherits_the_base_defaults(self, config_path):
        config = load_config(config_path("cartpole.yaml"))
        assert config.env.name == "cartpole"
        assert config.spec.mode == "lower"
        assert config.train.zeta == 0.999
        assert config.train.entropy_coef == 0.01
        assert config.curriculum.critic_fraction == 0.25
        assert len(config.curriculum.stages) == 3

    def test_child_overrides_parent(self, tmp_path):
        write(tmp_path / "parent.yaml", "seed: 1\ntrain:\n  episodes: 10\n  horizon: 7\n")
        child = write(tmp_path / "child.yaml", "__inherit__: parent.yaml\ntrain:\n  episodes: 20\n")
        config = load_config(child)
        assert config.seed == 1
        assert config.train.episodes == 20
        assert config.train.horizon == 7

    def test_later_parents_win(self, tmp_path):
        write(tmp_path / "a.yaml", "seed: 1\nworkers: 3\n")
        write(tmp_path / "b.yaml", "seed: 2\n")
        child = write(tmp_path / "child.yaml", "__inherit__: [a.yaml, b.yaml]\n")
        config = load_config(child)
        assert config.seed == 2 and config.workers == 3

    def test_dotlist_overrides(self, config_path):
        config = load_config(config_path("fixture.yaml"), ["train.episodes=5", "seed=9", "spec.mode=lower"])
        assert config.train.episodes == 5
        assert config.seed == 9
        assert train_config_from(config).mode.value == "lower"

    def test_stage_defaults(self, config_path):
        stage = load_config(config_path("cartpole.yaml")).curriculum.stages[2]
        assert stage.radius == 0.0
        assert stage.zeta is None and stage.episodes is None and stage.regions is None


class TestValidation:
    def test_unknown_key(self, config_path):
        with pytest.raises(ConfigError):
            load_config(config_path("fixture.yaml"), ["train.momentum=0.9"])

    def test_wrong_type(self, tmp_path):
        path = write(tmp_path / "bad.yaml", "train:\n  episodes: lots\n")
        with pytest.raises(ConfigError):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="not found"):
            load_config(str(tmp_path / "absent.yaml"))

    def test_missing_parent(self, tmp_path):
        child = write(tmp_path / "child.yaml", "__inherit__: nowhere.yaml\n")
        with pytest.raises(ConfigError):
            load_config(child)

    def test_top_level_must_be_a_mapping(self, tmp_path):
        with pytest.raises(ConfigError):
            load_config(write(tmp_path / "list.yaml", "- 1\n- 2\n"))

    def test_unknown_environment(self, config_path):
        config = load_config(config_path("fixture.yaml"), ["env.name=pendulum"])
        with pytest.raises(ValueError):
            build_problem(config)

    def test_unknown_environment_parameter(self, config_path):
        config = load_config(config_path("fixture.yaml"), ["env.params.gravity=9.8"])
        with pytest.raises(ValueError, match="unknown parameters"):
            build_problem(config)


class TestSnapshot:
    def test_saved_config_reloads_identically(self, config_path, tmp_path):
        config = load_config(config_path("boat.yaml"), ["seed=4"])
        path = save_config(config, str(tmp_path / "run"))
        assert os.path.basename(path) == "config.yaml"
        reloaded = load_config(path)
        assert OmegaConf.to_container(reloaded) == OmegaConf.to_container(config)


class TestShippedConfigs:
    @pytest.mark.parametrize("name", ["cartpole.yaml", "boat.yaml", "fixture.yaml"])
    def test_problem_and_curriculum_build(self, config_path, name):
        config = load_config(config_path(name))
        problem = build_problem(config)
        curriculum = build_curriculum(
            problem.labeling, list(config.curriculum.stages), problem.train_cfg, config.curriculum.critic_fraction
        )
        assert curriculum.total_episodes == config.train.episodes
        assert curriculum.stages[-1].zeta >= curriculum.stages[0].zeta
