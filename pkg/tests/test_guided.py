"""
Tests for curriculum construction, stage labellers and guided training.
"""

import numpy as np
import pytest
import torch

from src.common.config import load_config
from src.core import guided
from src.core.a2c import train
from src.core.guided import (
    build_curriculum,
    guided_train,
    relaxation_chain_violations,
    stage_label_fn,
)
from src.core.product import AugmentedProduct, BoundMode, ProductState, product_step
from src.core.run import run_training
from src.envs.boat import Boat
from src.envs.cartpole import CartPole
from src.envs.labeling import CurriculumError
from src.logic.automata import builtin_automata

BOAT_STAGES = [
    {"regions": {"t": [{"x": [200.0, 200.0], "y": [50.0, 150.0]}]}},
    {},
]

CARTPOLE_STAGES = [
    {"regions": {"a": [{"position": [-1.0, 1.0]}]}},
    {"regions": {"a": [{"position": [0.01, 1.0]}]}},
    {},
]


# ======================== Helpers ========================

def reach_set(lo):
    return {"regions": {"a": [{"position": [lo, 1.0]}]}}


def random_cartpole_states(rng, n):
    return [rng.uniform([-1.2, -1.0, -0.3, -1.0], [1.2, 1.0, 0.3, 1.0]) for _ in range(n)]


def cartpole_trajectories(rng, count, length):
    env = CartPole()
    trajectories = []
    for _ in range(count):
        s = env.sample_initial(rng)
        states = [s]
        for _ in range(length - 1):
            s = env.sample_next(s, env.inputs[int(rng.integers(len(env.inputs)))], rng)
            states.append(s)
        trajectories.append(states)
    return trajectories


def tiny_cfg(small_cfg, **overrides):
    values = dict(zeta=0.99, episodes=48, horizon=20, batch_size=8, estimate_samples=4)
    values.update(overrides)
    return small_cfg(**values)


# ======================== Curriculum ========================

class TestBuildCurriculum:
    def test_cartpole_stages(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg(episodes=100))
        assert [stage.episodes for stage in curriculum.stages] == [33, 33, 34]
        assert curriculum.total_episodes == 100
        assert [stage.zeta for stage in curriculum.stages] == [0.9, 0.9, 0.9]
        assert curriculum.stages[-1].labeler.is_exact
        assert not curriculum.stages[0].labeler.is_exact

    def test_explicit_budgets_and_zetas(self, cartpole_labeling, small_cfg):
        stages = [{**reach_set(-1.0), "zeta": 0.9, "episodes": 10}, {"zeta": 0.99, "episodes": 20}]
        curriculum = build_curriculum(cartpole_labeling, stages, small_cfg())
        assert [(s.zeta, s.episodes) for s in curriculum.stages] == [(0.9, 10), (0.99, 20)]

    def test_no_stages_means_the_exact_labelling(self, reach_problem, small_cfg):
        _, labeling, _, _ = reach_problem
        curriculum = build_curriculum(labeling, [], small_cfg())
        assert len(curriculum.stages) == 1
        assert curriculum.stages[0].labeler is labeling
        assert curriculum.stages[0].episodes == 64

    def test_radius_stage(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, [{"radius": 0.05}, {}], small_cfg())
        assert curriculum.stages[0].radius == 0.05
        assert curriculum.stages[0].labeler.radius == 0.05

    def test_decreasing_zeta(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError, match="nondecreasing"):
            build_curriculum(cartpole_labeling, [{**reach_set(-1.0), "zeta": 0.99}, {"zeta": 0.9}], small_cfg())

    def test_zeta_outside_the_open_interval(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError):
            build_curriculum(cartpole_labeling, [{"zeta": 1.0}], small_cfg())

    def test_stages_must_shrink(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError, match="not nested"):
            build_curriculum(cartpole_labeling, [reach_set(0.01), reach_set(-1.0), {}], small_cfg())

    def test_last_stage_must_be_exact(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError, match="last stage"):
            build_curriculum(cartpole_labeling, [reach_set(-1.0)], small_cfg())

    def test_repeated_stage(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError, match="repeats"):
            build_curriculum(cartpole_labeling, [reach_set(-1.0), reach_set(-1.0), {}], small_cfg())
        with pytest.raises(CurriculumError, match="repeats"):
            build_curriculum(cartpole_labeling, [{}, {}], small_cfg())

    def test_table_labelling_has_no_relaxations(self, reach_problem, small_cfg):
        _, labeling, _, _ = reach_problem
        with pytest.raises(CurriculumError):
            build_curriculum(labeling, [{"radius": 0.1}, {}], small_cfg())
        with pytest.raises(CurriculumError, match="repeats"):
            build_curriculum(labeling, [{}, {}], small_cfg())

    def test_override_must_contain_the_base_region(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError):
            build_curriculum(cartpole_labeling, [reach_set(0.6), {}], small_cfg())

    def test_bad_parameters(self, cartpole_labeling, small_cfg):
        with pytest.raises(CurriculumError):
            build_curriculum(cartpole_labeling, [{}], small_cfg(), critic_fraction=1.0)
        with pytest.raises(CurriculumError):
            build_curriculum(cartpole_labeling, [{"radius": -0.1}, {}], small_cfg())


class TestStageLabels:
    def test_labels_shrink_stage_by_stage(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg())
        rng = np.random.default_rng(0)
        for s in random_cartpole_states(rng, 500):
            labels = [stage_label_fn(curriculum, k)(s) for k in range(3)]
            assert labels[2] <= labels[1] <= labels[0]
            assert labels[2] == {cartpole_labeling.label(s)}

    def test_relaxed_reach_set(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg())
        s = np.array([-0.5, 0.0, 0.0, 0.0])
        assert stage_label_fn(curriculum, 0)(s) == {"L_c1_c2", "L_a_c1_c2"}
        assert stage_label_fn(curriculum, 1)(s) == {"L_c1_c2"}

    @pytest.mark.parametrize(
        "study, stages, s",
        [
            ("cartpole", CARTPOLE_STAGES, [0.2, 0.0, 0.0, 0.0]),
            ("boat", BOAT_STAGES, [200.0, 70.0, 0.0, 0.0, 0.0, 0.0]),
        ],
    )
    def test_relaxed_first_stage_makes_the_negated_objective_harder(
        self, study, stages, s, cartpole_labeling, boat_labeling, small_cfg
    ):
        env, labeling = (CartPole(), cartpole_labeling) if study == "cartpole" else (Boat(), boat_labeling)
        curriculum = build_curriculum(labeling, stages, small_cfg())
        s = np.array(s)

        def first_step(stage):
            labeler = stage_label_fn(curriculum, stage)
            ap = AugmentedProduct(env, builtin_automata()[f"{study}_neg"], labeler, 1e-6, mode=BoundMode.lower)
            return product_step(ap, ProductState(s, ap.automaton.initial), 0, np.random.default_rng(0))

        # The exact letter keeps the negated objective on its accepting loop
        _, reached_phi = first_step(len(stages) - 1)
        assert reached_phi

        x, reached_phi = first_step(0)
        assert not reached_phi
        assert x.q == 1

    def test_stage_index_out_of_range(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg())
        with pytest.raises(IndexError):
            stage_label_fn(curriculum, 3)
        with pytest.raises(IndexError):
            stage_label_fn(curriculum, -1)


# ======================== Guided training ========================

class TestGuidedTrain:
    def test_single_stage_matches_plain_training(self, reach_problem, small_cfg):
        env, labeling, _, _ = reach_problem
        automaton = builtin_automata()["boat_pos"]
        cfg = small_cfg(seed=4)
        guided_result = guided_train(env, automaton, build_curriculum(labeling, [], cfg), cfg)
        plain = train(AugmentedProduct(env, automaton, labeling, cfg.zeta), cfg)
        assert [m.estimate for m in guided_result.metrics] == [m.estimate for m in plain.metrics]
        assert guided_result.estimate == plain.estimate
        for a, b in zip(guided_result.learner.critic.parameters(), plain.learner.critic.parameters()):
            assert torch.equal(a, b)

    def test_actor_is_frozen_while_the_critic_refits(self, cartpole_labeling, small_cfg, monkeypatch):
        automaton = builtin_automata()["cartpole_pos"]
        cfg = tiny_cfg(small_cfg)
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, cfg)
        calls = []
        real_train = guided.train

        def spy(ap, stage_cfg, learner=None, stream_key=(), stage=0, phase="joint", *args, **kwargs):
            before = None if learner is None else [p.detach().clone() for p in learner.actor.parameters()]
            result = real_train(ap, stage_cfg, learner, stream_key, stage, phase, *args, **kwargs)
            frozen = before is not None and all(torch.equal(a, b) for a, b in zip(before, result.learner.actor.parameters()))
            calls.append((stage, phase, tuple(stream_key), stage_cfg.episodes, ap.automaton, frozen))
            return result

        monkeypatch.setattr(guided, "train", spy)
        result = guided_train(CartPole(), automaton, curriculum, cfg)

        assert [(c[0], c[1], c[2], c[3]) for c in calls] == [
            (0, "joint", (), 16),
            (1, "critic", (1, 0), 4),
            (1, "joint", (1, 1), 12),
            (2, "critic", (2, 0), 4),
            (2, "joint", (2, 1), 12),
        ]
        assert all(c[5] for c in calls if c[1] == "critic")
        assert not any(c[5] for c in calls if c[1] == "joint" and c[0] > 0)
        assert all(c[4] is calls[0][4] for c in calls)
        assert result.learner.actor_lr == cfg.actor_lr
        assert [s.stage for s in result.stages] == [0, 1, 2]

    def test_flat_run_uses_the_whole_budget(self, cartpole_labeling, small_cfg):
        cfg = tiny_cfg(small_cfg)
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, cfg)
        result = guided_train(CartPole(), builtin_automata()["cartpole_pos"], curriculum, cfg, flat=True)
        assert len(result.stages) == 1
        assert result.stages[0].episodes == 48
        assert result.stages[0].radius == 0.0
        assert result.metrics[-1].episode == 48

    def test_stage_callback_and_probes(self, cartpole_labeling, small_cfg):
        cfg = tiny_cfg(small_cfg)
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, cfg)
        seen = []
        result = guided_train(
            CartPole(),
            builtin_automata()["cartpole_pos"],
            curriculum,
            cfg,
            probe_states=[np.zeros(4), np.array([0.5, 0.0, 0.0, 0.0])],
            on_stage_end=lambda stage, learner: seen.append(stage.stage),
        )
        assert seen == [0, 1, 2]
        assert all(len(stage.probe_estimates) == 2 for stage in result.stages)
        assert all(np.isfinite(stage.estimate) for stage in result.stages)


# ======================== Relaxation chain ========================

class TestRelaxationChain:
    def test_cartpole_curriculum_has_no_violations(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg())
        labelers = [stage.labeler for stage in curriculum.stages]
        trajectories = cartpole_trajectories(np.random.default_rng(1), 100, 40)
        assert relaxation_chain_violations(builtin_automata()["cartpole_pos"], trajectories, labelers) == []

    def test_negated_automaton_follows_the_reverse_chain(self, cartpole_labeling, small_cfg):
        curriculum = build_curriculum(cartpole_labeling, CARTPOLE_STAGES, small_cfg())
        labelers = [stage.labeler for stage in curriculum.stages]
        trajectories = cartpole_trajectories(np.random.default_rng(1), 100, 40)
        negated = builtin_automata()["cartpole_neg"]
        assert relaxation_chain_violations(negated, trajectories, labelers[::-1]) == []

    def test_constructed_violation(self):
        labelers = [lambda s: frozenset({"L_none"}), lambda s: frozenset({"L_t"})]
        trajectories = [[np.zeros(2)] * 3, []]
        violations = relaxation_chain_violations(builtin_automata()["boat_pos"], trajectories, labelers)
        assert violations == [(0, 1)]


# ======================== Case studies ========================

def case_study_config(config_path, name, out_dir, *overrides):
    budget = [
        f"out_dir={out_dir}",
        "train.batch_size=16",
        "train.critic_lr=0.02",
        "train.estimate_samples=16",
    ]
    return load_config(config_path(name), budget + list(overrides))


class TestCaseStudies:
    # Within 60 steps the boat cannot cross the river, so every step of the
    # negated objective is accepting and each stage's lower bound is ζ^60.

    @pytest.mark.slow
    def test_boat_stage_estimates_follow_the_zeta_schedule(self, config_path, tmp_path):
        config = case_study_config(config_path, "boat.yaml", tmp_path / "boat", "train.episodes=4000", "train.horizon=60")
        result = run_training(config, guided=True)

        assert [s.zeta for s in result.stages] == [0.995, 0.9965, 0.998, 0.9995, 0.9999]
        estimates = np.array([s.probe_estimates for s in result.stages])
        assert estimates.shape == (5, 3)
        for y0 in range(3):
            assert np.all(np.diff(estimates[:, y0]) >= -0.1), estimates[:, y0]
            assert estimates[-1, y0] - estimates[0, y0] > 0.1
        assert estimates[-1].mean() == pytest.approx(0.9999 ** 60, abs=0.1)
        assert (tmp_path / "boat" / "stages.csv").exists()

    @pytest.mark.slow
    def test_boat_curriculum_against_flat_training(self, config_path, tmp_path):
        overrides = ["train.episodes=4000", "train.horizon=60"]
        curriculum = run_training(case_study_config(config_path, "boat.yaml", tmp_path / "guided", *overrides), guided=True)
        flat = run_training(
            case_study_config(config_path, "boat.yaml", tmp_path / "flat", *overrides, "curriculum.flat=true"), guided=True
        )

        assert len(flat.stages) == 1
        assert flat.stages[0].episodes == sum(s.episodes for s in curriculum.stages)
        assert flat.stages[0].zeta == curriculum.stages[-1].zeta
        assert curriculum.stages[0].estimate < flat.estimate - 0.1
        assert curriculum.estimate == pytest.approx(flat.estimate, abs=0.15)

    @pytest.mark.slow
    def test_cartpole_curriculum_gives_a_nonzero_lower_bound(self, config_path, tmp_path):
        config = case_study_config(config_path, "cartpole.yaml", tmp_path / "cartpole", "train.episodes=960", "train.horizon=30")
        result = run_training(config, guided=True)

        assert [s.stage for s in result.stages] == [0, 1, 2]
        assert [s.episodes for s in result.stages] == [320, 320, 320]
        assert result.estimate > 0.5
        assert all(value > 0.5 for value in result.stages[-1].probe_estimates)
        for stage in range(3):
            assert (tmp_path / "cartpole" / f"stage_{stage}" / "actor.safetensors").exists()
