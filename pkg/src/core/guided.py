"""
Specification-guided training over a curriculum of relaxed labellings.

Stages run from the most relaxed labelling to the exact one. The automaton
is completed once and shared by every stage; only the labeller (and ζ)
changes. The first stage trains actor and critic from scratch. Every later
stage first re-fits the critic with the actor frozen (learning rate 0), then
trains both.
"""

from contextlib import nullcontext
from dataclasses import dataclass, field, replace
from typing import Any, Callable, List, Mapping, Optional, Sequence

import numpy as np

from .a2c import A2CLearner, MetricsRow, TrainConfig, estimate_value, train
from .product import AugmentedProduct
from ..common.config import StageConfig
from ..envs.base import Environment
from ..envs.labeling import CurriculumError, Labeling, StageLabeler, parse_regions
from ..logic.automata import Ldba, accepts_lasso
from ..logic.ltl import LassoWord
from ..utils.debug import Debug


@dataclass
class Stage:
    labeler: Any
    zeta: float
    episodes: int
    radius: float = 0.0


@dataclass
class Curriculum:
    stages: List[Stage]
    critic_fraction: float = 0.25

    @property
    def total_episodes(self) -> int:
        return sum(stage.episodes for stage in self.stages)


@dataclass
class StageResult:
    stage: int
    radius: float
    zeta: float
    episodes: int
    estimate: float
    probe_estimates: List[float] = field(default_factory=list)


@dataclass
class GuidedResult:
    learner: A2CLearner
    stages: List[StageResult]
    metrics: List[MetricsRow]

    @property
    def estimate(self) -> float:
        return self.stages[-1].estimate


def _stage_field(stage: Any, name: str, default=None):
    if isinstance(stage, Mapping):
        return stage.get(name, default)
    return getattr(stage, name, default)


def build_curriculum(
    base,
    stages: Sequence[Any],
    cfg: TrainConfig,
    critic_fraction: float = 0.25,
) -> Curriculum:
    """
    Stage labellers, ζ values and budgets from stage records (StageConfig,
    dicts or DictConfig nodes), most relaxed first.

    Raises:
        CurriculumError: empty curriculum, relaxation on a table labelling,
            bad ζ schedule, non-nested or repeated stages, inexact last stage
    """
    if not stages:
        stages = [StageConfig()]
    if not 0 <= critic_fraction < 1:
        raise CurriculumError(f"critic_fraction must lie in [0, 1), got {critic_fraction}")

    m = len(stages) - 1
    default_budget, remainder = divmod(cfg.episodes, m + 1)
    built: List[Stage] = []
    for i, record in enumerate(stages):
        radius = float(_stage_field(record, "radius", 0.0) or 0.0)
        regions = _stage_field(record, "regions")
        if isinstance(base, Labeling):
            overrides = parse_regions(regions, base.dims) if regions else None
            labeler = StageLabeler(base, radius, overrides)
        elif radius > 0 or regions:
            raise CurriculumError("finite table labellings support only the exact stage (radius 0, no regions)")
        else:
            labeler = base

        zeta = _stage_field(record, "zeta")
        if zeta is not None and not 0 < float(zeta) < 1:
            raise CurriculumError(f"stage {i}: zeta must lie in (0, 1), got {zeta}")
        episodes = _stage_field(record, "episodes")
        if episodes is None:
            episodes = default_budget + (remainder if i == m else 0)
        built.append(Stage(labeler, float(cfg.zeta if zeta is None else zeta), int(episodes), radius))

    curriculum = Curriculum(built, critic_fraction)
    validate_curriculum(curriculum)
    return curriculum


def _is_exact(labeler) -> bool:
    return not isinstance(labeler, StageLabeler) or labeler.is_exact


def validate_curriculum(curriculum: Curriculum) -> None:
    stages = curriculum.stages
    if not stages:
        raise CurriculumError("curriculum has no stages")
    if not _is_exact(stages[-1].labeler):
        raise CurriculumError("the last stage must use the exact labelling (radius 0, overrides equal to the base regions)")
    for i, (earlier, later) in enumerate(zip(stages, stages[1:]), start=1):
        if later.zeta < earlier.zeta:
            raise CurriculumError(f"stage {i}: zeta schedule must be nondecreasing ({earlier.zeta} -> {later.zeta})")
        if not isinstance(later.labeler, StageLabeler):
            raise CurriculumError(f"stage {i} repeats the exact labelling of stage {i - 1}")
        if not later.labeler.nested_in(earlier.labeler):
            raise CurriculumError(f"stage {i} is not nested in stage {i - 1}; relaxations must shrink towards the exact labelling")
        if earlier.labeler.nested_in(later.labeler):
            raise CurriculumError(f"stage {i} repeats the relaxation of stage {i - 1}")
    for i, stage in enumerate(stages):
        if stage.episodes < 0:
            raise CurriculumError(f"stage {i}: negative episode budget {stage.episodes}")


def stage_label_fn(curriculum: Curriculum, stage: int):
    """Labeller of a stage: Λ_r with region overrides, or Λ itself for the exact stage."""
    if not 0 <= stage < len(curriculum.stages):
        raise IndexError(f"stage {stage} outside curriculum of {len(curriculum.stages)} stages")
    return curriculum.stages[stage].labeler


def guided_train(
    env: Environment,
    automaton: Ldba,
    curriculum: Curriculum,
    cfg: TrainConfig,
    epsilon_exclusive: bool = True,
    probe_states: Sequence[np.ndarray] = (),
    flat: bool = False,
    debug: Optional[Debug] = None,
    on_stage_end: Optional[Callable[[StageResult, A2CLearner], None]] = None,
    on_batch: Optional[Callable[[MetricsRow], None]] = None,
) -> GuidedResult:
    """
    Train through the curriculum and return the learner with per-stage estimates.

    With flat=True only the exact stage is trained, on the whole budget of
    the curriculum. A single-stage curriculum behaves exactly like `train`
    with the same seed.
    """
    automaton = automaton.completed()
    stages = curriculum.stages
    if flat:
        last = stages[-1]
        stages = [Stage(last.labeler, last.zeta, curriculum.total_episodes, last.radius)]

    learner: Optional[A2CLearner] = None
    results: List[StageResult] = []
    metrics: List[MetricsRow] = []
    for i, stage in enumerate(stages):
        ap = AugmentedProduct(env, automaton, stage.labeler, stage.zeta, cfg.mode, epsilon_exclusive)
        assert ap.automaton is automaton
        stage_cfg = replace(cfg, zeta=stage.zeta, episodes=stage.episodes)
        if debug:
            debug.log(f"Stage {i}/{len(stages) - 1}: radius {stage.radius}, zeta {stage.zeta}, {stage.episodes} episodes", category="stage", force=True)

        with debug.timer(f"stage {i}") if debug else nullcontext():
            if learner is None:
                result = train(ap, stage_cfg, stream_key=(), stage=i, phase="joint", debug=debug, on_batch=on_batch)
                learner = result.learner
                metrics.extend(result.metrics)
            else:
                n_critic = int(round(stage.episodes * curriculum.critic_fraction))
                learner.set_learning_rates(0.0, cfg.critic_lr)
                critic_phase = train(ap, replace(stage_cfg, episodes=n_critic), learner, (i, 0), i, "critic", debug, on_batch)
                learner.set_learning_rates(cfg.actor_lr, cfg.critic_lr)
                result = train(ap, replace(stage_cfg, episodes=stage.episodes - n_critic), learner, (i, 1), i, "joint", debug, on_batch)
                metrics.extend(critic_phase.metrics + result.metrics)

        probes = estimate_value(learner, ap, probe_states).tolist() if len(probe_states) else []
        stage_result = StageResult(i, stage.radius, stage.zeta, stage.episodes, result.estimate, probes)
        results.append(stage_result)
        if debug:
            debug.log(f"Stage {i} estimate: {result.estimate:.4f}", category="stage", force=True, indent_level=1)
        if on_stage_end is not None:
            on_stage_end(stage_result, learner)

    return GuidedResult(learner, results, metrics)


def relaxation_chain_violations(
    automaton: Ldba,
    trajectories: Sequence[Sequence[np.ndarray]],
    labelers: Sequence[Any],
) -> List[tuple]:
    """
    Re-label each trajectory with consecutive labellers (most relaxed first)
    and report (trajectory, stage) pairs where the word accepted under the
    stricter labelling is rejected under the more relaxed one. Words are
    closed by repeating their last letter.

    Negated builtin automata complement their formula over sets of letter
    atoms, so for them the chain holds with the labellers reversed.
    """
    automaton = automaton.completed()
    violations = []
    for index, states in enumerate(trajectories):
        if len(states) == 0:
            continue
        accepted = []
        for labeler in labelers:
            letters = [labeler(s) for s in states]
            accepted.append(accepts_lasso(automaton, LassoWord(tuple(letters[:-1]), (letters[-1],))))
        for k in range(len(labelers) - 1):
            if accepted[k + 1] and not accepted[k]:
                violations.append((index, k + 1))
    return violations
