"""
Run orchestration behind the command line.

Turns a validated RunConfig into an environment, labelling, automaton and
training configuration, drives training / evaluation, and lays out the run
directory:

    <out_dir>/config.yaml
    <out_dir>/stage_<i>/actor.safetensors, critic.safetensors
    <out_dir>/metrics.csv, stages.csv
    <out_dir>/trajectories.csv, summary.csv
"""

import os
from contextlib import nullcontext
from dataclasses import dataclass
from typing import Any, List, Optional, Tuple

import numpy as np
from omegaconf import DictConfig

from .a2c import A2CLearner, MetricsRow, TrainConfig, estimate_value, train
from .checkpoint import load_learner_weights, save_learner
from .guided import GuidedResult, StageResult, build_curriculum, guided_train
from .oracle import (
    HoeffdingResult,
    SatisfactionReport,
    hoeffding_lower,
    monte_carlo_satisfaction,
    write_csv,
    write_summary_csv,
    write_trajectories_csv,
)
from .product import AugmentedProduct, BoundMode
from ..common.config import save_config, to_container
from ..common.seed import set_seed
from ..envs.base import Environment
from ..envs.labeling import Labeling, StageLabeler
from ..logic.automata import Ldba, accepts_lasso, resolve_automaton
from ..logic.ltl import (
    LtlFormula,
    eval_lasso,
    interpret_over_alphabet,
    neg,
    negation_over_alphabet,
    parse_ltl,
    random_lasso,
    to_pnf,
)
from ..utils.constants import METRICS_CSV, STAGES_CSV, SUMMARY_CSV, TRAJECTORIES_CSV
from ..utils.debug import Debug
from ..utils.env_registry import build_environment, build_labeling, get_env_info

METRICS_HEADER = ["stage", "phase", "episode", "return_mean", "actor_loss", "critic_loss", "estimate"]


@dataclass
class Problem:
    env: Environment
    labeling: Any
    automaton: Ldba
    formula: Optional[LtlFormula]
    train_cfg: TrainConfig
    mode: BoundMode
    epsilon_exclusive: bool


def train_config_from(config: DictConfig) -> TrainConfig:
    t = config.train
    return TrainConfig(
        zeta=t.zeta,
        episodes=t.episodes,
        horizon=t.horizon,
        actor_lr=t.actor_lr,
        critic_lr=t.critic_lr,
        seed=config.seed,
        entropy_coef=t.entropy_coef,
        invalid_actions=t.invalid_actions,
        invalid_action_penalty=t.invalid_action_penalty,
        mode=BoundMode(config.spec.mode),
        batch_size=t.batch_size,
        actor_hidden=tuple(t.actor_hidden),
        critic_hidden=tuple(t.critic_hidden),
        estimate_samples=t.estimate_samples,
        workers=config.workers,
    )


def build_problem(config: DictConfig, debug: Optional[Debug] = None) -> Problem:
    """
    Raises:
        ValueError: unknown environment or parameters, formula or automaton
            errors, or no automaton available for the selected mode
    """
    name = config.env.name
    info = get_env_info(name)
    env, default_table = build_environment(name, to_container(config.env.params))
    ap = list(config.spec.ap) or None
    labeling = build_labeling(
        name, env, to_container(config.labeling.regions), to_container(config.labeling.table), ap, default_table
    )
    if debug:
        debug.log(f"Environment '{name}': {env.state_dim} dimensions, {len(env.inputs)} inputs, {len(labeling.letters)} letters", category="env")

    text = config.spec.formula or info.formula
    formula = parse_ltl(text, labeling.ap) if text else None

    mode = BoundMode(config.spec.mode)
    automaton_name = config.spec.automaton or info.automata[0 if mode == BoundMode.upper else 1]
    if not automaton_name:
        raise ValueError(f"no automaton configured for '{name}' in {mode.value} mode; set spec.automaton")
    automaton = resolve_automaton(automaton_name)
    if debug:
        debug.log(f"Automaton '{automaton.name}': {automaton.n_states} states, {len(automaton.accepting)} accepting transitions", category="automaton")

    return Problem(env, labeling, automaton, formula, train_config_from(config), mode, config.spec.epsilon_exclusive)


def base_labeler(problem: Problem, radius: float = 0.0):
    if radius > 0:
        if not isinstance(problem.labeling, Labeling):
            raise ValueError("relaxation radius needs a box labelling")
        return StageLabeler(problem.labeling, radius)
    return problem.labeling


def make_product(problem: Problem, radius: float = 0.0, zeta: Optional[float] = None) -> AugmentedProduct:
    return AugmentedProduct(
        problem.env,
        problem.automaton,
        base_labeler(problem, radius),
        problem.train_cfg.zeta if zeta is None else zeta,
        problem.mode,
        problem.epsilon_exclusive,
    )


def probe_states(config: DictConfig) -> List[np.ndarray]:
    return [np.asarray(s, dtype=np.float64) for s in to_container(config.eval.probe_states) or []]


# ---------------------------------------------------------------------------
# translate
# ---------------------------------------------------------------------------

@dataclass
class TranslationReport:
    pnf: LtlFormula
    letter_formula: LtlFormula
    lassos: int
    mismatches: Optional[int]

    @property
    def passed(self) -> bool:
        return self.mismatches == 0


def translate(problem: Problem, n_lassos: int = 2000, seed: int = 0, check: bool = True) -> TranslationReport:
    """
    PNF of the formula (negated in lower mode) and its reinterpretation over
    the labelling's letters; optionally the lasso agreement check against the
    configured automaton.

    In lower mode the negation is taken after the reinterpretation, so the
    automaton is checked against the complement of the positive reading on
    every set of letter atoms.
    """
    if problem.formula is None:
        raise ValueError("no formula configured; set spec.formula")
    if problem.mode == BoundMode.upper:
        pnf = to_pnf(problem.formula)
        psi_bar = interpret_over_alphabet(pnf, problem.labeling.letters)
    else:
        pnf = to_pnf(neg(problem.formula))
        psi_bar = negation_over_alphabet(problem.formula, problem.labeling.letters)
    if not check:
        return TranslationReport(pnf, psi_bar, 0, None)

    rng = np.random.default_rng(seed)
    mismatches = 0
    for _ in range(n_lassos):
        w = random_lasso(rng, letters=problem.automaton.alphabet)
        if accepts_lasso(problem.automaton, w) != eval_lasso(psi_bar, w):
            mismatches += 1
    return TranslationReport(pnf, psi_bar, n_lassos, mismatches)


# ---------------------------------------------------------------------------
# train / guided-train
# ---------------------------------------------------------------------------

def _metrics_rows(rows: List[MetricsRow]) -> List[list]:
    return [[r.stage, r.phase, r.episode, r.return_mean, r.actor_loss, r.critic_loss, r.estimate] for r in rows]


def _stage_dir(out_dir: str, stage: int) -> str:
    return os.path.join(out_dir, f"stage_{stage}")


def _write_stages(out_dir: str, results: List[StageResult]) -> None:
    n_probes = max((len(r.probe_estimates) for r in results), default=0)
    header = ["stage", "radius", "zeta", "episodes", "estimate"] + [f"probe_{k}" for k in range(n_probes)]
    rows = [[r.stage, r.radius, r.zeta, r.episodes, r.estimate, *r.probe_estimates] for r in results]
    write_csv(os.path.join(out_dir, STAGES_CSV), header, rows)


def run_training(config: DictConfig, guided: bool, debug: Optional[Debug] = None) -> GuidedResult:
    """
    Plain training (a single exact stage, optionally at labeling.radius) or
    curriculum training. Checkpoints, metrics and stage estimates go to the
    run directory.
    """
    out_dir = config.out_dir
    save_config(config, out_dir)
    problem = build_problem(config, debug)
    cfg = problem.train_cfg
    probes = probe_states(config)

    def on_stage_end(result: StageResult, learner: A2CLearner) -> None:
        save_learner(learner, _stage_dir(out_dir, result.stage), {"stage": result.stage, "zeta": result.zeta}, debug)

    if guided:
        curriculum = build_curriculum(
            problem.labeling,
            list(config.curriculum.stages),
            cfg,
            config.curriculum.critic_fraction,
        )
        result = guided_train(
            problem.env,
            problem.automaton,
            curriculum,
            cfg,
            problem.epsilon_exclusive,
            probes,
            flat=config.curriculum.flat,
            debug=debug,
            on_stage_end=on_stage_end,
        )
    else:
        ap = make_product(problem, config.labeling.radius)
        trained = train(ap, cfg, debug=debug)
        stage = StageResult(0, config.labeling.radius, cfg.zeta, cfg.episodes, trained.estimate,
                            estimate_value(trained.learner, ap, probes).tolist() if probes else [])
        on_stage_end(stage, trained.learner)
        result = GuidedResult(trained.learner, [stage], trained.metrics)

    write_csv(os.path.join(out_dir, METRICS_CSV), METRICS_HEADER, _metrics_rows(result.metrics))
    _write_stages(out_dir, result.stages)
    return result


# ---------------------------------------------------------------------------
# evaluate
# ---------------------------------------------------------------------------

def load_trained_learner(problem: Problem, checkpoint_dir: str) -> A2CLearner:
    ap = make_product(problem)
    learner = A2CLearner(ap.encoding_size, ap.n_inputs, problem.train_cfg)
    load_learner_weights(learner, checkpoint_dir)
    return learner


def latest_checkpoint(out_dir: str) -> str:
    stages = sorted(
        (int(d.split("_", 1)[1]), d) for d in os.listdir(out_dir)
        if d.startswith("stage_") and d.split("_", 1)[1].isdigit()
    ) if os.path.isdir(out_dir) else []
    if not stages:
        raise FileNotFoundError(f"no stage checkpoints under {out_dir}")
    return os.path.join(out_dir, stages[-1][1])


def run_evaluation(config: DictConfig, debug: Optional[Debug] = None) -> Tuple[SatisfactionReport, Optional[HoeffdingResult]]:
    """
    Monte-Carlo check of the trained policy against the base formula with a
    Hoeffding lower bound. An untrained (freshly initialized) policy is
    evaluated when no checkpoint exists and none is configured.
    """
    problem = build_problem(config, debug)
    if problem.formula is None:
        raise ValueError("evaluation needs a formula; set spec.formula")
    ap = make_product(problem)

    checkpoint = config.eval.checkpoint
    if checkpoint is None and os.path.isdir(config.out_dir):
        try:
            checkpoint = latest_checkpoint(config.out_dir)
        except FileNotFoundError:
            checkpoint = None
    if checkpoint:
        learner = load_trained_learner(problem, checkpoint)
        if debug:
            debug.log(f"Loaded checkpoint {checkpoint}", category="file")
    else:
        set_seed(config.seed)
        learner = A2CLearner(ap.encoding_size, ap.n_inputs, problem.train_cfg)
        if debug:
            debug.log("No checkpoint found, evaluating an untrained policy", level="WARNING", category="eval", force=True)

    e = config.eval
    with debug.timer("evaluation") if debug else nullcontext():
        report = monte_carlo_satisfaction(
            ap, learner.actor, problem.formula, problem.labeling, e.trajectories, e.horizon,
            seed=config.seed, greedy=e.greedy, workers=config.workers, trajectory_limit=e.trajectory_limit, debug=debug,
        )
    if debug:
        debug.log_timing("evaluation", f"Simulated {report.trajectories} trajectories")
    bound = None
    if report.trajectories > 0:
        bound = hoeffding_lower(report.trajectories, report.satisfied, min(e.epsilon, report.frequency))
    os.makedirs(config.out_dir, exist_ok=True)
    write_trajectories_csv(os.path.join(config.out_dir, TRAJECTORIES_CSV), report)
    write_summary_csv(os.path.join(config.out_dir, SUMMARY_CSV), report, bound)
    return report, bound
