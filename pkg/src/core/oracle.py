"""
Exact and statistical verification.

Finite MDPs are solved exactly: maximal reachability by value iteration,
Büchi values through maximal end components. Learned policies are checked
statistically: Monte-Carlo satisfaction of a bounded-horizon surrogate with
Hoeffding intervals, and a visit-count diagnostic for the accepting set.
"""

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Sequence, Tuple

import networkx as nx
import numpy as np
from tqdm import tqdm

from .a2c import EpisodeRecord, TrainConfig, collect_episodes
from .product import AugmentedProduct, augment_finite
from ..common.seed import spawn_generators
from ..envs.base import FiniteMdp
from ..envs.finite import random_finite_mdp
from ..logic.ltl import Kind, LassoWord, LtlFormula, eval_lasso, format_ltl
from ..models.mlp import Mlp
from ..utils.constants import VALUE_RANGE_TOLERANCE, VISIT_TAIL_FRACTION
from ..utils.debug import Debug


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, residual: float):
        super().__init__(message)
        self.residual = residual


@dataclass
class ValueVector:
    values: np.ndarray
    residual: float
    iterations: int

    def __getitem__(self, s: int) -> float:
        return float(self.values[s])


# ---------------------------------------------------------------------------
# Qualitative precomputation
# ---------------------------------------------------------------------------

def _choice_successor_counts(mdp: FiniteMdp, inside: np.ndarray) -> np.ndarray:
    """Per choice, the number of positive-probability successors in `inside`."""
    return np.bincount(mdp.trans_choice, weights=inside[mdp.trans_target].astype(np.float64), minlength=mdp.n_choices)


def _states_with(mdp: FiniteMdp, choice_mask: np.ndarray) -> np.ndarray:
    hit = np.zeros(mdp.n_states, dtype=bool)
    hit[mdp.choice_state[choice_mask]] = True
    return hit


def prob0_states(mdp: FiniteMdp, target: np.ndarray) -> np.ndarray:
    """States from which no policy reaches the target (backward graph reachability)."""
    reach = target.copy()
    while True:
        grown = reach | _states_with(mdp, _choice_successor_counts(mdp, reach) > 0)
        if (grown == reach).all():
            return ~reach
        reach = grown


def prob1_states(mdp: FiniteMdp, target: np.ndarray) -> np.ndarray:
    """States from which some policy reaches the target almost surely."""
    total = np.bincount(mdp.trans_choice, minlength=mdp.n_choices)
    keep = np.ones(mdp.n_states, dtype=bool)
    while True:
        stays = _choice_successor_counts(mdp, keep) == total
        reach = target.copy()
        while True:
            grown = reach | _states_with(mdp, stays & (_choice_successor_counts(mdp, reach) > 0))
            if (grown == reach).all():
                break
            reach = grown
        if (reach == keep).all():
            return keep
        keep = reach


def _as_mask(n: int, states: Iterable[int]) -> np.ndarray:
    mask = np.zeros(n, dtype=bool)
    mask[list(states)] = True
    return mask


# ---------------------------------------------------------------------------
# Reachability
# ---------------------------------------------------------------------------

def choice_values(mdp: FiniteMdp, values: np.ndarray) -> np.ndarray:
    return np.bincount(mdp.trans_choice, weights=mdp.trans_prob * values[mdp.trans_target], minlength=mdp.n_choices)


def reach_value_iteration(
    mdp: FiniteMdp,
    target: Optional[Iterable[int]] = None,
    tol: float = 1e-10,
    max_iter: int = 100_000,
    debug: Optional[Debug] = None,
) -> ValueVector:
    """
    Maximal probability of eventually reaching `target` (default: mdp.targets).

    States that cannot reach the target are fixed at 0 and states that reach
    it almost surely under some policy at 1 before iterating, so the sweep
    from zero only resolves the genuinely probabilistic states.

    Raises:
        ValueError: tol not positive
        ConvergenceError: residual above tol after max_iter sweeps
    """
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    goal = _as_mask(mdp.n_states, mdp.targets if target is None else target)
    zero = prob0_states(mdp, goal)
    one = prob1_states(mdp, goal)

    values = np.zeros(mdp.n_states)
    values[one] = 1.0
    free = ~(zero | one)
    residual = 0.0
    for iteration in range(1, max_iter + 1):
        updated = np.maximum.reduceat(choice_values(mdp, values), mdp.choice_start)
        updated[~free] = values[~free]
        residual = float(np.max(np.abs(updated - values))) if free.any() else 0.0
        values = updated
        if residual <= tol:
            if debug:
                debug.log(f"Value iteration converged in {iteration} sweeps (residual {residual:.2e})", category="oracle")
            return ValueVector(np.clip(values, 0.0, 1.0), residual, iteration)
    raise ConvergenceError(f"value iteration did not converge in {max_iter} sweeps (residual {residual:.3e})", residual)


def reach_policy(mdp: FiniteMdp, values: np.ndarray, target: Optional[Iterable[int]] = None) -> np.ndarray:
    """
    Positional policy (action label per state) attaining the values.

    Among value-maximizing choices, each state picks one that moves closer to
    the target, so the policy does not idle in value-preserving loops.
    """
    goal = _as_mask(mdp.n_states, mdp.targets if target is None else target)
    q = choice_values(mdp, values)
    optimal = q >= values[mdp.choice_state] - 1e-9
    policy = mdp.choice_action[mdp.choice_start].copy()

    assigned = goal.copy()
    while True:
        progress = optimal & (_choice_successor_counts(mdp, assigned) > 0) & ~assigned[mdp.choice_state]
        if not progress.any():
            break
        for c in np.flatnonzero(progress):
            s = mdp.choice_state[c]
            if not assigned[s]:
                policy[s] = mdp.choice_action[c]
                assigned[s] = True
    return policy


def chain_reach_closed_form(zeta: float, first_accepting: int = 2) -> float:
    """
    Reach probability of φ from state 2 of the untruncated chain with accepting
    states {b, b+1, ...}:

        (1-ζ) ζ^(1-b) [-ln(1-ζ) - sum_{m=1}^{b-2} ζ^m / m]

    which is -(1-ζ) ln(1-ζ) / ζ for b = 2.
    """
    if not 0 < zeta < 1:
        raise ValueError(f"zeta must lie in (0, 1), got {zeta}")
    if first_accepting < 2:
        raise ValueError(f"first accepting state must be >= 2, got {first_accepting}")
    series = -math.log1p(-zeta) - sum(zeta**m / m for m in range(1, first_accepting - 1))
    return (1.0 - zeta) * zeta ** (1 - first_accepting) * series


# ---------------------------------------------------------------------------
# Büchi
# ---------------------------------------------------------------------------

def mec_decomposition(mdp: FiniteMdp) -> List[Tuple[frozenset, Dict[int, List[int]]]]:
    """
    Maximal end components as (states, {state: actions kept inside}).

    Iterated refinement: drop choices that can leave their SCC, drop states
    left without choices, recompute SCCs, until nothing changes.
    """
    component = np.zeros(mdp.n_states, dtype=np.int64)
    allowed = np.ones(mdp.n_choices, dtype=bool)
    total = np.bincount(mdp.trans_choice, minlength=mdp.n_choices)
    source = mdp.choice_state[mdp.trans_choice]

    while True:
        same = (component[mdp.trans_target] == component[source]) & (component[source] >= 0)
        stays = np.bincount(mdp.trans_choice, weights=same.astype(np.float64), minlength=mdp.n_choices) == total
        new_allowed = allowed & stays
        alive = _states_with(mdp, new_allowed)
        new_allowed &= alive[mdp.choice_state]

        graph = nx.DiGraph()
        graph.add_nodes_from(np.flatnonzero(alive).tolist())
        edge_mask = new_allowed[mdp.trans_choice]
        graph.add_edges_from(zip(source[edge_mask].tolist(), mdp.trans_target[edge_mask].tolist()))
        new_component = np.full(mdp.n_states, -1, dtype=np.int64)
        for index, scc in enumerate(nx.strongly_connected_components(graph)):
            new_component[list(scc)] = index
        new_component[~alive] = -1

        changed = (new_allowed != allowed).any() or not _same_partition(component, new_component)
        allowed, component = new_allowed, new_component
        if not changed:
            break

    result = []
    for index in range(component.max() + 1 if mdp.n_states else 0):
        states = np.flatnonzero(component == index)
        if len(states) == 0:
            continue
        actions = {
            int(s): [int(mdp.choice_action[c]) for c in mdp.choices(int(s)) if allowed[c]]
            for s in states
        }
        result.append((frozenset(int(s) for s in states), actions))
    return result


def _same_partition(a: np.ndarray, b: np.ndarray) -> bool:
    if ((a < 0) != (b < 0)).any():
        return False
    pairs = set(zip(a[a >= 0].tolist(), b[b >= 0].tolist()))
    return len(pairs) == len({x for x, _ in pairs}) == len({y for _, y in pairs})


def buchi_value(
    mdp: FiniteMdp,
    accepting: Optional[Iterable[int]] = None,
    tol: float = 1e-10,
    debug: Optional[Debug] = None,
) -> ValueVector:
    """Maximal probability of visiting `accepting` (default: mdp.accepting) infinitely often."""
    b = set(mdp.accepting if accepting is None else accepting)
    winning = set()
    for states, _ in mec_decomposition(mdp):
        if states & b:
            winning |= states
    if debug:
        debug.log(f"{len(winning)} states in accepting end components", category="oracle")
    return reach_value_iteration(mdp, winning, tol=tol, debug=debug)


# ---------------------------------------------------------------------------
# Hoeffding
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HoeffdingResult:
    n: int
    successes: int
    epsilon: float
    confidence: float
    lower: float
    upper: float = 1.0

    @property
    def frequency(self) -> float:
        return self.successes / self.n

    @property
    def failure_probability(self) -> float:
        return 1.0 - self.confidence


def hoeffding_lower(n: int, successes: int, epsilon: float) -> HoeffdingResult:
    """With confidence 1 - exp(-2ε²N), the success probability is at least H/N - ε."""
    if n < 1:
        raise ValueError(f"need at least one trial, got N={n}")
    if not 0 <= successes <= n:
        raise ValueError(f"successes must lie in [0, N], got H={successes}, N={n}")
    frequency = successes / n
    if not 0 <= epsilon <= frequency:
        raise ValueError(f"epsilon must lie in [0, H/N] = [0, {frequency}], got {epsilon}")
    confidence = -math.expm1(-2.0 * epsilon * epsilon * n)
    return HoeffdingResult(n, successes, epsilon, confidence, frequency - epsilon)


# ---------------------------------------------------------------------------
# Monte-Carlo satisfaction
# ---------------------------------------------------------------------------

@dataclass
class SatisfactionReport:
    trajectories: int
    satisfied: int
    horizon: int
    failures: Dict[str, int] = field(default_factory=dict)
    rows: List[list] = field(default_factory=list)
    header: List[str] = field(default_factory=list)

    @property
    def frequency(self) -> float:
        return self.satisfied / self.trajectories if self.trajectories else 1.0


def top_level_conjuncts(f: LtlFormula) -> List[LtlFormula]:
    if f.kind == Kind.conj:
        return [part for child in f.children for part in top_level_conjuncts(child)]
    return [f]


def horizon_word(letters: Sequence[frozenset]) -> LassoWord:
    """Bounded word closed by repeating its last letter."""
    return LassoWord(tuple(letters[:-1]), (letters[-1],))


def monte_carlo_satisfaction(
    ap: AugmentedProduct,
    actor: Mlp,
    formula: LtlFormula,
    labeling,
    n_traj: int,
    horizon: int,
    seed: int = 0,
    greedy: bool = False,
    workers: int = 1,
    trajectory_limit: int = 100,
    debug: Optional[Debug] = None,
) -> SatisfactionReport:
    """
    Execute the finite-memory policy (automaton state as memory, actor as
    output) on the raw system for `horizon` steps and check the formula on
    the bounded word of base-proposition letters s_0 .. s_horizon.

    A trajectory satisfies the surrogate when the formula holds on the word
    closed by repeating its last letter; failures are attributed to every
    top-level conjunct that does not hold.
    """
    if horizon < 0:
        raise ValueError(f"horizon must be nonnegative, got {horizon}")
    report = SatisfactionReport(n_traj, 0, horizon)
    report.header = ["trajectory", "step", *ap.env.dims, "q", "action", "letter"]
    if horizon == 0:
        report.satisfied = n_traj
        return report

    execution = ap.with_stage(ap.labeler, zeta=1.0)
    cfg = TrainConfig(zeta=1.0, horizon=horizon, mode=ap.mode, workers=workers, episodes=n_traj)
    parts = top_level_conjuncts(formula)
    report.failures = {format_ltl(part): 0 for part in parts}

    rngs = spawn_generators(seed, n_traj)
    show = debug is not None and debug.enabled
    batch = max(1, 64 * max(1, workers))
    for start in tqdm(range(0, n_traj, batch), desc="trajectories", disable=not show, leave=False):
        episodes = collect_episodes(execution, actor, cfg, rngs[start : start + batch], greedy)
        for offset, ep in enumerate(episodes):
            index = start + offset
            states = list(ep.env_states) + [ep.final_state]
            word = horizon_word([labeling.letter(s) for s in states])
            if eval_lasso(formula, word):
                report.satisfied += 1
            else:
                for part in parts:
                    if not eval_lasso(part, word):
                        report.failures[format_ltl(part)] += 1
            if index < trajectory_limit:
                report.rows.extend(_trajectory_rows(index, ep, execution, labeling))
    if debug:
        debug.log(f"{report.satisfied}/{n_traj} trajectories satisfy the formula within {horizon} steps", category="eval")
    return report


def _trajectory_rows(index: int, ep: EpisodeRecord, ap: AugmentedProduct, labeling) -> List[list]:
    rows = []
    for step in range(len(ep)):
        s = ep.env_states[step]
        rows.append([index, step, *np.asarray(s).tolist(), int(ep.q[step]), ap.input_name(int(ep.actions[step])), labeling.label(s)])
    return rows


# ---------------------------------------------------------------------------
# Accepting-visit diagnostic
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class VisitsEstimate:
    horizon: int
    mean: float
    stderr: float
    qualifying: int
    trajectories: int

    @property
    def defined(self) -> bool:
        return self.qualifying > 0


def simulate_states(mdp: FiniteMdp, policy: np.ndarray, n_traj: int, horizon: int, rng: np.random.Generator) -> np.ndarray:
    """(n_traj, horizon) array of visited states s_0 .. s_{horizon-1}, all trajectories stepped together."""
    lookup = {(int(s), int(a)): c for c, (s, a) in enumerate(zip(mdp.choice_state, mdp.choice_action))}
    choice_of = np.array([lookup[(s, int(policy[s]))] for s in range(mdp.n_states)], dtype=np.int64)

    order = np.argsort(mdp.trans_choice, kind="stable")
    owner = mdp.trans_choice[order]
    within = np.zeros(len(order))
    for c in range(mdp.n_choices):
        segment = owner == c
        within[segment] = np.cumsum(mdp.trans_prob[order][segment])
    keys = owner + within
    targets = mdp.trans_target[order]
    last = np.searchsorted(owner, np.arange(mdp.n_choices), side="right") - 1

    states = np.empty((n_traj, horizon), dtype=np.int64)
    current = np.full(n_traj, mdp.initial, dtype=np.int64)
    for t in range(horizon):
        states[:, t] = current
        c = choice_of[current]
        k = np.searchsorted(keys, c + rng.random(n_traj), side="right")
        current = targets[np.minimum(k, last[c])]
    return states


def conditional_visits_estimate(
    mdp: FiniteMdp,
    n_traj: int,
    horizon: int,
    seed: int = 0,
    accepting: Optional[Iterable[int]] = None,
    policy: Optional[np.ndarray] = None,
) -> VisitsEstimate:
    """
    Mean number of accepting visits among trajectories whose visits look
    finite, i.e. none in the final fraction of the horizon.
    """
    b = _as_mask(mdp.n_states, mdp.accepting if accepting is None else accepting)
    if not b.any() or horizon < 1:
        return VisitsEstimate(horizon, 0.0, 0.0, n_traj, n_traj)
    if policy is None:
        policy = mdp.choice_action[mdp.choice_start]
    visits = b[simulate_states(mdp, policy, n_traj, horizon, np.random.default_rng(seed))]
    tail = int(math.floor((1.0 - VISIT_TAIL_FRACTION) * horizon))
    qualifying = ~visits[:, tail:].any(axis=1)
    counts = visits[qualifying].sum(axis=1)
    if len(counts) == 0:
        return VisitsEstimate(horizon, float("nan"), float("nan"), 0, n_traj)
    stderr = float(counts.std(ddof=1) / math.sqrt(len(counts))) if len(counts) > 1 else 0.0
    return VisitsEstimate(horizon, float(counts.mean()), stderr, len(counts), n_traj)


@dataclass
class VisitsGrowth:
    estimates: List[VisitsEstimate]
    unbounded: bool


def visits_growth(
    mdp: FiniteMdp,
    horizons: Sequence[int],
    n_traj: int,
    seed: int = 0,
    accepting: Optional[Iterable[int]] = None,
    policy: Optional[np.ndarray] = None,
    sigmas: float = 3.0,
) -> VisitsGrowth:
    """
    Estimates over an increasing horizon ladder. Flags unbounded visits when
    every rung exceeds the previous one by more than `sigmas` combined
    standard errors.
    """
    estimates = [conditional_visits_estimate(mdp, n_traj, h, seed, accepting, policy) for h in sorted(horizons)]
    growing = len(estimates) > 1
    for before, after in zip(estimates, estimates[1:]):
        if not (before.defined and after.defined):
            growing = False
            break
        if after.mean - before.mean <= sigmas * math.hypot(before.stderr, after.stderr):
            growing = False
    return VisitsGrowth(estimates, growing)


# ---------------------------------------------------------------------------
# CSV output
# ---------------------------------------------------------------------------

def write_csv(path: str, header: Sequence[str], rows: Iterable[Sequence], append: bool = False) -> None:
    exists = append and os.path.exists(path)
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "a" if append else "w", newline="", encoding="utf-8") as f:
        writer = csv.writer(f)
        if not exists:
            writer.writerow(header)
        writer.writerows(rows)


def write_trajectories_csv(path: str, report: SatisfactionReport) -> None:
    write_csv(path, report.header, report.rows)


def write_summary_csv(path: str, report: SatisfactionReport, bound: Optional[HoeffdingResult]) -> None:
    header = ["trajectories", "satisfied", "frequency", "horizon", "epsilon", "lower", "upper", "confidence"]
    header += [f"fail:{name}" for name in report.failures]
    row = [report.trajectories, report.satisfied, report.frequency, report.horizon]
    row += [bound.epsilon, bound.lower, bound.upper, bound.confidence] if bound else ["", "", "", ""]
    row += list(report.failures.values())
    write_csv(path, header, [row])


def check_values_in_range(values: np.ndarray) -> bool:
    return bool(np.all(values >= -VALUE_RANGE_TOLERANCE) and np.all(values <= 1 + VALUE_RANGE_TOLERANCE))


# ---------------------------------------------------------------------------
# Composite checks
# ---------------------------------------------------------------------------

def augment_and_solve(mdp: FiniteMdp, zeta: float, tol: float = 1e-10, debug: Optional[Debug] = None) -> ValueVector:
    """Reach value of φ in the ζ-augmented MDP, restricted to the original states."""
    result = reach_value_iteration(augment_finite(mdp, zeta), tol=tol, debug=debug)
    return ValueVector(result.values[: mdp.n_states], result.residual, result.iterations)


@dataclass
class SqueezeReport:
    count: int
    zetas: Tuple[float, ...]
    max_gap: float = 0.0
    # reach value below the Büchi value at some state
    order_violations: int = 0
    # reach value increasing with ζ at some state
    monotonicity_violations: int = 0

    def holds(self, tolerance: float) -> bool:
        return self.order_violations == 0 and self.monotonicity_violations == 0 and self.max_gap <= tolerance


def squeeze_check(
    count: int,
    max_states: int,
    max_actions: int,
    rng: np.random.Generator,
    zetas: Sequence[float] = (0.9, 0.99, 0.999, 0.9999),
    slack: float = 1e-8,
    debug: Optional[Debug] = None,
) -> SqueezeReport:
    """
    Random MDPs with at most max_states states and max_actions actions: the
    augmented reach value must dominate the Büchi value, decrease with ζ, and
    approach it at the largest ζ (reported as max_gap).
    """
    report = SqueezeReport(count, tuple(sorted(zetas)))
    show = debug is not None and debug.enabled
    for _ in tqdm(range(count), desc="squeeze", disable=not show, leave=False):
        n = int(rng.integers(2, max_states + 1))
        k = int(rng.integers(1, max_actions + 1))
        mdp = random_finite_mdp(n, k, 0.3, rng)
        buchi = buchi_value(mdp).values
        previous = None
        for zeta in report.zetas:
            reach = augment_and_solve(mdp, zeta).values
            report.order_violations += int(np.any(reach < buchi - slack))
            if previous is not None:
                report.monotonicity_violations += int(np.any(reach > previous + slack))
            previous = reach
        report.max_gap = max(report.max_gap, float(np.max(np.abs(previous - buchi))))
    return report
