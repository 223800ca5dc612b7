"""
Black-box environment interface and explicit finite MDPs.

An Environment is immutable configuration plus pure samplers: every random
draw comes from the rng handle passed in, so a trajectory is a function of
(initial rng stream, inputs) only. Inputs are addressed by their index in
the ordered `inputs` tuple.
"""

from abc import ABC, abstractmethod
from dataclasses import dataclass
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..utils.constants import ROW_SUM_TOLERANCE


class Environment(ABC):
    """Sampled controlled Markov process."""

    name: str = "environment"
    dims: Tuple[str, ...] = ()
    inputs: Tuple[Any, ...] = ()

    @property
    def state_dim(self) -> int:
        return len(self.dims)

    @property
    def encoding_bounds(self) -> np.ndarray:
        """(d, 2) array of [lo, hi] used to scale states to roughly [-1, 1]."""
        return np.tile(np.array([-1.0, 1.0]), (self.state_dim, 1))

    def valid_inputs(self, s: np.ndarray) -> Tuple[int, ...]:
        """Indices of the inputs allowed at s; all of them unless overridden."""
        return tuple(range(len(self.inputs)))

    def input_index(self, u: Any) -> int:
        for i, candidate in enumerate(self.inputs):
            if candidate == u:
                return i
        raise ValueError(f"{self.name}: invalid input {u!r}, expected one of {list(self.inputs)}")

    def normalize(self, s: np.ndarray) -> np.ndarray:
        bounds = self.encoding_bounds
        center = 0.5 * (bounds[:, 0] + bounds[:, 1])
        half = 0.5 * (bounds[:, 1] - bounds[:, 0])
        return (np.asarray(s, dtype=np.float64) - center) / half

    @abstractmethod
    def sample_next(self, s: np.ndarray, u: Any, rng: np.random.Generator) -> np.ndarray:
        """Draw s' ~ T(. | s, u)."""

    @abstractmethod
    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        """Draw s0 from the initial distribution."""


@dataclass(frozen=True, eq=False)
class FiniteMdp:
    """
    Explicit finite MDP in flattened sparse form.

    Choices (state-action pairs) are sorted by state; `choice_start[s]` is the
    first choice of state s. Transition entries point at their choice.
    """

    n_states: int
    choice_state: np.ndarray
    choice_action: np.ndarray
    choice_start: np.ndarray
    trans_choice: np.ndarray
    trans_target: np.ndarray
    trans_prob: np.ndarray
    accepting: FrozenSet[int] = frozenset()
    initial: int = 0
    targets: FrozenSet[int] = frozenset()

    @classmethod
    def from_rows(
        cls,
        n_states: int,
        rows: Mapping[Tuple[int, int], Mapping[int, float]],
        accepting: Iterable[int] = (),
        initial: int = 0,
        targets: Iterable[int] = (),
    ) -> "FiniteMdp":
        """
        Build from {(state, action): {successor: probability}}.

        Raises:
            ValueError: a state without actions, a row not summing to 1, or an
                index out of range
        """
        keys = sorted(rows)
        choice_state = np.array([s for s, _ in keys], dtype=np.int64)
        choice_action = np.array([a for _, a in keys], dtype=np.int64)

        trans_choice: List[int] = []
        trans_target: List[int] = []
        trans_prob: List[float] = []
        for c, key in enumerate(keys):
            row = rows[key]
            total = 0.0
            for target, p in row.items():
                if not 0 <= target < n_states:
                    raise ValueError(f"successor {target} of {key} out of range")
                if p < 0:
                    raise ValueError(f"negative probability in row {key}")
                if p == 0:
                    continue
                trans_choice.append(c)
                trans_target.append(int(target))
                trans_prob.append(float(p))
                total += p
            if abs(total - 1.0) > ROW_SUM_TOLERANCE:
                raise ValueError(f"row {key} sums to {total!r}, not 1")

        present = set(choice_state.tolist())
        missing = [s for s in range(n_states) if s not in present]
        if missing or (len(choice_state) and (choice_state.min() < 0 or choice_state.max() >= n_states)):
            raise ValueError(f"every state needs at least one action; missing {missing[:5]}")

        choice_start = np.searchsorted(choice_state, np.arange(n_states)).astype(np.int64)
        mdp = cls(
            n_states=n_states,
            choice_state=choice_state,
            choice_action=choice_action,
            choice_start=choice_start,
            trans_choice=np.array(trans_choice, dtype=np.int64),
            trans_target=np.array(trans_target, dtype=np.int64),
            trans_prob=np.array(trans_prob, dtype=np.float64),
            accepting=frozenset(int(s) for s in accepting),
            initial=int(initial),
            targets=frozenset(int(s) for s in targets),
        )
        for name, states in (("accepting", mdp.accepting), ("target", mdp.targets), ("initial", {mdp.initial})):
            if any(not 0 <= s < n_states for s in states):
                raise ValueError(f"{name} state out of range")
        return mdp

    @property
    def n_choices(self) -> int:
        return len(self.choice_state)

    def choices(self, s: int) -> range:
        end = self.choice_start[s + 1] if s + 1 < self.n_states else self.n_choices
        return range(int(self.choice_start[s]), int(end))

    def actions(self, s: int) -> List[int]:
        return [int(self.choice_action[c]) for c in self.choices(s)]

    def row(self, s: int, a: int) -> Dict[int, float]:
        for c in self.choices(s):
            if self.choice_action[c] == a:
                mask = self.trans_choice == c
                return dict(zip(self.trans_target[mask].tolist(), self.trans_prob[mask].tolist()))
        raise ValueError(f"action {a} is not available in state {s}")

    def rows(self) -> Dict[Tuple[int, int], Dict[int, float]]:
        result: Dict[Tuple[int, int], Dict[int, float]] = {}
        for c in range(self.n_choices):
            result[(int(self.choice_state[c]), int(self.choice_action[c]))] = {}
        for c, t, p in zip(self.trans_choice.tolist(), self.trans_target.tolist(), self.trans_prob.tolist()):
            key = (int(self.choice_state[c]), int(self.choice_action[c]))
            result[key][t] = result[key].get(t, 0.0) + p
        return result

    def row_sums(self) -> np.ndarray:
        return np.bincount(self.trans_choice, weights=self.trans_prob, minlength=self.n_choices)

    def successor_table(self) -> Tuple[List[np.ndarray], List[np.ndarray]]:
        """Per-choice successor and cumulative-probability arrays for sampling."""
        order = np.argsort(self.trans_choice, kind="stable")
        bounds = np.searchsorted(self.trans_choice[order], np.arange(self.n_choices + 1))
        targets, cumulative = [], []
        for c in range(self.n_choices):
            idx = order[bounds[c] : bounds[c + 1]]
            targets.append(self.trans_target[idx])
            cumulative.append(np.cumsum(self.trans_prob[idx]))
        return targets, cumulative

    def with_sets(self, accepting: Optional[Iterable[int]] = None, targets: Optional[Iterable[int]] = None,
                  initial: Optional[int] = None) -> "FiniteMdp":
        return FiniteMdp(
            n_states=self.n_states,
            choice_state=self.choice_state,
            choice_action=self.choice_action,
            choice_start=self.choice_start,
            trans_choice=self.trans_choice,
            trans_target=self.trans_target,
            trans_prob=self.trans_prob,
            accepting=self.accepting if accepting is None else frozenset(accepting),
            initial=self.initial if initial is None else int(initial),
            targets=self.targets if targets is None else frozenset(targets),
        )


class FiniteMdpEnvironment(Environment):
    """
    A FiniteMdp exposed as an Environment. The state vector is the one-hot
    encoding of the MDP state; inputs are the global action labels.
    """

    name = "finite"

    def __init__(self, mdp: FiniteMdp, initial_states: Optional[Sequence[int]] = None):
        self.mdp = mdp
        self.dims = tuple(f"s{i}" for i in range(mdp.n_states))
        self.inputs = tuple(sorted(set(mdp.choice_action.tolist())))
        self.initial_states = tuple(initial_states) if initial_states else (mdp.initial,)
        self._targets, self._cumulative = mdp.successor_table()
        self._choice = {
            (int(s), int(a)): c for c, (s, a) in enumerate(zip(mdp.choice_state, mdp.choice_action))
        }

    @property
    def encoding_bounds(self) -> np.ndarray:
        return np.tile(np.array([0.0, 1.0]), (self.state_dim, 1))

    def one_hot(self, index: int) -> np.ndarray:
        s = np.zeros(self.mdp.n_states)
        s[index] = 1.0
        return s

    @staticmethod
    def index_of(s: np.ndarray) -> int:
        return int(np.argmax(s))

    def valid_inputs(self, s: np.ndarray) -> Tuple[int, ...]:
        return tuple(self.inputs.index(a) for a in self.mdp.actions(self.index_of(s)))

    def sample_next(self, s: np.ndarray, u: Any, rng: np.random.Generator) -> np.ndarray:
        key = (self.index_of(s), int(u))
        c = self._choice.get(key)
        if c is None:
            raise ValueError(f"finite: action {u!r} is not available in state {key[0]}")
        cumulative = self._cumulative[c]
        k = int(np.searchsorted(cumulative, rng.random() * cumulative[-1], side="right"))
        return self.one_hot(int(self._targets[c][min(k, len(cumulative) - 1)]))

    def sample_initial(self, rng: np.random.Generator) -> np.ndarray:
        if len(self.initial_states) == 1:
            return self.one_hot(self.initial_states[0])
        return self.one_hot(self.initial_states[int(rng.integers(0, len(self.initial_states)))])
