"""
Product of an environment with an LDBA and its ζ-augmentation.

The automaton reads the label of the current state before the environment
moves. When the fired transition is accepting, the process jumps to the sink
φ with probability 1 - ζ and the episode ends; otherwise the environment
state advances. ε pseudo-inputs move only the automaton.

Product inputs are indexed: environment inputs first, then one ε-jump per
ε-target of the automaton.
"""

from dataclasses import dataclass
from enum import Enum
from typing import Callable, Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from ..envs.base import Environment, FiniteMdp
from ..logic.automata import Ldba
from ..utils.constants import PHI

Labeler = Callable[[np.ndarray], FrozenSet[str]]


class BoundMode(str, Enum):
    # Automaton of the formula, reward on reaching φ
    upper = "upper"
    # Automaton of the negated formula, reward on avoiding φ
    lower = "lower"


@dataclass(frozen=True, eq=False)
class ProductState:
    """(s, q); s is None once the sink φ has been entered (q then stays frozen)."""

    s: Optional[np.ndarray]
    q: int

    @property
    def is_phi(self) -> bool:
        return self.s is None

    def __repr__(self) -> str:
        return f"ProductState({PHI if self.is_phi else self.s.tolist()}, q={self.q})"


def emitted_letter_names(labeler) -> Tuple[str, ...]:
    """Letter atoms a labeller can emit (box, stage and table labellers)."""
    names = getattr(labeler, "names", None)
    if names is None and hasattr(labeler, "base"):
        names = labeler.base.names
    return tuple(names or ())


@dataclass(frozen=True, eq=False)
class AugmentedProduct:
    env: Environment
    automaton: Ldba
    labeler: Labeler
    zeta: float = 0.999
    mode: BoundMode = BoundMode.upper
    epsilon_exclusive: bool = True

    def __post_init__(self):
        if not 0 < self.zeta <= 1:
            raise ValueError(f"zeta must lie in (0, 1], got {self.zeta}")
        object.__setattr__(self, "mode", BoundMode(self.mode))
        object.__setattr__(self, "automaton", self.automaton.completed())
        missing = set(emitted_letter_names(self.labeler)) - set(self.automaton.atoms)
        if missing:
            raise ValueError(f"alphabet mismatch: automaton has no atoms for letters {sorted(missing)}")
        object.__setattr__(self, "_eps_targets", self.automaton.epsilon_targets())

    @property
    def epsilon_targets(self) -> Tuple[int, ...]:
        return self._eps_targets

    @property
    def n_inputs(self) -> int:
        return len(self.env.inputs) + len(self._eps_targets)

    @property
    def encoding_size(self) -> int:
        return self.env.state_dim + self.automaton.n_states

    def input_name(self, u: int) -> str:
        k = len(self.env.inputs)
        return str(self.env.inputs[u]) if u < k else f"eps{self._eps_targets[u - k]}"

    def with_stage(self, labeler: Labeler, zeta: Optional[float] = None) -> "AugmentedProduct":
        """Same environment and automaton object, new labeller and ζ."""
        return AugmentedProduct(
            env=self.env,
            automaton=self.automaton,
            labeler=labeler,
            zeta=self.zeta if zeta is None else zeta,
            mode=self.mode,
            epsilon_exclusive=self.epsilon_exclusive,
        )


def initial_product_state(ap: AugmentedProduct, rng: np.random.Generator) -> ProductState:
    return ProductState(ap.env.sample_initial(rng), ap.automaton.initial)


def valid_product_inputs(ap: AugmentedProduct, x: ProductState) -> Tuple[int, ...]:
    if x.is_phi:
        raise ValueError("the sink φ has no inputs; the episode has ended")
    k = len(ap.env.inputs)
    eps = ap.automaton.epsilon.get(x.q, frozenset())
    eps_inputs = tuple(k + ap.epsilon_targets.index(t) for t in sorted(eps))
    if eps and ap.epsilon_exclusive:
        return eps_inputs
    return ap.env.valid_inputs(x.s) + eps_inputs


def product_step(ap: AugmentedProduct, x: ProductState, u: int, rng: np.random.Generator) -> Tuple[ProductState, bool]:
    """
    One step of the augmented product.

    Returns:
        (next state, reached_phi)
    """
    valid = valid_product_inputs(ap, x)
    if u not in valid:
        raise ValueError(f"input {u} is not valid at q={x.q}; valid inputs are {list(valid)}")

    k = len(ap.env.inputs)
    if u >= k:
        return ProductState(x.s, ap.epsilon_targets[u - k]), False

    letter = ap.labeler(x.s)
    q_next = ap.automaton.step(x.q, letter)
    if ap.automaton.is_accepting(x.q, letter, q_next) and ap.zeta < 1.0:
        if rng.random() < 1.0 - ap.zeta:
            return ProductState(None, x.q), True
    s_next = ap.env.sample_next(x.s, ap.env.inputs[u], rng)
    return ProductState(s_next, q_next), False


def episode_reward(mode: BoundMode, reached_phi: bool) -> float:
    if BoundMode(mode) == BoundMode.upper:
        return 1.0 if reached_phi else 0.0
    return 0.0 if reached_phi else 1.0


def encode(x: ProductState, ap: AugmentedProduct) -> np.ndarray:
    """Normalized environment state followed by the one-hot automaton state."""
    if x.is_phi:
        raise ValueError("the sink φ has no encoding")
    one_hot = np.zeros(ap.automaton.n_states)
    one_hot[x.q] = 1.0
    return np.concatenate([ap.env.normalize(x.s), one_hot])


# ---------------------------------------------------------------------------
# Explicit finite products
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FiniteProduct:
    mdp: FiniteMdp
    n_automaton_states: int
    # global action label of the ε-jump to q is epsilon_offset + q
    epsilon_offset: int

    def index(self, s: int, q: int) -> int:
        return s * self.n_automaton_states + q

    def split(self, index: int) -> Tuple[int, int]:
        return divmod(index, self.n_automaton_states)


def build_finite_product(
    mdp: FiniteMdp,
    a: Ldba,
    labels: Sequence[FrozenSet[str]],
    epsilon_exclusive: bool = True,
) -> FiniteProduct:
    """
    Explicit product with accepting set {(s, q) : (q, label(s), δ(q, label(s))) ∈ Acc}.

    Args:
        labels: per MDP state, a letter of the automaton's alphabet
    """
    if len(labels) != mdp.n_states:
        raise ValueError(f"{len(labels)} labels for {mdp.n_states} states")
    alphabet = set(a.alphabet)
    labels = [frozenset(x) for x in labels]
    for s, letter in enumerate(labels):
        if letter not in alphabet:
            raise ValueError(f"alphabet mismatch: label {sorted(letter)} of state {s} is not an automaton letter")

    a = a.completed()
    nq = a.n_states
    rows = mdp.rows()
    offset = int(mdp.choice_action.max()) + 1 if mdp.n_choices else 0

    product_rows: Dict[Tuple[int, int], Dict[int, float]] = {}
    accepting: List[int] = []
    for s in range(mdp.n_states):
        letter = labels[s]
        for q in range(nq):
            index = s * nq + q
            eps = a.epsilon.get(q, frozenset())
            for target in sorted(eps):
                product_rows[(index, offset + target)] = {s * nq + target: 1.0}
            if eps and epsilon_exclusive:
                continue
            q_next = a.step(q, letter)
            if a.is_accepting(q, letter, q_next):
                accepting.append(index)
            for action in mdp.actions(s):
                product_rows[(index, action)] = {t * nq + q_next: p for t, p in rows[(s, action)].items()}

    product = FiniteMdp.from_rows(
        mdp.n_states * nq,
        product_rows,
        accepting=accepting,
        initial=mdp.initial * nq + a.initial,
    )
    return FiniteProduct(product, nq, offset)


def augment_finite(mdp: FiniteMdp, zeta: float) -> FiniteMdp:
    """
    Add the absorbing sink φ (last index): every choice of an accepting state
    keeps ζ of its mass and sends 1 - ζ to φ. φ becomes the target set.
    """
    if not 0 < zeta <= 1:
        raise ValueError(f"zeta must lie in (0, 1], got {zeta}")
    phi = mdp.n_states
    rows: Dict[Tuple[int, int], Dict[int, float]] = {}
    for (s, action), row in mdp.rows().items():
        if s in mdp.accepting and zeta < 1:
            scaled = {t: zeta * p for t, p in row.items()}
            scaled[phi] = 1.0 - sum(scaled.values())
            rows[(s, action)] = scaled
        else:
            rows[(s, action)] = dict(row)
    rows[(phi, 0)] = {phi: 1.0}
    return FiniteMdp.from_rows(phi + 1, rows, accepting=mdp.accepting, initial=mdp.initial, targets=[phi])
