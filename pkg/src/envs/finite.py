"""
Finite MDP fixtures and the plain-text matrix format.

Text format, one choice per line after the header:

    states: 3
    initial: 0
    accepting: 1
    targets:
    0 0 : 1 0.7 2 0.3          # state action : successor probability ...
    1 0 : 1 1.0
    2 0 : 2 1.0
"""

from dataclasses import dataclass, field
from typing import Dict, FrozenSet, List, Optional, Sequence, Tuple

import numpy as np

from .base import FiniteMdp


def chain_mdp(n_trunc: int, first_accepting: int = 3) -> FiniteMdp:
    """
    Countable chain truncated at n_trunc states. State k (1-based) sits at
    index k-1: state 1 is absorbing, state k in [2, n_trunc) falls back to 1
    w.p. 1/k and advances w.p. (k-1)/k, state n_trunc returns to 1.
    Accepting states are {first_accepting, ..., n_trunc}; the chain starts in state 2.
    """
    if n_trunc < 4:
        raise ValueError(f"chain needs at least 4 states, got {n_trunc}")
    if not 2 <= first_accepting <= n_trunc:
        raise ValueError(f"first accepting state must lie in [2, {n_trunc}], got {first_accepting}")
    rows: Dict[Tuple[int, int], Dict[int, float]] = {(0, 0): {0: 1.0}}
    for k in range(2, n_trunc):
        rows[(k - 1, 0)] = {0: 1.0 / k, k: (k - 1.0) / k}
    rows[(n_trunc - 1, 0)] = {0: 1.0}
    return FiniteMdp.from_rows(n_trunc, rows, accepting=range(first_accepting - 1, n_trunc), initial=1)


def random_finite_mdp(
    n: int,
    k: int,
    label_density: float,
    rng: np.random.Generator,
    max_support: int = 3,
    uniform_share: float = 0.2,
) -> FiniteMdp:
    """
    Random MDP with k actions in every state, sparse rows and random accepting
    set. Row weights mix a Dirichlet draw with `uniform_share` of the uniform
    row, which keeps every listed successor at probability >= uniform_share / support.
    """
    if n < 1 or k < 1:
        raise ValueError(f"need n >= 1 and k >= 1, got n={n}, k={k}")
    rows: Dict[Tuple[int, int], Dict[int, float]] = {}
    for s in range(n):
        for a in range(k):
            support = rng.choice(n, size=int(rng.integers(1, min(n, max_support) + 1)), replace=False)
            weights = (1.0 - uniform_share) * rng.dirichlet(np.ones(len(support))) + uniform_share / len(support)
            row: Dict[int, float] = {}
            for t, w in zip(support.tolist(), weights.tolist()):
                row[int(t)] = w
            # absorb rounding so the row sums to one
            last = int(support[-1])
            row[last] = 1.0 - sum(v for t, v in row.items() if t != last)
            rows[(s, a)] = row
    accepting = [s for s in range(n) if rng.random() < label_density]
    return FiniteMdp.from_rows(n, rows, accepting=accepting, initial=0)


def random_labels(n: int, letters: Sequence[FrozenSet[str]], rng: np.random.Generator) -> List[FrozenSet[str]]:
    return [letters[int(rng.integers(0, len(letters)))] for _ in range(n)]


def reach_fixture(success: float = 0.7) -> Tuple[FiniteMdp, List[FrozenSet[str]]]:
    """
    Start state 0 moves to the target sink 1 w.p. `success` and to the
    rejecting sink 2 otherwise; single action. Returns the MDP and per-state
    propositions (t holds in state 1).
    """
    rows = {(0, 0): {1: success, 2: 1.0 - success}, (1, 0): {1: 1.0}, (2, 0): {2: 1.0}}
    return FiniteMdp.from_rows(3, rows, initial=0), [frozenset(), frozenset({"t"}), frozenset()]


def single_visit_fixture() -> FiniteMdp:
    """0 -> 1 (accepting) -> 2 (absorbing): the accepting set is visited exactly once."""
    rows = {(0, 0): {1: 1.0}, (1, 0): {2: 1.0}, (2, 0): {2: 1.0}}
    return FiniteMdp.from_rows(3, rows, accepting=[1], initial=0)


# ---------------------------------------------------------------------------
# Text format
# ---------------------------------------------------------------------------

def save_mdp_text(mdp: FiniteMdp) -> str:
    lines = [
        f"states: {mdp.n_states}",
        f"initial: {mdp.initial}",
        "accepting: " + " ".join(str(s) for s in sorted(mdp.accepting)),
        "targets: " + " ".join(str(s) for s in sorted(mdp.targets)),
    ]
    for (s, a), row in sorted(mdp.rows().items()):
        entries = " ".join(f"{t} {p!r}" for t, p in sorted(row.items()))
        lines.append(f"{s} {a} : {entries}")
    return "\n".join(lines) + "\n"


def load_mdp_text(text: str) -> FiniteMdp:
    header: Dict[str, List[int]] = {}
    rows: Dict[Tuple[int, int], Dict[int, float]] = {}
    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        try:
            if ":" in line and line.split(":", 1)[0].strip() in ("states", "initial", "accepting", "targets"):
                key, value = line.split(":", 1)
                header[key.strip()] = [int(tok) for tok in value.split()]
                continue
            head, tail = line.split(":", 1)
            s, a = (int(tok) for tok in head.split())
            tokens = tail.split()
            if len(tokens) % 2:
                raise ValueError("successor list must be pairs 'state probability'")
            row = rows.setdefault((s, a), {})
            for t, p in zip(tokens[::2], tokens[1::2]):
                row[int(t)] = row.get(int(t), 0.0) + float(p)
        except ValueError as e:
            raise ValueError(f"line {number}: {e}") from None
    if "states" not in header or len(header["states"]) != 1:
        raise ValueError("missing 'states:' header")
    initial = header.get("initial", [0])
    return FiniteMdp.from_rows(
        header["states"][0],
        rows,
        accepting=header.get("accepting", []),
        initial=initial[0] if initial else 0,
        targets=header.get("targets", []),
    )


@dataclass(frozen=True)
class FiniteParams:
    # reach | chain | random | file
    fixture: str = "reach"
    success: float = 0.7
    n_trunc: int = 1000
    first_accepting: int = 3
    n: int = 5
    k: int = 2
    label_density: float = 0.3
    seed: int = 0
    mdp_file: Optional[str] = None
    initial_states: List[int] = field(default_factory=list)


def build_finite_mdp(p: FiniteParams) -> Tuple[FiniteMdp, Optional[List[FrozenSet[str]]]]:
    """MDP named by the parameters plus its default proposition table, if it has one."""
    if p.fixture == "reach":
        return reach_fixture(p.success)
    if p.fixture == "chain":
        return chain_mdp(p.n_trunc, p.first_accepting), None
    if p.fixture == "random":
        return random_finite_mdp(p.n, p.k, p.label_density, np.random.default_rng(p.seed)), None
    if p.fixture == "file":
        if not p.mdp_file:
            raise ValueError("finite: fixture 'file' needs mdp_file")
        with open(p.mdp_file, "r", encoding="utf-8") as f:
            return load_mdp_text(f.read()), None
    raise ValueError(f"finite: unknown fixture '{p.fixture}', expected reach | chain | random | file")
