"""
Limit-deterministic Büchi automata with transition-based acceptance.

States are 0..n-1, split into an initial part (may carry ε-moves) and a
deterministic part that is closed under letter transitions and holds every
accepting transition. Letters are frozensets of atom names; after
reinterpretation over a labelling alphabet the atoms are letter names such
as `L_a_c1`, and a letter may hold several of them.

Text format (documented in docs/automaton_format.md):

    # comment
    name: boat_pos
    states: 2
    initial: 0
    deterministic: 0 1
    atoms: L_none L_t
    alphabet: powerset            # or explicit letters: {} {L_t} {L_none,L_t}
    0 --[!L_t]--> 0
    0 --{L_t}--> 1
    1 --[true]--> 1 !             # trailing ! marks accepting
    0 --eps--> 1                  # ε-move (initial part only)
"""

import os
import re
from dataclasses import dataclass, field
from itertools import combinations
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Set, Tuple

from .ltl import LassoWord, Letter, LtlSyntaxError, UnknownPropositionError, holds_now, parse_ltl
from ..utils.constants import get_builtin_automata_directory

BUILTIN_AUTOMATA = ("cartpole_pos", "cartpole_neg", "boat_pos", "boat_neg")


class AutomatonFormatError(ValueError):
    """Invalid automaton text or structure; line is 1-based (0 when structural)."""

    def __init__(self, message: str, line: int = 0, kind: str = "syntax"):
        where = f"line {line}: " if line else ""
        super().__init__(f"{where}{kind}: {message}")
        self.line = line
        self.kind = kind


@dataclass(frozen=True)
class Ldba:
    n_states: int
    deterministic: FrozenSet[int]
    atoms: Tuple[str, ...]
    alphabet: Tuple[Letter, ...]
    delta: Mapping[Tuple[int, Letter], int]
    epsilon: Mapping[int, FrozenSet[int]]
    initial: int
    accepting: FrozenSet[Tuple[int, Letter, int]]
    name: str = field(default="", compare=False)

    def __post_init__(self):
        _validate(self.n_states, self.deterministic, self.alphabet, self.delta, self.epsilon, self.initial, self.accepting)

    def step(self, q: int, letter: Iterable[str]) -> Optional[int]:
        """Unique successor of q on letter, or None when undefined."""
        return self.delta.get((q, frozenset(letter)))

    def is_accepting(self, q: int, letter: Iterable[str], target: Optional[int]) -> bool:
        return (q, frozenset(letter), target) in self.accepting

    def epsilon_targets(self) -> Tuple[int, ...]:
        return tuple(sorted(set().union(*self.epsilon.values()))) if self.epsilon else ()

    def is_total(self) -> bool:
        return all((q, letter) in self.delta for q in range(self.n_states) for letter in self.alphabet)

    def completed(self) -> "Ldba":
        """
        The same automaton with undefined letter transitions redirected to an
        explicit rejecting sink. Returns self when δ is already total.
        """
        if self.is_total():
            return self
        sink = self.n_states
        delta = dict(self.delta)
        for q in range(self.n_states + 1):
            for letter in self.alphabet:
                delta.setdefault((q, letter), sink)
        return Ldba(
            n_states=self.n_states + 1,
            deterministic=self.deterministic | {sink},
            atoms=self.atoms,
            alphabet=self.alphabet,
            delta=delta,
            epsilon=dict(self.epsilon),
            initial=self.initial,
            accepting=self.accepting,
            name=self.name,
        )


def _validate(n_states, deterministic, alphabet, delta, epsilon, initial, accepting, lines: Optional[Mapping] = None) -> None:
    """
    Enforce the structural invariants. `lines` maps transitions to their
    source line so that the loader can report positions.
    """
    lines = lines or {}
    letters = set(alphabet)
    states = range(n_states)

    def fail(message, kind, key=None):
        raise AutomatonFormatError(message, lines.get(key, 0), kind)

    if len(letters) != len(alphabet):
        fail("alphabet letters must be pairwise distinct", "syntax")
    if initial not in states:
        fail(f"initial state {initial} out of range", "dangling state")
    for q in deterministic:
        if q not in states:
            fail(f"deterministic state {q} out of range", "dangling state")
    for (q, letter), target in delta.items():
        key = (q, letter)
        if q not in states or target not in states:
            fail(f"transition {q} -> {target} references an unknown state", "dangling state", key)
        if letter not in letters:
            fail(f"letter {format_letter(letter)} is not in the alphabet", "unknown letter", key)
        if q in deterministic and target not in deterministic:
            fail(f"transition {q} -> {target} leaves the deterministic part", "trap", key)
    for q, targets in epsilon.items():
        key = (q, "eps")
        if targets and q in deterministic:
            fail(f"ε-move from deterministic state {q}", "epsilon-locality", key)
        for target in targets:
            if q not in states or target not in states:
                fail(f"ε-move {q} -> {target} references an unknown state", "dangling state", key)
            if target not in deterministic:
                fail(f"ε-move {q} -> {target} must enter the deterministic part", "epsilon-target", key)
    for q, letter, target in accepting:
        key = (q, letter)
        if q not in deterministic or target not in deterministic:
            fail(f"accepting transition {q} -> {target} outside the deterministic part", "acceptance placement", key)
        if delta.get((q, letter)) != target:
            fail(f"accepting transition {q} -> {target} is not a transition", "determinism", key)


# ---------------------------------------------------------------------------
# Letters
# ---------------------------------------------------------------------------

def powerset(atoms: Sequence[str]) -> Tuple[Letter, ...]:
    """All subsets of atoms, ordered by size then by atom order."""
    atoms = list(atoms)
    return tuple(frozenset(c) for k in range(len(atoms) + 1) for c in combinations(atoms, k))


def format_letter(letter: Iterable[str], order: Optional[Sequence[str]] = None) -> str:
    items = list(letter)
    if order is not None:
        rank = {a: i for i, a in enumerate(order)}
        items.sort(key=lambda a: rank.get(a, len(rank)))
    else:
        items.sort()
    return "{" + ",".join(items) + "}"


def _letter_items(text: str) -> List[str]:
    body = text.strip()
    if not (body.startswith("{") and body.endswith("}")):
        raise ValueError(f"letter must be written {{a,b}}, got '{text}'")
    return [item.strip() for item in body[1:-1].split(",") if item.strip()]


def _parse_letter(text: str) -> Letter:
    return frozenset(_letter_items(text))


_LETTER_LIST = re.compile(r"\{[^{}]*\}")


# ---------------------------------------------------------------------------
# Loading and serialization
# ---------------------------------------------------------------------------

_TRANSITION = re.compile(r"^(\d+)\s*--(.+?)-->\s*(\d+)\s*(!)?$")
_HEADER = re.compile(r"^([a-z_]+)\s*:(.*)$")


def load_automaton(text: str) -> Ldba:
    """
    Parse the line-oriented automaton format.

    Raises:
        AutomatonFormatError: with the offending line number and violation kind
    """
    header: Dict[str, Tuple[str, int]] = {}
    body: List[Tuple[int, re.Match]] = []

    for number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        match = _TRANSITION.match(line)
        if match:
            body.append((number, match))
            continue
        match = _HEADER.match(line)
        if not match:
            raise AutomatonFormatError(f"cannot parse '{line}'", number)
        key, value = match.group(1), match.group(2).strip()
        if key not in ("name", "states", "initial", "deterministic", "atoms", "alphabet"):
            raise AutomatonFormatError(f"unknown header field '{key}'", number)
        if key in header:
            raise AutomatonFormatError(f"duplicate header field '{key}'", number)
        header[key] = (value, number)

    for key in ("states", "initial", "alphabet"):
        if key not in header:
            raise AutomatonFormatError(f"missing header field '{key}'")

    def ints(key: str) -> List[int]:
        value, number = header.get(key, ("", 0))
        try:
            return [int(tok) for tok in value.split()]
        except ValueError:
            raise AutomatonFormatError(f"'{key}' expects integers", number) from None

    n_states = _single(ints("states"), "states", header)
    initial = _single(ints("initial"), "initial", header)
    deterministic = frozenset(ints("deterministic"))

    alphabet_text, alphabet_line = header["alphabet"]
    atoms = tuple(header["atoms"][0].split()) if "atoms" in header else ()
    if alphabet_text == "powerset":
        if not atoms:
            raise AutomatonFormatError("'alphabet: powerset' requires 'atoms'", alphabet_line)
        alphabet = powerset(atoms)
    else:
        letters = _LETTER_LIST.findall(alphabet_text)
        if not letters or _LETTER_LIST.sub("", alphabet_text).strip():
            raise AutomatonFormatError("alphabet must be 'powerset' or a list of {..} letters", alphabet_line)
        alphabet = tuple(_parse_letter(x) for x in letters)
        if not atoms:
            seen: List[str] = []
            for letter_text in letters:
                for item in _letter_items(letter_text):
                    if item not in seen:
                        seen.append(item)
            atoms = tuple(seen)
    known = frozenset(atoms)
    for letter in alphabet:
        if not letter <= known:
            raise AutomatonFormatError(f"letter {format_letter(letter)} uses undeclared atoms", alphabet_line, "unknown letter")

    delta: Dict[Tuple[int, Letter], int] = {}
    epsilon: Dict[int, Set[int]] = {}
    accepting: Set[Tuple[int, Letter, int]] = set()
    flags: Dict[Tuple[int, Letter], bool] = {}
    lines: Dict = {}

    for number, match in body:
        source, label, target = int(match.group(1)), match.group(2).strip(), int(match.group(3))
        is_accepting = match.group(4) is not None
        for state in (source, target):
            if not 0 <= state < n_states:
                raise AutomatonFormatError(f"state {state} out of range 0..{n_states - 1}", number, "dangling state")

        if label == "eps":
            if is_accepting:
                raise AutomatonFormatError("ε-moves cannot be accepting", number, "acceptance placement")
            epsilon.setdefault(source, set()).add(target)
            lines.setdefault((source, "eps"), number)
            continue

        for letter in _expand_label(label, atoms, alphabet, number):
            key = (source, letter)
            if key in delta and (delta[key] != target or flags[key] != is_accepting):
                raise AutomatonFormatError(
                    f"state {source} already has a transition on {format_letter(letter, atoms)}", number, "determinism"
                )
            delta[key] = target
            flags[key] = is_accepting
            lines.setdefault(key, number)
            if is_accepting:
                accepting.add((source, letter, target))

    frozen_epsilon = {q: frozenset(t) for q, t in epsilon.items()}
    _validate(n_states, deterministic, alphabet, delta, frozen_epsilon, initial, accepting, lines)
    return Ldba(
        n_states=n_states,
        deterministic=deterministic,
        atoms=atoms,
        alphabet=alphabet,
        delta=delta,
        epsilon=frozen_epsilon,
        initial=initial,
        accepting=frozenset(accepting),
        name=header.get("name", ("", 0))[0],
    )


def _single(values: List[int], key: str, header) -> int:
    if len(values) != 1:
        raise AutomatonFormatError(f"'{key}' expects exactly one integer", header[key][1])
    return values[0]


def _expand_label(label: str, atoms: Sequence[str], alphabet: Sequence[Letter], number: int) -> List[Letter]:
    """Letters matched by an explicit {..} letter or a [guard] formula."""
    if label.startswith("{"):
        try:
            letter = _parse_letter(label)
        except ValueError as e:
            raise AutomatonFormatError(str(e), number) from None
        if letter not in set(alphabet):
            raise AutomatonFormatError(f"letter {label} is not in the alphabet", number, "unknown letter")
        return [letter]

    if label.startswith("[") and label.endswith("]"):
        try:
            guard = parse_ltl(label[1:-1], atoms)
            return [letter for letter in alphabet if holds_now(guard, letter)]
        except UnknownPropositionError as e:
            raise AutomatonFormatError(str(e), number, "unknown letter") from None
        except (LtlSyntaxError, ValueError) as e:
            raise AutomatonFormatError(f"guard {label}: {e}", number) from None

    raise AutomatonFormatError(f"transition label must be 'eps', {{..}} or [..], got '{label}'", number)


def serialize_automaton(a: Ldba) -> str:
    """Inverse of load_automaton: explicit alphabet, one line per transition."""
    lines = []
    if a.name:
        lines.append(f"name: {a.name}")
    lines.append(f"states: {a.n_states}")
    lines.append(f"initial: {a.initial}")
    lines.append("deterministic: " + " ".join(str(q) for q in sorted(a.deterministic)))
    lines.append("atoms: " + " ".join(a.atoms))
    lines.append("alphabet: " + " ".join(format_letter(x, a.atoms) for x in a.alphabet))
    for q in range(a.n_states):
        for target in sorted(a.epsilon.get(q, ())):
            lines.append(f"{q} --eps--> {target}")
        for letter in a.alphabet:
            target = a.delta.get((q, letter))
            if target is None:
                continue
            mark = " !" if (q, letter, target) in a.accepting else ""
            lines.append(f"{q} --{format_letter(letter, a.atoms)}--> {target}{mark}")
    return "\n".join(lines) + "\n"


def load_automaton_file(path: str) -> Ldba:
    with open(path, "r", encoding="utf-8") as f:
        automaton = load_automaton(f.read())
    if not automaton.name:
        automaton = _renamed(automaton, os.path.splitext(os.path.basename(path))[0])
    return automaton


def _renamed(a: Ldba, name: str) -> Ldba:
    return Ldba(a.n_states, a.deterministic, a.atoms, a.alphabet, a.delta, a.epsilon, a.initial, a.accepting, name)


_BUILTIN_CACHE: Dict[str, Ldba] = {}


def builtin_automata() -> Dict[str, Ldba]:
    """The case-study automata, keyed by name."""
    if not _BUILTIN_CACHE:
        directory = get_builtin_automata_directory()
        for name in BUILTIN_AUTOMATA:
            _BUILTIN_CACHE[name] = load_automaton_file(os.path.join(directory, f"{name}.ldba"))
    return dict(_BUILTIN_CACHE)


def resolve_automaton(name_or_path: str) -> Ldba:
    """Built-in automaton by name, otherwise a file path."""
    if name_or_path in BUILTIN_AUTOMATA:
        return builtin_automata()[name_or_path]
    if not os.path.isfile(name_or_path):
        raise FileNotFoundError(f"automaton '{name_or_path}' is neither built in nor a file")
    return load_automaton_file(name_or_path)


# ---------------------------------------------------------------------------
# Lasso acceptance
# ---------------------------------------------------------------------------

def accepts_lasso(a: Ldba, w: LassoWord) -> bool:
    """
    True iff some resolution of the ε-choices gives a run on w whose
    transitions hit the accepting set infinitely often.

    ε-moves enter the deterministic part, which is closed, so a run makes at
    most one of them. The ε-free prefix of the run is deterministic; after
    position |prefix| + n·|cycle| its (state, cycle position) pairs repeat,
    so jumps beyond that bound add no new runs.
    """
    assert all(t in a.deterministic for targets in a.epsilon.values() for t in targets)

    if _accepts_from(a, w, a.initial, 0):
        return True
    if not a.epsilon:
        return False

    horizon = len(w.prefix) + a.n_states * len(w.cycle)
    q = a.initial
    for position in range(horizon + 1):
        for target in a.epsilon.get(q, ()):
            if _accepts_from(a, w, target, position):
                return True
        q = a.step(q, w.letter(position))
        if q is None:
            return False
    return False


def _accepts_from(a: Ldba, w: LassoWord, q: int, position: int) -> bool:
    """Follow the ε-free run from (q, position) until a (state, position) pair repeats."""
    length = len(w)
    folded = position if position < length else len(w.prefix) + (position - len(w.prefix)) % len(w.cycle)
    seen: Dict[Tuple[int, int], int] = {}
    trail: List[bool] = []
    while (q, folded) not in seen:
        seen[(q, folded)] = len(trail)
        letter = w.letter(folded)
        target = a.step(q, letter)
        if target is None:
            return False
        trail.append(a.is_accepting(q, letter, target))
        q, folded = target, w.successor(folded)
    return any(trail[seen[(q, folded)]:])
