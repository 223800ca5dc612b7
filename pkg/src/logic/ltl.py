"""
Linear temporal logic front end.

Concrete ASCII syntax (precedence from loosest to tightest):

    formula  ::= or ( "->" formula )?
    or       ::= and ( "|" and )*
    and      ::= temporal ( "&" temporal )*
    temporal ::= unary ( ("U" | "R") temporal )?
    unary    ::= ("!" | "X" | "<>" | "[]") unary | "true" | "false" | NAME | "(" formula ")"

`U` and `R` associate to the right. `!p` on a bare proposition is read as the
negated literal directly. Formulas are immutable and hashable, so every
operation here is a pure function.

Exact semantics are evaluated on lasso words (a finite prefix followed by a
cycle repeated forever), which is all the oracles and tests need.
"""

from dataclasses import dataclass
from enum import Enum
from itertools import chain
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np
from lark import Lark, Token, Transformer, v_args
from lark.exceptions import UnexpectedInput, UnexpectedToken, VisitError

from ..utils.constants import EMPTY_LETTER_NAME, LETTER_PREFIX

Letter = FrozenSet[str]


class Kind(str, Enum):
    """Node kinds of the formula tree."""

    true = "true"
    false = "false"
    atom = "atom"
    neg_atom = "neg_atom"
    neg = "neg"
    conj = "and"
    disj = "or"
    next = "next"
    until = "until"
    release = "release"
    eventually = "eventually"
    always = "always"


_UNARY = {Kind.neg, Kind.next, Kind.eventually, Kind.always}
_BINARY = {Kind.conj, Kind.disj, Kind.until, Kind.release}
_TEMPORAL = {Kind.next, Kind.until, Kind.release, Kind.eventually, Kind.always}


@dataclass(frozen=True)
class LtlFormula:
    kind: Kind
    children: Tuple["LtlFormula", ...] = ()
    atom: Optional[str] = None

    @property
    def is_pnf(self) -> bool:
        """True when no general negation node occurs anywhere in the tree."""
        if self.kind == Kind.neg:
            return False
        return all(child.is_pnf for child in self.children)

    def __str__(self) -> str:
        return format_ltl(self)


class LtlSyntaxError(ValueError):
    """Malformed formula text; position is a 0-based character offset."""

    def __init__(self, message: str, position: int):
        super().__init__(f"{message} at position {position}")
        self.position = position


class UnknownPropositionError(ValueError):
    """Identifier outside the declared set of atomic propositions."""

    def __init__(self, name: str, position: int):
        super().__init__(f"unknown proposition '{name}' at position {position}")
        self.name = name
        self.position = position


@dataclass(frozen=True)
class LassoWord:
    """Ultimately periodic word prefix · cycle^ω over letters (sets of atoms)."""

    prefix: Tuple[Letter, ...]
    cycle: Tuple[Letter, ...]

    def __post_init__(self):
        if len(self.cycle) < 1:
            raise ValueError("lasso cycle must contain at least one letter")
        object.__setattr__(self, "prefix", tuple(frozenset(x) for x in self.prefix))
        object.__setattr__(self, "cycle", tuple(frozenset(x) for x in self.cycle))

    def __len__(self) -> int:
        return len(self.prefix) + len(self.cycle)

    def letter(self, position: int) -> Letter:
        if position < len(self.prefix):
            return self.prefix[position]
        return self.cycle[(position - len(self.prefix)) % len(self.cycle)]

    def successor(self, position: int) -> int:
        """Next position in the folded word (0..len-1)."""
        return position + 1 if position + 1 < len(self) else len(self.prefix)

    def atoms(self) -> FrozenSet[str]:
        return frozenset(chain.from_iterable(chain(self.prefix, self.cycle)))


# ---------------------------------------------------------------------------
# Constructors
# ---------------------------------------------------------------------------

TRUE = LtlFormula(Kind.true)
FALSE = LtlFormula(Kind.false)


def atom(name: str) -> LtlFormula:
    return LtlFormula(Kind.atom, atom=name)


def neg_atom(name: str) -> LtlFormula:
    return LtlFormula(Kind.neg_atom, atom=name)


def neg(f: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.neg, (f,))


def conj(left: LtlFormula, right: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.conj, (left, right))


def disj(left: LtlFormula, right: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.disj, (left, right))


def next_(f: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.next, (f,))


def until(left: LtlFormula, right: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.until, (left, right))


def release(left: LtlFormula, right: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.release, (left, right))


def eventually(f: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.eventually, (f,))


def always(f: LtlFormula) -> LtlFormula:
    return LtlFormula(Kind.always, (f,))


def disjunction(items: Sequence[LtlFormula]) -> LtlFormula:
    """Right-nested disjunction; the empty disjunction is false."""
    if not items:
        return FALSE
    result = items[-1]
    for item in reversed(items[:-1]):
        result = disj(item, result)
    return result


# ---------------------------------------------------------------------------
# Parsing
# ---------------------------------------------------------------------------

GRAMMAR = r"""
?start: formula

?formula: or_expr
    | or_expr "->" formula          -> implies

?or_expr: and_expr
    | or_expr "|" and_expr          -> disj

?and_expr: temporal
    | and_expr "&" temporal         -> conj

?temporal: unary
    | unary "U" temporal            -> until
    | unary "R" temporal            -> release

?unary: primary
    | "!" unary                     -> neg
    | "X" unary                     -> next
    | "<>" unary                    -> eventually
    | "[]" unary                    -> always

?primary: "true"                    -> true
    | "false"                       -> false
    | NAME                          -> atom
    | "(" formula ")"

NAME: /(?!(?:U|R|X|true|false)(?![A-Za-z0-9_]))[A-Za-z_][A-Za-z0-9_]*/

%import common.WS
%ignore WS
"""

_PARSER = Lark(GRAMMAR, parser="lalr", propagate_positions=False)


@v_args(inline=True)
class _ToFormula(Transformer):
    """Translate the Lark tree into LtlFormula values, checking propositions."""

    def __init__(self, ap: Optional[Iterable[str]]):
        super().__init__()
        self.ap = None if ap is None else frozenset(ap)

    def true(self):
        return TRUE

    def false(self):
        return FALSE

    def atom(self, token: Token):
        if self.ap is not None and str(token) not in self.ap:
            raise UnknownPropositionError(str(token), token.start_pos)
        return atom(str(token))

    def neg(self, child):
        if child.kind == Kind.atom:
            return neg_atom(child.atom)
        return neg(child)

    def implies(self, left, right):
        return disj(self.neg(left), right)

    def disj(self, left, right):
        return disj(left, right)

    def conj(self, left, right):
        return conj(left, right)

    def until(self, left, right):
        return until(left, right)

    def release(self, left, right):
        return release(left, right)

    def next(self, child):
        return next_(child)

    def eventually(self, child):
        return eventually(child)

    def always(self, child):
        return always(child)


def parse_ltl(text: str, ap: Optional[Iterable[str]] = None) -> LtlFormula:
    """
    Parse formula text.

    Args:
        text: formula in the ASCII syntax documented in docs/ltl_grammar.md
        ap: declared atomic propositions; None accepts any identifier

    Raises:
        LtlSyntaxError: malformed input (with character position)
        UnknownPropositionError: identifier not in ap
    """
    if not text or not text.strip():
        raise LtlSyntaxError("empty formula", 0)
    try:
        tree = _PARSER.parse(text)
    except UnexpectedInput as e:
        position = getattr(e, "pos_in_stream", None)
        at_end = isinstance(e, UnexpectedToken) and e.token.type == "$END"
        if position is None or position < 0 or at_end:
            position = len(text)
        raise LtlSyntaxError("syntax error", position) from None
    try:
        return _ToFormula(ap).transform(tree)
    except VisitError as e:
        if isinstance(e.orig_exc, ValueError):
            raise e.orig_exc from None
        raise


_BINARY_SYMBOL = {Kind.conj: "&", Kind.disj: "|", Kind.until: "U", Kind.release: "R"}
_UNARY_SYMBOL = {Kind.neg: "!", Kind.next: "X ", Kind.eventually: "<>", Kind.always: "[]"}


def format_ltl(f: LtlFormula) -> str:
    """Print a formula in the concrete syntax; binary nodes are parenthesized."""
    if f.kind == Kind.true:
        return "true"
    if f.kind == Kind.false:
        return "false"
    if f.kind == Kind.atom:
        return f.atom
    if f.kind == Kind.neg_atom:
        return f"!{f.atom}"
    if f.kind in _UNARY:
        return f"{_UNARY_SYMBOL[f.kind]}{format_ltl(f.children[0])}"
    left, right = f.children
    return f"({format_ltl(left)} {_BINARY_SYMBOL[f.kind]} {format_ltl(right)})"


# ---------------------------------------------------------------------------
# Structural helpers
# ---------------------------------------------------------------------------

def atoms(f: LtlFormula) -> FrozenSet[str]:
    if f.atom is not None:
        return frozenset((f.atom,))
    return frozenset(chain.from_iterable(atoms(child) for child in f.children))


def size(f: LtlFormula) -> int:
    return 1 + sum(size(child) for child in f.children)


def to_pnf(f: LtlFormula) -> LtlFormula:
    """Push negations down to the propositions (positive normal form)."""
    if f.kind == Kind.neg:
        return _negate(f.children[0])
    if not f.children:
        return f
    return LtlFormula(f.kind, tuple(to_pnf(child) for child in f.children), f.atom)


def _negate(f: LtlFormula) -> LtlFormula:
    """PNF of the negation of f."""
    k = f.kind
    if k == Kind.true:
        return FALSE
    if k == Kind.false:
        return TRUE
    if k == Kind.atom:
        return neg_atom(f.atom)
    if k == Kind.neg_atom:
        return atom(f.atom)
    if k == Kind.neg:
        return to_pnf(f.children[0])
    if k == Kind.conj:
        return disj(_negate(f.children[0]), _negate(f.children[1]))
    if k == Kind.disj:
        return conj(_negate(f.children[0]), _negate(f.children[1]))
    if k == Kind.next:
        return next_(_negate(f.children[0]))
    if k == Kind.until:
        return release(_negate(f.children[0]), _negate(f.children[1]))
    if k == Kind.release:
        return until(_negate(f.children[0]), _negate(f.children[1]))
    if k == Kind.eventually:
        return always(_negate(f.children[0]))
    if k == Kind.always:
        return eventually(_negate(f.children[0]))
    raise NotImplementedError(k)


def desugar(f: LtlFormula) -> LtlFormula:
    """Expand eventually/always into until/release."""
    children = tuple(desugar(child) for child in f.children)
    if f.kind == Kind.eventually:
        return until(TRUE, children[0])
    if f.kind == Kind.always:
        return release(FALSE, children[0])
    return LtlFormula(f.kind, children, f.atom) if children else f


# ---------------------------------------------------------------------------
# Letters and reinterpretation over the alphabet
# ---------------------------------------------------------------------------

def letter_name(letter: Iterable[str]) -> str:
    """Atom name standing for a whole letter, e.g. {a, c1} -> L_a_c1."""
    props = sorted(letter)
    return LETTER_PREFIX + "_".join(props) if props else EMPTY_LETTER_NAME


def interpret_over_alphabet(f_pnf: LtlFormula, letters: Sequence[Iterable[str]]) -> LtlFormula:
    """
    Replace p by the disjunction of letters containing p, and !p by the
    disjunction of letters not containing p. The result is PNF over the
    letter atoms named by letter_name.
    """
    letters = [frozenset(x) for x in letters]
    if len(set(letters)) != len(letters):
        raise ValueError("alphabet letters must be pairwise distinct")
    if not f_pnf.is_pnf:
        raise ValueError("formula must be in positive normal form")

    names = [letter_name(x) for x in letters]

    def rewrite(f: LtlFormula) -> LtlFormula:
        if f.kind == Kind.atom:
            return disjunction([atom(n) for n, x in zip(names, letters) if f.atom in x])
        if f.kind == Kind.neg_atom:
            return disjunction([atom(n) for n, x in zip(names, letters) if f.atom not in x])
        if not f.children:
            return f
        return LtlFormula(f.kind, tuple(rewrite(child) for child in f.children))

    return rewrite(f_pnf)


def negation_over_alphabet(f: LtlFormula, letters: Sequence[Iterable[str]]) -> LtlFormula:
    """
    PNF negation of f taken after the reinterpretation over the letters.

    On singleton letters this agrees with reinterpreting neg(f). On sets of
    letter atoms, as produced by a relaxed labelling, it is the complement
    of the reinterpreted f, so relaxation makes it harder to satisfy.
    """
    return to_pnf(neg(interpret_over_alphabet(to_pnf(f), letters)))


def letterize(w: LassoWord, letters: Sequence[Iterable[str]]) -> LassoWord:
    """Map every letter of w to the singleton letter-atom naming it."""
    known = {frozenset(x) for x in letters}

    def single(x: Letter) -> Letter:
        if x not in known:
            raise ValueError(f"letter {sorted(x)} is not in the alphabet")
        return frozenset((letter_name(x),))

    return LassoWord(tuple(single(x) for x in w.prefix), tuple(single(x) for x in w.cycle))


# ---------------------------------------------------------------------------
# Exact semantics
# ---------------------------------------------------------------------------

def holds_now(f: LtlFormula, letter: Iterable[str]) -> bool:
    """Evaluate a propositional formula on a single letter."""
    letter = frozenset(letter)
    k = f.kind
    if k == Kind.true:
        return True
    if k == Kind.false:
        return False
    if k == Kind.atom:
        return f.atom in letter
    if k == Kind.neg_atom:
        return f.atom not in letter
    if k == Kind.neg:
        return not holds_now(f.children[0], letter)
    if k == Kind.conj:
        return holds_now(f.children[0], letter) and holds_now(f.children[1], letter)
    if k == Kind.disj:
        return holds_now(f.children[0], letter) or holds_now(f.children[1], letter)
    raise ValueError(f"temporal operator '{k.value}' in a propositional context")


def eval_lasso(f: LtlFormula, w: LassoWord) -> bool:
    """Decide w ⊨ f at position 0."""
    return _truth_vector(f, w, {})[0]


def _truth_vector(f: LtlFormula, w: LassoWord, memo: Dict[LtlFormula, List[bool]]) -> List[bool]:
    cached = memo.get(f)
    if cached is not None:
        return cached

    n = len(w)
    k = f.kind
    if k == Kind.true:
        values = [True] * n
    elif k == Kind.false:
        values = [False] * n
    elif k == Kind.atom:
        values = [f.atom in w.letter(i) for i in range(n)]
    elif k == Kind.neg_atom:
        values = [f.atom not in w.letter(i) for i in range(n)]
    elif k == Kind.neg:
        values = [not v for v in _truth_vector(f.children[0], w, memo)]
    elif k == Kind.conj:
        a, b = (_truth_vector(c, w, memo) for c in f.children)
        values = [x and y for x, y in zip(a, b)]
    elif k == Kind.disj:
        a, b = (_truth_vector(c, w, memo) for c in f.children)
        values = [x or y for x, y in zip(a, b)]
    elif k == Kind.next:
        a = _truth_vector(f.children[0], w, memo)
        values = [a[w.successor(i)] for i in range(n)]
    elif k in (Kind.until, Kind.eventually):
        if k == Kind.until:
            a, b = (_truth_vector(c, w, memo) for c in f.children)
        else:
            a, b = [True] * n, _truth_vector(f.children[0], w, memo)
        values = _fixpoint(w, a, b, least=True)
    elif k in (Kind.release, Kind.always):
        if k == Kind.release:
            a, b = (_truth_vector(c, w, memo) for c in f.children)
        else:
            a, b = [False] * n, _truth_vector(f.children[0], w, memo)
        values = _fixpoint(w, a, b, least=False)
    else:
        raise NotImplementedError(k)

    memo[f] = values
    return values


def _fixpoint(w: LassoWord, a: List[bool], b: List[bool], least: bool) -> List[bool]:
    """
    Until:   u[i] = b[i] or (a[i] and u[i+1]),  least fixpoint from all-false.
    Release: r[i] = b[i] and (a[i] or r[i+1]),  greatest fixpoint from all-true.
    Sweeping positions backwards stabilizes the cycle in at most |cycle| + 1 sweeps.
    """
    n = len(w)
    values = [not least] * n
    for _ in range(len(w.cycle) + 2):
        changed = False
        for i in reversed(range(n)):
            after = values[w.successor(i)]
            new = (b[i] or (a[i] and after)) if least else (b[i] and (a[i] or after))
            if new != values[i]:
                values[i] = new
                changed = True
        if not changed:
            break
    return values


# ---------------------------------------------------------------------------
# Random generators for the oracle suites
# ---------------------------------------------------------------------------

def random_formula(ap: Sequence[str], depth: int, rng: np.random.Generator) -> LtlFormula:
    """Random formula with general negation, depth at most `depth`."""
    ap = list(ap)
    if depth <= 0 or rng.random() < 0.2:
        choice = rng.integers(0, 4)
        if choice == 0:
            return TRUE if rng.random() < 0.5 else FALSE
        name = ap[int(rng.integers(0, len(ap)))]
        return neg_atom(name) if choice == 1 else atom(name)

    kinds = [Kind.neg, Kind.conj, Kind.disj, Kind.next, Kind.until, Kind.release, Kind.eventually, Kind.always]
    kind = kinds[int(rng.integers(0, len(kinds)))]
    if kind in _BINARY:
        return LtlFormula(kind, (random_formula(ap, depth - 1, rng), random_formula(ap, depth - 1, rng)))
    return LtlFormula(kind, (random_formula(ap, depth - 1, rng),))


def random_letter(ap: Sequence[str], rng: np.random.Generator) -> Letter:
    return frozenset(p for p in ap if rng.random() < 0.5)


def random_lasso(
    rng: np.random.Generator,
    ap: Sequence[str] = (),
    letters: Optional[Sequence[Iterable[str]]] = None,
    max_prefix: int = 6,
    max_cycle: int = 6,
) -> LassoWord:
    """
    Random lasso word. Letters are drawn uniformly from `letters` when given,
    otherwise as random subsets of `ap`.
    """
    pool = None if letters is None else [frozenset(x) for x in letters]

    def draw() -> Letter:
        if pool is not None:
            return pool[int(rng.integers(0, len(pool)))]
        return random_letter(ap, rng)

    prefix = tuple(draw() for _ in range(int(rng.integers(0, max_prefix + 1))))
    cycle = tuple(draw() for _ in range(int(rng.integers(1, max_cycle + 1))))
    return LassoWord(prefix, cycle)
