"""
Labelling functions.

Propositions are unions of closed axis-aligned boxes over named state
dimensions. The letter partition is derived exactly from a breakpoint grid:
along every dimension the box endpoints split the line into points and open
intervals, and each grid cell carries the set of propositions holding in it.
Letters are named with `letter_name` (`L_a_c1`, `L_none`, ...).

Relaxed labelling Λ_r(s) returns every letter taken by some state within
infinity-norm distance r of s. Regions are unions of grid cells, so this is
exact interval arithmetic on the cells: point cells are closed and the
intervals between breakpoints are open, so at r > 0 a state exactly r away
from an open cell does not pick up its letter.
"""

from dataclasses import dataclass
from itertools import product as cartesian
from typing import Any, Dict, FrozenSet, Iterable, List, Mapping, Optional, Sequence, Tuple

import numpy as np

from ..logic.ltl import Letter, letter_name


class CurriculumError(ValueError):
    """Invalid relaxation radii, ζ schedule or region overrides."""


@dataclass(frozen=True)
class Box:
    lo: Tuple[float, ...]
    hi: Tuple[float, ...]

    def __post_init__(self):
        if len(self.lo) != len(self.hi):
            raise ValueError("box bounds must have the same dimension")
        if any(l > h for l, h in zip(self.lo, self.hi)):
            raise ValueError(f"empty box {self.lo} > {self.hi}")

    def contains(self, s: np.ndarray, r: float = 0.0) -> bool:
        s = np.asarray(s)
        return bool(np.all(np.asarray(self.lo) - r <= s) and np.all(s <= np.asarray(self.hi) + r))

    def inflate(self, r: float) -> "Box":
        return Box(tuple(l - r for l in self.lo), tuple(h + r for h in self.hi))

    def within(self, other: "Box") -> bool:
        return all(ol <= l and h <= oh for l, h, ol, oh in zip(self.lo, self.hi, other.lo, other.hi))


Region = Tuple[Box, ...]


def parse_regions(spec: Mapping[str, Any], dims: Sequence[str]) -> Dict[str, Region]:
    """
    {prop: [{dim: [lo, hi], ...}, ...]} -> {prop: boxes}. Dimensions left out
    of a box are unconstrained.
    """
    regions: Dict[str, Region] = {}
    for prop, boxes in spec.items():
        if isinstance(boxes, Mapping):
            boxes = [boxes]
        parsed = []
        for box in boxes:
            unknown = set(box) - set(dims)
            if unknown:
                raise ValueError(f"proposition '{prop}': unknown dimensions {sorted(unknown)}, expected {list(dims)}")
            lo, hi = [], []
            for dim in dims:
                interval = box.get(dim)
                if interval is None:
                    lo.append(-np.inf)
                    hi.append(np.inf)
                    continue
                if len(interval) != 2:
                    raise ValueError(f"proposition '{prop}': interval for '{dim}' must be [lo, hi]")
                lo.append(float(interval[0]))
                hi.append(float(interval[1]))
            parsed.append(Box(tuple(lo), tuple(hi)))
        if not parsed:
            raise ValueError(f"proposition '{prop}' has no boxes")
        regions[str(prop)] = tuple(parsed)
    return regions


def region_within(inner: Region, outer: Region, r_inner: float = 0.0, r_outer: float = 0.0) -> bool:
    """Sufficient containment check: every inflated inner box lies in one inflated outer box."""
    return all(any(a.inflate(r_inner).within(b.inflate(r_outer)) for b in outer) for a in inner)


def _grid_cells(regions: Mapping[str, Region], d: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    Elementary cells of the breakpoint grid: bounds, one interior
    representative point per cell, and per axis whether the cell is a single
    breakpoint (closed) rather than an open interval.
    """
    axes: List[List[Tuple[float, float, float]]] = []
    for k in range(d):
        points = sorted({b for boxes in regions.values() for box in boxes for b in (box.lo[k], box.hi[k]) if np.isfinite(b)})
        intervals: List[Tuple[float, float, float]] = []
        if not points:
            intervals.append((-np.inf, np.inf, 0.0))
        else:
            intervals.append((-np.inf, points[0], points[0] - 1.0))
            for i, p in enumerate(points):
                intervals.append((p, p, p))
                if i + 1 < len(points):
                    intervals.append((p, points[i + 1], 0.5 * (p + points[i + 1])))
            intervals.append((points[-1], np.inf, points[-1] + 1.0))
        axes.append(intervals)

    cells = list(cartesian(*axes))
    lo = np.array([[iv[0] for iv in cell] for cell in cells], dtype=np.float64).reshape(len(cells), d)
    hi = np.array([[iv[1] for iv in cell] for cell in cells], dtype=np.float64).reshape(len(cells), d)
    rep = np.array([[iv[2] for iv in cell] for cell in cells], dtype=np.float64).reshape(len(cells), d)
    return lo, hi, rep, lo == hi


def _props_at(regions: Mapping[str, Region], s: np.ndarray) -> FrozenSet[str]:
    return frozenset(p for p, boxes in regions.items() if any(box.contains(s) for box in boxes))


class Labeling:
    """
    Box labelling Λ: S -> Σ with exact r-relaxation.

    Args:
        dims: state dimension names
        regions: proposition -> boxes
        ap: declared propositions (defaults to the keys of regions)
    """

    def __init__(self, dims: Sequence[str], regions: Mapping[str, Region], ap: Optional[Iterable[str]] = None):
        self.dims = tuple(dims)
        self.regions = dict(regions)
        self.ap = tuple(sorted(set(ap) if ap is not None else set(self.regions)))
        missing = set(self.regions) - set(self.ap)
        if missing:
            raise ValueError(f"regions for undeclared propositions {sorted(missing)}")

        lo, hi, rep, closed = _grid_cells(self.regions, len(self.dims))
        cell_letters = [_props_at(self.regions, point) for point in rep]
        self.letters: Tuple[Letter, ...] = tuple(sorted(set(cell_letters), key=lambda x: (len(x), sorted(x))))
        self.names: Tuple[str, ...] = tuple(letter_name(x) for x in self.letters)
        self._name_of = dict(zip(self.letters, self.names))
        self._cell_lo, self._cell_hi, self._cell_closed = lo, hi, closed
        self._cell_names = np.array([self._name_of[x] for x in cell_letters], dtype=object)

    @classmethod
    def from_config(cls, dims: Sequence[str], spec: Mapping[str, Any], ap: Optional[Iterable[str]] = None) -> "Labeling":
        return cls(dims, parse_regions(spec, dims), ap)

    def letter(self, s: np.ndarray) -> Letter:
        """Λ(s) as a set of base propositions."""
        return _props_at(self.regions, s)

    def label(self, s: np.ndarray) -> str:
        """Name of the letter Λ(s)."""
        return self._name_of[self.letter(s)]

    def relaxed_label(self, s: np.ndarray, r: float = 0.0) -> FrozenSet[str]:
        """Λ_r(s) as a set of letter names; the singleton {Λ(s)} at r = 0."""
        if r < 0:
            raise ValueError(f"relaxation radius must be nonnegative, got {r}")
        exact = self.label(s)
        if r == 0:
            return frozenset((exact,))
        s = np.asarray(s, dtype=np.float64)
        lo, hi = self._cell_lo - r, self._cell_hi + r
        above = np.where(self._cell_closed, lo <= s, lo < s)
        below = np.where(self._cell_closed, s <= hi, s < hi)
        inside = np.all(above & below, axis=1)
        return frozenset(self._cell_names[inside].tolist()) | {exact}

    def __call__(self, s: np.ndarray) -> FrozenSet[str]:
        return self.relaxed_label(s, 0.0)


class StageLabeler:
    """
    Labeller of one curriculum stage: Λ_r of the base labelling, united with
    the letters admitted by per-proposition region overrides.

    Under an override, a letter σ is admitted at s when every proposition of
    σ holds in its overridden region and every other proposition fails in
    its base region. With overrides equal to the base regions this is {Λ(s)}.
    """

    def __init__(self, base: Labeling, radius: float = 0.0, overrides: Optional[Mapping[str, Region]] = None):
        if radius < 0:
            raise CurriculumError(f"relaxation radius must be nonnegative, got {radius}")
        self.base = base
        self.radius = float(radius)
        self.overrides = dict(overrides or {})
        unknown = set(self.overrides) - set(base.ap)
        if unknown:
            raise CurriculumError(f"overrides for unknown propositions {sorted(unknown)}")
        for prop, region in self.overrides.items():
            if prop in base.regions and not region_within(base.regions[prop], region):
                raise CurriculumError(f"override of '{prop}' does not contain its base region")
        if self.overrides:
            relaxed = {**base.regions, **self.overrides}
            _, _, rep, _ = _grid_cells(relaxed, len(base.dims))
            for point in rep:
                letter = _props_at(relaxed, point)
                if letter not in base._name_of:
                    raise CurriculumError(f"override produces letter {letter_name(letter)} outside the base alphabet")

    @property
    def is_exact(self) -> bool:
        return self.radius == 0 and all(
            self.base.regions.get(p) == region for p, region in self.overrides.items()
        )

    def __call__(self, s: np.ndarray) -> FrozenSet[str]:
        result = self.base.relaxed_label(s, self.radius)
        if not self.overrides:
            return result
        s = np.asarray(s, dtype=np.float64)
        held_base = self.base.letter(s)
        held_relaxed = frozenset(
            p for p in self.base.ap
            if any(box.contains(s) for box in self.overrides.get(p, self.base.regions.get(p, ())))
        )
        extra = [
            name for letter, name in zip(self.base.letters, self.base.names)
            if letter <= held_relaxed and held_base <= letter
        ]
        return result | frozenset(extra)

    def nested_in(self, earlier: "StageLabeler") -> bool:
        """True when this stage's regions lie inside the earlier (more relaxed) stage's."""
        if self.radius > earlier.radius:
            return False
        for prop in self.base.ap:
            mine = self.overrides.get(prop, self.base.regions.get(prop, ()))
            theirs = earlier.overrides.get(prop, self.base.regions.get(prop, ()))
            if not region_within(mine, theirs, self.radius, earlier.radius):
                return False
        return True


class TableLabeling:
    """Per-state letters for finite MDPs (state index -> propositions)."""

    def __init__(self, table: Sequence[Iterable[str]], ap: Optional[Iterable[str]] = None):
        self.table = tuple(frozenset(x) for x in table)
        declared = set(ap) if ap is not None else set().union(*self.table) if self.table else set()
        self.ap = tuple(sorted(declared))
        for i, letter in enumerate(self.table):
            if not letter <= set(self.ap):
                raise ValueError(f"state {i}: undeclared propositions {sorted(letter - set(self.ap))}")
        self.letters: Tuple[Letter, ...] = tuple(sorted(set(self.table), key=lambda x: (len(x), sorted(x))))
        self.names: Tuple[str, ...] = tuple(letter_name(x) for x in self.letters)

    def letter(self, s: np.ndarray) -> Letter:
        return self.table[int(np.argmax(s))]

    def label(self, s: np.ndarray) -> str:
        return letter_name(self.letter(s))

    def relaxed_label(self, s: np.ndarray, r: float = 0.0) -> FrozenSet[str]:
        if r < 0:
            raise ValueError(f"relaxation radius must be nonnegative, got {r}")
        return frozenset((self.label(s),))

    def state_letters(self) -> List[FrozenSet[str]]:
        """Letter-atom set of every state, as consumed by finite products."""
        return [frozenset((letter_name(x),)) for x in self.table]

    def __call__(self, s: np.ndarray) -> FrozenSet[str]:
        return self.relaxed_label(s, 0.0)
