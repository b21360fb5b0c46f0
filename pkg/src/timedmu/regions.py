"""Equivalence classes of clock valuations under bounded logical equivalence.

A region is identified by its satisfaction vector over all atomic clock
constraints with constants up to the bound ``d`` (including diagonal
constraints, in both orders).  The vector representation is the definition
made literal; enumeration walks a rational grid fine enough to hit every
class and deduplicates vectors, and a randomized completeness test guards
the grid parameters.
"""

from __future__ import annotations

import itertools
from fractions import Fraction
from functools import lru_cache
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

import numpy as np

from .clocks import AtomicConstraint, ClockConstraint, ClockId, Valuation
from .errors import EnumerationIncompleteError, SemanticError

# Largest grid (number of valuations) the eager enumeration will attempt.
# Four clocks at bound 2 need ~33M points; anything bigger is out of reach
# for the eager construction and should fail loudly.
_MAX_GRID_POINTS = 120_000_000

_CHUNK_TARGET = 4_000_000


def _atom_layout(n: int, d: int) -> List[Tuple[int, int, bool, int]]:
    """Canonical order of the {<, <=} atoms; (i, j, strict, c); j < 0 = single."""
    layout = []
    for i in range(n):
        for c in range(d + 1):
            layout.append((i, -1, True, c))
            layout.append((i, -1, False, c))
    for i in range(n):
        for j in range(n):
            if i == j:
                continue
            for c in range(d + 1):
                layout.append((i, j, True, c))
                layout.append((i, j, False, c))
    return layout


def _atom_bits(values: np.ndarray, layout, scale: int) -> np.ndarray:
    columns = []
    for i, j, strict, c in layout:
        lhs = values[:, i] if j < 0 else values[:, i] - values[:, j]
        rhs = c * scale
        columns.append(lhs < rhs if strict else lhs <= rhs)
    return np.stack(columns, axis=1)


def _pack_single(bits: Sequence[bool]) -> bytes:
    total = len(bits)
    nbytes = (total + 7) // 8
    acc = 0
    for bit in bits:
        acc = (acc << 1) | bit
    acc <<= nbytes * 8 - total
    return acc.to_bytes(nbytes, "big")


def _grid_points(count_per_clock: int, n: int):
    """Yield chunks of the full grid of numerator vectors, shape (rows, n)."""
    vals = np.arange(count_per_clock, dtype=np.int64)
    fixed = 0
    while count_per_clock ** (n - fixed) > _CHUNK_TARGET and fixed < n - 1:
        fixed += 1
    tail = n - fixed
    mesh = np.stack(np.meshgrid(*([vals] * tail), indexing="ij"), axis=-1)
    tail_rows = mesh.reshape(-1, tail)
    if fixed == 0:
        yield tail_rows
        return
    for prefix in itertools.product(range(count_per_clock), repeat=fixed):
        block = np.empty((tail_rows.shape[0], n), dtype=np.int64)
        block[:, :fixed] = prefix
        block[:, fixed:] = tail_rows
        yield block


class _NumericTable:
    """Name-free region data for ``n`` clocks at bound ``d``.

    Representatives are stored as integer numerators at denominator ``n+1``.
    """

    def __init__(self, n: int, d: int):
        self.n = n
        self.d = d
        self.den = n + 1
        self.layout = _atom_layout(n, d)
        self._atom_pos = {atom: pos for pos, atom in enumerate(self.layout)}
        self._build()
        self._tsucc: Optional[np.ndarray] = None
        self._resets: Dict[FrozenSet[int], np.ndarray] = {}
        self._key_matrix: Optional[np.ndarray] = None

    def _build(self):
        n, d, den = self.n, self.d, self.den
        per_clock = (d + 1) * den * den + 1
        total = per_clock**n
        if total > _MAX_GRID_POINTS:
            raise SemanticError(
                f"region enumeration over {n} clocks at bound {d} needs "
                f"{total} grid points; problem too large for eager regions"
            )
        found: Dict[bytes, np.ndarray] = {}
        for chunk in _grid_points(per_clock, n):
            bits = _atom_bits(chunk, self.layout, den)
            packed = np.packbits(bits, axis=1)
            uniq, first = np.unique(packed, axis=0, return_index=True)
            for row, src in zip(uniq, first):
                key = row.tobytes()
                if key not in found:
                    found[key] = chunk[src].copy()
        keys = sorted(found)
        self.keys: List[bytes] = keys
        self.key_index: Dict[bytes, int] = {k: i for i, k in enumerate(keys)}
        self.reps = np.array([found[k] for k in keys], dtype=np.int64)
        self.count = len(keys)
        bounded = self.reps <= d * den
        self.unbounded = ~bounded.any(axis=1)

    def _lookup_rows(self, packed: np.ndarray) -> np.ndarray:
        out = np.empty(packed.shape[0], dtype=np.int64)
        index = self.key_index
        for i in range(packed.shape[0]):
            key = packed[i].tobytes()
            if key not in index:
                raise EnumerationIncompleteError(
                    "region enumeration incomplete: derived vector missing"
                )
            out[i] = index[key]
        return out

    def tsucc_map(self) -> np.ndarray:
        if self._tsucc is not None:
            return self._tsucc
        den = self.den
        reps = self.reps
        bounded = reps <= self.d * den
        frac = reps % den
        big = np.iinfo(np.int64).max
        gaps = np.where(
            bounded & (frac > 0),
            den - frac,
            np.where(bounded & (frac == 0), den, big),
        )
        min_gap = gaps.min(axis=1)
        on_boundary = (bounded & (frac == 0)).any(axis=1)
        # Delay numerators at scale 2*den: half the gap when some clock sits
        # on an integer boundary (step into the adjacent open class), the
        # full gap otherwise (step onto the next boundary).
        delta2 = np.where(on_boundary, min_gap, 2 * min_gap)
        moved = 2 * reps + delta2[:, None]
        bits = _atom_bits(moved, self.layout, 2 * den)
        packed = np.packbits(bits, axis=1)
        result = self._lookup_rows(packed)
        result[self.unbounded] = np.nonzero(self.unbounded)[0]
        self._tsucc = result
        return result

    def reset_map(self, indices: FrozenSet[int]) -> np.ndarray:
        cached = self._resets.get(indices)
        if cached is not None:
            return cached
        if not indices:
            result = np.arange(self.count, dtype=np.int64)
        else:
            reps = self.reps.copy()
            reps[:, sorted(indices)] = 0
            bits = _atom_bits(reps, self.layout, self.den)
            packed = np.packbits(bits, axis=1)
            result = self._lookup_rows(packed)
        self._resets[indices] = result
        return result

    def key_of_numerators(self, nums: Sequence[Fraction], scale) -> bytes:
        bits = []
        for i, j, strict, c in self.layout:
            lhs = nums[i] if j < 0 else nums[i] - nums[j]
            rhs = c * scale
            bits.append(lhs < rhs if strict else lhs <= rhs)
        return _pack_single(bits)

    def atom_column(self, i: int, j: int, strict: bool, c: int) -> np.ndarray:
        """Truth of one atom across all regions, read out of the packed keys."""
        pos = self._atom_pos[(i, j, strict, c)]
        byte, bit = divmod(pos, 8)
        if self._key_matrix is None:
            flat = np.frombuffer(b"".join(self.keys), dtype=np.uint8)
            self._key_matrix = flat.reshape(self.count, -1)
        return (self._key_matrix[:, byte] >> (7 - bit)) & 1 == 1


@lru_cache(maxsize=32)
def _numeric_table(n: int, d: int) -> _NumericTable:
    return _NumericTable(n, d)


class Region:
    """One equivalence class: its key, a grid representative, and its frame."""

    __slots__ = ("key", "index", "representative", "clock_set", "bound", "_table")

    def __init__(self, key, index, representative, clock_set, bound, table):
        self.key = key
        self.index = index
        self.representative = representative
        self.clock_set = clock_set
        self.bound = bound
        self._table = table

    @property
    def is_unbounded(self) -> bool:
        return bool(self._table._numeric.unbounded[self.index])

    def satisfies(self, constraint) -> bool:
        return self._table.region_satisfies(self, constraint)

    def __eq__(self, other):
        return (
            isinstance(other, Region)
            and self.key == other.key
            and self.clock_set == other.clock_set
            and self.bound == other.bound
        )

    def __hash__(self):
        return hash((self.key, self.clock_set, self.bound))

    def __str__(self):
        return self._table.pretty(self)

    def __repr__(self):
        return f"Region({self._table.pretty(self)})"


class RegionKey:
    """Canonical packed satisfaction vector; equal keys mean equal regions."""

    __slots__ = ("bits",)

    def __init__(self, bits: bytes):
        self.bits = bits

    def __eq__(self, other):
        return isinstance(other, RegionKey) and self.bits == other.bits

    def __lt__(self, other):
        return self.bits < other.bits

    def __hash__(self):
        return hash(self.bits)

    def __repr__(self):
        return f"RegionKey({self.bits.hex()})"


class RegionTable:
    """All regions for a fixed clock set and bound, in canonical key order."""

    def __init__(self, clocks: FrozenSet[ClockId], d: int):
        if not clocks:
            raise SemanticError("region construction needs a non-empty clock set")
        self.clocks: Tuple[ClockId, ...] = tuple(sorted(clocks))
        self.clock_set = frozenset(clocks)
        self.d = d
        self._index_of_clock = {c: i for i, c in enumerate(self.clocks)}
        self._numeric = _numeric_table(len(self.clocks), d)
        self._regions: List[Optional[Region]] = [None] * self._numeric.count

    def __len__(self) -> int:
        return self._numeric.count

    def region(self, index: int) -> Region:
        cached = self._regions[index]
        if cached is not None:
            return cached
        numeric = self._numeric
        rep = Valuation(
            {c: Fraction(int(numeric.reps[index, i]), numeric.den) for i, c in enumerate(self.clocks)}
        )
        region = Region(
            RegionKey(numeric.keys[index]), index, rep, self.clock_set, self.d, self
        )
        self._regions[index] = region
        return region

    def regions(self) -> List[Region]:
        return [self.region(i) for i in range(len(self))]

    def _clock_index(self, clock: ClockId) -> int:
        try:
            return self._index_of_clock[clock]
        except KeyError:
            raise SemanticError(f"clock {clock.name} is not part of this region frame") from None

    def region_of(self, valuation: Valuation) -> Region:
        nums = []
        for clock in self.clocks:
            nums.append(valuation[clock])
        key = self._numeric.key_of_numerators(nums, 1)
        index = self._numeric.key_index.get(key)
        if index is None:
            raise EnumerationIncompleteError(
                "region enumeration incomplete: no region for the given valuation"
            )
        return self.region(index)

    def tsucc(self, region: Region) -> Region:
        return self.region(int(self._numeric.tsucc_map()[region.index]))

    def reset(self, region: Region, clocks: Iterable[ClockId]) -> Region:
        indices = frozenset(self._clock_index(c) for c in clocks)
        return self.region(int(self._numeric.reset_map(indices)[region.index]))

    def reset_indices(self, clocks: Iterable[ClockId]) -> np.ndarray:
        """Region-index map for resetting a clock subset (shared with builders)."""
        indices = frozenset(self._clock_index(c) for c in clocks)
        return self._numeric.reset_map(indices)

    def tsucc_indices(self) -> np.ndarray:
        return self._numeric.tsucc_map()

    def _atom_bit(self, region: Region, atom: AtomicConstraint) -> bool:
        if atom.constant > self.d:
            raise SemanticError(
                f"constraint {atom} exceeds the region bound {self.d}"
            )
        i = self._clock_index(atom.left)
        j = -1 if atom.right is None else self._clock_index(atom.right)
        if atom.rel in ("<", "<="):
            pos = self._numeric._atom_pos[(i, j, atom.rel == "<", atom.constant)]
            return self._key_bit(region.key.bits, pos)
        # x > c is the negation of x <= c; x >= c is the negation of x < c.
        strict = atom.rel == ">="
        pos = self._numeric._atom_pos[(i, j, strict, atom.constant)]
        return not self._key_bit(region.key.bits, pos)

    @staticmethod
    def _key_bit(bits: bytes, pos: int) -> bool:
        byte, bit = divmod(pos, 8)
        return (bits[byte] >> (7 - bit)) & 1 == 1

    def region_satisfies(self, region: Region, constraint) -> bool:
        if isinstance(constraint, AtomicConstraint):
            return self._atom_bit(region, constraint)
        return all(self._atom_bit(region, atom) for atom in constraint.conjuncts)

    def satisfying_mask(self, constraint) -> np.ndarray:
        """Boolean vector over all regions for a conjunction (vectorized)."""
        numeric = self._numeric
        mask = np.ones(numeric.count, dtype=bool)
        atoms = (
            constraint.conjuncts
            if isinstance(constraint, ClockConstraint)
            else (constraint,)
        )
        for atom in atoms:
            if atom.constant > self.d:
                raise SemanticError(
                    f"constraint {atom} exceeds the region bound {self.d}"
                )
            i = self._clock_index(atom.left)
            j = -1 if atom.right is None else self._clock_index(atom.right)
            if atom.rel == "<":
                mask &= numeric.atom_column(i, j, True, atom.constant)
            elif atom.rel == "<=":
                mask &= numeric.atom_column(i, j, False, atom.constant)
            elif atom.rel == ">":
                mask &= ~numeric.atom_column(i, j, False, atom.constant)
            else:
                mask &= ~numeric.atom_column(i, j, True, atom.constant)
        return mask

    def _single_class(self, region: Region, i: int) -> Tuple[Optional[int], Optional[int]]:
        """Clock class as (lo, hi): (c, c) exact, (c, c+1) open, (d, None) unbounded."""
        bits = region.key.bits
        for c in range(self.d + 1):
            le = self._key_bit(bits, self._numeric._atom_pos[(i, -1, False, c)])
            if le:
                lt = self._key_bit(bits, self._numeric._atom_pos[(i, -1, True, c)])
                if lt:
                    return (c - 1, c)
                return (c, c)
        return (self.d, None)

    def _pair_class(self, region: Region, i: int, j: int) -> Tuple[Optional[int], Optional[int]]:
        """Class of x_i - x_j against integers in [-d, d]; same encoding as above."""
        bits = region.key.bits
        pos = self._numeric._atom_pos

        def le(c):
            if c >= 0:
                return self._key_bit(bits, pos[(i, j, False, c)])
            return not self._key_bit(bits, pos[(j, i, True, -c)])

        def lt(c):
            if c >= 0:
                return self._key_bit(bits, pos[(i, j, True, c)])
            return not self._key_bit(bits, pos[(j, i, False, -c)])

        for c in range(-self.d, self.d + 1):
            if le(c):
                if lt(c):
                    return (None, c) if c == -self.d else (c - 1, c)
                return (c, c)
        return (self.d, None)

    @staticmethod
    def _class_text(name: str, lo, hi) -> str:
        if lo is None:
            return f"{name}<{hi}"
        if hi is None:
            return f"{name}>{lo}"
        if lo == hi:
            return f"{name}={lo}"
        return f"{lo}<{name}<{hi}"

    def pretty(self, region: Region) -> str:
        parts = []
        singles = {}
        for i, clock in enumerate(self.clocks):
            lo, hi = self._single_class(region, i)
            singles[i] = (lo, hi)
            parts.append(self._class_text(clock.name, lo, hi))
        for i in range(len(self.clocks)):
            for j in range(i + 1, len(self.clocks)):
                if self._pair_informative(singles[i], singles[j]):
                    lo, hi = self._pair_class(region, i, j)
                    name = f"{self.clocks[i].name}-{self.clocks[j].name}"
                    parts.append(self._class_text(name, lo, hi))
        return ", ".join(parts)

    @staticmethod
    def _pair_informative(class_i, class_j) -> bool:
        """Whether the difference class adds information beyond the two singles.

        Exact-vs-exact pins the difference; exact-vs-bounded-open confines it
        to one unit interval.  Everything else can straddle class borders.
        """
        (lo_i, hi_i), (lo_j, hi_j) = class_i, class_j
        if hi_i is None or hi_j is None:
            return True
        exact_i = lo_i == hi_i
        exact_j = lo_j == hi_j
        return not (exact_i or exact_j)


@lru_cache(maxsize=64)
def get_region_table(clocks: FrozenSet[ClockId], d: int) -> RegionTable:
    return RegionTable(clocks, d)


def enumerate_regions(clocks: Iterable[ClockId], d: int) -> List[Region]:
    """All regions over the clock set at bound ``d``, in canonical key order."""
    return get_region_table(frozenset(clocks), d).regions()


def region_of(valuation: Valuation, clocks: Iterable[ClockId], d: int) -> Region:
    return get_region_table(frozenset(clocks), d).region_of(valuation)


def equivalent(v: Valuation, w: Valuation, clocks: Iterable[ClockId], d: int) -> bool:
    """Bounded logical equivalence: agreement on every atom with constant <= d."""
    clocks = sorted(frozenset(clocks))
    for i, x in enumerate(clocks):
        for c in range(d + 1):
            if (v[x] < c) != (w[x] < c) or (v[x] <= c) != (w[x] <= c):
                return False
        for y in clocks:
            if x == y:
                continue
            dv, dw = v[x] - v[y], w[x] - w[y]
            for c in range(d + 1):
                if (dv < c) != (dw < c) or (dv <= c) != (dw <= c):
                    return False
    return True


def tsucc(region: Region) -> Region:
    return region._table.tsucc(region)


def is_unbounded(region: Region) -> bool:
    return region.is_unbounded


def region_reset(region: Region, clocks: Iterable[ClockId]) -> Region:
    return region._table.reset(region, clocks)


def region_satisfies(region: Region, constraint) -> bool:
    return region._table.region_satisfies(region, constraint)
