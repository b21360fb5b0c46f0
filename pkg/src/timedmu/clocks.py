"""Clock identifiers, exact-rational valuations, and conjunctive clock constraints.

All clock arithmetic is exact (``fractions.Fraction``); strict-versus-weak
comparisons against integer constants are the whole point of the analyses
built on top, and floating point would corrupt them.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Iterable, Iterator, Mapping, Optional, Tuple

from .errors import ClockDomainError, FormulaSyntaxError

AUTOMATON = "automaton"
FREEZE = "freeze"

RELATIONS = ("<", "<=", ">", ">=")


@dataclass(frozen=True, order=True)
class ClockId:
    """A named clock.  Automaton clocks live in models, freeze clocks in formulas."""

    name: str
    kind: str = FREEZE

    def __post_init__(self):
        if self.kind not in (AUTOMATON, FREEZE):
            raise ValueError(f"unknown clock kind: {self.kind!r}")

    def __str__(self):
        return self.name


def automaton_clock(name: str) -> ClockId:
    return ClockId(name, AUTOMATON)


def freeze_clock(name: str) -> ClockId:
    return ClockId(name, FREEZE)


@dataclass(frozen=True)
class AtomicConstraint:
    """``x rel c`` when ``right`` is None, else the diagonal ``x - x' rel c``."""

    left: ClockId
    rel: str
    constant: int
    right: Optional[ClockId] = None

    def __post_init__(self):
        if self.rel not in RELATIONS:
            raise ValueError(f"unknown relation: {self.rel!r}")
        if self.constant < 0 or not isinstance(self.constant, int):
            raise ValueError("constraint constants must be natural numbers")
        if self.right is not None and self.right == self.left:
            raise ValueError("diagonal constraints need two distinct clocks")

    @property
    def is_diagonal(self) -> bool:
        return self.right is not None

    def clocks(self) -> frozenset[ClockId]:
        if self.right is None:
            return frozenset((self.left,))
        return frozenset((self.left, self.right))

    def value(self, valuation: "Valuation") -> Fraction:
        if self.right is None:
            return valuation[self.left]
        return valuation[self.left] - valuation[self.right]

    def holds(self, valuation: "Valuation") -> bool:
        return _compare(self.value(valuation), self.rel, self.constant)

    def __str__(self):
        lhs = self.left.name if self.right is None else f"{self.left.name}-{self.right.name}"
        return f"{lhs}{self.rel}{self.constant}"


def _compare(value, rel: str, constant) -> bool:
    if rel == "<":
        return value < constant
    if rel == "<=":
        return value <= constant
    if rel == ">":
        return value > constant
    return value >= constant


@dataclass(frozen=True)
class ClockConstraint:
    """A conjunction of atomic constraints; the empty conjunction is ``tt``."""

    conjuncts: Tuple[AtomicConstraint, ...] = ()

    @staticmethod
    def true() -> "ClockConstraint":
        return ClockConstraint(())

    @staticmethod
    def false(clock: ClockId) -> "ClockConstraint":
        # There is no negation in the constraint language, so falsity is the
        # canonical unsatisfiable atom over an already-declared clock.
        return ClockConstraint((AtomicConstraint(clock, "<", 0),))

    def clocks(self) -> frozenset[ClockId]:
        out: frozenset[ClockId] = frozenset()
        for atom in self.conjuncts:
            out |= atom.clocks()
        return out

    def __str__(self):
        if not self.conjuncts:
            return "tt"
        return " & ".join(str(a) for a in self.conjuncts)


def bound(constraint) -> int:
    """Largest constant appearing in a constraint; 0 for the empty conjunction."""
    if isinstance(constraint, AtomicConstraint):
        return constraint.constant
    if not constraint.conjuncts:
        return 0
    return max(atom.constant for atom in constraint.conjuncts)


def clock_set(constraint) -> frozenset[ClockId]:
    """Exactly the clocks mentioned by a constraint."""
    if isinstance(constraint, AtomicConstraint):
        return constraint.clocks()
    return constraint.clocks()


class Valuation:
    """An immutable exact-rational clock assignment over a finite clock set."""

    __slots__ = ("_values",)

    def __init__(self, values: Mapping[ClockId, object]):
        frozen = {}
        for clock, raw in values.items():
            value = Fraction(raw)
            if value < 0:
                raise ValueError(f"clock {clock.name} assigned negative value {value}")
            frozen[clock] = value
        self._values = frozen

    @staticmethod
    def zero(clocks: Iterable[ClockId]) -> "Valuation":
        return Valuation({c: Fraction(0) for c in clocks})

    @property
    def domain(self) -> frozenset[ClockId]:
        return frozenset(self._values)

    def __getitem__(self, clock: ClockId) -> Fraction:
        try:
            return self._values[clock]
        except KeyError:
            raise ClockDomainError(f"unknown clock: {clock.name}") from None

    def __contains__(self, clock: ClockId) -> bool:
        return clock in self._values

    def __iter__(self) -> Iterator[ClockId]:
        return iter(sorted(self._values))

    def items(self):
        return ((c, self._values[c]) for c in sorted(self._values))

    def delay(self, delta) -> "Valuation":
        """The valuation ``delta`` time units in the future."""
        delta = Fraction(delta)
        if delta < 0:
            raise ValueError("delays must be non-negative")
        return Valuation({c: v + delta for c, v in self._values.items()})

    def reset(self, clocks: Iterable[ClockId]) -> "Valuation":
        """Clocks in ``clocks`` set to 0, all others unchanged."""
        clocks = set(clocks)
        for clock in clocks:
            if clock not in self._values:
                raise ClockDomainError(f"unknown clock: {clock.name}")
        return Valuation(
            {c: (Fraction(0) if c in clocks else v) for c, v in self._values.items()}
        )

    def extended(self, clocks: Iterable[ClockId], value=0) -> "Valuation":
        """Add missing clocks at the given value (used to cover freeze clocks)."""
        values = dict(self._values)
        for clock in clocks:
            values.setdefault(clock, Fraction(value))
        return Valuation(values)

    def satisfies(self, constraint) -> bool:
        if isinstance(constraint, AtomicConstraint):
            return constraint.holds(self)
        return all(atom.holds(self) for atom in constraint.conjuncts)

    def __eq__(self, other):
        return isinstance(other, Valuation) and self._values == other._values

    def __hash__(self):
        return hash(frozenset(self._values.items()))

    def __repr__(self):
        inner = ", ".join(f"{c.name}={v}" for c, v in self.items())
        return f"Valuation({inner})"


def satisfies(valuation: Valuation, constraint) -> bool:
    return valuation.satisfies(constraint)


_CONSTRAINT_TOKEN = re.compile(r"\s*(tt|ff|[A-Za-z_][A-Za-z0-9_]*|\d+|<=|>=|[<>=&-])")


def parse_constraint(
    text: str,
    resolve: Callable[[str], ClockId],
    false_clock: Optional[ClockId] = None,
) -> ClockConstraint:
    """Parse the shared constraint syntax.

    ``atom ::= ID rel NAT | ID '-' ID rel NAT``, conjunction with ``&``,
    ``tt``, ``ff``, and ``ID '=' NAT`` as sugar for a pair of weak bounds.
    ``resolve`` maps a clock name to its identity and may raise
    ``FormulaSyntaxError`` for undeclared names.
    """
    tokens = []
    pos = 0
    while pos < len(text):
        match = _CONSTRAINT_TOKEN.match(text, pos)
        if not match:
            if text[pos:].strip():
                raise FormulaSyntaxError("bad constraint syntax", pos)
            break
        tokens.append((match.group(1), match.start(1)))
        pos = match.end()

    atoms = []
    i = 0

    def expect(kind_test, what):
        nonlocal i
        if i >= len(tokens) or not kind_test(tokens[i][0]):
            where = tokens[i][1] if i < len(tokens) else len(text)
            raise FormulaSyntaxError(f"expected {what} in constraint", where)
        token = tokens[i][0]
        i += 1
        return token

    while True:
        token = expect(lambda t: True, "atom")
        if token == "tt":
            pass
        elif token == "ff":
            if false_clock is None:
                raise FormulaSyntaxError("ff needs at least one declared clock")
            atoms.extend(ClockConstraint.false(false_clock).conjuncts)
        elif token.isdigit():
            raise FormulaSyntaxError("constraint atoms start with a clock name")
        else:
            left = resolve(token)
            right = None
            if i < len(tokens) and tokens[i][0] == "-":
                i += 1
                right = resolve(expect(lambda t: t[0].isalpha() or t[0] == "_", "clock name"))
            rel = expect(lambda t: t in ("<", "<=", ">", ">=", "="), "relation")
            constant = int(expect(lambda t: t.isdigit(), "natural constant"))
            if rel == "=":
                atoms.append(AtomicConstraint(left, "<=", constant, right))
                atoms.append(AtomicConstraint(left, ">=", constant, right))
            else:
                atoms.append(AtomicConstraint(left, rel, constant, right))
        if i >= len(tokens):
            break
        if tokens[i][0] != "&":
            raise FormulaSyntaxError("expected '&' between atoms", tokens[i][1])
        i += 1

    return ClockConstraint(tuple(atoms))
