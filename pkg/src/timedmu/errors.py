"""Exception hierarchy shared across the toolkit."""


class TimedMuError(Exception):
    """Base class for all toolkit errors."""


class FormulaSyntaxError(TimedMuError):
    """Raised on malformed formula or constraint text; carries a position."""

    def __init__(self, message, position=None):
        if position is not None:
            message = f"{message} (at offset {position})"
        super().__init__(message)
        self.position = position


class AutomatonFormatError(TimedMuError):
    """Raised on malformed timed-automaton input text."""


class SemanticError(TimedMuError):
    """Raised when a well-formed input violates a semantic side condition."""


class ClockDomainError(SemanticError):
    """Raised when an operation references a clock outside a valuation's domain."""


class UnsupportedFormulaError(SemanticError):
    """Raised when the concrete-semantics oracle is given a formula it cannot decide."""


class EnumerationIncompleteError(TimedMuError):
    """Internal error: a satisfaction vector was not found in the region table."""
