"""
Exception hierarchy for the jetlab package.
"""

from typing import Iterable, Optional


class JetlabError(Exception):
    """Base class for every error raised by jetlab."""


class InvalidInput(JetlabError, ValueError):
    """Malformed or non-finite input."""


class OutOfDomain(InvalidInput):
    """A base point lies outside the set X a subequation lives on."""


class InvalidCoefficient(InvalidInput):
    """A coefficient field violates its sign or shape requirement."""


class FiberDegenerate(JetlabError):
    """A fiber is empty or all of jet space where a boundary is needed."""


class PreconditionError(JetlabError):
    """A harness gate (verdict, boundary ordering, endpoint membership) failed."""


class Unsupported(JetlabError):
    """The requested check has no meaning for the given input."""


class NotAdmissibleData(JetlabError):
    """Solver data admits no admissible solution (the iteration diverges)."""


class IterationLimitExceeded(JetlabError):
    """An iterative solver hit its iteration cap."""


class EvalError(JetlabError):
    """Expression evaluation failed."""


class ExpressionSyntaxError(InvalidInput):
    """Syntax error in a coefficient expression."""

    def __init__(self, message: str, line: int, col: int,
                 expected: Optional[Iterable[str]] = None):
        self.line = line
        self.col = col
        self.expected = sorted(set(expected or ()))
        detail = f" (expected one of: {', '.join(self.expected)})" if self.expected else ""
        super().__init__(f"{message} at line {line}, col {col}{detail}")
