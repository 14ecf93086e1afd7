"""Exception hierarchy shared across the package."""

from __future__ import annotations


class MaxrunError(Exception):
    """Base class for all package-specific errors."""


class InputError(MaxrunError, ValueError):
    """A caller-supplied value violates a documented precondition."""


class FamilySpecError(InputError):
    """A family-spec document failed to parse or validate."""

    def __init__(self, message: str, field: str | None = None):
        self.field = field
        super().__init__(message if field is None else f"{field}: {message}")


class ClosureNotVerifiedError(MaxrunError):
    """An operation required a closure property the family does not have."""


class EmptyFamilyError(MaxrunError):
    """A family has no admissible word at some requested length."""


class BudgetExceededError(MaxrunError):
    """An exhaustive search hit its configured budget before finishing."""


class CountUnavailableError(BudgetExceededError):
    """A word count could not be produced within the enumeration budget."""


class BlockerNotFoundError(MaxrunError):
    """No blocker word exists at the requested length (or none was found)."""

    def __init__(self, n: int, s, reason: str):
        self.n = n
        self.s = s
        self.reason = reason
        super().__init__(f"no blocker of length {n} with s={s}: {reason}")


class ConstructionError(MaxrunError):
    """A digit-stream construction cannot be carried out as configured."""


class SandwichViolationError(MaxrunError):
    """An internal invariant of a constructed stream failed verification.

    This indicates a construction bug, not bad input; the CLI maps it to
    exit code 2.
    """
