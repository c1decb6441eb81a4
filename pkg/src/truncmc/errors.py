"""Exception types shared across the library.

``DomainError`` marks invalid user-facing inputs (bad discount factor,
infeasible budget, malformed schedule); the CLI maps it to exit code 3.
``InternalCheckError`` marks a violated internal invariant and maps to
exit code 4.
"""
from __future__ import annotations


class DomainError(ValueError):
    """Invalid argument or infeasible configuration supplied by the caller."""


class BudgetMismatchError(DomainError):
    """Schedule counts do not spend exactly the declared transition budget."""


class BiasedScheduleError(DomainError):
    """Schedule collects no full-horizon trajectory, so estimates would be biased."""


class AbsoluteContinuityError(DomainError):
    """Behavior policy assigns (numerically) zero probability to an observed action."""


class InternalCheckError(RuntimeError):
    """An internal self-check failed; indicates a bug, not a usage error."""
