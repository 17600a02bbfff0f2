"""
Exception hierarchy for the IDMA workbench.

Every failure a caller can act on is one of these classes. The CLI maps them to
exit codes in one place (``app.main``):

- ``ConfigError`` and ``PathError``        -> exit code 2 (usage / input)
- ``NumericError`` and its subclasses     -> exit code 1 (numeric failure)

``DomainError`` doubles as ``ValueError`` so library callers can catch it the
usual way when passing out-of-range arguments.
"""
from __future__ import annotations

from typing import Any, Sequence


class WorkbenchError(Exception):
    """Base class for all workbench errors."""


class ConfigError(WorkbenchError):
    """Raised when a configuration document fails schema or invariant checks.

    Parameters
    ----------
    key : str
        Dotted document key that caused the failure (e.g. ``users.g[1]``).
    message : str
        Human-readable reason.
    """

    def __init__(self, key: str, message: str):
        self.key = key
        self.reason = message
        super().__init__(f"{key} {message}" if key else message)


class DomainError(WorkbenchError, ValueError):
    """Raised when a numeric argument lies outside the domain of a function."""


class PathError(WorkbenchError, ValueError):
    """Raised when breakpoints do not form a valid decoding path."""

    def __init__(self, message: str, *, index: int | None = None, coordinate: int | None = None):
        self.index = index
        self.coordinate = coordinate
        super().__init__(message)


class NumericError(WorkbenchError):
    """Base class for numeric failures (exit code 1)."""


class QuadratureError(NumericError):
    """Adaptive quadrature did not reach the requested tolerance."""

    def __init__(self, message: str, *, segment: int, user: int | None = None, abserr: float | None = None):
        self.segment = segment
        self.user = user
        self.abserr = abserr
        super().__init__(message)


class InfeasibleTargetError(NumericError):
    """A rate tuple violates a capacity-region subset constraint."""

    def __init__(self, message: str, *, subset: Sequence[int], bound: float, total: float):
        self.subset = tuple(subset)
        self.bound = bound
        self.total = total
        super().__init__(message)


class PathSolveError(NumericError):
    """No start of the path solver reached the residual tolerance."""

    def __init__(self, message: str, *, best_residual: float, starts: int):
        self.best_residual = best_residual
        self.starts = starts
        super().__init__(message)


class LpInfeasibleError(NumericError):
    """The degree-profile LP has no feasible point."""

    def __init__(self, message: str, *, rho: float, iev: float, margin: float):
        self.rho = rho
        self.iev = iev
        self.margin = margin
        super().__init__(message)


class NoSignChangeError(NumericError):
    """A bisection bracket does not contain a sign change."""

    def __init__(self, message: str, *, bracket: tuple[float, float], detail: Any = None):
        self.bracket = bracket
        self.detail = detail
        super().__init__(message)


class CodeConstructionError(NumericError):
    """An LDPC graph could not be realized for the requested profile and length."""
