"""Exception hierarchy shared by all modules.

Every error carries an ``exit_code`` so the command-line front end can map
failures to a documented, distinct process status.
"""

from __future__ import annotations

from typing import Any


class DnlsPhaseError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class InvalidArgumentError(DnlsPhaseError, ValueError):
    """An argument violates a documented precondition."""

    exit_code = 2


class NoSolutionError(DnlsPhaseError):
    """A root-finding problem has no solution for the given data."""

    exit_code = 3


class AccuracyNotMetError(DnlsPhaseError):
    """A numerical estimate could not reach the requested tolerance.

    Attributes
    ----------
    best : Any
        The best value obtained before giving up.
    error : float
        The achieved error estimate.
    """

    exit_code = 4

    def __init__(self, message: str, best: Any = None, error: float = float("nan")):
        super().__init__(message)
        self.best = best
        self.error = error


class ConvergenceError(DnlsPhaseError):
    """An iterative method exhausted its iteration budget.

    Attributes
    ----------
    best : Any
        The best iterate obtained.
    """

    exit_code = 5

    def __init__(self, message: str, best: Any = None):
        super().__init__(message)
        self.best = best


class NumericOverflowError(DnlsPhaseError, ArithmeticError):
    """A computation produced non-finite values.

    Attributes
    ----------
    time : float or None
        Simulation time at which the overflow was detected, if applicable.
    """

    exit_code = 6

    def __init__(self, message: str, time: float | None = None):
        super().__init__(message)
        self.time = time


class DivergentConstantError(InvalidArgumentError):
    """The requested constant is infinite (for instance ``C_d`` with ``d < 3``)."""

    exit_code = 2


class InconsistencyError(DnlsPhaseError):
    """Two independent estimators of the same quantity disagree."""

    exit_code = 7


class InsufficientDataError(DnlsPhaseError):
    """Too few usable data points for a fit."""

    exit_code = 8


class UnreliableEstimateError(DnlsPhaseError):
    """A Monte Carlo estimate has too small an effective sample size.

    Attributes
    ----------
    diagnostics : dict
        Effective sample size and related quantities.
    """

    exit_code = 9

    def __init__(self, message: str, diagnostics: dict | None = None):
        super().__init__(message)
        self.diagnostics = diagnostics or {}


class BracketError(DnlsPhaseError):
    """A bisection bracket could not be established or became inconsistent.

    Attributes
    ----------
    trace : list
        The ``(theta, indicator)`` evaluations made before failing.
    """

    exit_code = 10

    def __init__(self, message: str, trace: list | None = None):
        super().__init__(message)
        self.trace = trace or []
