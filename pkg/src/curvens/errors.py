"""Exception hierarchy shared by every curvens module."""

from __future__ import annotations


class CurvensError(Exception):
    """Base class for all errors raised by curvens."""


class InvalidParam(CurvensError, ValueError):
    pass


class DomainError(CurvensError, ValueError):
    """A point or box lies outside the declared chart domain."""


class SingularMetric(CurvensError, ArithmeticError):
    """|det g| fell below the configured floor."""


class DerivativeOverflow(DomainError):
    """A finite-difference stencil would leave the chart."""


class UnsupportedPerturbation(DomainError):
    pass


class NonStationaryField(CurvensError, ValueError):
    pass


class IllConditioned(CurvensError, ArithmeticError):
    pass


class RegimeViolation(CurvensError, ValueError):
    """The Ricci background is not large compared with mu_delta**(-1/4)."""


class StepFailure(CurvensError, ArithmeticError):
    pass


class SpacelikeSegment(CurvensError, ValueError):
    pass


class NoConvergence(CurvensError, RuntimeError):
    pass
