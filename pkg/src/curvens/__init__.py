"""Curvature ensembles: tensor calculus on a metric catalog, curvature-action
quadrature, rotation expansions, Monte Carlo partition scaling, a mass model
and discrete particle dynamics."""

from __future__ import annotations

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    CurvensError,
    DerivativeOverflow,
    DomainError,
    IllConditioned,
    InvalidParam,
    NoConvergence,
    NonStationaryField,
    RegimeViolation,
    SingularMetric,
    SpacelikeSegment,
    StepFailure,
    UnsupportedPerturbation,
)
from .catalog import parse_metric_id  # noqa: E402
from .tensor import MetricField, curvature_at, curvature_on  # noqa: E402

__all__ = [
    "CurvensError",
    "DerivativeOverflow",
    "DomainError",
    "IllConditioned",
    "InvalidParam",
    "MetricField",
    "NoConvergence",
    "NonStationaryField",
    "RegimeViolation",
    "SingularMetric",
    "SpacelikeSegment",
    "StepFailure",
    "UnsupportedPerturbation",
    "curvature_at",
    "curvature_on",
    "parse_metric_id",
]
