"""Spherically symmetric mass model around a topological particle.

Covers the scalar-curvature ODE for metrics of the form
-(1 - a)dt^2 + (1 - a)^-1 dr^2 + r^2 dOmega^2, its exterior solution with a
smooth fit at the core radius, the pressure-driven radial profile, the
Xi_P(M) minimisation and the exact (alpha, beta) exponent system.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.optimize import brentq

from .errors import DomainError, InvalidParam, StepFailure
from .tensor import MetricField, evaluate_metric


@dataclass(frozen=True)
class LaurentProfile:
    """a(r) = sum of coeff * r^power with exact derivatives."""

    terms: Mapping[int, float]

    def __call__(self, r):
        r = np.asarray(r, dtype=float)
        return sum(c * r**p for p, c in self.terms.items())

    def derivatives(self, r):
        r = np.asarray(r, dtype=float)
        a = sum(c * r**p for p, c in self.terms.items())
        da = sum(c * p * r ** (p - 1) for p, c in self.terms.items())
        d2a = sum(c * p * (p - 1) * r ** (p - 2) for p, c in self.terms.items())
        return a, da, d2a


Profile = Union[LaurentProfile, Callable]


def _profile_derivatives(a: Profile, r, h: Optional[float] = None):
    if hasattr(a, "derivatives"):
        return a.derivatives(r)
    r = np.asarray(r, dtype=float)
    h = 1e-4 * np.maximum(np.abs(r), 1.0) if h is None else h
    f0, fp, fm = a(r), a(r + h), a(r - h)
    return f0, (fp - fm) / (2 * h), (fp - 2 * f0 + fm) / (h * h)


def ansatz_scalar_curvature(a: Profile, r, h: Optional[float] = None):
    """R = a'' + 4a'/r + 2a/r^2; exact derivatives for :class:`LaurentProfile`,
    central differences for plain callables."""
    r = np.asarray(r, dtype=float)
    if np.any(r <= 0):
        raise DomainError("radius must be positive")
    a0, da, d2a = _profile_derivatives(a, r, h)
    return d2a + 4.0 * da / r + 2.0 * a0 / (r * r)


@dataclass(frozen=True)
class MassProfile:
    M: float
    r0: float
    C1: float
    C2: float
    alpha: Fraction = Fraction(1, 3)
    beta: Fraction = Fraction(2, 3)

    @property
    def profile(self) -> LaurentProfile:
        return LaurentProfile({-1: self.C1, -2: self.C2})

    @property
    def a_at_core(self) -> float:
        return float(self.profile(self.r0))

    def as_dict(self) -> dict:
        return {
            "M": self.M,
            "r0": self.r0,
            "C1": self.C1,
            "C2": self.C2,
            "a_r0": self.a_at_core,
            "alpha": str(self.alpha),
            "beta": str(self.beta),
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def solve_exterior_profile(M: float, r0: float) -> MassProfile:
    """C1 from a ~ 2M/r at infinity, C2 from a'(r0) = 0."""
    if M < 0 or not r0 > 0:
        raise InvalidParam("need M >= 0 and r0 > 0")
    C1 = 2.0 * M
    # a'(r0) = -C1/r0^2 - 2 C2/r0^3 = 0
    C2 = -0.5 * C1 * r0
    return MassProfile(M, r0, C1, C2)


def rk4(f: Callable[[float, float], float], y0: float, x0: float, x1: float, steps: int):
    """Classical fixed-step fourth-order Runge-Kutta from x0 to x1."""
    xs = np.linspace(x0, x1, steps + 1)
    ys = np.empty(steps + 1)
    ys[0] = y = y0
    h = (x1 - x0) / steps
    for n in range(steps):
        x = xs[n]
        k1 = f(x, y)
        k2 = f(x + 0.5 * h, y + 0.5 * h * k1)
        k3 = f(x + 0.5 * h, y + 0.5 * h * k2)
        k4 = f(x + h, y + h * k3)
        y = y + h * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0
        if not math.isfinite(y):
            raise StepFailure(f"non-finite state at r={xs[n + 1]:g}")
        ys[n + 1] = y
    return xs, ys


@dataclass(frozen=True)
class RadialSamples:
    r: np.ndarray
    a: np.ndarray
    richardson_error: float

    def to_csv(self) -> str:
        lines = ["r,a"]
        lines += [f"{ri!r},{ai!r}" for ri, ai in zip(self.r.tolist(), self.a.tolist())]
        return "\n".join(lines) + "\n"


def pressure_profile_integrate(r_start: float, r_end: float, a_start: float, steps: int = 2000) -> RadialSamples:
    """Integrate -da = (a/r) dr inward from ``r_end`` (where a = ``a_start``) to
    ``r_start``. Samples are returned in increasing r; ``richardson_error``
    estimates the error at ``r_start`` from a run with half the steps."""
    if not 0 < r_start < r_end:
        raise InvalidParam("need 0 < r_start < r_end")
    rhs = lambda r, a: -a / r
    xs, ys = rk4(rhs, a_start, r_end, r_start, steps)
    _, coarse = rk4(rhs, a_start, r_end, r_start, max(1, steps // 2))
    err = abs(ys[-1] - coarse[-1]) / 15.0
    return RadialSamples(xs[::-1].copy(), ys[::-1].copy(), float(err))


def xi_particle_of_M(M, I: float, alpha: float = 1 / 3, beta: float = 2 / 3, k1: float = 1.0, k2: float = 1.0, mu: float = 1.0):
    """Xi_P = mu I - k1 I M^beta + k2 M^(1 + 2 alpha)."""
    M = np.asarray(M, dtype=float)
    if np.any(M < 0) or min(I, alpha, beta, k1, k2, mu) < 0:
        raise InvalidParam("mass and model constants must be nonnegative")
    return mu * I - k1 * I * M**beta + k2 * M ** (1.0 + 2.0 * alpha)


def curvature_change(M, I: float, beta: float = 2 / 3):
    """Delta I = M^beta I / 2 from the time-scale contraction inside the core."""
    return 0.5 * np.asarray(M, dtype=float) ** beta * I


def volume_change(M, alpha: float = 1 / 3, core_constant: float = 1.0):
    """Delta V = (4 pi / 3) r0^3 (M / r0) with r0 = core_constant * M^alpha."""
    M = np.asarray(M, dtype=float)
    r0 = core_constant * M**alpha
    return 4.0 * math.pi / 3.0 * r0**3 * np.divide(M, r0, out=np.zeros_like(M), where=r0 > 0)


def stationary_mass_closed_form(I: float, alpha: float = 1 / 3, beta: float = 2 / 3, k1: float = 1.0, k2: float = 1.0) -> float:
    return (beta * k1 * I / ((1.0 + 2.0 * alpha) * k2)) ** (1.0 / (2.0 * alpha + 1.0 - beta))


def minimize_xi_particle(I: float, alpha: float = 1 / 3, beta: float = 2 / 3, k1: float = 1.0, k2: float = 1.0, mu: float = 1.0) -> float:
    """Numerical minimiser of Xi_P over M > 0, found as the root of dXi/dM
    after bracketing on a geometric grid."""
    if beta >= 1.0 + 2.0 * alpha:
        raise InvalidParam("Xi_P has no interior minimum unless beta < 1 + 2 alpha")
    dxi = lambda M: -beta * k1 * I * M ** (beta - 1.0) + k2 * (1.0 + 2.0 * alpha) * M ** (2.0 * alpha)
    grid = np.geomspace(1e-12, 1e12, 241)
    signs = np.sign([dxi(m) for m in grid])
    idx = np.nonzero((signs[:-1] <= 0) & (signs[1:] > 0))[0]
    if not len(idx):
        raise InvalidParam("no stationary point bracketed")
    lo, hi = grid[idx[0]], grid[idx[0] + 1]
    if signs[idx[0]] == 0:
        return float(lo)
    return brentq(dxi, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps, maxiter=500)


Constraint = Sequence  # (coef_alpha, coef_beta, rhs)

ADDITIVITY = (Fraction(2), Fraction(-1), Fraction(0))  # 2 alpha + 1 - beta = 1
ASYMPTOTIC = (Fraction(1), Fraction(1), Fraction(1))  # alpha + beta = 1


def solve_exponents(additivity: Constraint = ADDITIVITY, asymptotic: Constraint = ASYMPTOTIC) -> "tuple[Fraction, Fraction]":
    """Exact solution of two linear constraints on (alpha, beta)."""
    (a1, b1, c1), (a2, b2, c2) = ([Fraction(x) for x in row] for row in (additivity, asymptotic))
    det = a1 * b2 - a2 * b1
    if det == 0:
        raise InvalidParam("constraints are degenerate")
    return (c1 * b2 - c2 * b1) / det, (a1 * c2 - a2 * c1) / det


def profile_from_action(I: float, mass_per_action: float = 1.0, core_constant: float = 1.0, alpha: float = 1 / 3) -> MassProfile:
    """Exterior profile with M proportional to I and r0 = core_constant * M^alpha,
    i.e. a(r) = K1 I / r - K2 I^(1 + alpha) / r^2."""
    M = mass_per_action * I
    r0 = core_constant * M**alpha
    return solve_exterior_profile(M, r0)


def _profile_of(source) -> Callable:
    if isinstance(source, MetricField):
        def a(r):
            r = np.atleast_1d(np.asarray(r, dtype=float))
            pts = np.stack([np.zeros_like(r), r, np.full_like(r, math.pi / 2), np.zeros_like(r)], axis=-1)
            g, _ = evaluate_metric(source, pts)
            out = 1.0 + g[:, 0, 0]
            return out if out.size > 1 else float(out[0])

        return a
    return source


def area_expansions(source, r: float, dr: float, k: float = 1.0) -> "tuple[float, float]":
    """A' at r + dr from geometry and from the pressure principle, both to first
    order in dr and a."""
    if r <= 0 or k <= 0:
        raise DomainError("need r > 0 and k > 0")
    a = _profile_of(source)
    a0 = float(a(r))
    da = float(a(r + dr)) - a0
    base = 4.0 * math.pi * r * r * math.sqrt(1.0 - a0)
    geometric = base + 8.0 * math.pi * r * dr - 2.0 * math.pi * r * r * da
    # shell term 12 k pi r dr and inner term 4 k pi r^2 sqrt(1-a)(1 - dr/r), per unit ds'
    shell = 12.0 * k * math.pi * r * dr
    inner = k * (base - 4.0 * math.pi * r * dr + 2.0 * math.pi * r * a0 * dr)
    pressure = (shell + inner) / k
    return geometric, pressure


def pressure_area_check(source, r: float, dr: float = 1e-3, k: float = 1.0) -> float:
    """Geometric minus pressure-principle expansion of the cylinder area; vanishes
    to first order in dr exactly when a(r) = 2M/r."""
    geometric, pressure = area_expansions(source, r, dr, k)
    return geometric - pressure
