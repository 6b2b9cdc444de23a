"""Pseudo-Riemannian kernel on 4-dimensional charts.

Index conventions used throughout (all arrays carry arbitrary leading batch
axes ``...``):

* ``g[..., i, j]``            metric components g_ij
* ``dg[..., i, j, k]``        partial_k g_ij
* ``d2g[..., i, j, k, l]``    partial_k partial_l g_ij
* ``christoffel[..., k, i, j]`` Gamma^k_ij

Curvature signs follow R_ij = d_k Gamma^k_ij - d_j Gamma^k_ik
+ Gamma^k_kl Gamma^l_ij - Gamma^k_jl Gamma^l_ik, which gives R = +6 on the
unit 3-sphere and R = 0 for Schwarzschild.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Mapping, Optional, Sequence

import numpy as np

from .errors import DerivativeOverflow, DomainError, SingularMetric, UnsupportedPerturbation

DIM = 4


class Signature(enum.Enum):
    LORENTZIAN = "lorentzian"
    EUCLIDEAN = "euclidean"

    @property
    def det_sign(self) -> int:
        return -1 if self is Signature.LORENTZIAN else 1


class DerivativeMode(enum.Enum):
    ANALYTIC = "analytic"
    FINITE_DIFFERENCE = "finite-difference"


@dataclass(frozen=True)
class Interval:
    lo: float = -math.inf
    hi: float = math.inf
    closed: bool = True

    def contains(self, x):
        x = np.asarray(x)
        if self.closed:
            return (x >= self.lo) & (x <= self.hi)
        return (x > self.lo) & (x < self.hi)


UNBOUNDED = Interval()

ComponentFn = Callable[[np.ndarray], np.ndarray]
DerivativeFn = Callable[[np.ndarray], "tuple[np.ndarray, np.ndarray]"]


@dataclass(frozen=True)
class MetricField:
    """A chart plus a smooth map from coordinates to symmetric 4x4 matrices.

    ``component_fn`` maps points of shape ``(..., 4)`` to ``(..., 4, 4)``.
    ``derivative_fn``, when given, returns ``(dg, d2g)`` in closed form; without
    it the field falls back to central finite differences of step ``fd_step``.
    ``reference_density`` is an optional fixed volume element used by the
    quadrature module in place of sqrt|det g|.
    """

    name: str
    component_fn: ComponentFn
    signature: Signature = Signature.LORENTZIAN
    domain: tuple = (UNBOUNDED, UNBOUNDED, UNBOUNDED, UNBOUNDED)
    derivative_fn: Optional[DerivativeFn] = None
    derivative_mode: DerivativeMode = DerivativeMode.ANALYTIC
    fd_step: float = 1e-4
    stationary: bool = True
    reference_density: Optional[Callable[[np.ndarray], np.ndarray]] = None
    params: Mapping[str, float] = field(default_factory=dict)
    det_floor: float = 1e-14

    def __post_init__(self):
        if len(self.domain) != DIM:
            raise ValueError("domain needs one Interval per coordinate")
        if self.derivative_fn is None and self.derivative_mode is DerivativeMode.ANALYTIC:
            object.__setattr__(self, "derivative_mode", DerivativeMode.FINITE_DIFFERENCE)

    @property
    def dim(self) -> int:
        return DIM

    def contains(self, points) -> np.ndarray:
        pts = np.asarray(points, dtype=float)
        inside = np.ones(pts.shape[:-1], dtype=bool)
        for axis, interval in enumerate(self.domain):
            inside &= interval.contains(pts[..., axis])
        return inside

    def with_finite_differences(self, h: Optional[float] = None) -> "MetricField":
        return replace(
            self,
            derivative_mode=DerivativeMode.FINITE_DIFFERENCE,
            fd_step=self.fd_step if h is None else float(h),
        )


def as_points(point) -> np.ndarray:
    pts = np.asarray(point, dtype=float)
    if pts.shape[-1:] != (DIM,):
        raise DomainError(f"expected coordinates with trailing axis of length 4, got shape {pts.shape}")
    return pts


def _require_inside(fld: MetricField, pts: np.ndarray, error=DomainError) -> None:
    if not np.all(fld.contains(pts)):
        bad = pts[~fld.contains(pts)] if pts.ndim > 1 else pts
        raise error(f"{fld.name}: point(s) outside chart domain, e.g. {np.atleast_2d(bad)[0].tolist()}")


def metric_and_inverse(fld: MetricField, points) -> "tuple[np.ndarray, np.ndarray, np.ndarray]":
    """Return ``(g, g_inv, det g)`` at the given points without domain checks."""
    pts = as_points(points)
    g = np.asarray(fld.component_fn(pts), dtype=float)
    det = np.linalg.det(g)
    if np.any(np.abs(det) < fld.det_floor) or not np.all(np.isfinite(det)):
        raise SingularMetric(f"{fld.name}: |det g| below {fld.det_floor:g}")
    return g, np.linalg.inv(g), det


def evaluate_metric(fld: MetricField, point) -> "tuple[np.ndarray, np.ndarray]":
    """Metric components and their inverse at a point inside the chart."""
    pts = as_points(point)
    _require_inside(fld, pts)
    g, ginv, _ = metric_and_inverse(fld, pts)
    return g, ginv


def _fd_derivatives(fld: MetricField, pts: np.ndarray, h: float):
    eye = np.eye(DIM) * h
    stencil = [pts]
    for k in range(DIM):
        for l in range(DIM):
            stencil.append(pts + eye[k] + eye[l])
            stencil.append(pts - eye[k] - eye[l])
            stencil.append(pts + eye[k] - eye[l])
    for k in range(DIM):
        stencil.extend([pts + eye[k], pts - eye[k]])
    for s in stencil:
        _require_inside(fld, s, DerivativeOverflow)

    f = lambda x: np.asarray(fld.component_fn(x), dtype=float)
    g0 = f(pts)
    batch = g0.shape[:-2]
    dg = np.empty(batch + (DIM, DIM, DIM))
    d2g = np.empty(batch + (DIM, DIM, DIM, DIM))
    plus = [f(pts + eye[k]) for k in range(DIM)]
    minus = [f(pts - eye[k]) for k in range(DIM)]
    for k in range(DIM):
        dg[..., k] = (plus[k] - minus[k]) / (2.0 * h)
        d2g[..., k, k] = (plus[k] - 2.0 * g0 + minus[k]) / (h * h)
        for l in range(k + 1, DIM):
            mixed = (
                f(pts + eye[k] + eye[l])
                - f(pts + eye[k] - eye[l])
                - f(pts - eye[k] + eye[l])
                + f(pts - eye[k] - eye[l])
            ) / (4.0 * h * h)
            d2g[..., k, l] = mixed
            d2g[..., l, k] = mixed
    return dg, d2g


def metric_derivatives(fld: MetricField, points) -> "tuple[np.ndarray, np.ndarray]":
    """First and second coordinate derivatives of g in the field's mode."""
    pts = as_points(points)
    if fld.derivative_mode is DerivativeMode.ANALYTIC:
        dg, d2g = fld.derivative_fn(pts)
        return np.asarray(dg, dtype=float), np.asarray(d2g, dtype=float)
    return _fd_derivatives(fld, pts, fld.fd_step)


@dataclass(frozen=True)
class CurvatureBundle:
    """Curvature data at one point, or at a batch of points (leading axes)."""

    point: np.ndarray
    metric: np.ndarray
    inverse: np.ndarray
    christoffel: np.ndarray
    ricci: np.ndarray
    scalar: np.ndarray
    sqrt_abs_det: np.ndarray

    def as_dict(self) -> dict:
        return {
            "point": np.asarray(self.point).tolist(),
            "metric": np.asarray(self.metric).tolist(),
            "christoffel": np.asarray(self.christoffel).tolist(),
            "ricci": np.asarray(self.ricci).tolist(),
            "scalar": np.asarray(self.scalar).tolist(),
            "sqrt_abs_det": np.asarray(self.sqrt_abs_det).tolist(),
        }


def curvature_from_derivatives(g, ginv, dg, d2g):
    """Christoffel symbols, Ricci tensor and scalar from g and its derivatives."""
    # Gamma_{l ij} with the first index lowered
    gam_low = 0.5 * (
        np.einsum("...lji->...lij", dg) + np.einsum("...lij->...lij", dg) - np.einsum("...ijl->...lij", dg)
    )
    gam = np.einsum("...kl,...lij->...kij", ginv, gam_low)

    dgam_low = 0.5 * (
        np.einsum("...ljim->...lijm", d2g)
        + np.einsum("...lijm->...lijm", d2g)
        - np.einsum("...ijlm->...lijm", d2g)
    )
    # d_m g^{kl} = -g^{ka} d_m g_ab g^{bl}, with m moved to the front for matmul
    dg_m = np.moveaxis(dg, -1, -3)
    dginv = -(ginv[..., None, :, :] @ dg_m @ ginv[..., None, :, :])  # [..., m, k, l]
    # only the two contractions of d_m Gamma^k_ij that enter Ricci are formed
    div_gam = np.einsum("...kkl,...lij->...ij", dginv, gam_low) + np.einsum("...kl,...lijk->...ij", ginv, dgam_low)
    grad_trace = np.einsum("...jkl,...lik->...ij", dginv, gam_low) + np.einsum("...kl,...likj->...ij", ginv, dgam_low)

    ricci = (
        div_gam
        - grad_trace
        + np.einsum("...kkl,...lij->...ij", gam, gam)
        - np.einsum("...kjl,...lik->...ij", gam, gam)
    )
    ricci = 0.5 * (ricci + np.swapaxes(ricci, -1, -2))
    scalar = np.einsum("...ij,...ij->...", ginv, ricci)
    return gam, ricci, scalar


def curvature_on(fld: MetricField, points) -> CurvatureBundle:
    """Vectorised curvature over an array of points of shape ``(..., 4)``."""
    pts = as_points(points)
    _require_inside(fld, pts)
    g, ginv, det = metric_and_inverse(fld, pts)
    dg, d2g = metric_derivatives(fld, pts)
    gam, ricci, scalar = curvature_from_derivatives(g, ginv, dg, d2g)
    return CurvatureBundle(pts, g, ginv, gam, ricci, scalar, np.sqrt(np.abs(det)))


def curvature_at(fld: MetricField, point: Sequence[float]) -> CurvatureBundle:
    pts = as_points(point)
    if pts.ndim != 1:
        raise DomainError("curvature_at takes a single point; use curvature_on for batches")
    return curvature_on(fld, pts)


def absolute_metric(g: np.ndarray) -> np.ndarray:
    """Positive-definite |g| = Q |Lambda| Q^T; equals g for Euclidean signature."""
    w, q = np.linalg.eigh(g)
    return np.einsum("...ia,...a,...ja->...ij", q, np.abs(w), q)


def ricci_norm(bundle: CurvatureBundle) -> np.ndarray:
    """(R_ij R_kl h^ik h^jl)^(1/2) with h = |g|; reduces to (R_ij R^ij)^(1/2) when g is definite
    or the Ricci tensor has no time components."""
    h_inv = np.linalg.inv(absolute_metric(bundle.metric))
    sq = np.einsum("...ij,...kl,...ik,...jl->...", bundle.ricci, bundle.ricci, h_inv, h_inv)
    return np.sqrt(np.maximum(sq, 0.0))


# -- perturbations -----------------------------------------------------------


@dataclass(frozen=True)
class Cell:
    """Coordinate box D centred on ``center`` with the given half-widths."""

    center: np.ndarray
    half_widths: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "center", as_points(self.center).copy())
        hw = np.broadcast_to(np.asarray(self.half_widths, dtype=float), (DIM,)).copy()
        if np.any(hw <= 0):
            raise ValueError("cell half-widths must be positive")
        object.__setattr__(self, "half_widths", hw)

    @classmethod
    def cube(cls, center, coordinate_volume: float) -> "Cell":
        return cls(center, 0.5 * coordinate_volume ** 0.25)

    def corners(self) -> np.ndarray:
        signs = np.array(np.meshgrid(*([[-1.0, 1.0]] * DIM), indexing="ij")).reshape(DIM, -1).T
        return self.center + signs * self.half_widths


@dataclass(frozen=True)
class Perturbation:
    """Variation delta g^ij of the inverse metric, supported in one cell."""

    delta: np.ndarray
    support: Cell

    def __post_init__(self):
        d = np.asarray(self.delta, dtype=float)
        if d.shape != (DIM, DIM):
            raise ValueError("delta must be 4x4")
        if not np.array_equal(d, d.T):
            raise ValueError("delta g^ij must be symmetric")
        object.__setattr__(self, "delta", d)

    def norm(self, metric: np.ndarray) -> float:
        """(dg^ij dg^kl h_ik h_jl)^(1/2) lowered with h = |g| at the cell centre."""
        h = absolute_metric(np.asarray(metric, dtype=float))
        return float(np.sqrt(max(np.einsum("ij,kl,ik,jl->", self.delta, self.delta, h, h), 0.0)))


def first_variation(fld: MetricField, pert: Perturbation, cell_volume: float) -> float:
    """R_ij(centre) dg^ij: the cell-averaged first variation of the mean scalar
    curvature with the perturbation treated as constant over the cell."""
    if cell_volume <= 0:
        raise ValueError("cell volume must be positive")
    if not np.all(fld.contains(pert.support.corners())):
        raise UnsupportedPerturbation(f"perturbation cell leaves the chart of {fld.name}")
    bundle = curvature_at(fld, pert.support.center)
    return float(np.einsum("ij,ij->", bundle.ricci, pert.delta))


def _bump(pts: np.ndarray, cell: Cell):
    """Product of cos^2 profiles normalised to unit mean over the cell; value and
    first derivative vanish on the cell boundary."""
    u = (pts - cell.center) * (np.pi / (2.0 * cell.half_widths))
    c = np.cos(u) ** 2
    dc = -np.sin(2.0 * u) * (np.pi / (2.0 * cell.half_widths))
    d2c = -2.0 * np.cos(2.0 * u) * (np.pi / (2.0 * cell.half_widths)) ** 2
    scale = 2.0 ** DIM
    b = scale * np.prod(c, axis=-1)
    db = np.empty(pts.shape)
    d2b = np.empty(pts.shape + (DIM,))
    for k in range(DIM):
        others = np.prod(np.delete(c, k, axis=-1), axis=-1)
        db[..., k] = scale * dc[..., k] * others
        for l in range(DIM):
            if l == k:
                d2b[..., k, k] = scale * d2c[..., k] * others
            else:
                rest = np.prod(np.delete(c, [k, l], axis=-1), axis=-1)
                d2b[..., k, l] = scale * dc[..., k] * dc[..., l] * rest
    return b, db, d2b


def perturbed_field(fld: MetricField, pert: Perturbation, eps: float) -> MetricField:
    """Field whose inverse metric is g^ij + eps * b(x) * delta^ij with a smooth
    unit-mean bump b supported in the perturbation's cell. Derivatives are exact
    whenever the background field has analytic derivatives."""
    if fld.derivative_mode is not DerivativeMode.ANALYTIC:
        raise ValueError("perturbed_field needs a background with analytic derivatives")
    cell, delta = pert.support, pert.delta

    def inverse_parts(pts):
        g, ginv, _ = metric_and_inverse(fld, pts)
        dg, d2g = fld.derivative_fn(pts)
        b, db, d2b = _bump(pts, cell)
        dginv = -np.einsum("...ka,...abm,...bl->...klm", ginv, dg, ginv)
        # d_m d_n g^kl
        d2ginv = (
            -np.einsum("...kan,...abm,...bl->...klmn", dginv, dg, ginv)
            - np.einsum("...ka,...abmn,...bl->...klmn", ginv, d2g, ginv)
            - np.einsum("...ka,...abm,...bln->...klmn", ginv, dg, dginv)
        )
        k0 = ginv + eps * b[..., None, None] * delta
        k1 = dginv + eps * np.einsum("...m,kl->...klm", db, delta)
        k2 = d2ginv + eps * np.einsum("...mn,kl->...klmn", d2b, delta)
        return k0, k1, k2

    def components(pts):
        k0, _, _ = inverse_parts(pts)
        return np.linalg.inv(k0)

    def derivatives(pts):
        k0, k1, k2 = inverse_parts(pts)
        ge = np.linalg.inv(k0)
        dge = -np.einsum("...ia,...abm,...bj->...ijm", ge, k1, ge)
        d2ge = (
            -np.einsum("...ian,...abm,...bj->...ijmn", dge, k1, ge)
            - np.einsum("...ia,...abmn,...bj->...ijmn", ge, k2, ge)
            - np.einsum("...ia,...abm,...bjn->...ijmn", ge, k1, dge)
        )
        return dge, d2ge

    return replace(
        fld,
        name=f"{fld.name}+perturbation",
        component_fn=components,
        derivative_fn=derivatives,
        stationary=False,
    )


def _cell_nodes(cell: Cell, nodes: int):
    x, w = np.polynomial.legendre.leggauss(nodes)
    axes = [cell.center[k] + cell.half_widths[k] * x for k in range(DIM)]
    weights = [cell.half_widths[k] * w for k in range(DIM)]
    grid = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, DIM)
    wgrid = np.einsum("a,b,c,d->abcd", *weights).reshape(-1)
    return grid, wgrid


def cell_volume(fld: MetricField, cell: Cell, nodes: int = 8) -> float:
    pts, w = _cell_nodes(cell, nodes)
    _, _, det = metric_and_inverse(fld, pts)
    return math.fsum(w * np.sqrt(np.abs(det)))


def cell_average_scalar(fld: MetricField, cell: Cell, nodes: int = 8, volume: Optional[float] = None) -> float:
    """R_Delta = (1/Delta) * integral over the cell of R dV, Delta fixed to ``volume``
    (defaults to the cell's own 4-volume)."""
    pts, w = _cell_nodes(cell, nodes)
    bundle = curvature_on(fld, pts)
    if volume is None:
        volume = math.fsum(w * bundle.sqrt_abs_det)
    return math.fsum(w * bundle.scalar * bundle.sqrt_abs_det) / volume


def cell_first_variation(fld: MetricField, pert: Perturbation, nodes: int = 8) -> float:
    """Exact derivative of R_Delta along the bump perturbation of ``perturbed_field``:
    (1/Delta) * integral of (R_ij - R g_ij / 2) b delta^ij dV."""
    cell = pert.support
    pts, w = _cell_nodes(cell, nodes)
    bundle = curvature_on(fld, pts)
    b, _, _ = _bump(pts, cell)
    einstein = bundle.ricci - 0.5 * bundle.scalar[..., None, None] * bundle.metric
    density = bundle.sqrt_abs_det
    pairing = np.einsum("...ij,ij->...", einstein, pert.delta) * b
    return math.fsum(w * pairing * density) / math.fsum(w * density)
