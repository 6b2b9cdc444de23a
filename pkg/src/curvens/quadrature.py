"""Tensor-product Gauss-Legendre integration of curvature actions and volumes.

All integrals are per unit coordinate time over a box in the three spatial
chart coordinates, so only stationary fields are accepted. Node evaluations
are split into fixed-size chunks (independent of the thread count) and the
reduction uses ``math.fsum``, which makes threaded and serial runs agree bit
for bit.
"""

from __future__ import annotations

import enum
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, replace
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy.optimize import brentq

from .catalog import make_wormhole_static
from .errors import DomainError, InvalidParam, NonStationaryField
from .tensor import DIM, MetricField, curvature_on, metric_and_inverse

CHUNK = 4096


class VolumeMode(enum.Enum):
    METRIC_DENSITY = "metric"
    FIXED_STATIC = "fixed-static"


class Normalization(enum.Enum):
    FULL_HANDLE = "full"
    HALF_HANDLE = "half"

    @property
    def factor(self) -> float:
        return 0.5 if self is Normalization.HALF_HANDLE else 1.0


@dataclass(frozen=True)
class QuadratureSpec:
    box: tuple
    nodes: tuple = (64, 64, 4)
    volume_mode: VolumeMode = VolumeMode.METRIC_DENSITY
    time: float = 0.0

    def __post_init__(self):
        box = tuple((float(lo), float(hi)) for lo, hi in self.box)
        nodes = tuple(int(n) for n in self.nodes)
        if len(box) != DIM - 1 or len(nodes) != DIM - 1:
            raise InvalidParam("box and nodes need one entry per spatial axis")
        if any(n < 2 for n in nodes):
            raise InvalidParam("every axis needs at least 2 nodes")
        if any(not hi > lo for lo, hi in box):
            raise InvalidParam("box intervals must have positive length")
        object.__setattr__(self, "box", box)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "volume_mode", VolumeMode(self.volume_mode))

    @classmethod
    def handle(cls, a: float = 1.0, nodes: int = 64, volume_mode=VolumeMode.METRIC_DENSITY, phi_nodes: int = 4):
        """Whole handle rho in [-a, a] over the full sphere of directions."""
        return cls(((-a, a), (0.0, math.pi), (0.0, 2 * math.pi)), (nodes, nodes, phi_nodes), volume_mode)

    @classmethod
    def ball(cls, radius: float, nodes: int = 32, inner: float = 0.0):
        return cls(((inner, radius), (0.0, math.pi), (0.0, 2 * math.pi)), (nodes, nodes, 4))

    def halved(self) -> "QuadratureSpec":
        return replace(self, nodes=tuple(max(2, n // 2) for n in self.nodes))

    def nodes_and_weights(self) -> "tuple[np.ndarray, np.ndarray]":
        axes, weights = [], []
        for (lo, hi), n in zip(self.box, self.nodes):
            x, w = np.polynomial.legendre.leggauss(n)
            axes.append(0.5 * (hi - lo) * x + 0.5 * (hi + lo))
            weights.append(0.5 * (hi - lo) * w)
        grid = np.meshgrid(*axes, indexing="ij")
        pts = np.stack([np.full_like(grid[0], self.time), *grid], axis=-1).reshape(-1, DIM)
        w = np.einsum("a,b,c->abc", *weights).reshape(-1)
        return pts, w


@dataclass(frozen=True)
class ActionResult:
    value: float
    nodes: tuple
    convergence_delta: float
    normalization: Normalization

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "normalization": self.normalization.value,
            "nodes": list(self.nodes),
            "convergence_delta": self.convergence_delta,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def _check_box(fld: MetricField, spec: QuadratureSpec) -> None:
    if not fld.stationary:
        raise NonStationaryField(f"{fld.name} depends on time; per-unit-time integrals need a stationary field")
    for axis, (lo, hi) in enumerate(spec.box, start=1):
        chart = fld.domain[axis]
        if lo < chart.lo or hi > chart.hi:
            raise DomainError(f"{fld.name}: box axis {axis} [{lo}, {hi}] exits chart [{chart.lo}, {chart.hi}]")


def _density(fld: MetricField, spec: QuadratureSpec, pts: np.ndarray, sqrt_abs_det=None) -> np.ndarray:
    if spec.volume_mode is VolumeMode.FIXED_STATIC:
        if fld.reference_density is None:
            raise InvalidParam(f"{fld.name} has no fixed static volume element")
        return fld.reference_density(pts)
    if sqrt_abs_det is None:
        _, _, det = metric_and_inverse(fld, pts)
        sqrt_abs_det = np.sqrt(np.abs(det))
    return sqrt_abs_det


def _map_chunks(func: Callable[[np.ndarray], np.ndarray], pts: np.ndarray, threads: int) -> np.ndarray:
    chunks = [pts[i : i + CHUNK] for i in range(0, len(pts), CHUNK)]
    if threads > 1 and len(chunks) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(func, chunks))
    else:
        parts = [func(c) for c in chunks]
    return np.concatenate(parts)


def curvature_action_density(fld: MetricField, spec: QuadratureSpec, pts: np.ndarray) -> np.ndarray:
    """R^2 times the selected volume density at each node."""
    bundle = curvature_on(fld, pts)
    return bundle.scalar**2 * _density(fld, spec, pts, bundle.sqrt_abs_det)


def _integrate(fld, spec, integrand, threads) -> float:
    pts, w = spec.nodes_and_weights()
    values = _map_chunks(lambda c: integrand(fld, spec, c), pts, threads)
    return math.fsum(w * values)


def action_per_unit_time(
    fld: MetricField,
    spec: QuadratureSpec,
    normalization: Normalization = Normalization.FULL_HANDLE,
    threads: int = 1,
) -> ActionResult:
    """Integral of R^2 dV over the spatial box per unit time.

    ``HALF_HANDLE`` reports half of the box integral; the full handle of the
    a = 1 wormhole integrates to 640 pi - 192 pi^2.
    """
    _check_box(fld, spec)
    normalization = Normalization(normalization)
    fine = _integrate(fld, spec, curvature_action_density, threads)
    coarse = _integrate(fld, spec.halved(), curvature_action_density, threads)
    factor = normalization.factor
    value = factor * fine
    if not math.isfinite(value):
        raise ArithmeticError(f"non-finite action for {fld.name}")
    return ActionResult(value, spec.nodes, abs(factor * (fine - coarse)), normalization)


def volume(fld: MetricField, spec: QuadratureSpec, threads: int = 1) -> float:
    """Spatial volume of the box per unit time in the selected density."""
    _check_box(fld, spec)
    return _integrate(fld, spec, lambda f, s, pts: _density(f, s, pts), threads)


def dilate(fld: MetricField, lam: float) -> MetricField:
    """g_lambda: spatial block of g multiplied by lam^2, time components untouched."""
    if not lam > 0:
        raise InvalidParam("dilation factor must be positive")
    scale = np.ones((DIM, DIM))
    scale[1:, 1:] = lam * lam
    base_fn, base_deriv = fld.component_fn, fld.derivative_fn

    def components(pts):
        return base_fn(pts) * scale

    derivative_fn = None
    if base_deriv is not None:

        def derivative_fn(pts):
            dg, d2g = base_deriv(pts)
            return dg * scale[:, :, None], d2g * scale[:, :, None, None]

    density = fld.reference_density
    return replace(
        fld,
        name=f"{fld.name}@lambda={lam:g}",
        component_fn=components,
        derivative_fn=derivative_fn,
        reference_density=None if density is None else (lambda pts: lam**3 * density(pts)),
    )


def dilation_curve(fld: MetricField, lambdas: Iterable[float], spec: QuadratureSpec, threads: int = 1):
    """[(lambda, I(g_lambda))] for the spatially dilated field."""
    out = []
    for lam in lambdas:
        out.append((float(lam), action_per_unit_time(dilate(fld, lam), spec, threads=threads).value))
    return out


REMOVED_BALLS_VOLUME = 2.0 * 4.0 * math.pi / 3.0


def handle_volume(a: float, nodes: int = 32) -> float:
    return volume(make_wormhole_static(a), QuadratureSpec.handle(a, nodes))


def volume_matched_half_length(bracket: Sequence[float] = (0.1, 2.0), nodes: int = 32, xtol: float = 1e-13) -> float:
    """Half-length a for which the handle's volume replaces exactly the two unit
    balls cut out of flat space."""
    return brentq(lambda a: handle_volume(a, nodes) - REMOVED_BALLS_VOLUME, *bracket, xtol=xtol)
