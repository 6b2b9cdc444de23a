"""Closed-form metrics with analytic first and second derivatives.

Each entry is written once as a sympy matrix; :func:`symbolic_metric`
differentiates it symbolically and compiles the components and their
derivatives into vectorised numpy callables. Compilation is cached per
metric family, so re-instantiating a family with new parameter values is
cheap.
"""

from __future__ import annotations

import functools
import math
from typing import Callable, Mapping, Optional, Sequence

import numpy as np
import sympy as sp

from .errors import InvalidParam
from .tensor import DIM, UNBOUNDED, Interval, MetricField, Signature

t, x1, x2, x3 = sp.symbols("t x1 x2 x3", real=True)
COORDS = (t, x1, x2, x3)

_PAIRS = [(i, j) for i in range(DIM) for j in range(i, DIM)]
_DPAIRS = [(k, l) for k in range(DIM) for l in range(k, DIM)]

POLAR = Interval(0.0, math.pi, closed=False)
AZIMUTH = UNBOUNDED


class _Compiled:
    """Lambdified g, dg and d2g for one symbolic family."""

    def __init__(self, matrix: sp.ImmutableMatrix, coords: tuple, params: tuple, density):
        exprs = [matrix[i, j] for i, j in _PAIRS]
        exprs += [sp.diff(matrix[i, j], coords[k]) for i, j in _PAIRS for k in range(DIM)]
        exprs += [sp.diff(matrix[i, j], coords[k], coords[l]) for i, j in _PAIRS for k, l in _DPAIRS]
        args = tuple(coords) + tuple(params)
        self._fn = sp.lambdify(args, exprs, modules="numpy", cse=True)
        self._g_fn = sp.lambdify(args, [matrix[i, j] for i, j in _PAIRS], modules="numpy", cse=True)
        self._density = None if density is None else sp.lambdify(args, density, modules="numpy")
        self.time_dependent = any(sp.diff(e, coords[0]) != 0 for e in exprs[: len(_PAIRS)])

    @staticmethod
    def _stack(values, shape):
        return np.stack([np.broadcast_to(np.asarray(v, dtype=float), shape) for v in values], axis=-1)

    def components(self, pts: np.ndarray, values: tuple) -> np.ndarray:
        shape = pts.shape[:-1]
        flat = self._stack(self._g_fn(*np.moveaxis(pts, -1, 0), *values), shape)
        g = np.empty(shape + (DIM, DIM))
        for n, (i, j) in enumerate(_PAIRS):
            g[..., i, j] = flat[..., n]
            g[..., j, i] = flat[..., n]
        return g

    def derivatives(self, pts: np.ndarray, values: tuple):
        shape = pts.shape[:-1]
        flat = self._stack(self._fn(*np.moveaxis(pts, -1, 0), *values), shape)
        npair = len(_PAIRS)
        dg = np.empty(shape + (DIM, DIM, DIM))
        d2g = np.empty(shape + (DIM, DIM, DIM, DIM))
        offset = npair
        for i, j in _PAIRS:
            block = flat[..., offset : offset + DIM]
            dg[..., i, j, :] = block
            dg[..., j, i, :] = block
            offset += DIM
        for i, j in _PAIRS:
            for k, l in _DPAIRS:
                val = flat[..., offset]
                d2g[..., i, j, k, l] = val
                d2g[..., i, j, l, k] = val
                d2g[..., j, i, k, l] = val
                d2g[..., j, i, l, k] = val
                offset += 1
        return dg, d2g

    def density(self, pts: np.ndarray, values: tuple) -> np.ndarray:
        out = self._density(*np.moveaxis(pts, -1, 0), *values)
        return np.broadcast_to(np.asarray(out, dtype=float), pts.shape[:-1])


@functools.lru_cache(maxsize=64)
def _compile(matrix: sp.ImmutableMatrix, coords: tuple, params: tuple, density) -> _Compiled:
    return _Compiled(matrix, coords, params, density)


def symbolic_metric(
    name: str,
    matrix,
    params: Optional[Mapping[sp.Symbol, float]] = None,
    *,
    coords: Sequence[sp.Symbol] = COORDS,
    signature: Signature = Signature.LORENTZIAN,
    domain: tuple = (UNBOUNDED,) * DIM,
    reference_density=None,
    fd_step: float = 1e-4,
) -> MetricField:
    """Build a :class:`MetricField` with closed-form derivatives from a sympy matrix.

    ``params`` maps free parameter symbols in ``matrix`` to numeric values.
    """
    params = dict(params or {})
    matrix = sp.ImmutableMatrix(matrix)
    if matrix.shape != (DIM, DIM) or matrix != matrix.T:
        raise InvalidParam("metric matrix must be symmetric 4x4")
    symbols = tuple(sorted(params, key=lambda s: s.name))
    values = tuple(float(params[s]) for s in symbols)
    density = None if reference_density is None else sp.sympify(reference_density)
    compiled = _compile(matrix, tuple(coords), symbols, density)
    return MetricField(
        name=name,
        component_fn=lambda pts: compiled.components(pts, values),
        derivative_fn=lambda pts: compiled.derivatives(pts, values),
        signature=signature,
        domain=domain,
        fd_step=fd_step,
        stationary=not compiled.time_dependent,
        reference_density=None if density is None else (lambda pts: compiled.density(pts, values)),
        params={s.name: v for s, v in zip(symbols, values)},
    )


# -- catalog -------------------------------------------------------------------

_M, _a, _v, _r0, _C1, _C2 = sp.symbols("M a v r0 C1 C2", real=True)


def make_minkowski() -> MetricField:
    return symbolic_metric("minkowski", sp.diag(-1, 1, 1, 1))


def make_euclidean4() -> MetricField:
    return symbolic_metric("euclidean4", sp.diag(1, 1, 1, 1), signature=Signature.EUCLIDEAN)


def _spherical_domain(r_interval: Interval) -> tuple:
    return (UNBOUNDED, r_interval, POLAR, AZIMUTH)


def make_flat_spherical() -> MetricField:
    """Minkowski space in spherical coordinates (t, r, theta, phi)."""
    r, th = x1, x2
    return symbolic_metric(
        "flat-spherical",
        sp.diag(-1, 1, r**2, r**2 * sp.sin(th) ** 2),
        domain=_spherical_domain(Interval(0.0, math.inf, closed=False)),
    )


def _radial_matrix(a_expr):
    r, th = x1, x2
    return sp.diag(-(1 - a_expr), 1 / (1 - a_expr), r**2, r**2 * sp.sin(th) ** 2)


def make_schwarzschild(M: float) -> MetricField:
    """Exterior Schwarzschild in (t, r, theta, phi); chart r > 2M."""
    if M < 0:
        raise InvalidParam("Schwarzschild mass must be nonnegative")
    r = x1
    fld = symbolic_metric(
        f"schwarzschild:M={M:g}",
        _radial_matrix(2 * _M / r),
        {_M: M},
        domain=_spherical_domain(Interval(2.0 * M, math.inf, closed=False)),
    )
    return fld


def wormhole_profile(rho, a: float = 1.0):
    """Areal radius (1 + (rho/a)^2)/2 of the handle cross-section."""
    return (1.0 + (np.asarray(rho) / a) ** 2) / 2.0


def make_wormhole_static(a: float) -> MetricField:
    """Static handle -dt^2 + drho^2 + f^2 dOmega^2 with f = (1 + (rho/a)^2)/2 on |rho| <= a."""
    if not a > 0:
        raise InvalidParam("wormhole half-length a must be positive")
    rho, th = x1, x2
    f = (1 + (rho / _a) ** 2) / 2
    return symbolic_metric(
        f"wormhole-static:a={a:g}",
        sp.diag(-1, 1, f**2, f**2 * sp.sin(th) ** 2),
        {_a: a},
        domain=_spherical_domain(Interval(-a, a)),
        reference_density=f**2 * sp.sin(th),
    )


EUCLIDEAN_TIME_CONVENTIONS = ("flipped", "galileo")


def make_wormhole_rotating(v: float, euclidean: bool = False, euclidean_time: str = "flipped") -> MetricField:
    """Slowly rotating a = 1 handle obtained by interpolating the Galilean-boosted
    boundary metrics; the cross terms are g_t,rho = -v cos(theta) and
    g_t,theta = v rho sin(theta).

    The Lorentzian time component is -(1 - v^2). For ``euclidean=True``,
    ``euclidean_time`` picks between ``"flipped"`` (+(1 - v^2), the Lorentzian
    metric with the sign of dt^2 reversed) and ``"galileo"`` (+(1 + v^2), the
    Galilean substitution carried out in the Euclidean flat metric).
    """
    if euclidean:
        if euclidean_time not in EUCLIDEAN_TIME_CONVENTIONS:
            raise InvalidParam(f"euclidean_time must be one of {EUCLIDEAN_TIME_CONVENTIONS}")
        gtt = (1 + _v**2) if euclidean_time == "galileo" else (1 - _v**2)
        tag = f"wormhole-rotating-euclidean:v={v:g},time={euclidean_time}"
    else:
        if abs(v) >= 1:
            raise InvalidParam("rotation speed must satisfy |v| < 1")
        gtt = -(1 - _v**2)
        tag = f"wormhole-rotating:v={v:g}"
    rho, th = x1, x2
    f = (1 + rho**2) / 2
    g_trho = -_v * sp.cos(th)
    g_tth = _v * rho * sp.sin(th)
    matrix = sp.Matrix(
        [
            [gtt, g_trho, g_tth, 0],
            [g_trho, 1, 0, 0],
            [g_tth, 0, f**2, 0],
            [0, 0, 0, f**2 * sp.sin(th) ** 2],
        ]
    )
    return symbolic_metric(
        tag,
        matrix,
        {_v: v},
        signature=Signature.EUCLIDEAN if euclidean else Signature.LORENTZIAN,
        domain=_spherical_domain(Interval(-1.0, 1.0)),
        reference_density=f**2 * sp.sin(th),
    )


def exterior_profile(M: float, r0: float) -> Callable[[np.ndarray], np.ndarray]:
    return lambda r: 2.0 * M / np.asarray(r) - M * r0 / np.asarray(r) ** 2


def make_exterior_particle(M: float, r0: float) -> MetricField:
    """Exterior of a particle core of radius r0 with a(r) = 2M/r - M r0/r^2."""
    if not r0 > 0:
        raise InvalidParam("core radius r0 must be positive")
    if M < 0:
        raise InvalidParam("mass must be nonnegative")
    if M >= r0:
        raise InvalidParam("need M < r0 so that 1 - a(r) > 0 on r >= r0")
    r = x1
    return symbolic_metric(
        f"exterior-particle:M={M:g},r0={r0:g}",
        _radial_matrix(2 * _M / r - _M * _r0 / r**2),
        {_M: M, _r0: r0},
        domain=_spherical_domain(Interval(r0, math.inf)),
    )


def make_spherical_ansatz(C1: float, C2: float, r_min: float = 1.0) -> MetricField:
    """-(1 - a)dt^2 + (1 - a)^-1 dr^2 + r^2 dOmega^2 with a(r) = C1/r + C2/r^2."""
    if not r_min > 0:
        raise InvalidParam("r_min must be positive")
    r = x1
    return symbolic_metric(
        f"spherical-ansatz:C1={C1:g},C2={C2:g}",
        _radial_matrix(_C1 / r + _C2 / r**2),
        {_C1: C1, _C2: C2},
        domain=_spherical_domain(Interval(r_min, math.inf)),
    )


# -- textual ids -------------------------------------------------------------


def _bool(text: str) -> bool:
    if text.lower() in ("1", "true", "yes"):
        return True
    if text.lower() in ("0", "false", "no"):
        return False
    raise InvalidParam(f"not a boolean: {text!r}")


_FACTORIES: dict = {
    "minkowski": (make_minkowski, {}),
    "euclidean4": (make_euclidean4, {}),
    "flat-spherical": (make_flat_spherical, {}),
    "schwarzschild": (make_schwarzschild, {"M": float}),
    "wormhole-static": (make_wormhole_static, {"a": float}),
    "wormhole-rotating": (make_wormhole_rotating, {"v": float, "euclidean": _bool, "euclidean_time": str}),
    "exterior-particle": (make_exterior_particle, {"M": float, "r0": float}),
    "spherical-ansatz": (make_spherical_ansatz, {"C1": float, "C2": float, "r_min": float}),
}

CATALOG_IDS = tuple(_FACTORIES)


def parse_metric_id(text: str) -> MetricField:
    """Instantiate a catalog entry from ``name[:key=value,...]``, e.g. ``wormhole-static:a=1``."""
    name, _, rest = text.strip().partition(":")
    if name not in _FACTORIES:
        raise InvalidParam(f"unknown metric {name!r}; choose from {', '.join(CATALOG_IDS)}")
    factory, schema = _FACTORIES[name]
    kwargs = {}
    for item in filter(None, (s.strip() for s in rest.split(","))):
        key, sep, value = item.partition("=")
        if not sep or key not in schema:
            raise InvalidParam(f"bad parameter {item!r} for {name}; expected keys {sorted(schema)}")
        try:
            kwargs[key] = schema[key](value)
        except ValueError as exc:
            raise InvalidParam(f"bad value for {key}: {value!r}") from exc
    try:
        return factory(**kwargs)
    except TypeError as exc:
        raise InvalidParam(str(exc)) from exc
