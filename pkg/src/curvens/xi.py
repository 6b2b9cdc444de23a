"""Rotation expansion of the curvature action of the a = 1 handle, and the
particle Xi-function in terms of the Schwarzschild mass."""

from __future__ import annotations

import csv
import io
import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Optional, Sequence

import numpy as np

from .catalog import make_wormhole_rotating
from .errors import IllConditioned, InvalidParam
from .quadrature import Normalization, QuadratureSpec, VolumeMode, action_per_unit_time

DEFAULT_V_GRID = (0.0, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3)
SLOW_ROTATION_LIMIT = 0.3
DEFAULT_ORDER = 8


def default_spec(nodes: int = 64) -> QuadratureSpec:
    return QuadratureSpec.handle(1.0, nodes, VolumeMode.FIXED_STATIC)


def xi_of_v(
    v: float,
    euclidean: bool = False,
    spec: Optional[QuadratureSpec] = None,
    normalization: Normalization = Normalization.HALF_HANDLE,
    euclidean_time: str = "flipped",
) -> float:
    """Curvature action per unit time of the rotating handle at speed ``v``,
    integrated with the non-rotating volume element."""
    spec = spec or default_spec()
    if spec.volume_mode is not VolumeMode.FIXED_STATIC:
        spec = QuadratureSpec(spec.box, spec.nodes, VolumeMode.FIXED_STATIC, spec.time)
    fld = make_wormhole_rotating(v, euclidean, euclidean_time)
    return action_per_unit_time(fld, spec, normalization).value


def xi_sweep(
    vs: Iterable[float] = DEFAULT_V_GRID,
    euclidean: bool = False,
    spec: Optional[QuadratureSpec] = None,
    normalization: Normalization = Normalization.HALF_HANDLE,
    euclidean_time: str = "flipped",
    threads: int = 1,
) -> "list[tuple[float, float]]":
    vs = [float(v) for v in vs]
    job = lambda v: xi_of_v(v, euclidean, spec, normalization, euclidean_time)
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            values = list(pool.map(job, vs))
    else:
        values = [job(v) for v in vs]
    return list(zip(vs, values))


@dataclass(frozen=True)
class XiExpansion:
    """Even power series Xi(v) = c0 + c2 v^2 + c4 v^4 + ...; ``higher`` holds any
    coefficients beyond v^4 that were carried in the fit."""

    c0: float
    c2: float
    c4: float
    residual: float
    higher: tuple = field(default=())

    @property
    def ratios(self) -> "tuple[float, float]":
        return self.c2 / self.c0, self.c4 / self.c0

    def __call__(self, v):
        v2 = np.asarray(v, dtype=float) ** 2
        coeffs = (self.c0, self.c2, self.c4) + tuple(self.higher)
        return sum(c * v2**k for k, c in enumerate(coeffs))

    def as_dict(self) -> dict:
        r2, r4 = self.ratios
        return {
            "c0": self.c0,
            "c2": self.c2,
            "c4": self.c4,
            "higher": list(self.higher),
            "residual": self.residual,
            "ratios": {"c2/c0": r2, "c4/c0": r4},
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def fit_expansion(samples: Sequence, order: int = DEFAULT_ORDER, max_abs_v: float = SLOW_ROTATION_LIMIT) -> XiExpansion:
    """Least-squares fit of an even polynomial of degree ``order`` (>= 4) to
    ``(v, xi)`` samples.

    Needs 0 among the samples, all |v| <= ``max_abs_v``, and at least one more
    distinct |v| than fitted coefficients.
    """
    if order < 4 or order % 2:
        raise InvalidParam("order must be an even integer >= 4")
    v = np.array([s[0] for s in samples], dtype=float)
    y = np.array([s[1] for s in samples], dtype=float)
    terms = order // 2 + 1
    distinct = np.unique(np.abs(v))
    if np.any(np.abs(v) > max_abs_v):
        raise InvalidParam(f"samples must satisfy |v| <= {max_abs_v}")
    if 0.0 not in distinct:
        raise InvalidParam("samples must include v = 0")
    if len(distinct) < terms + 1:
        raise IllConditioned(f"need at least {terms + 1} distinct |v| values for order {order}, got {len(distinct)}")
    # scale v so the Vandermonde columns are comparable
    scale = float(distinct.max())
    design = np.vstack([(v / scale) ** (2 * k) for k in range(terms)]).T
    if np.linalg.cond(design) > 1e12:
        raise IllConditioned("sample spread too narrow for a stable fit")
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    coef = coef / scale ** (2 * np.arange(terms))
    fitted = design @ (coef * scale ** (2 * np.arange(terms)))
    residual = float(np.max(np.abs(fitted - y)))
    return XiExpansion(float(coef[0]), float(coef[1]), float(coef[2]), residual, tuple(float(c) for c in coef[3:]))


def sweep_csv(rows: Iterable, signature: str) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["v", "xi", "signature"])
    for v, value in rows:
        writer.writerow([repr(float(v)), repr(float(value)), signature])
    return buf.getvalue()


def particle_xi(M_g: float, T: float, tau: float = 1.0, tau_star: float = 0.0) -> float:
    """tau * M_g * T + tau_star * M_g^(5/3) * T."""
    if M_g < 0 or T < 0:
        raise InvalidParam("mass and time must be nonnegative")
    return tau * M_g * T + tau_star * M_g ** (5.0 / 3.0) * T
