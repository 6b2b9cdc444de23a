"""Cell weights, perturbation integrals and partition-function scaling.

The per-cell perturbation integrals live on the ten-dimensional space of
symmetric variations. They are estimated by importance sampling with
isotropic proposals whose radial law belongs to the exp(-r^4) family
(tempered to twice the target width), plus a scrambled Sobol cross-check with
a Gaussian proposal. Weights are handled relative to a known log scale so that
tiny partition values at large mu_delta never underflow.
"""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats
from scipy.special import gammaln

from .errors import InvalidParam, RegimeViolation
from .quadrature import Normalization, QuadratureSpec, action_per_unit_time, volume
from .tensor import MetricField

PERTURBATION_DIM = 10
BATCH = 1 << 16
STRONG_REGIME_FACTOR = 10.0


def log_cell_weight(R_alpha, mu_delta: float):
    if not mu_delta > 0:
        raise InvalidParam("mu_delta must be positive")
    return -mu_delta * np.square(R_alpha)


def cell_weight(R_alpha, mu_delta: float):
    """exp(-mu_delta R_alpha^2), in (0, 1]."""
    return np.exp(log_cell_weight(R_alpha, mu_delta))


@dataclass(frozen=True)
class EnsembleConfig:
    mu_delta: float
    cells: int = 1
    rho: float = 1.0
    c_quartic: float = 1.0
    seed: int = 0
    samples: int = 1_000_000

    def __post_init__(self):
        if not self.mu_delta > 0:
            raise InvalidParam("mu_delta must be positive")
        if self.rho < 0:
            raise InvalidParam("rho must be nonnegative")
        if self.cells < 1 or self.samples < 2:
            raise InvalidParam("need at least one cell and two samples")
        if not self.c_quartic > 0:
            raise InvalidParam("c_quartic must be positive")

    @property
    def fluctuation_scale(self) -> float:
        return self.mu_delta ** -0.25

    @property
    def in_regime(self) -> bool:
        return self.rho > self.fluctuation_scale

    @property
    def strong_regime(self) -> bool:
        """rho >> mu_delta^(-1/4), read as a factor of at least 10."""
        return self.rho >= STRONG_REGIME_FACTOR * self.fluctuation_scale


def _require_regime(rho: float, mu: float) -> None:
    if not rho > mu ** -0.25:
        raise RegimeViolation(f"rho={rho:g} is not above mu_delta^(-1/4)={mu ** -0.25:g}")


# -- closed forms (gamma-function oracles) -----------------------------------


def log_sphere_area(dim: int) -> float:
    """log of the area of the unit sphere S^(dim-1) in R^dim."""
    return float(math.log(2.0) + 0.5 * dim * math.log(math.pi) - gammaln(0.5 * dim))


def log_quartic_closed_form(dim: int = PERTURBATION_DIM, s: float = 1.0) -> float:
    """log of the integral over R^dim of exp(-s |x|^4)."""
    return float(log_sphere_area(dim) + gammaln(0.25 * dim) - math.log(4.0) - 0.25 * dim * math.log(s))


def log_mixed_closed_form(a: float = 1.0, s: float = 1.0, quartic_dim: int = PERTURBATION_DIM - 1) -> float:
    """log of the integral over R x R^quartic_dim of exp(-a x^2 - s |y|^4)."""
    gauss = 0.5 * math.log(math.pi / a)
    if quartic_dim == 0:
        return gauss
    return gauss + log_quartic_closed_form(quartic_dim, s)


def quartic_closed_form() -> float:
    return math.exp(log_quartic_closed_form())


def mixed_closed_form() -> float:
    return math.exp(log_mixed_closed_form())


# -- Monte Carlo ----------------------------------------------------------------


@dataclass(frozen=True)
class MCEstimate:
    value: float
    stderr: float
    log_value: float
    samples: int
    seed: int
    method: str = "importance"

    @property
    def log_stderr(self) -> float:
        return self.stderr / self.value if self.value else math.inf

    def as_dict(self) -> dict:
        return {
            "value": self.value,
            "stderr": self.stderr,
            "log_value": self.log_value,
            "samples": self.samples,
            "seed": self.seed,
            "method": self.method,
        }


def _isotropic_quartic_draw(rng: np.random.Generator, n: int, dim: int, lam: float):
    """Draw from q(y) proportional to exp(-lam |y|^4) on R^dim; returns (y, log q(y))."""
    direction = rng.standard_normal((n, dim))
    direction /= np.linalg.norm(direction, axis=1, keepdims=True)
    g = rng.gamma(0.25 * dim, size=n)
    radius = (g / lam) ** 0.25
    log_q = math.log(4.0) + 0.25 * dim * math.log(lam) - gammaln(0.25 * dim) - log_sphere_area(dim) - g
    return direction * radius[:, None], log_q


def _run_batches(draw: Callable[[np.random.Generator, int], np.ndarray], samples: int, seed: int, threads: int):
    """Evaluate relative weights batch by batch with per-batch RNG streams spawned
    from ``seed``; returns (sum, sum of squares) reduced in batch order."""
    sizes = [BATCH] * (samples // BATCH)
    if samples % BATCH:
        sizes.append(samples % BATCH)
    streams = np.random.SeedSequence(seed).spawn(len(sizes))

    def one(args):
        seq, n = args
        w = draw(np.random.default_rng(seq), n)
        return math.fsum(w), math.fsum(w * w)

    jobs = list(zip(streams, sizes))
    if threads > 1 and len(jobs) > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            parts = list(pool.map(one, jobs))
    else:
        parts = [one(j) for j in jobs]
    return math.fsum(p[0] for p in parts), math.fsum(p[1] for p in parts)


def _finish(log_scale: float, s1: float, s2: float, n: int, seed: int, method: str) -> MCEstimate:
    mean = s1 / n
    var = max(s2 / n - mean * mean, 0.0) * n / (n - 1)
    log_value = float(log_scale) + math.log(mean)
    value = math.exp(log_value)
    stderr = value * math.sqrt(var / n) / mean
    return MCEstimate(value, stderr, log_value, n, seed, method)


def mc_quartic_integral(
    s: float = 1.0, dim: int = PERTURBATION_DIM, samples: int = 1_000_000, seed: int = 0, threads: int = 1
) -> MCEstimate:
    """Importance-sampled integral over R^dim of exp(-s |x|^4)."""
    lam = 0.5 * s
    # log target - log proposal = -s r^4 + lam r^4 + g - log_norm = -g + const
    log_norm = float(math.log(4.0) + 0.25 * dim * math.log(lam) - gammaln(0.25 * dim) - log_sphere_area(dim))

    def draw(rng, n):
        y, log_q = _isotropic_quartic_draw(rng, n, dim, lam)
        r4 = np.einsum("ij,ij->i", y, y) ** 2
        return np.exp(-s * r4 - log_q - (-log_norm))

    s1, s2 = _run_batches(draw, samples, seed, threads)
    return _finish(-log_norm, s1, s2, samples, seed, "importance")


def mc_mixed_integral(
    a: float = 1.0,
    s: float = 1.0,
    quartic_dim: int = PERTURBATION_DIM - 1,
    samples: int = 1_000_000,
    seed: int = 0,
    threads: int = 1,
) -> MCEstimate:
    """Importance-sampled integral over R x R^quartic_dim of exp(-a x^2 - s |y|^4)."""
    sigma = 1.0 / math.sqrt(a)  # twice the target variance 1/(2a)
    lam = 0.5 * s
    log_norm_x = -0.5 * math.log(2.0 * math.pi) - math.log(sigma)
    log_norm_y = 0.0
    if quartic_dim:
        log_norm_y = float(
            math.log(4.0) + 0.25 * quartic_dim * math.log(lam) - gammaln(0.25 * quartic_dim) - log_sphere_area(quartic_dim)
        )
    log_scale = -(log_norm_x + log_norm_y)

    def draw(rng, n):
        x = sigma * rng.standard_normal(n)
        log_qx = log_norm_x - 0.5 * (x / sigma) ** 2
        log_f = -a * x * x
        log_q = log_qx
        if quartic_dim:
            y, log_qy = _isotropic_quartic_draw(rng, n, quartic_dim, lam)
            log_f = log_f - s * np.einsum("ij,ij->i", y, y) ** 2
            log_q = log_q + log_qy
        return np.exp(log_f - log_q - log_scale)

    s1, s2 = _run_batches(draw, samples, seed, threads)
    return _finish(log_scale, s1, s2, samples, seed, "importance")


def qmc_quartic_integral(s: float = 1.0, dim: int = PERTURBATION_DIM, log2_points: int = 18, seed: int = 0) -> MCEstimate:
    """Scrambled Sobol estimate with a Gaussian proposal of matched radius."""
    sigma = (0.25 / s) ** 0.25 / math.sqrt(2.0)
    u = stats.qmc.Sobol(dim, scramble=True, seed=seed).random_base2(log2_points)
    x = sigma * stats.norm.ppf(np.clip(u, 1e-16, 1 - 1e-16))
    r2 = np.einsum("ij,ij->i", x, x)
    log_scale = 0.5 * dim * math.log(2.0 * math.pi * sigma * sigma)
    w = np.exp(-s * r2 * r2 + r2 / (2.0 * sigma * sigma))
    return _finish(log_scale, math.fsum(w), math.fsum(w * w), len(w), seed, "sobol")


def quartic_integral_C(samples: int = 1_000_000, seed: int = 0, threads: int = 1) -> MCEstimate:
    """MC estimate of C = integral over R^10 of exp(-|x|^4), closed form pi^(11/2)/64."""
    return mc_quartic_integral(1.0, PERTURBATION_DIM, samples, seed, threads)


def mixed_integral_Cprime(samples: int = 1_000_000, seed: int = 0, threads: int = 1) -> MCEstimate:
    """MC estimate of C' = integral over R x R^9 of exp(-x^2 - |y|^4)."""
    return mc_mixed_integral(1.0, 1.0, PERTURBATION_DIM - 1, samples, seed, threads)


# -- scaling exponents ------------------------------------------------------------


@dataclass(frozen=True)
class ScalingFit:
    slope: float
    stderr: float
    mu_grid: tuple
    log_integrals: tuple
    samples: int
    seed: int
    ricci_flat: bool

    def as_dict(self) -> dict:
        return {
            "slope": self.slope,
            "stderr": self.stderr,
            "mu_grid": list(self.mu_grid),
            "log_integrals": list(self.log_integrals),
            "samples": self.samples,
            "seed": self.seed,
            "mode": "flat" if self.ricci_flat else "nonflat",
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), sort_keys=True)


def per_cell_integral(
    mu_delta: float, ricci_flat: bool, rho: float = 1.0, c: float = 1.0, samples: int = 100_000, seed: int = 0, threads: int = 1
) -> MCEstimate:
    """Per-cell perturbation integral at weight scale ``mu_delta``.

    Ricci-flat: exp(-mu c |dg|^4) over R^10. Ricci background: the split bound
    exp(-mu/2 (rho^2 |dg'|^2 + c |dg''|^4)) with dg' one-dimensional.
    """
    if ricci_flat:
        return mc_quartic_integral(mu_delta * c, PERTURBATION_DIM, samples, seed, threads)
    _require_regime(rho, mu_delta)
    return mc_mixed_integral(0.5 * mu_delta * rho * rho, 0.5 * mu_delta * c, PERTURBATION_DIM - 1, samples, seed, threads)


def loglog_slope(x: Sequence[float], y: Sequence[float], sigma: Optional[Sequence[float]] = None):
    """Weighted least-squares slope of log y against log x, with its standard error."""
    lx, ly = np.log(np.asarray(x, float)), np.log(np.asarray(y, float))
    w = None if sigma is None else 1.0 / np.maximum(np.asarray(sigma, float), 1e-300)
    coef, cov = np.polyfit(lx, ly, 1, w=w, cov="unscaled" if w is not None else True)
    return float(coef[0]), float(math.sqrt(max(cov[0, 0], 0.0)))


def scaling_exponent(
    ricci_flat: bool,
    mu_grid: Sequence[float] = (1e2, 1e3, 1e4, 1e5, 1e6),
    rho: float = 1.0,
    c: float = 1.0,
    samples: int = 100_000,
    seed: int = 0,
    threads: int = 1,
) -> ScalingFit:
    """Slope of log(per-cell integral) versus log(mu_delta); independent RNG
    streams per grid point."""
    mus = [float(m) for m in mu_grid]
    if len(mus) < 2 or min(mus) <= 0 or math.log10(max(mus) / min(mus)) < 2.0:
        raise InvalidParam("mu grid must be positive and span at least two decades")
    if not ricci_flat:
        for m in mus:
            _require_regime(rho, m)
    seeds = np.random.SeedSequence(seed).generate_state(len(mus))
    logs, errs = [], []
    for m, sd in zip(mus, seeds):
        est = per_cell_integral(m, ricci_flat, rho, c, samples, int(sd), threads)
        logs.append(est.log_value)
        errs.append(est.log_stderr)
    slope, stderr = loglog_slope(mus, np.exp(logs), errs)
    return ScalingFit(slope, stderr, tuple(mus), tuple(logs), samples, seed, ricci_flat)


# -- dominance and partition estimates ----------------------------------------------


@dataclass(frozen=True)
class DominanceRatio:
    tau: float
    log_tau: float
    log_ratio: float
    cells: int

    def as_dict(self) -> dict:
        return {"tau": self.tau, "log_tau": self.log_tau, "log_ratio": self.log_ratio, "cells": self.cells}


def dominance_ratio(config: EnsembleConfig, C: Optional[float] = None, Cprime: Optional[float] = None) -> DominanceRatio:
    """Per-cell bound tau = (C' mu^(-11/4) / rho) / (C mu^(-10/4)) and the N-cell
    log ratio N log tau; the constants default to their closed forms."""
    _require_regime(config.rho, config.mu_delta)
    log_C = math.log(C) if C is not None else log_quartic_closed_form()
    log_Cp = math.log(Cprime) if Cprime is not None else log_mixed_closed_form()
    log_tau = log_Cp - log_C - 0.25 * math.log(config.mu_delta) - math.log(config.rho)
    return DominanceRatio(math.exp(log_tau), log_tau, config.cells * log_tau, config.cells)


@dataclass(frozen=True)
class PartitionEstimate:
    log_pi: float
    stderr: float
    per_cell: float

    def as_dict(self) -> dict:
        return {"log_pi": self.log_pi, "stderr": self.stderr, "per_cell": self.per_cell}


def partition_estimate(config: EnsembleConfig, ricci_flat: bool, threads: int = 1) -> PartitionEstimate:
    """log Pi for N independent cells from the MC per-cell integral."""
    est = per_cell_integral(config.mu_delta, ricci_flat, config.rho, config.c_quartic, config.samples, config.seed, threads)
    return PartitionEstimate(config.cells * est.log_value, config.cells * est.log_stderr, est.log_value)


def log_partition_macro(
    fld: MetricField,
    spec: QuadratureSpec,
    mu: float = 1.0,
    k: float = 1.0,
    cells: int = 1,
    normalization: Normalization = Normalization.FULL_HANDLE,
) -> PartitionEstimate:
    """log Pi ~ -mu * integral of R^2 dV + k * Vol for a slowly varying macro-metric."""
    action = action_per_unit_time(fld, spec, normalization).value
    vol = volume(fld, spec)
    log_pi = -mu * action + k * vol
    if not k * vol > mu * action:
        warnings.warn("volume term does not dominate the curvature term; macro estimate is outside its regime", stacklevel=2)
    return PartitionEstimate(log_pi, 0.0, log_pi / cells)
