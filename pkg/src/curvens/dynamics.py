"""Discrete variational mechanics of point particles on piecewise-linear
worldlines.

A :class:`SystemState` shares one list of coordinate time boundaries between
all particles. Each particle has a position at every boundary and a mass on
every interval; a zero mass marks a particle that does not exist on that
interval, which is how merge and split events are expressed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Sequence, Union

import numpy as np
import yaml
from scipy.linalg import solveh_banded

from .errors import InvalidParam, NoConvergence, SpacelikeSegment

DEFAULT_TOL = 1e-10


@dataclass(frozen=True)
class WorldlineSegment:
    t_start: float
    t_end: float
    x_start: tuple
    x_end: tuple
    mass: float

    @property
    def displacement(self) -> float:
        return float(np.linalg.norm(np.subtract(self.x_end, self.x_start)))

    @property
    def proper_time(self) -> float:
        dt = self.t_end - self.t_start
        dx = self.displacement
        if not dt > dx:
            raise SpacelikeSegment(f"segment with dt={dt:g}, |dx|={dx:g} is not timelike")
        return math.sqrt((dt - dx) * (dt + dx))

    @property
    def speed(self) -> float:
        return self.displacement / (self.t_end - self.t_start)


@dataclass(frozen=True)
class SystemState:
    """``times`` has n + 1 entries, ``positions`` is (particles, n + 1, 3) and
    ``masses`` is (particles, n)."""

    times: np.ndarray
    positions: np.ndarray
    masses: np.ndarray
    kappa: float = 1.0

    def __post_init__(self):
        times = np.array(self.times, dtype=float)
        pos = np.array(self.positions, dtype=float)
        masses = np.array(self.masses, dtype=float)
        if times.ndim != 1 or len(times) < 2:
            raise InvalidParam("need at least two time boundaries")
        if np.any(np.diff(times) <= 0):
            raise InvalidParam("time boundaries must be strictly increasing")
        if pos.ndim != 3 or pos.shape[1:] != (len(times), 3):
            raise InvalidParam("positions must have shape (particles, boundaries, 3)")
        if masses.shape != (pos.shape[0], len(times) - 1):
            raise InvalidParam("masses must have shape (particles, intervals)")
        if np.any(masses < 0):
            raise InvalidParam("masses must be nonnegative")
        if not self.kappa > 0:
            raise InvalidParam("kappa must be positive")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "positions", pos)
        object.__setattr__(self, "masses", masses)
        object.__setattr__(self, "kappa", float(self.kappa))

    @property
    def intervals(self) -> int:
        return len(self.times) - 1

    def segments(self, interval: int) -> "list[WorldlineSegment]":
        t0, t1 = self.times[interval], self.times[interval + 1]
        return [
            WorldlineSegment(t0, t1, tuple(p[interval]), tuple(p[interval + 1]), float(m[interval]))
            for p, m in zip(self.positions, self.masses)
        ]

    def with_times(self, times) -> "SystemState":
        return replace(self, times=np.asarray(times, dtype=float))

    def as_dict(self) -> dict:
        return {
            "kappa": self.kappa,
            "times": self.times.tolist(),
            "particles": [
                {"masses": m.tolist(), "breakpoints": p.tolist()} for p, m in zip(self.positions, self.masses)
            ],
        }


def _displacements(state: SystemState) -> np.ndarray:
    """(particles, intervals) array of |dx|."""
    return np.linalg.norm(np.diff(state.positions, axis=1), axis=-1)


def _interval_terms(state: SystemState, times: Optional[np.ndarray] = None):
    """Proper times and gamma factors for every (particle, interval); massless
    segments are excluded from the timelike check and contribute nothing."""
    times = state.times if times is None else times
    dt = np.diff(times)[None, :]
    dx = _displacements(state)
    massive = state.masses > 0
    if np.any(massive & ~(dt > dx)):
        p, j = np.argwhere(massive & ~(dt > dx))[0]
        raise SpacelikeSegment(f"particle {p} on interval {j}: |dx|={dx[p, j]:g} >= dt={dt[0, j]:g}")
    T = np.where(massive, np.sqrt(np.clip((dt - dx) * (dt + dx), 0, None)), 0.0)
    gamma = np.where(massive, dt / np.where(massive, T, 1.0), 0.0)
    return dt, dx, T, gamma


def _check_interval(state: SystemState, interval: int) -> None:
    if not 0 <= interval < state.intervals:
        raise InvalidParam(f"interval {interval} out of range 0..{state.intervals - 1}")


def xi_interval(state: SystemState, interval: int) -> float:
    """kappa * sum M_i T_i over the particles on one interval."""
    _check_interval(state, interval)
    _, _, T, _ = _interval_terms(state)
    return state.kappa * math.fsum(state.masses[:, interval] * T[:, interval])


def xi_total(state: SystemState, times: Optional[np.ndarray] = None) -> float:
    _, _, T, _ = _interval_terms(state, times)
    return state.kappa * math.fsum((state.masses * T).ravel())


def energies(state: SystemState, times: Optional[np.ndarray] = None) -> np.ndarray:
    """E = sum M_i / sqrt(1 - u_i^2) for every interval."""
    _, _, _, gamma = _interval_terms(state, times)
    return np.array([math.fsum(col) for col in (state.masses * gamma).T])


def energy(state: SystemState, interval: int) -> float:
    _check_interval(state, interval)
    return float(energies(state)[interval])


def stationarity_residual(state: SystemState, interval_a: int, interval_b: int) -> float:
    """d Xi_a / d(start of a) + d Xi_b / d(end of b) = kappa (E_b - E_a)."""
    _check_interval(state, interval_a)
    _check_interval(state, interval_b)
    e = energies(state)
    return state.kappa * (e[interval_b] - e[interval_a])


def xi_gradient(state: SystemState, times: Optional[np.ndarray] = None) -> np.ndarray:
    """Analytic dXi/dt_j for the interior boundaries j = 1..n-1."""
    e = energies(state, times)
    return state.kappa * (e[:-1] - e[1:])


def xi_gradient_fd(state: SystemState, h: float = 1e-6) -> np.ndarray:
    out = np.empty(state.intervals - 1)
    for j in range(1, state.intervals):
        tp, tm = state.times.copy(), state.times.copy()
        tp[j] += h
        tm[j] -= h
        out[j - 1] = (xi_total(state, tp) - xi_total(state, tm)) / (2 * h)
    return out


def _hessian_bands(state: SystemState, times: np.ndarray) -> "tuple[np.ndarray, np.ndarray]":
    """Diagonal and superdiagonal of -Hessian(Xi) in the interior times."""
    _, dx, T, _ = _interval_terms(state, times)
    massive = state.masses > 0
    # dE_j/d(dt_j) = -sum M dx^2 / T^3
    h = np.array(
        [math.fsum(col) for col in np.where(massive, state.masses * dx**2 / np.where(massive, T, 1.0) ** 3, 0.0).T]
    )
    k = state.kappa
    diag = k * (h[:-1] + h[1:])
    upper = -k * h[1:-1]
    return diag, upper


@dataclass(frozen=True)
class RelaxTrace:
    state: SystemState
    iterations: int
    xi_history: tuple
    residual: float


def _max_residual(state: SystemState, times: np.ndarray) -> float:
    g = xi_gradient(state, times)
    return float(np.max(np.abs(g))) if g.size else 0.0


def _feasible(state: SystemState, times: np.ndarray) -> bool:
    dt = np.diff(times)
    if np.any(dt <= 0):
        return False
    return not np.any((state.masses > 0) & ~(dt[None, :] > _displacements(state)))


def relax_trace(state: SystemState, tol: float = DEFAULT_TOL, max_iter: int = 200) -> RelaxTrace:
    """Move interior time boundaries until adjacent-interval energies balance.

    Xi is concave in the boundary times, so the stationary point is its
    maximum. Steps are damped Newton steps on -Xi (tridiagonal Hessian) with
    a gradient fallback, backtracked until Xi does not decrease.
    """
    times = state.times.copy()
    history = [xi_total(state, times)]
    if state.intervals < 2:
        return RelaxTrace(state, 0, tuple(history), 0.0)
    res = _max_residual(state, times)
    it = 0
    while res > tol:
        if it >= max_iter:
            raise NoConvergence(f"residual {res:.3e} after {it} iterations")
        it += 1
        g = xi_gradient(state, times)
        diag, upper = _hessian_bands(state, times)
        step = None
        if np.all(diag > 0):
            try:
                if len(diag) == 1:
                    step = g / diag
                else:
                    step = solveh_banded(np.vstack([np.concatenate([[0.0], upper]), diag]), g)
            except np.linalg.LinAlgError:
                step = None
        if step is None or not np.all(np.isfinite(step)):
            scale = np.min(np.diff(times)) * 0.25
            step = g / max(np.max(np.abs(g)), 1e-300) * scale
        alpha, accepted = 1.0, False
        for _ in range(60):
            trial = times.copy()
            trial[1:-1] += alpha * step
            if _feasible(state, trial):
                xi_new = xi_total(state, trial)
                res_new = _max_residual(state, trial)
                tiny = 8 * np.finfo(float).eps * max(abs(history[-1]), 1.0)
                if xi_new > history[-1] or (xi_new >= history[-1] - tiny and res_new < res):
                    accepted = True
                    break
            alpha *= 0.5
        if not accepted:
            raise NoConvergence(f"line search stalled at residual {res:.3e}")
        times = trial
        history.append(max(xi_new, history[-1]))
        res = res_new
    return RelaxTrace(state.with_times(times), it, tuple(history), res)


def relax_to_stationary(state: SystemState, tol: float = DEFAULT_TOL, max_iter: int = 200) -> SystemState:
    return relax_trace(state, tol, max_iter).state


def galilean_boost(state: SystemState, w: Sequence[float]) -> SystemState:
    """x -> x + w t for every breakpoint."""
    w = np.asarray(w, dtype=float)
    if w.shape != (3,):
        raise InvalidParam("boost velocity must be a 3-vector")
    pos = state.positions + state.times[None, :, None] * w[None, None, :]
    return replace(state, positions=pos)


def energy_mismatch(state: SystemState) -> float:
    """max |E_a - E_b| / max E over all interval pairs."""
    e = energies(state)
    return float((e.max() - e.min()) / e.max()) if e.max() > 0 else 0.0


def report(state: SystemState, trace: Optional[RelaxTrace] = None) -> dict:
    e = energies(state)
    out = {
        "state": state.as_dict(),
        "energies": e.tolist(),
        "xi_intervals": [xi_interval(state, j) for j in range(state.intervals)],
        "energy_mismatch": energy_mismatch(state),
    }
    if trace is not None:
        out["iterations"] = trace.iterations
        out["residual"] = trace.residual
    return out


def state_from_dict(data: dict) -> SystemState:
    unknown = set(data) - {"kappa", "times", "particles"}
    if unknown:
        raise InvalidParam(f"unknown scenario keys: {sorted(unknown)}")
    try:
        times = [float(t) for t in data["times"]]
        records = data["particles"]
    except (KeyError, TypeError) as exc:
        raise InvalidParam(f"scenario needs 'times' and 'particles': {exc}") from None
    n = len(times) - 1
    positions, masses = [], []
    for i, rec in enumerate(records):
        extra = set(rec) - {"mass", "masses", "breakpoints"}
        if extra:
            raise InvalidParam(f"particle {i}: unknown keys {sorted(extra)}")
        if ("mass" in rec) == ("masses" in rec):
            raise InvalidParam(f"particle {i}: give exactly one of 'mass' or 'masses'")
        m = [float(rec["mass"])] * n if "mass" in rec else [float(x) for x in rec["masses"]]
        pts = np.asarray(rec.get("breakpoints", []), dtype=float)
        if pts.ndim == 2 and pts.shape[1] == 1:
            pts = np.hstack([pts, np.zeros((len(pts), 2))])
        if pts.shape != (n + 1, 3):
            raise InvalidParam(f"particle {i}: need {n + 1} breakpoints of 1 or 3 coordinates")
        positions.append(pts)
        masses.append(m)
    if not positions:
        raise InvalidParam("scenario has no particles")
    return SystemState(np.array(times), np.array(positions), np.array(masses), float(data.get("kappa", 1.0)))


def load_scenario(source: Union[str, Path]) -> SystemState:
    """Read a YAML scenario file (format in docs/scenario_format.md)."""
    text = Path(source).read_text()
    data = yaml.safe_load(text)
    if not isinstance(data, dict):
        raise InvalidParam("scenario must be a mapping")
    return state_from_dict(data)


def dump_scenario(state: SystemState) -> str:
    return yaml.safe_dump(state.as_dict(), sort_keys=False)


def _single(x: float) -> "list[float]":
    return [x, 0.0, 0.0]


def scenario_free_flight() -> SystemState:
    """Two inertial particles with mis-placed interior boundaries."""
    times = [0.0, 0.8, 2.3, 3.0]
    a = [_single(0.5 * k) for k in range(4)]
    b = [[0.0, 0.2 * k, 0.1 * k] for k in range(4)]
    return SystemState(times, [a, b], [[1.0] * 3, [2.0] * 3])


def scenario_wall_bounce() -> SystemState:
    """Out to a wall at x = 1 and back, boundary placed off the midpoint."""
    return SystemState([0.0, 1.9, 3.0], [[_single(0.0), _single(1.0), _single(0.0)]], [[1.0, 1.0]])


def scenario_speed_change() -> SystemState:
    """Two particles whose paths bend at the interior boundary."""
    pa = [_single(0.0), _single(0.3), _single(1.0)]
    pb = [[0.0, 0.0, 0.0], [0.0, 0.5, 0.0], [0.0, 0.6, 0.0]]
    return SystemState([0.0, 0.7, 2.0], [pa, pb], [[1.0, 1.0], [1.0, 1.0]])


def scenario_merge() -> SystemState:
    """Two unit masses meet at the origin and continue as one body of mass 2.1."""
    pa = [_single(-0.4), _single(0.0), _single(0.2)]
    pb = [_single(0.3), _single(0.0), _single(0.2)]
    return SystemState([0.0, 1.0, 2.0], [pa, pb], [[1.0, 2.1], [1.0, 0.0]])


SCENARIOS = {
    "free-flight": scenario_free_flight,
    "wall-bounce": scenario_wall_bounce,
    "speed-change": scenario_speed_change,
    "merge": scenario_merge,
}
