"""Acceptance checks with pinned tolerances.

Every check returns a :class:`CheckResult` whose ``details`` carry the
measured numbers, so reports can be diffed between runs.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Dict, List

import numpy as np

from . import dynamics, ensemble, mass, quadrature, xi
from .catalog import make_schwarzschild, make_spherical_ansatz, make_wormhole_static
from .quadrature import Normalization, QuadratureSpec
from .tensor import curvature_on

REFERENCE_HALF_HANDLE = 57.820
REFERENCE_LORENTZIAN = (57.820, -65.485, 53.735)
REFERENCE_EUCLIDEAN = (57.820, 65.485, 184.71)
HALF_HANDLE_CLOSED_FORM = 320 * math.pi - 96 * math.pi**2


@dataclass(frozen=True)
class CheckResult:
    name: str
    passed: bool
    seconds: float
    details: dict = field(default_factory=dict)

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name} ({self.seconds:.2f}s)"

    def as_dict(self, timings: bool = True) -> dict:
        out = {"name": self.name, "passed": self.passed, "details": self.details}
        if timings:
            out["seconds"] = self.seconds
        return out


def _timed(name: str, budget: float, fn: Callable[[], "tuple[bool, dict]"]) -> CheckResult:
    start = time.perf_counter()
    ok, details = fn()
    seconds = time.perf_counter() - start
    details["runtime_budget_s"] = budget
    details["within_budget"] = seconds < budget
    return CheckResult(name, bool(ok and seconds < budget), seconds, details)


def _rel(x: float, ref: float) -> float:
    return abs(x - ref) / abs(ref)


def check_static_action(nodes: int = 64, threads: int = 1) -> CheckResult:
    # symbolic compilation is one-off setup and stays outside the timed region
    fld = make_wormhole_static(1.0)

    def run():
        res = quadrature.action_per_unit_time(fld, QuadratureSpec.handle(1.0, nodes), Normalization.HALF_HANDLE, threads)
        d = {
            "value": res.value,
            "rel_to_reference": _rel(res.value, REFERENCE_HALF_HANDLE),
            "rel_to_closed_form": _rel(res.value, HALF_HANDLE_CLOSED_FORM),
            "convergence_delta": res.convergence_delta,
        }
        return d["rel_to_reference"] <= 5e-3 and d["rel_to_closed_form"] <= 1e-6, d

    return _timed("static-wormhole-action", 1.0, run)


def check_rotation_ratios(nodes: int = 64, threads: int = 1) -> CheckResult:
    def run():
        spec = xi.default_spec(nodes)
        d, ok = {}, True
        for label, euclid, ref in (("lorentzian", False, REFERENCE_LORENTZIAN), ("euclidean", True, REFERENCE_EUCLIDEAN)):
            fit = xi.fit_expansion(xi.xi_sweep(xi.DEFAULT_V_GRID, euclid, spec, threads=threads))
            r2, r4 = fit.ratios
            p2, p4 = ref[1] / ref[0], ref[2] / ref[0]
            sign_ok = fit.c2 > 0 if euclid else fit.c2 < 0
            ok &= sign_ok and _rel(r2, p2) <= 0.02 and _rel(r4, p4) <= 0.05
            d[label] = {"c0": fit.c0, "c2": fit.c2, "c4": fit.c4, "c2/c0": r2, "c4/c0": r4, "sign_ok": sign_ok,
                        "rel_c2": _rel(r2, p2), "rel_c4": _rel(r4, p4)}
        return ok, d

    return _timed("rotation-expansion-ratios", 30.0, run)


def check_vacuum() -> CheckResult:
    def run():
        worst_ricci, worst_ansatz, worst_formula = 0.0, 0.0, 0.0
        theta = np.linspace(0.2, math.pi - 0.2, 9)
        for M in (0.5, 1.0, 2.0):
            r = np.linspace(2.5 * M, 50 * M, 200)
            R, T = np.meshgrid(r, theta)
            pts = np.stack([np.zeros_like(R), R, T, np.zeros_like(R)], -1).reshape(-1, 4)
            worst_ricci = max(worst_ricci, float(np.abs(curvature_on(make_schwarzschild(M), pts).ricci).max()))
        for C1, C2 in ((2.0, -1.0), (1.0, 0.5), (0.2, -0.3)):
            r = np.linspace(1.5, 60.0, 400)
            pts = np.stack([np.zeros_like(r), r, np.full_like(r, 1.1), np.zeros_like(r)], -1)
            worst_ansatz = max(worst_ansatz, float(np.abs(curvature_on(make_spherical_ansatz(C1, C2), pts).scalar).max()))
            prof = mass.LaurentProfile({-1: C1, -2: C2})
            worst_formula = max(worst_formula, float(np.abs(mass.ansatz_scalar_curvature(prof, r)).max()))
        d = {"schwarzschild_max_ricci": worst_ricci, "ansatz_max_scalar": worst_ansatz, "ansatz_formula_max": worst_formula}
        return worst_ricci <= 1e-10 and worst_ansatz <= 1e-12 and worst_formula <= 1e-12, d

    return _timed("schwarzschild-vacuum", 30.0, run)


def check_ensemble(samples: int = 1_000_000, seed: int = 42, threads: int = 1) -> CheckResult:
    def run():
        seeds = np.random.SeedSequence(seed).generate_state(4)
        flat = ensemble.scaling_exponent(True, samples=samples, seed=int(seeds[0]), threads=threads)
        curved = ensemble.scaling_exponent(False, samples=samples, seed=int(seeds[1]), threads=threads)
        C = ensemble.quartic_integral_C(samples, int(seeds[2]), threads)
        Cp = ensemble.mixed_integral_Cprime(samples, int(seeds[3]), threads)
        zC = (C.value - ensemble.quartic_closed_form()) / C.stderr
        zCp = (Cp.value - ensemble.mixed_closed_form()) / Cp.stderr
        d = {
            "slope_flat": flat.slope,
            "slope_nonflat": curved.slope,
            "C": C.value,
            "C_stderr": C.stderr,
            "C_closed_form": ensemble.quartic_closed_form(),
            "Cprime": Cp.value,
            "Cprime_stderr": Cp.stderr,
            "Cprime_closed_form": ensemble.mixed_closed_form(),
            "samples": samples,
            "seed": seed,
        }
        ok = abs(flat.slope + 2.5) <= 0.05 and abs(curved.slope + 2.75) <= 0.05 and abs(zC) <= 3 and abs(zCp) <= 3
        return ok, d

    return _timed("ensemble-scaling", 60.0, run)


def check_mass_model() -> CheckResult:
    def run():
        exps = mass.solve_exponents()
        prof = mass.pressure_profile_integrate(10.0, 100.0, 0.02)
        exact = 2.0 / prof.r
        rel_profile = float(np.max(np.abs(prof.a - exact) / exact))
        numeric = mass.minimize_xi_particle(1.0, mu=0.0)
        closed = mass.stationary_mass_closed_form(1.0)
        Ms = [mass.minimize_xi_particle(I) for I in (1.0, 2.0, 4.0)]
        lin = max(abs(Ms[1] / Ms[0] - 2.0), abs(Ms[2] / Ms[0] - 4.0)) / 4.0
        d = {
            "exponents": [str(exps[0]), str(exps[1])],
            "profile_rel_error": rel_profile,
            "stationary_numeric": numeric,
            "stationary_closed_form": closed,
            "stationary_rel": _rel(numeric, closed),
            "linearity_error": lin,
        }
        ok = exps == (Fraction(1, 3), Fraction(2, 3)) and rel_profile <= 1e-8 and d["stationary_rel"] <= 1e-8 and lin <= 1e-10
        return ok, d

    return _timed("mass-model", 10.0, run)


def check_dilation() -> CheckResult:
    def run():
        fld = make_wormhole_static(1.0)
        spec = QuadratureSpec.handle(1.0, 64)
        base = quadrature.action_per_unit_time(fld, spec).value
        rels = {str(lam): _rel(I * lam, base) for lam, I in quadrature.dilation_curve(fld, (0.5, 2.0, 4.0), spec)}
        a = quadrature.volume_matched_half_length()
        d = {"I1": base, "rel_errors": rels, "a_matched": a, "a_rel": _rel(a, 5 / 7)}
        return max(rels.values()) <= 1e-6 and d["a_rel"] <= 1e-6, d

    return _timed("dilation-stability", 30.0, run)


ENERGY_SCENARIOS = ("free-flight", "wall-bounce", "speed-change")


def check_energy() -> CheckResult:
    def run():
        d, ok = {}, True
        for name in ENERGY_SCENARIOS:
            state = dynamics.SCENARIOS[name]()
            g = dynamics.xi_gradient(state)
            g_fd = dynamics.xi_gradient_fd(state, 1e-6)
            grad_rel = float(np.max(np.abs(g - g_fd) / np.maximum(np.abs(g), 1e-300)))
            trace = dynamics.relax_trace(state)
            mismatch = dynamics.energy_mismatch(trace.state)
            ok &= mismatch <= 1e-9 and grad_rel <= 1e-6
            d[name] = {"mismatch": mismatch, "gradient_rel": grad_rel, "iterations": trace.iterations,
                       "energies": dynamics.energies(trace.state).tolist()}
        return ok, d

    return _timed("energy-conservation", 10.0, run)


def run_all(seed: int = 42, samples: int = 1_000_000, threads: int = 1) -> List[CheckResult]:
    return [
        check_static_action(threads=threads),
        check_rotation_ratios(threads=threads),
        check_vacuum(),
        check_ensemble(samples, seed, threads),
        check_mass_model(),
        check_dilation(),
        check_energy(),
    ]


CHECKS: Dict[str, Callable[..., CheckResult]] = {
    "static-wormhole-action": check_static_action,
    "rotation-expansion-ratios": check_rotation_ratios,
    "schwarzschild-vacuum": check_vacuum,
    "ensemble-scaling": check_ensemble,
    "mass-model": check_mass_model,
    "dilation-stability": check_dilation,
    "energy-conservation": check_energy,
}
