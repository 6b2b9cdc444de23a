"""Command-line front end.

Exit codes: 0 success, 1 verification failure, 2 usage or input error.
Reports are JSON on stdout (or ``--output``); CSV is used for tables only.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import json
import os
import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from . import __version__, dynamics, ensemble, mass, verify, xi
from .catalog import CATALOG_IDS, parse_metric_id
from .errors import CurvensError
from .quadrature import Normalization
from .tensor import curvature_at

THREADS_ENV = "CURVENS_THREADS"
SUBCOMMANDS = ("curvature", "xi-sweep", "ensemble", "mass", "dynamics", "verify-all")


class UsageError(Exception):
    pass


@dataclass(frozen=True)
class RunConfig:
    """Every knob of a run. ``--dump-config`` prints this as JSON and
    ``--config FILE`` replays it."""

    subcommand: str
    metric: str = "minkowski"
    point: tuple = (0.0, 1.0, 1.0, 1.0)
    nodes: int = 64
    normalization: str = "half"
    signature: str = "lorentzian"
    euclidean_time: str = "flipped"
    v_max: float = xi.SLOW_ROTATION_LIMIT
    v_points: int = len(xi.DEFAULT_V_GRID)
    order: int = xi.DEFAULT_ORDER
    mode: str = "flat"
    mu_grid: tuple = (1e2, 1e3, 1e4, 1e5, 1e6)
    rho: float = 1.0
    c_quartic: float = 1.0
    M: float = 1.0
    r0: float = 1.0
    r_max_factor: float = 10.0
    profile_points: int = 200
    scenario: Optional[str] = None
    builtin: Optional[str] = None
    seed: int = 0
    samples: int = 1_000_000
    verify: bool = False
    threads: int = 1
    format: str = "json"
    output: Optional[str] = None
    figures: Optional[str] = None
    deterministic: bool = False

    def as_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["point"] = list(self.point)
        d["mu_grid"] = list(self.mu_grid)
        return d

    @classmethod
    def from_dict(cls, data: dict) -> "RunConfig":
        names = {f.name for f in dataclasses.fields(cls)}
        unknown = set(data) - names
        if unknown:
            raise UsageError(f"unknown config keys: {sorted(unknown)}")
        if data.get("subcommand") not in SUBCOMMANDS:
            raise UsageError(f"config subcommand must be one of {SUBCOMMANDS}")
        data = dict(data)
        for key in ("point", "mu_grid"):
            if key in data:
                data[key] = tuple(float(x) for x in data[key])
        return cls(**data)


def _floats(text: str) -> tuple:
    try:
        return tuple(float(x) for x in text.split(","))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def _default_threads() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        return max(1, int(raw))
    except ValueError:
        return 1


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--format", choices=("json", "csv"), default="json", help="report format (default: json)")
    common.add_argument("--output", help="write the report here instead of stdout")
    common.add_argument("--figures", metavar="DIR", help="also render PNG figures into DIR")
    common.add_argument("--deterministic", action="store_true", help="omit timestamps and timings")
    common.add_argument("--dump-config", action="store_true", help="print the resolved run config as JSON and exit")
    common.add_argument(
        "--threads", type=int, default=_default_threads(), help=f"worker threads (default: ${THREADS_ENV} or 1)"
    )

    parser = argparse.ArgumentParser(prog="curvens", description="Curvature ensemble toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("--config", metavar="FILE", help="replay a config written by --dump-config")
    sub = parser.add_subparsers(dest="subcommand")

    p = sub.add_parser("curvature", parents=[common], help="curvature data at one point")
    p.add_argument("metric", help=f"catalog id name[:key=value,...]; names: {', '.join(CATALOG_IDS)}")
    p.add_argument("--point", type=_floats, default=(0.0, 1.0, 1.0, 1.0), help="t,x1,x2,x3 (default: 0,1,1,1)")

    p = sub.add_parser("xi-sweep", parents=[common], help="rotation sweep of the handle action and its even fit")
    sig = p.add_mutually_exclusive_group()
    sig.add_argument("--lorentzian", dest="signature", action="store_const", const="lorentzian")
    sig.add_argument("--euclidean", dest="signature", action="store_const", const="euclidean")
    p.set_defaults(signature="lorentzian")
    p.add_argument("--euclidean-time", choices=("flipped", "galileo"), default="flipped",
                   help="sign convention of g_tt after rotation to imaginary time (default: flipped)")
    p.add_argument("--v-max", type=float, default=xi.SLOW_ROTATION_LIMIT, help="largest speed, at most 0.3 (default: 0.3)")
    p.add_argument("--v-points", type=int, default=len(xi.DEFAULT_V_GRID), help="grid size from 0 to v-max (default: 7)")
    p.add_argument("--order", type=int, default=xi.DEFAULT_ORDER, help="even fit degree (default: 8)")
    p.add_argument("--nodes", type=int, default=64, help="Gauss-Legendre nodes per axis (default: 64)")
    p.add_argument("--verify", action="store_true", help="exit 1 unless the fitted ratios meet the acceptance bands")

    p = sub.add_parser("ensemble", parents=[common], help="per-cell integral scaling in mu_delta")
    p.add_argument("--mode", choices=("flat", "nonflat"), default="flat", help="Ricci-flat or Ricci background")
    p.add_argument("--mu-grid", type=_floats, default=(1e2, 1e3, 1e4, 1e5, 1e6), help="comma list (default: 1e2..1e6)")
    p.add_argument("--rho", type=float, default=1.0, help="Ricci magnitude for nonflat mode (default: 1)")
    p.add_argument("--c-quartic", type=float, default=1.0, help="quartic coefficient (default: 1)")
    p.add_argument("--samples", type=int, default=1_000_000, help="MC samples per grid point (default: 1e6)")
    p.add_argument("--seed", type=int, default=0, help="root seed (default: 0)")
    p.add_argument("--verify", action="store_true", help="exit 1 unless the slope is within 0.05 of its target")

    p = sub.add_parser("mass", parents=[common], help="exterior profile of a particle of mass M")
    p.add_argument("--M", type=float, default=1.0, help="Schwarzschild mass (default: 1)")
    p.add_argument("--r0", type=float, default=1.0, help="core radius (default: 1)")
    p.add_argument("--r-max-factor", type=float, default=10.0, help="CSV samples span [r0, factor*r0] (default: 10)")
    p.add_argument("--profile-points", type=int, default=200, help="CSV sample count (default: 200)")

    p = sub.add_parser("dynamics", parents=[common], help="relax a particle scenario and report energies")
    src = p.add_mutually_exclusive_group(required=False)
    src.add_argument("scenario", nargs="?", help="YAML scenario file (see docs/scenario_format.md)")
    src.add_argument("--builtin", choices=sorted(dynamics.SCENARIOS), help="use a built-in scenario")
    p.add_argument("--verify", action="store_true", help="exit 1 unless energies agree to 1e-9 relative")

    p = sub.add_parser("verify-all", parents=[common], help="run every acceptance check")
    p.add_argument("--seed", type=int, default=42, help="root seed for the Monte Carlo check (default: 42)")
    p.add_argument("--samples", type=int, default=1_000_000, help="MC samples (default: 1e6)")
    p.add_argument("--nodes", type=int, default=64, help="Gauss-Legendre nodes per axis (default: 64)")
    return parser


def config_from_args(args: argparse.Namespace) -> RunConfig:
    fields = {f.name for f in dataclasses.fields(RunConfig)}
    values = {k: v for k, v in vars(args).items() if k in fields and v is not None}
    if args.subcommand == "dynamics" and not (args.scenario or args.builtin):
        raise UsageError("dynamics needs a scenario file or --builtin")
    if args.subcommand == "dynamics" and args.scenario:
        values["scenario"] = str(Path(args.scenario).resolve())
    return RunConfig(**values)


# -- subcommands ----------------------------------------------------------------------


@dataclass
class Outcome:
    report: dict
    table: Optional[str] = None
    passed: bool = True
    lines: List[str] = field(default_factory=list)


def run_curvature(cfg: RunConfig) -> Outcome:
    fld = parse_metric_id(cfg.metric)
    if len(cfg.point) != 4:
        raise UsageError("--point needs four coordinates")
    bundle = curvature_at(fld, cfg.point)
    return Outcome({"metric": fld.name, "curvature": bundle.as_dict()})


def _v_grid(cfg: RunConfig) -> np.ndarray:
    if not 0 < cfg.v_max <= xi.SLOW_ROTATION_LIMIT:
        raise UsageError(f"--v-max must lie in (0, {xi.SLOW_ROTATION_LIMIT}] (slow-rotation regime)")
    if cfg.v_points < 2:
        raise UsageError("--v-points must be at least 2")
    return np.round(np.linspace(0.0, cfg.v_max, cfg.v_points), 12)


def run_xi_sweep(cfg: RunConfig) -> Outcome:
    grid = _v_grid(cfg)
    euclid = cfg.signature == "euclidean"
    rows = xi.xi_sweep(grid, euclid, xi.default_spec(cfg.nodes), Normalization(cfg.normalization),
                       cfg.euclidean_time, cfg.threads)
    fit = xi.fit_expansion(rows, cfg.order)
    ref = verify.REFERENCE_EUCLIDEAN if euclid else verify.REFERENCE_LORENTZIAN
    r2, r4 = fit.ratios
    target2, target4 = ref[1] / ref[0], ref[2] / ref[0]
    sign_ok = fit.c2 > 0 if euclid else fit.c2 < 0
    passed = sign_ok and abs(r2 / target2 - 1) <= 0.02 and abs(r4 / target4 - 1) <= 0.05
    report = {
        "signature": cfg.signature,
        "normalization": cfg.normalization,
        "sweep": [{"v": v, "xi": y} for v, y in rows],
        "expansion": fit.as_dict(),
        "targets": {"c2/c0": target2, "c4/c0": target4},
    }
    if cfg.verify:
        report["verify"] = {"passed": passed}
    out = Outcome(report, xi.sweep_csv(rows, cfg.signature), passed or not cfg.verify)
    if cfg.figures:
        from . import plotting

        plotting.xi_sweep_figure(cfg.figures, rows, fit, cfg.signature)
    return out


def run_ensemble(cfg: RunConfig) -> Outcome:
    flat = cfg.mode == "flat"
    fit = ensemble.scaling_exponent(flat, cfg.mu_grid, cfg.rho, cfg.c_quartic, cfg.samples, cfg.seed, cfg.threads)
    target = -2.5 if flat else -2.75
    passed = abs(fit.slope - target) <= 0.05
    report = {"fit": fit.as_dict(), "target_slope": target}
    if cfg.verify:
        report["verify"] = {"passed": passed}
    lines = ["mu_delta,log_integral"] + [f"{float(m)!r},{float(v)!r}" for m, v in zip(fit.mu_grid, fit.log_integrals)]
    if cfg.figures:
        from . import plotting

        plotting.scaling_figure(cfg.figures, fit)
    return Outcome(report, "\n".join(lines) + "\n", passed or not cfg.verify)


def run_mass(cfg: RunConfig) -> Outcome:
    prof = mass.solve_exterior_profile(cfg.M, cfg.r0)
    r = np.linspace(cfg.r0, cfg.r_max_factor * cfg.r0, cfg.profile_points)
    a = prof.profile(r)
    alpha, beta = mass.solve_exponents()
    report = {
        "profile": prof.as_dict(),
        "exponents": {"alpha": str(alpha), "beta": str(beta)},
        "max_abs_scalar_curvature": float(np.max(np.abs(mass.ansatz_scalar_curvature(prof.profile, r)))),
    }
    table = "r,a\n" + "".join(f"{ri!r},{ai!r}\n" for ri, ai in zip(r.tolist(), a.tolist()))
    if cfg.figures:
        from . import plotting

        plotting.profile_figure(cfg.figures, r, a, cfg.r0)
    return Outcome(report, table)


def run_dynamics(cfg: RunConfig) -> Outcome:
    state = dynamics.load_scenario(cfg.scenario) if cfg.scenario else dynamics.SCENARIOS[cfg.builtin]()
    trace = dynamics.relax_trace(state)
    report = dynamics.report(trace.state, trace)
    passed = report["energy_mismatch"] <= 1e-9
    if cfg.verify:
        report["verify"] = {"passed": passed}
    table = "interval,t_start,t_end,energy\n" + "".join(
        f"{j},{float(trace.state.times[j])!r},{float(trace.state.times[j + 1])!r},{float(e)!r}\n"
        for j, e in enumerate(report["energies"])
    )
    if cfg.figures:
        from . import plotting

        plotting.worldline_figure(cfg.figures, trace.state)
    return Outcome(report, table, passed or not cfg.verify)


def run_verify_all(cfg: RunConfig) -> Outcome:
    checks = [
        verify.check_static_action(cfg.nodes, cfg.threads),
        verify.check_rotation_ratios(cfg.nodes, cfg.threads),
        verify.check_vacuum(),
        verify.check_ensemble(cfg.samples, cfg.seed, cfg.threads),
        verify.check_mass_model(),
        verify.check_dilation(),
        verify.check_energy(),
    ]
    timings = not cfg.deterministic
    if not timings:
        for c in checks:
            c.details.pop("within_budget", None)
    passed = all(c.passed for c in checks)
    report = {"passed": passed, "checks": [c.as_dict(timings) for c in checks]}
    table = "check,passed\n" + "".join(f"{c.name},{c.passed}\n" for c in checks)
    lines = [c.line() if timings else f"{'PASS' if c.passed else 'FAIL'} {c.name}" for c in checks]
    return Outcome(report, table, passed, lines)


RUNNERS = {
    "curvature": run_curvature,
    "xi-sweep": run_xi_sweep,
    "ensemble": run_ensemble,
    "mass": run_mass,
    "dynamics": run_dynamics,
    "verify-all": run_verify_all,
}


def _emit(text: str, output: Optional[str]) -> None:
    if output:
        Path(output).write_text(text)
    else:
        sys.stdout.write(text)


def execute(cfg: RunConfig) -> int:
    if cfg.format not in ("json", "csv"):
        raise UsageError("format must be json or csv")
    if cfg.threads < 1:
        raise UsageError("--threads must be at least 1")
    Normalization(cfg.normalization)
    outcome = RUNNERS[cfg.subcommand](cfg)
    report = {"subcommand": cfg.subcommand, "config": cfg.as_dict(), **outcome.report}
    if not cfg.deterministic:
        report["generated_at"] = _dt.datetime.now(_dt.timezone.utc).isoformat()
    for line in outcome.lines:
        print(line, file=sys.stderr)
    if cfg.format == "csv" and outcome.table is not None:
        _emit(outcome.table, cfg.output)
        # the JSON summary still goes somewhere visible
        print(json.dumps(report, sort_keys=True), file=sys.stderr)
    else:
        _emit(json.dumps(report, sort_keys=True, indent=2) + "\n", cfg.output)
    return 0 if outcome.passed else 1


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.config:
            if args.subcommand:
                raise UsageError("--config replays a full run; do not combine it with a subcommand")
            cfg = RunConfig.from_dict(json.loads(Path(args.config).read_text()))
        elif not args.subcommand:
            parser.print_help(sys.stderr)
            return 2
        else:
            cfg = config_from_args(args)
            if args.dump_config:
                print(json.dumps(cfg.as_dict(), sort_keys=True, indent=2))
                return 0
        return execute(cfg)
    except (UsageError, CurvensError, ValueError, OSError) as exc:
        print(f"curvens: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
