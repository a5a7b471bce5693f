"""Command-line interface.

Each subcommand runs one solver and writes a CSV result plus a
"<out>.manifest.txt" echoing every parameter and tolerance of the run.
Outputs are byte-reproducible for identical inputs and flags.

Exit codes:
    0  success
    2  usage error (bad flags)
    3  input error (missing file, syntax, schema, semantics)
    4  invalid problem (graph invariants, exponent/frequency/bracket domain)
    5  numerical failure (eigensolver, line search, Newton, iteration caps)
    6  output error (CSV/manifest write failed)
"""
from __future__ import annotations

import argparse
import sys

import numpy as np

from . import __version__, kernels
from . import multiplicity as mult
from . import shooting, spectral, variational
from .discretize import AdaptiveTruncation, FixedTruncation, assemble, suggested_length, truncate
from .errors import (
    ComplexConditionError,
    ConvergedToZeroError,
    CsvWriteError,
    DanglingEdgeError,
    DimensionMismatchError,
    DisconnectedGraphError,
    DivergentMassError,
    EigensolveError,
    FrequencyOutOfRangeError,
    GraphFileSyntaxError,
    GraphNLSError,
    InsufficientSamplesError,
    InvalidConditionError,
    InvalidExponentError,
    MaxIterationsError,
    MeshTooCoarseError,
    NegativeOmegaError,
    NoConvergenceError,
    NoDescentError,
    NonPositiveLengthError,
    NoSignChangeError,
    SchemaError,
    SemanticError,
    SupercriticalExponentError,
    SupercriticalZeroFrequencyError,
    SystemMismatchError,
    UnsupportedTopologyError,
    ZeroAlphaError,
    ZeroMassError,
)
from .graphs import build_graph
from .io import parse_graph_file, write_csv, write_manifest
from .variational import SolveOptions

_INPUT_ERRORS = (
    FileNotFoundError, GraphFileSyntaxError, SchemaError, SemanticError, IsADirectoryError,
)
_PROBLEM_ERRORS = (
    DisconnectedGraphError, DanglingEdgeError, NonPositiveLengthError,
    InvalidExponentError, UnsupportedTopologyError, ZeroAlphaError,
    DimensionMismatchError, ComplexConditionError, InvalidConditionError,
    MeshTooCoarseError, SystemMismatchError, FrequencyOutOfRangeError,
    NegativeOmegaError, SupercriticalZeroFrequencyError, DivergentMassError,
    SupercriticalExponentError, NoSignChangeError, InsufficientSamplesError,
    ZeroMassError,
)
_SOLVER_ERRORS = (
    EigensolveError, NoDescentError, MaxIterationsError, NoConvergenceError,
    ConvergedToZeroError,
)


def _add_common(p: argparse.ArgumentParser, graph: bool = True):
    if graph:
        p.add_argument("--graph", required=True, help="graph description file (JSON)")
        p.add_argument("--h", type=float, default=0.01, help="mesh size (default 0.01)")
        p.add_argument("--L", type=float, default=None,
                       help="truncation length for half-lines (default 40)")
    p.add_argument("--out", required=True, help="output CSV path")
    p.add_argument("--seed", type=int, default=0,
                   help="seed recorded for reproducibility (default 0)")
    p.add_argument("--jobs", type=int, default=1,
                   help="worker threads for independent grid points (default 1)")
    p.add_argument("--tol", type=float, default=1e-8,
                   help="solver tolerance (default 1e-8)")


def _build_system(args, omega_hint: float | None = None):
    spec = parse_graph_file(args.graph)
    g = build_graph(spec)
    L = args.L if args.L is not None else suggested_length(omega_hint)
    tg = truncate(g, FixedTruncation(L))
    return g, assemble(tg, args.h), L


def _manifest(args, extra: dict) -> dict:
    entries = {
        "tool": f"graphnls {__version__}",
        "backend": kernels.backend_name(),
        "command": args.command,
        "seed": args.seed,
    }
    for key in ("graph", "h", "L", "out", "tol", "jobs"):
        if hasattr(args, key):
            entries[key] = getattr(args, key)
    entries.update(extra)
    return entries


def _emit(args, rows, schema, extra_manifest: dict):
    write_csv(rows, schema, args.out)
    write_manifest(str(args.out) + ".manifest.txt", _manifest(args, extra_manifest))


# ---------------------------------------------------------------------------
# subcommands

def _cmd_spectrum(args) -> int:
    _, sys_, L = _build_system(args)
    eps = args.eps_zero if args.eps_zero is not None else spectral.default_eps_zero(args.h)
    result = spectral.negative_spectrum(sys_, eps)
    rows = [(j + 1, float(lam)) for j, lam in enumerate(result.eigenvalues)]
    _emit(args, rows, ("j", "lambda"), {
        "eps_zero": eps, "k_negative": result.k_negative, "l_h": result.l_h,
        "resolved_L": L,
    })
    return 0


def _cmd_groundstate(args) -> int:
    _, sys_, L = _build_system(args)
    res = variational.minimize_fixed_mass(sys_, args.mu, opts=SolveOptions(tol=args.tol))
    rows = [(res.mu, res.tau, res.omega, res.grad_residual, res.boundary_mass_fraction,
             res.iterations)]
    _emit(args, rows,
          ("mu", "tau", "omega", "grad_residual", "boundary_mass_fraction", "iterations"),
          {"resolved_L": L})
    return 0


def _cmd_taucurve(args) -> int:
    _, sys_, L = _build_system(args)
    grid = np.linspace(args.mu_min, args.mu_max, args.mu_steps)
    curve = variational.tau_curve(sys_, grid, opts=SolveOptions(tol=args.tol))
    rows = [(r.mu, r.tau, r.omega, r.grad_residual, r.boundary_mass_fraction)
            for r in curve.rows]
    _emit(args, rows,
          ("mu", "tau", "omega", "grad_residual", "boundary_mass_fraction"),
          {"mu_min": args.mu_min, "mu_max": args.mu_max, "mu_steps": args.mu_steps,
           "resolved_L": L})
    return 0


def _cmd_threshold(args) -> int:
    spec = parse_graph_file(args.graph)
    g = build_graph(spec)
    start = args.L if args.L is not None else 40.0
    est = variational.threshold_with_truncation(
        g, args.h, (args.mu_lo, args.mu_hi),
        start=start, tail_tol=args.tail_tol, mu_tol=args.mu_tol,
        solver=SolveOptions(tol=args.tol),
    )
    rows = [(est.mu1, est.bracket[0], est.bracket[1], est.method)]
    _emit(args, rows, ("mu1", "bracket_lo", "bracket_hi", "method"),
          {"mu_lo": args.mu_lo, "mu_hi": args.mu_hi, "tail_tol": args.tail_tol,
           "mu_tol": args.mu_tol, "start_L": start, "notes": est.notes})
    return 0


def _cmd_globalmin(args) -> int:
    _, sys_, L = _build_system(args)
    res = variational.minimize_global(sys_, opts=SolveOptions(tol=args.tol))
    _emit(args, [(res.tau_min, res.mass)], ("tau_min", "mass"), {"resolved_L": L})
    return 0


def _cmd_shoot(args) -> int:
    sol = shooting.solve_star_delta(args.E, args.alpha, args.p, args.omega)
    rows = [(sol.omega, sol.shift, sol.vertex_value, sol.mass_squared, sol.flux_residual)]
    _emit(args, rows, ("omega", "shift", "vertex_value", "mass_squared", "flux_residual"),
          {"E": args.E, "alpha": args.alpha, "p": args.p, "omega": args.omega})
    return 0


def _cmd_masscurve(args) -> int:
    grid = np.linspace(args.omega_min, args.omega_max, args.omega_steps)
    curve = shooting.mass_frequency_curve(args.E, args.alpha, args.p, grid, jobs=args.jobs)
    _emit(args, curve.rows(), ("omega", "mass_squared"),
          {"E": args.E, "alpha": args.alpha, "p": args.p,
           "omega_min": args.omega_min, "omega_max": args.omega_max,
           "omega_steps": args.omega_steps})
    return 0


def _cmd_bifurcate(args) -> int:
    l_h = shooting.star_spectrum_bottom(args.E, args.alpha)
    if l_h >= 0:
        raise FrequencyOutOfRangeError("no bifurcation point: spectrum bottom is 0")
    lp1 = shooting.star_eigenfunction_lp1(args.E, args.alpha, args.p)
    top = -l_h
    grid = top * (1.0 - np.linspace(args.window, args.gap_min / top, args.points))
    curve = shooting.mass_frequency_curve(args.E, args.alpha, args.p, grid, jobs=args.jobs)
    fit = shooting.check_bifurcation(curve, l_h, lp1, window=args.window)
    expected = fit.expected_slope
    rows = []
    for om, msq in curve.rows():
        gap = -(om + l_h)
        leading = (gap / lp1) ** expected
        rows.append((om, msq, leading, msq / leading))
    _emit(args, rows, ("omega", "mass_squared", "leading_term", "ratio"),
          {"E": args.E, "alpha": args.alpha, "p": args.p, "l_h": l_h,
           "phi0_lp1": lp1, "slope": fit.slope, "expected_slope": expected,
           "ratio_at_closest": fit.ratio_at_closest,
           "window_points": fit.window_points, "passed": fit.passed})
    print(f"slope = {fit.slope:.6f} (expected {expected:.6f}), "
          f"ratio at closest sample = {fit.ratio_at_closest:.6f}, "
          f"{'PASS' if fit.passed else 'FAIL'}")
    return 0


def _cmd_branches(args) -> int:
    _, sys_, L = _build_system(args, omega_hint=args.omega)
    spec_result = spectral.negative_spectrum(sys_)
    states = mult.enumerate_branches(sys_, args.omega, spec_result)
    rows = [(i + 1, s.omega, s.action, s.energy, s.mass, s.newton_residual, s.seed_index)
            for i, s in enumerate(states)]
    _emit(args, rows,
          ("index", "omega", "action", "energy", "mass", "newton_residual", "seed_index"),
          {"omega": args.omega, "k_negative": spec_result.k_negative, "resolved_L": L})
    return 0


def _cmd_normalized(args) -> int:
    _, sys_, L = _build_system(args)
    spec_result = spectral.negative_spectrum(sys_)
    states = mult.normalized_family(sys_, args.mu, spec_result)
    rows = [(i + 1, s.omega, s.energy, s.action, s.mass, s.newton_residual, s.seed_index)
            for i, s in enumerate(states)]
    _emit(args, rows,
          ("index", "omega", "energy", "action", "mass", "newton_residual", "seed_index"),
          {"mu": args.mu, "k_negative": spec_result.k_negative, "resolved_L": L})
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(
        prog="graphnls",
        description="Defocusing NLS on noncompact metric graphs",
    )
    sub = ap.add_subparsers(dest="command", required=True)

    p = sub.add_parser("spectrum", help="negative eigenvalues of the graph operator")
    _add_common(p)
    p.add_argument("--eps-zero", type=float, default=None,
                   help="negativity guard (default 1e-8/h^2)")
    p.set_defaults(fn=_cmd_spectrum)

    p = sub.add_parser("groundstate", help="constrained minimizer at one mass")
    _add_common(p)
    p.add_argument("--mu", type=float, required=True, help="prescribed mass (L2 norm)")
    p.set_defaults(fn=_cmd_groundstate)

    p = sub.add_parser("taucurve", help="minimum energy over a mass grid")
    _add_common(p)
    p.add_argument("--mu-min", type=float, required=True)
    p.add_argument("--mu-max", type=float, required=True)
    p.add_argument("--mu-steps", type=int, required=True)
    p.set_defaults(fn=_cmd_taucurve)

    p = sub.add_parser("threshold", help="existence threshold by multiplier sign")
    _add_common(p)
    p.add_argument("--mu-lo", type=float, required=True)
    p.add_argument("--mu-hi", type=float, required=True)
    p.add_argument("--tail-tol", type=float, default=0.02,
                   help="stop doubling L when mu1 moves less than this (default 0.02)")
    p.add_argument("--mu-tol", type=float, default=0.01,
                   help="bisection bracket width (default 0.01)")
    p.set_defaults(fn=_cmd_threshold)

    p = sub.add_parser("globalmin", help="unconstrained energy minimum")
    _add_common(p)
    p.set_defaults(fn=_cmd_globalmin)

    p = sub.add_parser("shoot", help="exact star state at one frequency")
    _add_common(p, graph=False)
    p.add_argument("--E", type=int, required=True, help="number of half-lines")
    p.add_argument("--alpha", type=float, required=True, help="delta strength (< 0)")
    p.add_argument("--p", type=float, required=True, help="nonlinearity exponent")
    p.add_argument("--omega", type=float, required=True)
    p.set_defaults(fn=_cmd_shoot)

    p = sub.add_parser("masscurve", help="squared mass against frequency")
    _add_common(p, graph=False)
    p.add_argument("--E", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--omega-min", type=float, required=True)
    p.add_argument("--omega-max", type=float, required=True)
    p.add_argument("--omega-steps", type=int, required=True)
    p.set_defaults(fn=_cmd_masscurve)

    p = sub.add_parser("bifurcate", help="fit the branch leaving the zero solution")
    _add_common(p, graph=False)
    p.add_argument("--E", type=int, required=True)
    p.add_argument("--alpha", type=float, required=True)
    p.add_argument("--p", type=float, required=True)
    p.add_argument("--window", type=float, default=0.12,
                   help="fit window as a fraction of |l_h| (default 0.12)")
    p.add_argument("--points", type=int, default=24)
    p.add_argument("--gap-min", type=float, default=1e-3,
                   help="closest approach to the bifurcation point (default 1e-3)")
    p.set_defaults(fn=_cmd_bifurcate)

    p = sub.add_parser("branches", help="stationary states at fixed frequency")
    _add_common(p)
    p.add_argument("--omega", type=float, required=True)
    p.set_defaults(fn=_cmd_branches)

    p = sub.add_parser("normalized", help="stationary states at fixed mass")
    _add_common(p)
    p.add_argument("--mu", type=float, required=True)
    p.set_defaults(fn=_cmd_normalized)

    return ap


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.fn(args)
    except _INPUT_ERRORS as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return 3
    except _PROBLEM_ERRORS as exc:
        print(f"invalid problem: {exc}", file=sys.stderr)
        return 4
    except _SOLVER_ERRORS as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        return 5
    except CsvWriteError as exc:
        print(f"output error: {exc}", file=sys.stderr)
        return 6
    except GraphNLSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 4


def main() -> None:
    raise SystemExit(run())
