"""Command-line front end.

Five subcommands cover the pipeline: ``synth`` generates measurement files
from forward solves, ``fit-data`` smooths them with the velocity ansatz,
``identify`` runs the trust-region identification, ``scan`` maps the cost
surface, and ``simulate`` emits profiles for a given parameter pair. Every
run writes a manifest (inputs hashed, outputs listed) into the output
directory; figures are rendered next to the delimited files.

Exit codes: 0 success, 1 numerical failure, 2 usage or validation error.
"""
from __future__ import annotations

import argparse
import csv
import datetime
import hashlib
import json
import os
import sys
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from . import __version__, bvp, figures, ident, spinmodel
from .continuation import ContinuationTrace, solve_with_fallback
from .data import (fit_ansatz, load_measurements, save_measurements,
                   synthesize, write_manifest, d_fit)
from .errors import ConfigError, SolverError
from .material import CarreauParams
from .nondim import load_config

THREADS_ENV = "SPINID_THREADS"


@dataclass(frozen=True)
class RunManifest:
    """Provenance record of one CLI run."""

    command: str
    config: str
    version: str
    timestamp: str
    inputs: dict
    outputs: list

    def write(self, path):
        with open(path, "w") as handle:
            json.dump(asdict(self), handle, indent=2, sort_keys=True)
            handle.write("\n")


def _sha256(path) -> str:
    digest = hashlib.sha256()
    with open(path, "rb") as handle:
        for chunk in iter(lambda: handle.read(65536), b""):
            digest.update(chunk)
    return digest.hexdigest()


def _finish(args, out_dir: Path, outputs: list) -> int:
    inputs = {str(args.config): _sha256(args.config)}
    measurements = getattr(args, "measurements", None)
    if measurements:
        inputs[str(measurements)] = _sha256(measurements)
    manifest_path = out_dir / "manifest.json"
    RunManifest(
        command=args.command,
        config=str(args.config),
        version=__version__,
        timestamp=datetime.datetime.now(datetime.timezone.utc).isoformat(),
        inputs=inputs,
        outputs=sorted(str(p) for p in outputs),
    ).write(manifest_path)
    return 0


def _thread_count() -> int:
    raw = os.environ.get(THREADS_ENV, "1")
    try:
        threads = int(raw)
    except ValueError:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    if threads < 1:
        raise ConfigError(f"{THREADS_ENV} must be a positive integer, got {raw!r}")
    return threads


def _parse_params(n: float, kappa: float) -> CarreauParams:
    try:
        return CarreauParams(n=float(n), kappa=float(kappa))
    except ValueError as exc:
        raise ConfigError(str(exc))


def _parse_start(text: str) -> CarreauParams:
    parts = text.split(",")
    if len(parts) != 2:
        raise ConfigError(f"--start expects 'n,kappa', got {text!r}")
    try:
        n, kappa = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"--start expects 'n,kappa', got {text!r}")
    return _parse_params(n, kappa)


def _parse_range(text: str, name: str):
    parts = text.split(":")
    if len(parts) != 2:
        raise ConfigError(f"{name} expects 'lo:hi', got {text!r}")
    try:
        lo, hi = float(parts[0]), float(parts[1])
    except ValueError:
        raise ConfigError(f"{name} expects 'lo:hi', got {text!r}")
    if not lo < hi:
        raise ConfigError(f"{name}: need lo < hi, got {text!r}")
    return lo, hi


def _parse_resolution(text: str):
    parts = text.lower().split("x")
    try:
        counts = [int(p) for p in parts]
    except ValueError:
        raise ConfigError(f"--resolution expects 'N' or 'NxM', got {text!r}")
    if len(counts) == 1:
        counts = counts * 2
    if len(counts) != 2 or min(counts) < 2:
        raise ConfigError(f"--resolution expects 'N' or 'NxM' with N,M >= 2, "
                          f"got {text!r}")
    return counts


def _setup(args):
    return spinmodel.build_setup(load_config(args.config))


def _problem(args, setup, series_list):
    cases = ident.build_cases(setup, series_list)
    return ident.IdentificationProblem(setup, cases, threads=_thread_count())


PROFILE_HEADER = ("s", "u", "N", "T", "epsdot", "d",
                  "s_m", "u_m_per_s", "N_newton", "T_kelvin",
                  "epsdot_per_s", "d_m")


def _write_profile(path, setup, exp, sol, n_points: int):
    refs = setup.references
    s = np.linspace(0.0, exp.L, n_points)
    y, _ = bvp.evaluate(sol, s)
    d = np.real(spinmodel.diameter(y[0], y[2], setup.material, exp.Q))
    rows = np.column_stack([
        s, y[0], y[1], y[2], y[3], d,
        s * refs.L0, y[0] * refs.u0, y[1] * setup.derived.N0,
        y[2] * refs.T0, y[3] * refs.u0 / refs.L0, d * setup.derived.d0,
    ])
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(PROFILE_HEADER)
        for row in rows:
            writer.writerow([repr(float(v)) for v in row])
    return s, y, d


def cmd_simulate(args, out_dir: Path) -> int:
    setup = _setup(args)
    p = _parse_params(args.n, args.kappa)
    outputs = []
    for exp in setup.experiments:
        family = spinmodel.continuation_family(setup, exp, p)
        guess = spinmodel.auxiliary_guess(setup.context(exp, p, 0.0))
        sol, trace = solve_with_fallback(
            family, guess,
            solve_kwargs={"tol": setup.solver.tol,
                          "max_nodes": setup.solver.max_nodes,
                          "newton_tol": setup.solver.newton_tol})
        profile_path = out_dir / f"profile_{exp.name}.csv"
        s, y, _ = _write_profile(profile_path, setup, exp, sol, args.points)
        trace_path = out_dir / f"continuation_{exp.name}.csv"
        (trace or ContinuationTrace(steps=[])).to_csv(trace_path)
        figure_path = out_dir / f"profile_{exp.name}.png"
        figures.profile_figure(s, y, figure_path,
                               title=f"{exp.name}  n={p.n:g} kappa={p.kappa:g}")
        outputs += [profile_path, trace_path, figure_path]
    return _finish(args, out_dir, outputs)


def cmd_fit_data(args, out_dir: Path) -> int:
    setup = _setup(args)
    series_si = load_measurements(args.measurements)
    series_dl = [s.to_dimensionless(setup.references) for s in series_si]
    known = {exp.name for exp in setup.experiments}
    fits = []
    for series in series_dl:
        length = (setup.experiment(series.experiment).L
                  if series.experiment in known else None)
        fits.append(fit_ansatz(series, length=length))

    refs = setup.references
    fits_path = out_dir / "ansatz_fits.csv"
    with open(fits_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("experiment", "b", "c", "v", "u0", "objective",
                         "grad_norm"))
        for series, fit in zip(series_dl, fits):
            writer.writerow([series.experiment] +
                            [repr(float(v)) for v in
                             (fit.b, fit.c, fit.v, fit.u0, fit.objective,
                              fit.grad_norm)])

    smooth_path = out_dir / "smoothed_profiles.csv"
    with open(smooth_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("experiment", "s", "d_fit", "position_m",
                         "diameter_m"))
        for series, fit in zip(series_dl, fits):
            s_fine = np.linspace(series.s[0], series.s[-1], 200)
            d_sm = np.real(d_fit(fit, s_fine))
            for s_val, d_val in zip(s_fine, d_sm):
                writer.writerow([series.experiment, repr(float(s_val)),
                                 repr(float(d_val)),
                                 repr(float(s_val * refs.L0)),
                                 repr(float(d_val * setup.derived.d0))])

    figure_path = out_dir / "fit.png"
    figures.fit_figure(series_dl, fits, setup, figure_path)
    raw_path = out_dir / "measurements.png"
    figures.measurements_figure(series_si, raw_path)
    return _finish(args, out_dir, [fits_path, smooth_path, figure_path,
                                   raw_path])


def cmd_identify(args, out_dir: Path) -> int:
    setup = _setup(args)
    series = load_measurements(args.measurements, refs=setup.references)
    problem = _problem(args, setup, series)
    start = _parse_start(args.start) if args.start else None
    result = ident.identify(problem, start=start)

    iterates_path = out_dir / "iterates.csv"
    with open(iterates_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("iteration", "n", "kappa", "cost", "grad_norm",
                         "radius", "step_norm", "accepted", "wall_time_s"))
        for rec in result.iterates:
            writer.writerow([rec.iteration, repr(rec.n), repr(rec.kappa),
                             repr(rec.cost), repr(rec.grad_norm),
                             repr(rec.radius), repr(rec.step_norm),
                             int(rec.accepted), repr(rec.wall_time)])

    result_path = out_dir / "result.json"
    with open(result_path, "w") as handle:
        json.dump({
            "n": float(np.real(result.p_opt.n)),
            "kappa": float(np.real(result.p_opt.kappa)),
            "cost": result.cost,
            "converged": result.converged,
            "status": result.status,
            "iterations": result.iterations,
            "n_solves": result.n_solves,
        }, handle, indent=2, sort_keys=True)
        handle.write("\n")

    outputs = [iterates_path, result_path]
    if result.iterates:
        conv_path = out_dir / "convergence.png"
        figures.convergence_figure(result.iterates, conv_path)
        outputs.append(conv_path)
    solutions = problem.solve_all(result.p_opt)
    fit_path = out_dir / "fit.png"
    figures.fit_figure(series, [case.fit for case in problem.cases], setup,
                       fit_path, solutions=solutions)
    outputs.append(fit_path)

    if not result.converged:
        print(f"warning: not converged ({result.status})", file=sys.stderr)
    print(f"p_opt: n={np.real(result.p_opt.n):.6f} "
          f"kappa={np.real(result.p_opt.kappa):.6f} "
          f"cost={result.cost:.6e} [{result.status}, "
          f"{result.iterations} iterations]")
    return _finish(args, out_dir, outputs)


def cmd_scan(args, out_dir: Path) -> int:
    setup = _setup(args)
    series = load_measurements(args.measurements, refs=setup.references)
    problem = _problem(args, setup, series)
    n_lo, n_hi = _parse_range(args.n_range, "--n-range")
    k_lo, k_hi = _parse_range(args.kappa_range, "--kappa-range")
    rows, cols = _parse_resolution(args.resolution)
    # validate the box before any solve
    _parse_params(n_lo, k_lo)
    _parse_params(n_hi, k_hi)
    n_values = np.linspace(n_lo, n_hi, rows)
    kappa_values = np.linspace(k_lo, k_hi, cols)
    grid = ident.scan(problem, n_values, kappa_values)

    scan_path = out_dir / "scan.csv"
    with open(scan_path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(("n", "kappa", "cost"))
        for i, n_val in enumerate(n_values):
            for j, k_val in enumerate(kappa_values):
                writer.writerow([repr(float(n_val)), repr(float(k_val)),
                                 repr(float(grid[i, j]))])
    figure_path = out_dir / "scan.png"
    figures.scan_figure(n_values, kappa_values, grid, figure_path)
    return _finish(args, out_dir, [scan_path, figure_path])


def cmd_synth(args, out_dir: Path) -> int:
    setup = _setup(args)
    p_true = _parse_params(args.n, args.kappa)
    if args.noise < 0.0:
        raise ConfigError(f"--noise must be nonnegative, got {args.noise}")
    series_list, manifest = synthesize(setup, p_true, noise_rel=args.noise,
                                       seed=args.seed, n_points=args.points)
    measurements_path = out_dir / "measurements.csv"
    save_measurements(series_list, measurements_path)
    manifest_path = out_dir / "synth_manifest.json"
    write_manifest(manifest, manifest_path)
    figure_path = out_dir / "measurements.png"
    figures.measurements_figure(series_list, figure_path)
    return _finish(args, out_dir, [measurements_path, manifest_path,
                                   figure_path])


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spinid",
        description="Elongational viscosity identification from fiber "
                    "spinning diameter measurements.")
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", required=True, help="INI problem config")
        p.add_argument("--out", default=".", help="output directory")

    p_sim = sub.add_parser("simulate", help="forward-solve all experiments")
    common(p_sim)
    p_sim.add_argument("--n", type=float, default=1.0,
                       help="power-law index (default Newtonian)")
    p_sim.add_argument("--kappa", type=float, default=10.0,
                       help="log consistency")
    p_sim.add_argument("--points", type=int, default=201,
                       help="profile sampling points")
    p_sim.set_defaults(func=cmd_simulate)

    p_fit = sub.add_parser("fit-data", help="fit the velocity ansatz to "
                                            "measurements")
    common(p_fit)
    p_fit.add_argument("--measurements", required=True)
    p_fit.set_defaults(func=cmd_fit_data)

    p_id = sub.add_parser("identify", help="identify (n, kappa) from "
                                           "measurements")
    common(p_id)
    p_id.add_argument("--measurements", required=True)
    group = p_id.add_mutually_exclusive_group()
    group.add_argument("--start", help="explicit start 'n,kappa'")
    group.add_argument("--heuristic", action="store_true",
                       help="force the plateau sweep start (the default)")
    p_id.set_defaults(func=cmd_identify)

    p_scan = sub.add_parser("scan", help="map the cost surface")
    common(p_scan)
    p_scan.add_argument("--measurements", required=True)
    p_scan.add_argument("--n-range", default="0:1", dest="n_range")
    p_scan.add_argument("--kappa-range", default="7:20", dest="kappa_range")
    p_scan.add_argument("--resolution", default="5",
                        help="'N' or 'NxM' grid size (n by kappa)")
    p_scan.set_defaults(func=cmd_scan)

    p_synth = sub.add_parser("synth", help="generate synthetic measurements")
    common(p_synth)
    p_synth.add_argument("--n", type=float, required=True)
    p_synth.add_argument("--kappa", type=float, required=True)
    p_synth.add_argument("--noise", type=float, default=0.01,
                         help="relative noise level")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--points", type=int, default=25,
                         help="measurements per experiment")
    p_synth.set_defaults(func=cmd_synth)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out_dir = Path(args.out)
    try:
        out_dir.mkdir(parents=True, exist_ok=True)
        return args.func(args, out_dir)
    except ConfigError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except SolverError as exc:
        print(f"solver failure: {exc}", file=sys.stderr)
        try:
            with open(out_dir / "error.txt", "w") as handle:
                handle.write(f"{type(exc).__name__}: {exc}\n")
                trace = getattr(exc, "trace", None)
                if trace is not None:
                    handle.write(f"continuation steps attempted: "
                                 f"{len(trace.steps)}\n")
        except OSError:
            pass
        return 1


if __name__ == "__main__":
    sys.exit(main())
