"""Measurement ingestion, ansatz smoothing, and synthetic data generation.

Raw diameter measurements are noisy and unevenly informative, so the
identification never consumes them directly. A four-parameter velocity ansatz

    u_f(s; b, c, v, u0) = u0 v / (u0 + (v - u0) exp(-(s/c)^b))

is fitted to the inverse-squared diameters (u0 is pinned to the
nozzle-nearest measurement, mass conservation u ~ 1/d^2), and the smoothed
profile d_fit = 1/sqrt(u_f) replaces the data. The same module generates
synthetic measurement sets from forward solves, which substitute for the
unpublished pilot-plant data set.
"""
from __future__ import annotations

import csv
import datetime
import json
from dataclasses import dataclass, field, replace

import numpy as np
from scipy import optimize

from . import spinmodel
from .bvp import evaluate as bvp_evaluate
from .continuation import ContinuationSettings, solve_with_fallback
from .errors import ConfigError, FitDiverged
from .numerics import complex_step_jacobian

CSV_HEADER = ("experiment", "position_m", "diameter_m")
MIN_POINTS = 4


@dataclass(frozen=True)
class MeasurementSeries:
    """Diameter measurements of one experiment.

    Positions and diameters are SI (meters) unless ``dimensionless`` is set;
    ``to_dimensionless`` rescales by the configured references. Metadata is
    free-form (stencil velocity and take-up pressure labels end up here).
    """

    experiment: str
    s: np.ndarray
    d: np.ndarray
    dimensionless: bool = False
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        s = np.asarray(self.s, dtype=float)
        d = np.asarray(self.d, dtype=float)
        object.__setattr__(self, "s", s)
        object.__setattr__(self, "d", d)
        if s.shape != d.shape or s.ndim != 1:
            raise ValueError(f"series {self.experiment}: positions and diameters "
                             "must be matching 1-d arrays")
        if self.n_m < MIN_POINTS:
            raise ValueError(f"series {self.experiment}: needs at least "
                             f"{MIN_POINTS} measurements, got {self.n_m}")
        if np.any(np.diff(s) <= 0.0):
            raise ValueError(f"series {self.experiment}: positions must be "
                             "strictly increasing (duplicates not allowed)")
        if s[0] < 0.0:
            raise ValueError(f"series {self.experiment}: negative position")
        if np.any(d <= 0.0) or not np.all(np.isfinite(d)):
            raise ValueError(f"series {self.experiment}: diameters must be "
                             "positive and finite")

    @property
    def n_m(self) -> int:
        return self.s.size

    def to_dimensionless(self, refs) -> "MeasurementSeries":
        if self.dimensionless:
            return self
        from .nondim import derive_references

        derived = derive_references(refs)
        return replace(self, s=self.s / refs.L0, d=self.d / derived.d0,
                       dimensionless=True)


def load_measurements(path, refs=None):
    """Read a measurement CSV (header experiment,position_m,diameter_m).

    Returns one MeasurementSeries per experiment id, in order of first
    appearance. With ``refs`` given the series are nondimensionalized.
    Malformed rows report their line number.
    """
    groups: dict[str, list] = {}
    try:
        handle_ctx = open(path, newline="")
    except OSError as exc:
        raise ConfigError(f"cannot read measurement file {path}: {exc}")
    with handle_ctx as handle:
        reader = csv.reader(handle)
        try:
            header = next(reader)
        except StopIteration:
            raise ConfigError(f"{path}: empty measurement file")
        if tuple(h.strip() for h in header) != CSV_HEADER:
            raise ConfigError(
                f"{path}: expected header {','.join(CSV_HEADER)}, "
                f"got {','.join(header)}"
            )
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != 3:
                raise ConfigError(f"{path}:{lineno}: expected 3 columns, got {len(row)}")
            name = row[0].strip()
            try:
                s_val = float(row[1])
                d_val = float(row[2])
            except ValueError:
                raise ConfigError(f"{path}:{lineno}: non-numeric position/diameter")
            groups.setdefault(name, []).append((lineno, s_val, d_val))

    series_list = []
    for name, rows in groups.items():
        try:
            series = MeasurementSeries(
                experiment=name,
                s=np.array([r[1] for r in rows]),
                d=np.array([r[2] for r in rows]),
            )
        except ValueError as exc:
            first = rows[0][0]
            raise ConfigError(f"{path} (series starting line {first}): {exc}")
        series_list.append(series.to_dimensionless(refs) if refs is not None
                           else series)
    if not series_list:
        raise ConfigError(f"{path}: no measurement rows")
    return series_list


def save_measurements(series_list, path):
    """Write SI measurement series in the canonical CSV schema."""
    with open(path, "w", newline="") as handle:
        writer = csv.writer(handle)
        writer.writerow(CSV_HEADER)
        for series in series_list:
            if series.dimensionless:
                raise ValueError("save_measurements expects SI series")
            for s_val, d_val in zip(series.s, series.d):
                writer.writerow([series.experiment, repr(float(s_val)),
                                 repr(float(d_val))])


@dataclass(frozen=True)
class AnsatzFit:
    """Fitted parameters of the velocity ansatz; all strictly positive.

    u_f(0) = u0 by construction; v is the asymptotic (take-up) velocity
    level; b and c shape the transition.
    """

    b: float
    c: float
    v: float
    u0: float
    objective: float = np.nan
    grad_norm: float = np.nan

    def __post_init__(self):
        for name in ("b", "c", "v", "u0"):
            if not getattr(self, name) > 0.0:
                raise ValueError(f"ansatz parameter {name} must be positive")


def u_f(s, b, c, v, u0):
    """Velocity ansatz, overflow-safe form u0 v/(u0 + (v - u0) exp(-X)) with
    X = (s/c)^b; smooth in (b, c, v) for complex-step differentiation."""
    s = np.asarray(s, dtype=float)
    scalar = s.ndim == 0
    s1 = np.atleast_1d(s)
    x = np.zeros(s1.shape, dtype=np.result_type(b, c, v, float))
    pos = s1 > 0.0
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        # extreme (b, c) trial points overflow; callers check finiteness
        x[pos] = np.power(s1[pos] / c, b)
        out = u0 * v / (u0 + (v - u0) * np.exp(-x))
    return out[0] if scalar else out


def d_fit(fit: AnsatzFit, s):
    """Smoothed diameter 1/sqrt(u_f)."""
    return 1.0 / np.sqrt(u_f(s, fit.b, fit.c, fit.v, fit.u0))


def fit_ansatz(series: MeasurementSeries, length: float | None = None,
               gtol_rel: float = 1e-8, max_iterations: int = 200) -> AnsatzFit:
    """Fit (b, c, v) of the ansatz to a dimensionless series.

    u0 is pinned to the nozzle-nearest diameter; the objective is the
    relative-velocity mismatch sum_i (u_f(s_i) d_i^2 - 1)^2, minimized by
    Levenberg-Marquardt in log-parameters (keeps b, c, v positive; raw
    Gauss-Newton steps overshoot badly from the flat start). The returned
    fit satisfies ||grad|| <= gtol_rel*(1 + objective).
    """
    if not series.dimensionless:
        raise ValueError("fit_ansatz expects a dimensionless series")
    s = series.s
    d2 = series.d**2
    u0 = 1.0 / d2[0]
    span = length if length is not None else float(s[-1])

    def residual(theta):
        b, c, v = np.exp(theta)
        with np.errstate(over="ignore", invalid="ignore"):
            r = u_f(s, b, c, v, u0) * d2 - 1.0
        bad = ~np.isfinite(np.real(r))
        if np.any(bad):
            # overflowed trial point: finite but hopeless, LM backs off
            r = np.where(bad, 1e6, r)
        return r

    def jacobian(theta):
        return complex_step_jacobian(residual, theta)

    theta0 = np.log(np.array([1.0, 0.5 * span, 1.0 / d2[-1]]))
    result = optimize.least_squares(
        lambda th: np.real(residual(th)), theta0, jac=jacobian, method="lm",
        xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_iterations * 10)

    # polish: the library solver stops on step size; the optimality contract
    # is on the gradient, so take damped Gauss-Newton steps until it holds
    theta = result.x
    r = np.real(residual(theta))
    obj = float(r @ r)
    jac = jacobian(theta)
    grad = 2.0 * jac.T @ r
    grad_norm = float(np.abs(grad).max())
    lm = 1e-10
    for _ in range(max_iterations):
        if grad_norm <= gtol_rel * (1.0 + obj):
            b, c, v = np.exp(theta)
            return AnsatzFit(b=b, c=c, v=v, u0=u0, objective=obj,
                             grad_norm=grad_norm)
        hess = jac.T @ jac
        scale = np.maximum(np.diag(hess), 1e-12)
        moved = False
        for _ in range(60):
            step = np.linalg.solve(hess + lm * np.diag(scale), -0.5 * grad)
            r_try = np.real(residual(theta + step))
            obj_try = float(r_try @ r_try)
            jac_try = jacobian(theta + step)
            grad_try = 2.0 * jac_try.T @ r_try
            if np.isfinite(obj_try) and (
                    float(np.abs(grad_try).max()) < grad_norm
                    or obj_try < obj):
                theta, r, obj = theta + step, r_try, obj_try
                jac, grad = jac_try, grad_try
                grad_norm = float(np.abs(grad).max())
                lm = max(lm / 10.0, 1e-14)
                moved = True
                break
            lm *= 10.0
        if not moved:
            break
    raise FitDiverged(
        f"ansatz fit for series {series.experiment} stopped away from "
        f"optimality (objective {obj:.3e}, gradient {grad_norm:.3e})",
        iterates=[(tuple(np.exp(theta)), obj)])


def synthesize(setup: spinmodel.ModelSetup, p_true, noise_rel: float, seed: int,
               n_points: int = 25,
               continuation: ContinuationSettings | None = None):
    """Generate SI measurement series from forward solves at p_true.

    Each experiment's diameter profile is sampled at n_points uniform
    positions and perturbed multiplicatively by (1 + noise_rel*xi) with xi
    standard normal from a seeded generator. Returns (series list, manifest
    dict) where the manifest records the ground truth for reproducibility.
    """
    rng = np.random.default_rng(seed)
    continuation = continuation or ContinuationSettings(
        dc0=setup.dc0, dc_min=setup.dc_min)
    solve_kwargs = {"tol": setup.solver.tol, "max_nodes": setup.solver.max_nodes,
                    "newton_tol": setup.solver.newton_tol}
    refs = setup.references
    series_list = []
    for exp in setup.experiments:
        family = spinmodel.continuation_family(setup, exp, p_true)
        guess = spinmodel.auxiliary_guess(setup.context(exp, p_true, 0.0))
        sol, _ = solve_with_fallback(family, guess, continuation, solve_kwargs)
        s_grid = np.linspace(0.0, exp.L, n_points)
        y_grid, _ = bvp_evaluate(sol, s_grid)
        d_grid = spinmodel.diameter(y_grid[0], y_grid[2], setup.material, exp.Q)
        noise = 1.0 + noise_rel * rng.standard_normal(n_points)
        series_list.append(MeasurementSeries(
            experiment=exp.name,
            s=s_grid * refs.L0,
            d=np.real(d_grid) * noise * setup.derived.d0,
            metadata={"noise_rel": noise_rel},
        ))
    manifest = {
        "p_true": {"n": float(np.real(p_true.n)),
                   "kappa": float(np.real(p_true.kappa))},
        "noise_rel": noise_rel,
        "seed": seed,
        "n_points": n_points,
        "experiments": [exp.name for exp in setup.experiments],
        "created": datetime.datetime.now(datetime.timezone.utc).isoformat(),
    }
    return series_list, manifest


def write_manifest(manifest: dict, path):
    with open(path, "w") as handle:
        json.dump(manifest, handle, indent=2, sort_keys=True)
        handle.write("\n")


def read_manifest(path) -> dict:
    with open(path) as handle:
        return json.load(handle)
