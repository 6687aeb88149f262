"""Parameter identification from fitted diameter profiles.

The cost is a strain-rate- and quadrature-weighted least-squares mismatch
between simulated and smoothed measured diameters on a per-experiment
optimization grid:

    J(p) = sum_k sum_i  Delta_i max(epsdot(s_i), 0) (d(s_i) - d_fit(s_i))^2.

State sensitivities come from the implicit function theorem on the collocation
system, S(Y; p) = 0  =>  D_p Y = -(d_y S)^{-1} d_p S, with d_p S by complex
step and the factorization of d_y S reused from the solve. The residual
Jacobian then follows by a joint complex step through the interpolant, which
realizes the analytic chain rule D_y F D_p Y + d_p F to machine precision.

The optimizer is a box-constrained trust-region Gauss-Newton method with the
two-dimensional subproblem solved exactly, plus the Newtonian-plateau
starting-point heuristic and a cost-surface scan.
"""
from __future__ import annotations

import os
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np
from scipy.optimize import brentq

from . import bvp, spinmodel
from .continuation import ContinuationSettings, solve_with_fallback
from .data import AnsatzFit, d_fit, fit_ansatz
from .errors import SolverError
from .material import KAPPA_BOUNDS, N_BOUNDS, CarreauParams

_BOUNDS_LO = np.array([N_BOUNDS[0], KAPPA_BOUNDS[0]])
_BOUNDS_HI = np.array([N_BOUNDS[1], KAPPA_BOUNDS[1]])


@dataclass(frozen=True)
class CostGrid:
    """Optimization nodes s_1 < ... < s_no and quadrature widths
    Delta_i = s_i - s_{i-1} (s_0 = 0)."""

    nodes: np.ndarray
    widths: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        widths = np.asarray(self.widths, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        object.__setattr__(self, "widths", widths)
        if np.any(np.diff(nodes) <= 0.0) or nodes[0] <= 0.0:
            raise ValueError("grid nodes must be strictly increasing and positive")
        if widths.shape != nodes.shape or np.any(widths <= 0.0):
            raise ValueError("quadrature widths must be positive, one per node")

    @classmethod
    def uniform(cls, length: float, n_o: int = 20) -> "CostGrid":
        nodes = length * np.arange(1, n_o + 1) / n_o
        return cls(nodes=nodes, widths=np.full(n_o, length / n_o))


@dataclass(frozen=True)
class TrustRegionSettings:
    """Bounded trust-region Gauss-Newton knobs.

    The radius cap doubles as the warm-start validity bound: accepted steps
    never exceed it, so the previous iterate's solutions stay good guesses.
    """

    initial_radius: float = 0.1
    max_radius: float = 0.5
    gtol: float = 1e-8
    steptol: float = 1e-10
    max_iterations: int = 50

    def __post_init__(self):
        if not 0.0 < self.initial_radius <= self.max_radius:
            raise ValueError("need 0 < initial_radius <= max_radius")


@dataclass(frozen=True)
class HeuristicSettings:
    """Starting-point heuristic: sweep kappa down from the Newtonian plateau."""

    n_init: float = 0.5
    kappa_l: float = 7.0
    kappa_u: float = 20.0
    rel_dif: float = 0.1
    kappa_step: float = 1.0

    def __post_init__(self):
        if not self.kappa_l < self.kappa_u:
            raise ValueError("need kappa_l < kappa_u")
        if not 0.0 < self.n_init < 1.0:
            raise ValueError("need 0 < n_init < 1")


@dataclass(frozen=True)
class ExperimentCase:
    """One experiment prepared for identification.

    The outlet condition is the smoothed measured diameter at the take-up
    point, d_out = d_fit(L); the raw last measurement is never used directly.
    """

    name: str
    experiment: object
    fit: AnsatzFit
    grid: CostGrid
    d_fit_grid: np.ndarray


def build_cases(setup: spinmodel.ModelSetup, series_list, n_o: int = 20):
    """Fit the ansatz to each dimensionless series and prepare its case."""
    cases = []
    for series in series_list:
        exp = setup.experiment(series.experiment)
        fit = fit_ansatz(series, length=exp.L)
        exp_ident = replace(exp, d_out=float(np.real(d_fit(fit, exp.L))), u_out=None)
        grid = CostGrid.uniform(exp.L, n_o)
        cases.append(ExperimentCase(
            name=series.experiment, experiment=exp_ident, fit=fit, grid=grid,
            d_fit_grid=np.asarray(np.real(d_fit(fit, grid.nodes)), dtype=float),
        ))
    return cases


def _positive_part(x):
    """max(x, 0) that passes complex perturbations through on the positive
    branch (the weight clamp for transient negative strain rates)."""
    return np.where(np.real(x) > 0.0, x, 0.0 * x)


class IdentificationProblem:
    """Cost, gradient, and Gauss-Newton machinery over a set of experiments.

    Stateless between calls: warm-start solutions are passed in and returned
    explicitly, which keeps every evaluation deterministic.
    """

    def __init__(self, setup: spinmodel.ModelSetup, cases,
                 continuation: ContinuationSettings | None = None,
                 solve_kwargs: dict | None = None, threads: int = 1,
                 h_step: float = 1e-30):
        self.setup = setup
        self.cases = list(cases)
        self.continuation = continuation or ContinuationSettings(
            dc0=setup.dc0, dc_min=setup.dc_min)
        self.solve_kwargs = solve_kwargs if solve_kwargs is not None else {
            "tol": setup.solver.tol,
            "max_nodes": setup.solver.max_nodes,
            "newton_tol": setup.solver.newton_tol,
        }
        self.threads = threads
        self.h_step = h_step
        self.n_solves = 0

    # -- forward solves ----------------------------------------------------

    def _case_rhs_bc(self, case: ExperimentCase, p: CarreauParams, c: float = 1.0):
        ctx = self.setup.context(case.experiment, p, c)
        return (lambda s, y: spinmodel.rhs(s, y, ctx)),\
               (lambda ya, yb: spinmodel.bc(ya, yb, ctx))

    def solve_case(self, case: ExperimentCase, p: CarreauParams, warm=None):
        """One BVP at c = 1. Warm starts solve directly (failure propagates,
        the optimizer treats it as a rejected step); cold starts fall back to
        continuation."""
        self.n_solves += 1
        if warm is not None:
            rhs_fn, bc_fn = self._case_rhs_bc(case, p)
            return bvp.solve(rhs_fn, bc_fn, warm, **self.solve_kwargs)
        family = spinmodel.continuation_family(self.setup, case.experiment, p)
        guess = spinmodel.auxiliary_guess(self.setup.context(case.experiment, p, 0.0))
        sol, _ = solve_with_fallback(family, guess, self.continuation,
                                     self.solve_kwargs)
        return sol

    def solve_all(self, p: CarreauParams, warm: dict | None = None) -> dict:
        warm = warm or {}
        if self.threads > 1:
            with ThreadPoolExecutor(max_workers=self.threads) as pool:
                futures = {
                    case.name: pool.submit(self.solve_case, case, p, warm.get(case.name))
                    for case in self.cases
                }
                return {name: fut.result() for name, fut in futures.items()}
        return {case.name: self.solve_case(case, p, warm.get(case.name))
                for case in self.cases}

    # -- residual and cost ---------------------------------------------------

    def case_residual(self, case: ExperimentCase, sol, p: CarreauParams, z=None):
        """Weighted residual of one experiment, rebuilt from node values z
        through the interpolant so it is differentiable in (z, p) jointly."""
        ctx = self.setup.context(case.experiment, p, 1.0)
        rhs_fn = lambda s, y: spinmodel.rhs(s, y, ctx)
        virtual = bvp.virtual_solution(sol.mesh, sol.y if z is None else z, rhs_fn)
        y_g, _ = bvp.evaluate(virtual, case.grid.nodes)
        d_sim = spinmodel.diameter(y_g[0], y_g[2], self.setup.material,
                                   case.experiment.Q)
        weight = np.sqrt(case.grid.widths * _positive_part(y_g[3]))
        return weight * (d_sim - case.d_fit_grid)

    def residual_vector(self, p: CarreauParams, solutions: dict) -> np.ndarray:
        """Stacked weighted residual F(p); J(p) = ||F||^2."""
        parts = [self.case_residual(case, solutions[case.name], p)
                 for case in self.cases]
        return np.concatenate([np.asarray(np.real(part), dtype=float)
                               for part in parts])

    def cost(self, p: CarreauParams, warm: dict | None = None):
        solutions = self.solve_all(p, warm)
        f_vec = self.residual_vector(p, solutions)
        return float(f_vec @ f_vec), solutions

    # -- derivatives ---------------------------------------------------------

    def _perturbed(self, p: CarreauParams, j: int) -> CarreauParams:
        dn = 1j * self.h_step if j == 0 else 0.0
        dk = 1j * self.h_step if j == 1 else 0.0
        return CarreauParams(n=p.n + dn, kappa=p.kappa + dk)

    def sensitivity(self, p: CarreauParams, solutions: dict) -> dict:
        """D_p Y per experiment: solve (d_y S) D_p Y = -d_p S on the
        collocation unknowns, reusing one factorization per experiment."""
        out = {}
        for case in self.cases:
            sol = solutions[case.name]
            rhs_fn, bc_fn = self._case_rhs_bc(case, p)
            lu = bvp.system_jacobian(sol, rhs_fn, bc_fn, self.h_step).factorize()
            dps = np.empty((sol.y.size, 2))
            for j in range(2):
                rhs_c, bc_c = self._case_rhs_bc(case, self._perturbed(p, j))
                res_c = bvp.system_residual(sol.mesh, sol.y.astype(complex),
                                            rhs_c, bc_c)
                dps[:, j] = np.imag(res_c) / self.h_step
            out[case.name] = lu.solve(-dps)
        return out

    def gradient_and_gn_hessian(self, p: CarreauParams, solutions: dict):
        """(grad J, H_GN, F): grad J = 2 (D F)^T F, H_GN = 2 (D F)^T (D F).

        Each residual derivative column is one joint complex step through
        (Y + i h D_p Y e_j, p + i h e_j), which carries the chain rule through
        the interpolant, the diameter map, and the strain-rate weight.
        """
        sens = self.sensitivity(p, solutions)
        f_vec = self.residual_vector(p, solutions)
        jac = np.empty((f_vec.size, 2))
        for j in range(2):
            p_c = self._perturbed(p, j)
            cols = []
            for case in self.cases:
                sol = solutions[case.name]
                dz = sens[case.name][:, j].reshape(sol.mesh.n, sol.dim).T
                z_c = sol.y + 1j * self.h_step * dz
                cols.append(np.imag(self.case_residual(case, sol, p_c, z=z_c))
                            / self.h_step)
            jac[:, j] = np.concatenate(cols)
        grad = 2.0 * jac.T @ f_vec
        hess = 2.0 * jac.T @ jac
        return grad, hess, f_vec


# -- trust region ------------------------------------------------------------


def trust_region_step(grad: np.ndarray, hess: np.ndarray, radius: float) -> np.ndarray:
    """Exact minimizer of g^T d + 1/2 d^T H d over ||d|| <= radius.

    Eigendecomposition plus the secular equation on the boundary; handles the
    hard case (gradient orthogonal to the lowest eigenvector) explicitly.
    """
    w, vecs = np.linalg.eigh(hess)
    gb = vecs.T @ grad
    if w[0] > 0.0:
        d_newton = -(gb / w)
        if np.linalg.norm(d_newton) <= radius:
            return vecs @ d_newton
    lam0 = max(0.0, -w[0])

    def boundary_step(lam):
        denom = w + lam
        comp = np.zeros_like(gb)
        ok = denom > 0.0
        comp[ok] = -gb[ok] / denom[ok]
        return comp

    floor = np.finfo(float).eps * max(1.0, abs(w[-1]))
    limit = boundary_step(lam0 + floor)
    flat = np.abs(w + lam0) <= floor
    if np.linalg.norm(limit) < radius and (not flat.any() or
                                           np.all(np.abs(gb[flat]) <= floor * max(1.0, np.abs(gb).max()))):
        # hard case: pad with the lowest eigendirection up to the boundary
        d = boundary_step(lam0)
        gap = radius**2 - float(d @ d)
        d[0] += np.sqrt(max(gap, 0.0))
        return vecs @ d

    def excess(lam):
        return np.linalg.norm(boundary_step(lam)) - radius

    hi = lam0 + floor + np.linalg.norm(gb) / radius
    while excess(hi) > 0.0:
        hi = 2.0 * hi + 1.0
    lam = brentq(excess, lam0 + floor, hi, xtol=1e-15, rtol=1e-14)
    return vecs @ boundary_step(lam)


def _project(p_arr: np.ndarray) -> np.ndarray:
    return np.clip(p_arr, _BOUNDS_LO, _BOUNDS_HI)


def _criticality(p_arr: np.ndarray, grad: np.ndarray) -> float:
    """Infinity norm of the projected gradient step P(p - g) - p."""
    return float(np.abs(_project(p_arr - grad) - p_arr).max())


@dataclass(frozen=True)
class IterateRecord:
    iteration: int
    n: float
    kappa: float
    cost: float
    grad_norm: float
    radius: float
    step_norm: float
    accepted: bool
    wall_time: float


@dataclass
class IdentResult:
    p_opt: CarreauParams
    cost: float
    converged: bool
    status: str
    iterates: list = field(default_factory=list)
    n_solves: int = 0

    @property
    def iterations(self) -> int:
        return len(self.iterates)


def identify(problem: IdentificationProblem, start: CarreauParams | None = None,
             settings: TrustRegionSettings | None = None,
             heuristic: HeuristicSettings | None = None) -> IdentResult:
    """Box-constrained trust-region Gauss-Newton over (n, kappa).

    Without an explicit start the Newtonian-plateau heuristic chooses one.
    Every BVP is warm-started from the last accepted iterate; a failed trial
    solve rejects the step and shrinks the radius.
    """
    settings = settings or TrustRegionSettings()
    if start is None:
        start, _ = start_heuristic(problem, heuristic)

    t0 = time.perf_counter()
    records: list[IterateRecord] = []
    p = start
    cost_val, solutions = problem.cost(p)
    grad, hess, _ = problem.gradient_and_gn_hessian(p, solutions)
    radius = settings.initial_radius
    converged = False
    status = "iteration cap reached"

    for iteration in range(1, settings.max_iterations + 1):
        p_arr = p.as_array()
        crit = _criticality(p_arr, grad)
        if crit <= settings.gtol:
            converged, status = True, "gradient tolerance reached"
            break
        step = trust_region_step(grad, hess, radius)
        p_trial_arr = _project(p_arr + step)
        step = p_trial_arr - p_arr
        step_norm = float(np.linalg.norm(step))
        if step_norm <= settings.steptol:
            converged, status = True, "step tolerance reached"
            break
        predicted = -(grad @ step + 0.5 * step @ hess @ step)
        accepted = False
        if predicted > 0.0:
            p_trial = CarreauParams(*p_trial_arr)
            try:
                trial_solutions = problem.solve_all(p_trial, warm=solutions)
                f_trial = problem.residual_vector(p_trial, trial_solutions)
                cost_trial = float(f_trial @ f_trial)
                ratio = (cost_val - cost_trial) / predicted
            except SolverError:
                ratio = -np.inf
            if ratio > 0.1:
                accepted = True
                p, cost_val, solutions = p_trial, cost_trial, trial_solutions
                grad, hess, _ = problem.gradient_and_gn_hessian(p, solutions)
                if ratio > 0.75:
                    radius = min(2.0 * radius, settings.max_radius)
            else:
                radius *= 0.25
        else:
            radius *= 0.25
        records.append(IterateRecord(
            iteration=iteration, n=float(np.real(p.n)),
            kappa=float(np.real(p.kappa)), cost=cost_val,
            grad_norm=_criticality(p.as_array(), grad), radius=radius,
            step_norm=step_norm, accepted=accepted,
            wall_time=time.perf_counter() - t0,
        ))
        if radius < 1e-14:
            status = "trust region collapsed"
            break

    return IdentResult(p_opt=p, cost=cost_val, converged=converged, status=status,
                       iterates=records, n_solves=problem.n_solves)


def start_heuristic(problem: IdentificationProblem,
                    settings: HeuristicSettings | None = None):
    """Sweep kappa down from kappa_u while the cost stays on the Newtonian
    plateau (relative difference below 1/10); solves are warm-started from
    the Newtonian solutions. Returns (p_init, sweep_completed)."""
    settings = settings or HeuristicSettings()
    kappa = settings.kappa_u
    cost_newton, warm = problem.cost(CarreauParams(1.0, kappa))
    ok = True
    try:
        cost_sweep, warm = problem.cost(CarreauParams(settings.n_init, kappa),
                                        warm=warm)
    except SolverError:
        return CarreauParams(settings.n_init, kappa), False
    rel_dif = abs(cost_newton - cost_sweep) / cost_newton
    while rel_dif < settings.rel_dif and kappa > settings.kappa_l:
        kappa_next = max(settings.kappa_l, kappa - settings.kappa_step)
        try:
            cost_sweep, warm = problem.cost(
                CarreauParams(settings.n_init, kappa_next), warm=warm)
        except SolverError:
            ok = False
            break
        kappa = kappa_next
        rel_dif = abs(cost_newton - cost_sweep) / cost_newton
    return CarreauParams(settings.n_init, kappa), ok


def scan(problem: IdentificationProblem, n_values, kappa_values) -> np.ndarray:
    """Cost surface J on the given grid; unsolvable points become NaN.

    Rows follow n_values, columns kappa_values. Within each row the sweep
    runs from high to low kappa, warm-starting from the last success (the
    plateau side is the easy side).
    """
    n_values = np.asarray(n_values, dtype=float)
    kappa_values = np.asarray(kappa_values, dtype=float)
    order = np.argsort(kappa_values)[::-1]
    grid = np.full((n_values.size, kappa_values.size), np.nan)
    for i, n_val in enumerate(n_values):
        warm = None
        for j in order:
            try:
                cost_val, sols = problem.cost(CarreauParams(n_val, kappa_values[j]),
                                              warm=warm)
            except SolverError:
                continue
            grid[i, j] = cost_val
            warm = sols
    return grid
