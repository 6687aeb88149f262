"""Acceptance suite: ten criteria, one test (and one pass/fail line) each.

Criteria 7/8 share a six-experiment synthetic dataset generated at
p_true = (0.8, 11.71) with 1% multiplicative noise; criteria 5/6 run on the
lighter three-experiment set. The headline parameters of the original
measurement campaign are not recoverable (the dataset is unpublished), so
recovery is demonstrated on synthetic data instead.
"""
from __future__ import annotations

import numpy as np
import pytest

from conftest import P_TRUE
from spinid import bvp
from spinid.continuation import adapter, solve_with_fallback
from spinid.errors import SolverError
from spinid.ident import IdentificationProblem, identify
from spinid.material import (CarreauParams, MaterialConstants, cp, mu_e,
                             mu_e_with_partials, mu_s0)
from spinid.material import rho as rho_law
from spinid.nondim import ReferenceValues, compute_groups, derive_references
from spinid.spinmodel import (area, auxiliary_guess, auxiliary_state, bc,
                              continuation_family, diameter, rhs)

DE = 82.48617647058822


@pytest.fixture(scope="module")
def recovery(dataset6):
    """Heuristic-started identification on the six-experiment dataset."""
    *_, problem = dataset6
    return identify(problem)


@pytest.fixture(scope="module")
def multistart(dataset6):
    """Six identification runs from starts spanning the parameter box."""
    *_, problem = dataset6
    starts = [(0.2, 9.0), (0.35, 9.5), (0.6, 10.5),
              (0.7, 9.21), (0.9, 13.0), (1.0, 16.0)]
    results = []
    for n0, k0 in starts:
        try:
            results.append(((n0, k0), identify(
                problem, start=CarreauParams(n0, k0))))
        except SolverError:
            results.append(((n0, k0), None))
    return results


def report(num, detail):
    print(f"criterion {num:02d}: PASS - {detail}")


def test_criterion_01_table_consistency():
    mat = MaterialConstants()
    t = 513.15
    values = {
        "mu_s0": (mu_s0(mat, t), 1.4865e3),
        "rho": (rho_law(mat, t), 1.077e3),
        "cp": (cp(mat, t), 2.2903e3),
    }
    for name, (got, expect) in values.items():
        assert abs(got - expect) <= 1e-3 * expect, name
    report(1, "mu_s0/rho/cp at 513.15 K within 0.1% of the references")


def test_criterion_02_dimensionless_groups():
    refs = ReferenceValues()
    groups = compute_groups(refs, derive_references(refs))
    targets = {"re": 1.046e-2, "fr": 1.265e-2, "st": 9.27e-2, "de": 82.5}
    for name, expect in targets.items():
        got = getattr(groups, name)
        assert abs(got - expect) <= 5e-3 * expect, (name, got)
    report(2, f"Re={groups.re:.4e} Fr={groups.fr:.4e} "
              f"St={groups.st:.4e} De={groups.de:.4f}, all within 0.5%")


def test_criterion_03_solver_order():
    def rhs_m(s, y):
        return np.vstack([y[1], -y[0]])

    def bc_m(ya, yb):
        return np.array([ya[0], yb[0] - 1.0])

    errors = []
    for n in (5, 9, 17, 33):
        mesh = np.linspace(0.0, np.pi / 2.0, n)
        sol = bvp.solve(rhs_m, bc_m, (mesh, np.vstack([mesh, np.ones(n)])),
                        tol=None)
        s = np.linspace(0.0, np.pi / 2.0, 1001)
        y, _ = bvp.evaluate(sol, s)
        errors.append(float(np.max(np.abs(np.real(y[0]) - np.sin(s)))))
        ya, _ = bvp.evaluate(sol, np.array([0.0]))
        yb, _ = bvp.evaluate(sol, np.array([np.pi / 2.0]))
        assert np.max(np.abs(bc_m(ya[:, 0], yb[:, 0]))) <= 1e-10
    orders = np.log2(np.array(errors[:-1]) / np.array(errors[1:]))
    assert np.all((orders >= 3.5) & (orders <= 4.5)), orders
    report(3, f"orders over three halvings: {np.round(orders, 3).tolist()}")


def test_criterion_04_auxiliary_exactness(setup6):
    rng = np.random.default_rng(42)
    exp = setup6.experiment("d055")
    s = np.linspace(0.0, exp.L, 9)
    worst = 0.0
    for _ in range(20):
        p = CarreauParams(rng.uniform(0.0, 1.0), rng.uniform(7.0, 20.0))
        ctx = setup6.context(exp, p, 0.0)
        state = auxiliary_state(ctx)
        y = np.tile([state.u, state.N, state.T, state.epsdot], (s.size, 1)).T
        f_inf = float(np.max(np.abs(rhs(s, y, ctx))))
        g_inf = float(np.max(np.abs(bc(y[:, 0], y[:, -1], ctx))))
        worst = max(worst, f_inf, g_inf)
        assert f_inf <= 1e-13 and g_inf <= 1e-13
    report(4, f"20 random p: max |rhs|, |bc| at c=0 is {worst:.2e}")


def test_criterion_05_derivative_fidelity(setup3, dataset3):
    # (a) complex-step rhs/bc state jacobians vs central differences
    p = CarreauParams(0.65, 11.2)
    exp = setup3.experiment("d010")
    ctx = setup3.context(exp, p, 1.0)
    y0 = np.array([3.0, 0.4, 0.93, 2.5])
    s0 = np.array([0.4])
    h, eps = 1e-30, 1e-6

    def cs_and_fd(func, base):
        cs = np.empty((func(base.astype(complex)).size, base.size))
        fd = np.empty_like(cs)
        for j in range(base.size):
            zc = base.astype(complex)
            zc[j] += 1j * h
            cs[:, j] = np.imag(func(zc)) / h
            zp, zm = base.copy(), base.copy()
            zp[j] += eps
            zm[j] -= eps
            fd[:, j] = np.real(func(zp.astype(complex))
                               - func(zm.astype(complex))) / (2 * eps)
        return cs, fd

    cs, fd = cs_and_fd(lambda y: rhs(s0, y.reshape(4, 1), ctx).ravel(), y0)
    rhs_err = np.max(np.abs(cs - fd)) / np.max(np.abs(cs))
    assert rhs_err <= 1e-6

    yb = np.array([10.0, 0.3, 0.8, 5.0])
    cs_b, fd_b = cs_and_fd(lambda z: bc(z[:4], z[4:], ctx), np.concatenate([y0, yb]))
    bc_err = np.max(np.abs(cs_b - fd_b)) / max(1.0, np.max(np.abs(cs_b)))
    assert bc_err <= 1e-6

    # (b) analytic viscosity partials vs complex step
    mat = MaterialConstants()
    val, d_t, d_e = mu_e_with_partials(mat, 490.0, 40.0, p, de=DE)
    cs_t = np.imag(mu_e(mat, 490.0 + 1j * h, 40.0, p, de=DE)) / h
    cs_e = np.imag(mu_e(mat, 490.0, 40.0 + 1j * h, p, de=DE)) / h
    mu_err = max(abs(d_t - cs_t) / abs(cs_t), abs(d_e - cs_e) / abs(cs_e))
    assert mu_err <= 1e-12

    # (c) implicit-function gradient of J vs central differences of J,
    # on a frozen mesh so the finite differences see a smooth objective
    _, _, cases, problem = dataset3
    p0 = CarreauParams(0.82, 11.5)
    _, warm = problem.cost(p0)
    fixed = IdentificationProblem(setup3, cases,
                                  solve_kwargs={"tol": None,
                                                "newton_tol": 1e-12})
    _, sols0 = fixed.cost(p0, warm=warm)
    grad, _, _ = fixed.gradient_and_gn_hessian(p0, sols0)
    delta = 1e-6
    fd_grad = np.empty(2)
    for j, (dn, dk) in enumerate(((delta, 0.0), (0.0, delta))):
        c_p, _ = fixed.cost(CarreauParams(p0.n + dn, p0.kappa + dk), warm=sols0)
        c_m, _ = fixed.cost(CarreauParams(p0.n - dn, p0.kappa - dk), warm=sols0)
        fd_grad[j] = (c_p - c_m) / (2.0 * delta)
    grad_err = float(np.max(np.abs(grad - fd_grad) / np.abs(grad)))
    assert grad_err <= 1e-4
    report(5, f"rhs {rhs_err:.1e}, bc {bc_err:.1e}, mu_e {mu_err:.1e}, "
              f"grad J {grad_err:.1e}")


def test_criterion_06_newtonian_plateau(dataset3):
    *_, problem = dataset3
    costs = []
    for kappa in (7.0, 10.0, 15.0, 20.0):
        cost_val, _ = problem.cost(CarreauParams(1.0, kappa))
        costs.append(cost_val)
    assert costs[0] == costs[1] == costs[2] == costs[3], costs

    p = CarreauParams(1.0, 15.0)
    _, sols = problem.cost(p)
    grad, _, _ = problem.gradient_and_gn_hessian(p, sols)
    assert abs(grad[1]) <= 1e-12
    report(6, f"J(1, kappa) = {costs[0]!r} bitwise for four kappa; "
              f"dJ/dkappa = {grad[1]:.2e}")


def test_criterion_07_parameter_recovery(recovery):
    result = recovery
    assert result.converged, result.status
    assert result.iterations <= 30
    n_err = abs(float(result.p_opt.n) - P_TRUE.n)
    k_err = abs(float(result.p_opt.kappa) - P_TRUE.kappa)
    assert n_err <= 0.05
    assert k_err <= 0.3
    report(7, f"heuristic start -> ({float(result.p_opt.n):.5f}, "
              f"{float(result.p_opt.kappa):.5f}) in {result.iterations} "
              f"iterations; errors ({n_err:.4f}, {k_err:.4f})")


def test_criterion_08_multi_start_consistency(multistart):
    converged = [(s, r) for s, r in multistart
                 if r is not None and r.converged]
    assert len(converged) >= 2
    points = np.array([[float(r.p_opt.n), float(r.p_opt.kappa)]
                       for _, r in converged])
    spread = np.ptp(points, axis=0)
    assert spread[0] <= 1e-2, points
    assert spread[1] <= 1e-2, points
    report(8, f"{len(converged)}/6 starts converged, agreeing to "
              f"(dn, dkappa) = ({spread[0]:.2e}, {spread[1]:.2e})")


def test_criterion_09_continuation_robustness(setup6):
    exp = setup6.experiment("d110")
    family = continuation_family(setup6, exp, P_TRUE)
    guess = auxiliary_guess(setup6.context(exp, P_TRUE, 0.0))
    kw = {"tol": setup6.solver.tol, "max_nodes": setup6.solver.max_nodes,
          "newton_tol": setup6.solver.newton_tol}

    f1, g1 = family(1.0)
    with pytest.raises(SolverError):
        bvp.solve(f1, g1, guess, **kw)

    sol, trace = adapter(family, guess, solve_kwargs=kw)
    path = trace.accepted_path()
    assert all(b > a for a, b in zip([0.0] + path, path))
    assert path[-1] == 1.0
    for rec in trace.steps:
        if rec.accepted:
            factor = (1.5 if rec.cost_half1 + rec.cost_half2 > rec.cost_full
                      else 2.0 / 3.0)
            assert rec.dc_next == factor * rec.dc
        else:
            assert rec.dc_next == rec.dc / 2.0
    for prev, nxt in zip(trace.steps, trace.steps[1:]):
        assert nxt.dc == min(prev.dc_next, 1.0 - prev.c_next)
    report(9, f"direct solve diverges; adapter path {np.round(path, 4).tolist()}")


def test_criterion_10_physical_invariants(setup6, dataset6, recovery):
    *_, problem = dataset6
    solutions = dict(problem.solve_all(recovery.p_opt))

    exp110 = setup6.experiment("d110")
    family = continuation_family(setup6, exp110, P_TRUE)
    guess = auxiliary_guess(setup6.context(exp110, P_TRUE, 0.0))
    sol110, _ = solve_with_fallback(family, guess, solve_kwargs={
        "tol": 1e-6, "max_nodes": 5000, "newton_tol": 1e-10})
    checks = [(case.experiment, solutions[case.name])
              for case in problem.cases] + [(exp110, sol110)]

    mat = setup6.material
    for exp, sol in checks:
        s = np.linspace(0.0, exp.L, 400)
        y, _ = bvp.evaluate(sol, s)
        u, _, t, epsdot = (np.real(c) for c in y)
        d = np.real(diameter(u, t, mat, exp.Q))
        assert np.all(np.diff(d) < 0.0), exp.name
        assert np.all(epsdot >= -1e-10), exp.name
        assert np.all(np.diff(t) <= 0.0), exp.name  # T_air < T_in here
        a = area(u, rho_law(mat, t), exp.Q)
        mass_err = np.max(np.abs(rho_law(mat, t) * a * u - exp.Q)) / exp.Q
        assert mass_err <= 5e-16, exp.name
    report(10, f"{len(checks)} converged solutions: d strictly decreasing, "
               f"rho A u = Q to machine rounding, epsdot >= -1e-10, "
               f"T non-increasing")
