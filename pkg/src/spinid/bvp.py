"""Two-point BVP solver: three-stage Lobatto IIIa collocation.

The condensed collocation equations on each interval [s_i, s_{i+1}] of width
h are

    y_{i+1} - y_i - h/6 (f_i + 4 f_mid + f_{i+1}) = 0,
    y_mid = (y_i + y_{i+1})/2 - h/8 (f_{i+1} - f_i),

solved together with the boundary residuals by a damped Newton iteration.
The per-interval cubic interpolant matching these values and slopes is C^1
across nodes and fourth-order accurate. Error control samples the interpolant
residual y' - f(s, y) at Gauss points; intervals above tolerance are halved.

Right-hand sides and boundary functions must be vectorized over points and
evaluable on complex-extended states; all pointwise Jacobian blocks are built
by complex step.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

from .errors import MeshLimitExceeded, ModelDomainError, NewtonDiverged, SingularMatrixError
from .numerics import BlockMatrix

DAMPING_MIN = 2.0**-10
_GAUSS_X, _ = leggauss(5)
_GAUSS_THETA = 0.5 * (_GAUSS_X + 1.0)


@dataclass(frozen=True)
class Mesh:
    """Strictly increasing collocation nodes with positive widths."""

    nodes: np.ndarray

    def __post_init__(self):
        nodes = np.asarray(self.nodes, dtype=float)
        object.__setattr__(self, "nodes", nodes)
        if nodes.ndim != 1 or nodes.size < 3:
            raise ValueError("mesh needs at least 3 nodes")
        if np.any(np.diff(nodes) <= 0.0):
            raise ValueError("mesh nodes must be strictly increasing")

    @property
    def widths(self) -> np.ndarray:
        return np.diff(self.nodes)

    @property
    def n(self) -> int:
        return self.nodes.size


@dataclass
class SolverDiagnostics:
    newton_iterations: int = 0
    rhs_evaluations: int = 0
    max_residual: float = np.nan
    refinements: int = 0


class _Counter:
    __slots__ = ("count",)

    def __init__(self):
        self.count = 0

    def add(self, k: int):
        self.count += k


class CollocationSolution:
    """Mesh, node/midpoint values and slopes, and the C^1 interpolant."""

    def __init__(self, mesh: Mesh, y, f, y_mid, f_mid,
                 diagnostics: SolverDiagnostics | None = None):
        self.mesh = mesh
        self.y = y
        self.f = f
        self.y_mid = y_mid
        self.f_mid = f_mid
        self.diagnostics = diagnostics or SolverDiagnostics()

    @property
    def dim(self) -> int:
        return self.y.shape[0]

    def __call__(self, s):
        return evaluate(self, s)[0]

    def evaluate(self, s):
        return evaluate(self, s)


def _interp_basis(theta):
    """Cubic basis weights (A, B, C) and derivatives for the interpolant

    S(theta) = y_i + h (f_i A + f_mid B + f_{i+1} C); S' is the quadratic
    Lagrange interpolant of the slopes at theta = 0, 1/2, 1.
    """
    t2 = theta * theta
    t3 = t2 * theta
    a = theta - 1.5 * t2 + (2.0 / 3.0) * t3
    b = 2.0 * t2 - (4.0 / 3.0) * t3
    c = (2.0 / 3.0) * t3 - 0.5 * t2
    da = 1.0 - 3.0 * theta + 2.0 * t2
    db = 4.0 * theta - 4.0 * t2
    dc = 2.0 * t2 - theta
    return (a, b, c), (da, db, dc)


def evaluate(sol: CollocationSolution, s):
    """Interpolant values and first derivatives at points s in [s_0, s_end].

    Node points reproduce the stored values bitwise; the derivative at nodes
    is the stored slope f.
    """
    nodes = sol.mesh.nodes
    s_arr = np.asarray(s, dtype=float)
    scalar = s_arr.ndim == 0
    s_arr = np.atleast_1d(s_arr)
    if np.any(s_arr < nodes[0]) or np.any(s_arr > nodes[-1]):
        raise ValueError("evaluation point outside the solution domain")
    idx = np.clip(np.searchsorted(nodes, s_arr, side="right") - 1, 0, nodes.size - 2)
    h = sol.mesh.widths[idx]
    theta = (s_arr - nodes[idx]) / h
    (a, b, c), (da, db, dc) = _interp_basis(theta)
    f0 = sol.f[:, idx]
    fm = sol.f_mid[:, idx]
    f1 = sol.f[:, idx + 1]
    y = sol.y[:, idx] + h * (f0 * a + fm * b + f1 * c)
    dy = f0 * da + fm * db + f1 * dc
    last = s_arr == nodes[-1]
    if np.any(last):
        y[:, last] = sol.y[:, -1][:, None]
        dy[:, last] = sol.f[:, -1][:, None]
    if scalar:
        return y[:, 0], dy[:, 0]
    return y, dy


def _as_guess(guess):
    if isinstance(guess, CollocationSolution):
        return Mesh(guess.mesh.nodes.copy()), guess.y.copy()
    mesh, y = guess
    mesh = mesh if isinstance(mesh, Mesh) else Mesh(np.asarray(mesh, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim == 1:
        y = np.tile(y[:, None], (1, mesh.n))
    if y.shape[1] != mesh.n:
        raise ValueError(f"guess shape {y.shape} does not match mesh of {mesh.n} nodes")
    return mesh, y.copy()


def _parts(rhs, bc, mesh: Mesh, y, counter: _Counter | None):
    """Collocation residual pieces at the iterate y.

    Returns (bc_res, interval_res, f, y_mid, f_mid); complex dtypes pass
    through untouched. Trial iterates may transiently overflow the model
    laws; non-finite residuals are rejected by the Newton damping loop, so
    the fp warnings are suppressed rather than surfaced.
    """
    nodes = mesh.nodes
    h = mesh.widths
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        f = rhs(nodes, y)
        y_mid = 0.5 * (y[:, :-1] + y[:, 1:]) - (h / 8.0) * (f[:, 1:] - f[:, :-1])
        mid_s = nodes[:-1] + 0.5 * h
        f_mid = rhs(mid_s, y_mid)
        if counter is not None:
            counter.add(nodes.size + mid_s.size)
        res = y[:, 1:] - y[:, :-1] - (h / 6.0) * (f[:, :-1] + 4.0 * f_mid + f[:, 1:])
        bc_res = np.asarray(bc(y[:, 0], y[:, -1]))
    return bc_res, res, f, y_mid, f_mid


def _stack(bc_res, res):
    return np.concatenate([bc_res, res.T.ravel()])


def _scaled_norm(bc_res, res, scale, h):
    """max of |bc| and the interval residuals per unit width, per-component
    scaled by max(1, |y|)."""
    r = np.abs(res) / (h[None, :] * scale[:, None])
    vals = [r.max() if r.size else 0.0, np.abs(bc_res).max()]
    return float(max(vals))


def _pointwise_jacobians(rhs, mesh: Mesh, y, y_mid, h_step, counter: _Counter | None):
    """df/dy blocks at nodes and midpoints via complex step, batched."""
    nodes = mesh.nodes
    mid_s = nodes[:-1] + 0.5 * mesh.widths
    pts = np.concatenate([nodes, mid_s])
    y_all = np.concatenate([y, y_mid], axis=1)
    m = y.shape[0]
    jac = np.empty((m, m, pts.size))
    # same transient-overflow tolerance as _parts
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j in range(m):
            yc = y_all.astype(complex)
            yc[j] += 1j * h_step
            jac[:, j, :] = np.imag(rhs(pts, yc)) / h_step
    if counter is not None:
        counter.add(m * pts.size)
    n = nodes.size
    j_nodes = np.moveaxis(jac[:, :, :n], 2, 0)
    j_mid = np.moveaxis(jac[:, :, n:], 2, 0)
    return j_nodes, j_mid


def _bc_jacobian(bc, ya, yb, h_step):
    m = ya.shape[0]
    d_a = np.empty((m, m))
    d_b = np.empty((m, m))
    with np.errstate(over="ignore", invalid="ignore", divide="ignore"):
        for j in range(m):
            yc = ya.astype(complex)
            yc[j] += 1j * h_step
            d_a[:, j] = np.imag(np.asarray(bc(yc, yb.astype(complex)))) / h_step
            yc = yb.astype(complex)
            yc[j] += 1j * h_step
            d_b[:, j] = np.imag(np.asarray(bc(ya.astype(complex), yc))) / h_step
    return d_a, d_b


def _assemble(rhs, bc, mesh: Mesh, y, y_mid, h_step, counter: _Counter | None) -> BlockMatrix:
    """Exact Jacobian of the condensed collocation system.

    The midpoint state y_mid depends on the node values; condensation gives
    d res_i/d y_i     = -I - h/6 (J_i + 4 J_mid (I/2 + h/8 J_i)),
    d res_i/d y_{i+1} = +I - h/6 (J_{i+1} + 4 J_mid (I/2 - h/8 J_{i+1}))
    with pointwise Jacobians J evaluated by complex step.
    """
    m = y.shape[0]
    h = mesh.widths[:, None, None]
    j_nodes, j_mid = _pointwise_jacobians(rhs, mesh, y, y_mid, h_step, counter)
    j0 = j_nodes[:-1]
    j1 = j_nodes[1:]
    eye = np.eye(m)
    # non-finite blocks surface as a factorization failure, not a warning
    with np.errstate(over="ignore", invalid="ignore"):
        left = -eye - (h / 6.0) * (j0 + 4.0 * (j_mid @ (0.5 * eye + (h / 8.0) * j0)))
        right = eye - (h / 6.0) * (j1 + 4.0 * (j_mid @ (0.5 * eye - (h / 8.0) * j1)))
    d_a, d_b = _bc_jacobian(bc, y[:, 0], y[:, -1], h_step)
    return BlockMatrix.from_intervals(left, right, d_a, d_b)


def _newton(rhs, bc, mesh: Mesh, y, newton_tol, max_newton, h_step, counter: _Counter):
    bc_res, res, f, y_mid, f_mid = _parts(rhs, bc, mesh, y, counter)
    scale = np.maximum(1.0, np.abs(y).max(axis=1))
    norm = _scaled_norm(bc_res, res, scale, mesh.widths)
    iterations = 0
    for _ in range(max_newton):
        if norm <= newton_tol:
            return y, f, y_mid, f_mid, iterations
        try:
            system = _assemble(rhs, bc, mesh, y, y_mid, h_step, counter)
            dz = system.factorize().solve(-_stack(bc_res, res))
        except SingularMatrixError as exc:
            raise NewtonDiverged(f"singular collocation Jacobian: {exc}") from exc
        step = dz.reshape(mesh.n, y.shape[0]).T
        lam = 1.0
        while True:
            y_try = y + lam * step
            try:
                trial = _parts(rhs, bc, mesh, y_try, counter)
                norm_try = _scaled_norm(trial[0], trial[1], scale, mesh.widths)
            except ModelDomainError:
                norm_try = np.inf
            if norm_try < norm:
                break
            lam *= 0.5
            if lam < DAMPING_MIN:
                raise NewtonDiverged(
                    f"damping underflow at Newton iteration {iterations}, "
                    f"residual {norm:.3e}"
                )
        y = y_try
        bc_res, res, f, y_mid, f_mid = trial
        scale = np.maximum(1.0, np.abs(y).max(axis=1))
        norm = _scaled_norm(bc_res, res, scale, mesh.widths)
        iterations += 1
    raise NewtonDiverged(f"no convergence in {max_newton} Newton iterations "
                         f"(residual {norm:.3e})")


def residual_estimate(sol: CollocationSolution, rhs, counter: _Counter | None = None):
    """Per-interval scaled residual max_j |S' - f(s, S)|/(1 + |f|) at five
    Gauss points; O(h^3), so halving a flagged interval cuts it by >= 8."""
    nodes = sol.mesh.nodes
    h = sol.mesh.widths
    theta = _GAUSS_THETA
    s_g = nodes[:-1, None] + h[:, None] * theta[None, :]
    (a, b, c), (da, db, dc) = _interp_basis(theta)
    f0 = sol.f[:, :-1, None]
    fm = sol.f_mid[:, :, None]
    f1 = sol.f[:, 1:, None]
    y_g = sol.y[:, :-1, None] + h[None, :, None] * (f0 * a + fm * b + f1 * c)
    dy_g = f0 * da + fm * db + f1 * dc
    m = sol.y.shape[0]
    f_g = rhs(s_g.ravel(), y_g.reshape(m, -1)).reshape(m, h.size, theta.size)
    if counter is not None:
        counter.add(s_g.size)
    rel = np.abs(dy_g - f_g) / (1.0 + np.abs(f_g))
    return rel.max(axis=(0, 2))


def solve(rhs, bc, guess, *, tol: float | None = 1e-6, max_nodes: int = 5000,
          newton_tol: float = 1e-10, max_newton: int = 50,
          h_step: float = 1e-30) -> CollocationSolution:
    """Solve the BVP y' = rhs(s, y), bc(y(a), y(b)) = 0.

    ``guess`` is a CollocationSolution (warm start: its mesh and values are
    reused) or a (mesh, values) pair where values may be a constant profile.
    ``tol`` bounds the estimated interpolant residual per interval; pass None
    to solve on the fixed initial mesh without refinement. Raises
    NewtonDiverged, MeshLimitExceeded, or ModelDomainError; all three signal
    "retry with a better guess or continuation".
    """
    mesh, y = _as_guess(guess)
    counter = _Counter()
    total_newton = 0
    refinements = 0
    while True:
        y, f, y_mid, f_mid, its = _newton(
            rhs, bc, mesh, y, newton_tol, max_newton, h_step, counter
        )
        total_newton += its
        sol = CollocationSolution(mesh, y, f, y_mid, f_mid)
        res = residual_estimate(sol, rhs, counter)
        if tol is None or np.all(res <= tol):
            break
        flagged = res > tol
        mids = mesh.nodes[:-1][flagged] + 0.5 * mesh.widths[flagged]
        new_nodes = np.sort(np.concatenate([mesh.nodes, mids]))
        if new_nodes.size > max_nodes:
            raise MeshLimitExceeded(
                f"refinement needs {new_nodes.size} nodes (cap {max_nodes}); "
                f"max residual {res.max():.3e}"
            )
        y = evaluate(sol, new_nodes)[0]
        mesh = Mesh(new_nodes)
        refinements += 1
    sol.diagnostics = SolverDiagnostics(
        newton_iterations=total_newton,
        rhs_evaluations=counter.count,
        max_residual=float(res.max()),
        refinements=refinements,
    )
    return sol


def system_residual(mesh: Mesh, y, rhs, bc) -> np.ndarray:
    """Stacked collocation residual S(z) = [bc; interval residuals].

    Complex-capable in y and through rhs/bc (for parameter perturbations);
    the layout matches system_jacobian and the node-major unknown ordering.
    """
    bc_res, res, _, _, _ = _parts(rhs, bc, mesh, y, None)
    return _stack(bc_res, res)


def system_jacobian(sol: CollocationSolution, rhs, bc, h_step: float = 1e-30) -> BlockMatrix:
    """d S/d z at the solution, for implicit-function-theorem sensitivities."""
    return _assemble(rhs, bc, sol.mesh, sol.y, sol.y_mid, h_step, None)


def virtual_solution(mesh: Mesh, y, rhs) -> CollocationSolution:
    """Interpolant data rebuilt from node values with a given right-hand side.

    Used to differentiate quantities that depend on the solution through the
    interpolant: complex node values and parameter-perturbed rhs both flow
    through to the evaluation.
    """
    nodes = mesh.nodes
    h = mesh.widths
    f = rhs(nodes, y)
    y_mid = 0.5 * (y[:, :-1] + y[:, 1:]) - (h / 8.0) * (f[:, 1:] - f[:, :-1])
    f_mid = rhs(nodes[:-1] + 0.5 * h, y_mid)
    return CollocationSolution(mesh, y, f, y_mid, f_mid)
