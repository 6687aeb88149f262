"""The dimensionless fiber-spinning boundary value problem.

State y = (u, N, T, epsdot): velocity, contact force, temperature, strain
rate along the arclength s in [0, L]. The cross-section is eliminated by mass
conservation, d = 2 sqrt(Q/(pi rho(T) u)). The constitutive law
mu_e epsdot = Re rho u N / Q is differentiated once so the strain rate
becomes a state variable; its denominator mu_e + epsdot dmu_e/depsdot is
positive exactly when the elongational stress is strictly monotone in the
strain rate.

A continuation family in c in [0, 1] connects an auxiliary problem with a
known constant solution (c = 0: no gravity, no drag, no cooling, Reynolds
number Re0, inlet outlet data) to the physical problem (c = 1). The family's
right-hand side and boundary residuals are generic-scalar evaluable in y and
p for complex-step differentiation.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import closure, material, nondim
from .errors import ConfigError, ModelDomainError
from .material import CarreauParams

# Admissible-region floor for the velocity; Newton iterates below it raise a
# recoverable ModelDomainError instead of propagating NaNs.
U_MIN = 1e-8


@dataclass(frozen=True)
class FiberState:
    """Named view of a state vector or profile (u, N, T, epsdot)."""

    u: object
    N: object
    T: object
    epsdot: object

    @classmethod
    def from_array(cls, y) -> "FiberState":
        return cls(u=y[0], N=y[1], T=y[2], epsdot=y[3])

    def to_array(self) -> np.ndarray:
        return np.stack(
            [np.asarray(self.u), np.asarray(self.N), np.asarray(self.T),
             np.asarray(self.epsdot)]
        )


@dataclass(frozen=True)
class ContinuationContext:
    """One member of the continuation family: fixed c, p, scaling, closures."""

    c: float
    p: CarreauParams
    groups: nondim.DimensionlessGroups
    experiment: nondim.ExperimentConfig
    material: material.MaterialConstants
    air: closure.AirProperties
    nusselt: object

    def __post_init__(self):
        if not 0.0 <= self.c <= 1.0:
            raise ValueError(f"continuation parameter c={self.c} outside [0, 1]")


@dataclass(frozen=True)
class ModelSetup:
    """Scaled problem data shared by all continuation contexts."""

    references: nondim.ReferenceValues
    derived: nondim.DerivedReferences
    groups: nondim.DimensionlessGroups
    material: material.MaterialConstants
    air: closure.AirProperties
    nusselt: object
    experiments: tuple
    solver: nondim.SolverSettings
    dc0: float = 0.1
    dc_min: float = 1e-4

    def experiment(self, name: str) -> nondim.ExperimentConfig:
        for exp in self.experiments:
            if exp.name == name:
                return exp
        raise ConfigError(f"unknown experiment '{name}'")

    def context(self, exp, p: CarreauParams, c: float) -> ContinuationContext:
        return ContinuationContext(
            c=c, p=p, groups=self.groups, experiment=exp,
            material=self.material, air=self.air, nusselt=self.nusselt,
        )


def build_setup(cfg: nondim.ProblemConfig) -> ModelSetup:
    """Scale a problem configuration into model form and validate it."""
    refs = cfg.references
    derived = nondim.derive_references(refs)
    groups = nondim.compute_groups(refs, derived, cfg.re0)
    mat = cfg.material.scaled(refs)
    experiments = tuple(nondim.nondimensionalize(e, refs) for e in cfg.experiments)
    for exp in experiments:
        if exp.d_out is not None:
            d_in = diameter(exp.u_in, exp.T_in, mat, exp.Q)
            if exp.d_out >= d_in:
                raise ConfigError(
                    f"experiment {exp.name}: outlet diameter {exp.d_out:g} is not "
                    f"below the inlet diameter {d_in:g}"
                )
    return ModelSetup(
        references=refs, derived=derived, groups=groups, material=mat,
        air=cfg.air, nusselt=cfg.nusselt, experiments=experiments,
        solver=cfg.solver, dc0=cfg.dc0, dc_min=cfg.dc_min,
    )


def diameter_from_density(u, rho_val, q):
    """d = 2 sqrt(Q/(pi rho u)); mass conservation rho A u = Q built in."""
    return 2.0 * np.sqrt(q / (np.pi * rho_val * u))


def diameter(u, t, mat: material.MaterialConstants, q):
    """Dimensionless fiber diameter at velocity u and temperature t."""
    if np.any(np.real(u) <= 0.0):
        raise ModelDomainError("diameter needs a positive velocity")
    return diameter_from_density(u, material.rho(mat, t), q)


def area(u, rho_val, q):
    """Cross-section A = Q/(rho u)."""
    return q / (rho_val * u)


def rhs(s, y, ctx: ContinuationContext):
    """Right-hand side of the continuation family, dy/ds = f(y; p; c).

    y has shape (4,) or (4, k); the result matches. Raises ModelDomainError
    when the iterate leaves the admissible region (velocity floor, VFT
    window, monotonicity denominator, or non-finite output).
    """
    u, n_force, t, e = y[0], y[1], y[2], y[3]
    if np.any(np.real(u) <= U_MIN):
        raise ModelDomainError(f"velocity fell below the admissible floor {U_MIN}")

    ex = ctx.experiment
    g = ctx.groups
    mat = ctx.material
    c = ctx.c

    mu, dmu_dt, dmu_de = material.mu_e_with_partials(mat, t, e, ctx.p, g.de)
    rho_v = material.rho(mat, t)
    cp_v = material.cp(mat, t)
    d = diameter_from_density(u, rho_v, ex.Q)

    f_drag = closure.f_air(u, d, s, g, ctx.air, ex.delta)
    al = closure.alpha(u, d, s, g, ctx.air, ctx.nusselt)

    f_n = ex.Q * e - c * (f_drag + ex.Q / (g.fr**2 * u))
    f_t = (c / (cp_v * ex.Q)) * (
        g.ec * n_force * e - g.st * np.pi * d * al * (t - ex.T_air)
    )

    den = mu + e * dmu_de
    if np.any(np.real(den) <= 0.0):
        raise ModelDomainError("elongational stress lost strict monotonicity")

    re_c = (c * g.re + (1.0 - c) * g.re0) / ex.Q
    num = re_c * (rho_v * n_force * e + rho_v * u * f_n + u * n_force * mat.a_rho * f_t)
    num = num - e * dmu_dt * f_t

    out = np.stack(np.broadcast_arrays(e, f_n, f_t, num / den))
    if not np.all(np.isfinite(out)):
        raise ModelDomainError("right-hand side is not finite")
    return out


def bc(y0, y_l, ctx: ContinuationContext):
    """Boundary residuals g(y(0), y(L); p; c), four components.

    Rows: inlet velocity, blended outlet condition (diameter or velocity),
    inlet temperature, and the implicit nozzle constitutive relation
    (Re_c/Q) rho(T_in) u_in N(0) - epsdot(0) mu_e(T_in, epsdot(0)).
    """
    ex = ctx.experiment
    g = ctx.groups
    mat = ctx.material
    c = ctx.c

    re_c = (c * g.re + (1.0 - c) * g.re0) / ex.Q
    rho_in = material.rho(mat, ex.T_in)
    mu_in = material.mu_e(mat, ex.T_in, y0[3], ctx.p, g.de)

    row0 = y0[0] - ex.u_in
    if ex.d_out is not None:
        d_l = diameter(y_l[0], y_l[2], mat, ex.Q)
        d_in = diameter(ex.u_in, ex.T_in, mat, ex.Q)
        row1 = d_l - (c * ex.d_out + (1.0 - c) * d_in)
    else:
        row1 = y_l[0] - (c * ex.u_out + (1.0 - c) * ex.u_in)
    row2 = y0[2] - ex.T_in
    row3 = re_c * rho_in * ex.u_in * y0[1] - y0[3] * mu_in
    return np.stack([row0, row1, row2, row3])


def auxiliary_state(ctx: ContinuationContext) -> FiberState:
    """The isothermal stress-free fiber (u_in, 0, T_in, 0); exact at c = 0."""
    ex = ctx.experiment
    return FiberState(u=ex.u_in, N=0.0, T=ex.T_in, epsdot=0.0)


def auxiliary_guess(ctx: ContinuationContext, n_nodes: int = 21):
    """(mesh, constant profile) initial guess on a uniform mesh."""
    mesh = np.linspace(0.0, ctx.experiment.L, n_nodes)
    y0 = auxiliary_state(ctx).to_array().astype(float)
    return mesh, np.tile(y0[:, None], (1, n_nodes))


def continuation_family(setup: ModelSetup, exp, p: CarreauParams):
    """c -> (rhs, bc) closures over a shared setup, for the continuation driver."""

    def family(c: float):
        ctx = setup.context(exp, p, c)
        return (lambda s, y: rhs(s, y, ctx)), (lambda ya, yb: bc(ya, yb, ctx))

    return family
