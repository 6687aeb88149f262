"""Polymer material laws.

Temperature-dependent density and heat capacity (linear), VFT zero-strain-rate
shear viscosity, and the Carreau-like elongational viscosity

    mu_e(T, e) = mu_e0(T) * (1 + De^2 (mu_e0(T) e / K)^2)^((n-1)/2),

with mu_e0 = Tr * mu_s0 (Trouton ratio Tr = 3) and the log-consistency
reparameterization K = exp(kappa). All functions accept real or
complex-extended arguments in their differentiated variables (temperature,
strain rate, parameters) and use only smooth operations, so the same code
serves plain evaluation and complex-step differentiation.

The same closed forms work in SI and in dimensionless units; the coefficient
bundle decides the unit system. ``MaterialConstants`` holds the SI values
(defaults from the PMMA data set) and ``scaled`` produces the dimensionless
bundle used by the fiber model.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ModelDomainError

# Admissible parameter box for (n, kappa).
N_BOUNDS = (0.0, 1.0)
KAPPA_BOUNDS = (7.0, 20.0)


@dataclass(frozen=True)
class CarreauParams:
    """Identified material parameters p = (n, kappa), K = exp(kappa).

    Values must lie in the box [0,1] x [7,20]. Complex entries are accepted
    for complex-step differentiation; the box constraint applies to the real
    parts.
    """

    n: float
    kappa: float

    def __post_init__(self):
        n, kappa = np.real(self.n), np.real(self.kappa)
        if not (N_BOUNDS[0] <= n <= N_BOUNDS[1]):
            raise ValueError(
                f"power index n={n} outside [{N_BOUNDS[0]}, {N_BOUNDS[1]}]")
        if not (KAPPA_BOUNDS[0] <= kappa <= KAPPA_BOUNDS[1]):
            raise ValueError(
                f"log-consistency kappa={kappa} outside "
                f"[{KAPPA_BOUNDS[0]}, {KAPPA_BOUNDS[1]}]")

    @property
    def consistency(self):
        """K = exp(kappa); in Pa when the consistency reference is 1 Pa."""
        return np.exp(self.kappa)

    def as_array(self) -> np.ndarray:
        return np.array([self.n, self.kappa])


@dataclass(frozen=True)
class MaterialConstants:
    """Coefficient bundle for the polymer laws.

    In SI form (the defaults): mu_c (Pa s), vft_b and t_vf (K) for the VFT law
    mu_s0 = mu_c exp(vft_b/(T - t_vf)); linear laws rho = a_rho T + b_rho
    (kg/m^3) and cp = a_cp T + b_cp (J/(kg K)); Trouton ratio trouton.
    t_floor/t_ceil bound the admissible temperature window; k_ref is the
    consistency reference dividing exp(kappa) (1 in SI).

    ``scaled(refs)`` returns the dimensionless twin with the operating window
    [(t_vf + 1 K)/T0, 1.2].
    """

    mu_c: float = 3.7074e-4
    vft_b: float = 3649.0
    t_vf: float = 273.15
    a_rho: float = -0.964
    b_rho: float = 1572.33
    a_cp: float = 3.2
    b_cp: float = 648.22
    trouton: float = 3.0
    t_floor: float = 274.15
    t_ceil: float = math.inf
    k_ref: float = 1.0

    def __post_init__(self):
        if self.mu_c <= 0.0 or self.vft_b <= 0.0:
            raise ValueError("VFT constants mu_c, vft_b must be positive")
        if self.trouton <= 0.0:
            raise ValueError("Trouton ratio must be positive")
        if self.t_floor <= self.t_vf:
            raise ValueError("temperature floor must exceed the Vogel temperature")
        for t in (self.t_floor, self.t_ceil):
            if math.isfinite(t):
                if self.a_rho * t + self.b_rho <= 0.0:
                    raise ValueError(f"density law non-positive at T={t}")
                if self.a_cp * t + self.b_cp <= 0.0:
                    raise ValueError(f"heat-capacity law non-positive at T={t}")

    def scaled(self, refs) -> "MaterialConstants":
        """Dimensionless coefficient bundle for the given references."""
        return MaterialConstants(
            mu_c=self.mu_c / refs.mu0,
            vft_b=self.vft_b / refs.T0,
            t_vf=self.t_vf / refs.T0,
            a_rho=self.a_rho * refs.T0 / refs.rho0,
            b_rho=self.b_rho / refs.rho0,
            a_cp=self.a_cp * refs.T0 / refs.cp0,
            b_cp=self.b_cp / refs.cp0,
            trouton=self.trouton,
            t_floor=(self.t_vf + 1.0) / refs.T0,
            t_ceil=1.2,
            k_ref=refs.K0,
        )


def _check_temperature(mat: MaterialConstants, t) -> None:
    tr = np.real(t)
    if np.any(tr < mat.t_floor) or np.any(tr > mat.t_ceil):
        bad = np.atleast_1d(tr)
        bad = bad[(bad < mat.t_floor) | (bad > mat.t_ceil)][0]
        raise ModelDomainError(
            f"temperature {bad} outside admissible window "
            f"[{mat.t_floor}, {mat.t_ceil}]"
        )


def mu_s0(mat: MaterialConstants, t):
    """VFT zero-strain-rate shear viscosity mu_c * exp(b/(T - t_vf))."""
    _check_temperature(mat, t)
    return mat.mu_c * np.exp(mat.vft_b / (t - mat.t_vf))


def mu_e0(mat: MaterialConstants, t):
    """Zero-strain-rate elongational viscosity, Trouton times mu_s0."""
    return mat.trouton * mu_s0(mat, t)


def dmu_e0_dT(mat: MaterialConstants, t):
    """d mu_e0/dT = -mu_e0 * b/(T - t_vf)^2."""
    return -mu_e0(mat, t) * mat.vft_b / (t - mat.t_vf) ** 2


def rho(mat: MaterialConstants, t):
    """Linear melt density a_rho*T + b_rho."""
    _check_temperature(mat, t)
    val = mat.a_rho * t + mat.b_rho
    if np.any(np.real(val) <= 0.0):
        raise ModelDomainError("density law returned a non-positive value")
    return val


def drho_dT(mat: MaterialConstants, t):
    return mat.a_rho * np.ones_like(np.asarray(t))


def cp(mat: MaterialConstants, t):
    """Linear specific heat a_cp*T + b_cp."""
    _check_temperature(mat, t)
    val = mat.a_cp * t + mat.b_cp
    if np.any(np.real(val) <= 0.0):
        raise ModelDomainError("heat-capacity law returned a non-positive value")
    return val


def mu_e(mat: MaterialConstants, t, epsdot, p: CarreauParams, de: float = 1.0):
    """Carreau-like elongational viscosity.

    ``de`` is the Deborah number of the chosen scaling (1 for SI usage with
    k_ref = 1 Pa). At n = 1 the returned value equals mu_e0(T) bitwise: the
    exponent is exactly zero and w**0.0 == 1.0 in IEEE arithmetic.
    """
    mu0 = mu_e0(mat, t)
    a = de * mu0 / (np.exp(p.kappa) / mat.k_ref)
    x = a * epsdot
    w = 1.0 + x * x
    return mu0 * w ** (0.5 * (p.n - 1.0))


def dmu_e_dT(mat: MaterialConstants, t, epsdot, p: CarreauParams, de: float = 1.0):
    """Analytic partial d mu_e/dT (mu_e0 carries all T dependence)."""
    mu0 = mu_e0(mat, t)
    dmu0 = dmu_e0_dT(mat, t)
    a = de * mu0 / (np.exp(p.kappa) / mat.k_ref)
    x = a * epsdot
    x2 = x * x
    w = 1.0 + x2
    t_pow = w ** (0.5 * (p.n - 1.0))
    # mu_e0 appears twice (prefactor and inside w); algebra folds both into
    # the factor (1 + n x^2)/w, which is exactly 1 at n = 1.
    return dmu0 * t_pow * ((1.0 + p.n * x2) / w)


def dmu_e_depsdot(mat: MaterialConstants, t, epsdot, p: CarreauParams, de: float = 1.0):
    """Analytic partial d mu_e/d epsdot; identically zero at n = 1."""
    mu0 = mu_e0(mat, t)
    a = de * mu0 / (np.exp(p.kappa) / mat.k_ref)
    w = 1.0 + (a * epsdot) ** 2
    return mu0 * (p.n - 1.0) * w ** (0.5 * (p.n - 3.0)) * (a * a) * epsdot


def mu_e_with_partials(mat: MaterialConstants, t, epsdot, p: CarreauParams, de: float = 1.0):
    """(mu_e, d/dT, d/depsdot) in one pass; the RHS hot path."""
    mu0 = mu_e0(mat, t)
    dmu0 = -mu0 * mat.vft_b / (t - mat.t_vf) ** 2
    a = de * mu0 / (np.exp(p.kappa) / mat.k_ref)
    x = a * epsdot
    x2 = x * x
    w = 1.0 + x2
    t_pow = w ** (0.5 * (p.n - 1.0))
    val = mu0 * t_pow
    d_t = dmu0 * t_pow * ((1.0 + p.n * x2) / w)
    d_e = mu0 * (p.n - 1.0) * w ** (0.5 * (p.n - 3.0)) * (a * a) * epsdot
    return val, d_t, d_e


def check_strict_monotonicity(
    mat: MaterialConstants,
    t: float,
    p: CarreauParams,
    de: float = 1.0,
    epsdot_max: float = 1e3,
    step: float = 1e-2,
):
    """Verify d/de [mu_e(T,e)*e] = mu_e + e*dmu_e/de > 0 on a strain-rate grid.

    Returns None when the elongational stress is strictly increasing, else
    the first strain rate at which the derivative is non-positive. For
    n >= 0 the derivative reduces to mu_e0 w^((n-3)/2) (1 + n x^2) > 0, so a
    violation indicates parameters outside the supported box.
    """
    grid = np.arange(0.0, epsdot_max + step, step)
    deriv = mu_e(mat, t, grid, p, de) + grid * dmu_e_depsdot(mat, t, grid, p, de)
    bad = np.real(deriv) <= 0.0
    if np.any(bad):
        return float(grid[np.argmax(bad)])
    return None
