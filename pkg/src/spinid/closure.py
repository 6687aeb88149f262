"""Quiescent-air closures for drag and heat transfer.

The surrounding air is at rest and isothermal. The tangential line force on
the slender fiber reduces to Stokes drag with the slenderness-dependent
resistance coefficient r_tau(delta), and the heat-transfer coefficient is
modeled through a Nusselt correlation evaluated with the local air-associated
Reynolds number. Both enter the fiber balances in dimensionless form via the
groups A*, Re*, Nu*, Pr*.

The Nusselt correlation itself is a pluggable closure selected by name from
``NUSSELT_CORRELATIONS``. Only positivity and monotonicity in the velocity
magnitude are contractual; the default coefficients are a documented repo
choice (see ``laminar_cylinder``).
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError

# Upper end of the validity range of the Stokes resistance formula: at
# delta = 4/e the logarithm equals 1; beyond it the expansion loses meaning.
DELTA_MAX = 4.0 / np.e


@dataclass(frozen=True)
class AirProperties:
    """Dimensionless air properties (constant along the spin line).

    Values are SI properties divided by the starred references, hence all 1.0
    when the references coincide with the modeled air.
    """

    rho_star: float = 1.0
    cp_star: float = 1.0
    nu_star: float = 1.0
    lambda_star: float = 1.0

    def __post_init__(self):
        for name in ("rho_star", "cp_star", "nu_star", "lambda_star"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"air property {name} must be positive")

    @classmethod
    def from_si(cls, rho, cp, nu, lam, refs) -> "AirProperties":
        return cls(
            rho_star=rho / refs.rho_star0,
            cp_star=cp / refs.cp_star0,
            nu_star=nu / refs.nu_star0,
            lambda_star=lam / refs.lambda_star0,
        )


def stokes_resistance(delta: float) -> float:
    """Tangential Stokes resistance coefficient of a slender cylinder,

        r_tau = 2 pi / ln(4/delta) + (pi/2) / ln(4/delta)^2,

    strictly positive and strictly increasing on 0 < delta <= 4/e.
    """
    if not 0.0 < delta <= DELTA_MAX:
        raise ValueError(f"slenderness delta={delta} outside (0, 4/e]")
    log = np.log(4.0 / delta)
    return 2.0 * np.pi / log + (np.pi / 2.0) / log**2


def f_air(u, d, s, groups, air: AirProperties, delta: float = 1e-3):
    """Dimensionless aerodynamic line force for air at rest,

        f_air = -(A*/Re*) rho* nu* u r_tau(delta),

    linear in u and opposing the motion. ``d`` and ``s`` are unused by the
    quiescent closure but kept to mirror the general model signature
    f_air(u, d, s).
    """
    r_tau = stokes_resistance(delta)
    return -(groups.a_star / groups.re_star) * air.rho_star * air.nu_star * u * r_tau


def alpha(u, d, s, groups, air: AirProperties, nusselt):
    """Dimensionless heat-transfer coefficient,

        alpha = (1/Nu*) (lambda*/d) N(-Re_loc, Re_loc, Pr),

    where Re_loc = Re* d u / nu* is the local air-associated Reynolds number
    (the air is at rest, so the tangential relative velocity is -u) and
    Pr = Pr* cp* rho* nu* / lambda*. ``s`` is kept for signature fidelity.
    """
    if np.any(np.real(d) <= 0.0):
        raise ValueError("fiber diameter must be positive")
    re_loc = groups.re_star * d * u / air.nu_star
    pr = groups.pr_star * air.cp_star * air.rho_star * air.nu_star / air.lambda_star
    n_val = nusselt(-re_loc, re_loc, pr)
    return (1.0 / groups.nu_star) * (air.lambda_star / d) * n_val


def laminar_cylinder(v_tau, v_mag, pr):
    """Default Nusselt correlation: N = 0.3 + 0.42 (Re Pr)^(1/3).

    A laminar thin-cylinder correlation in the spirit of the forced-convection
    fits used for spin lines (Kase/Matsuo-type power law) with a
    pure-conduction floor so N(0,0,Pr) > 0. The coefficients are a documented
    repository choice; only positivity and monotonicity in ``v_mag`` are
    relied upon. ``v_tau`` (the tangential component) is accepted for
    signature compatibility and unused by this isotropic fit.
    """
    return 0.3 + 0.42 * (v_mag * pr) ** (1.0 / 3.0)


def constant_nusselt(v_tau, v_mag, pr):
    """Stub correlation N = 1, useful for scaling checks."""
    return 1.0 + 0.0 * v_mag


NUSSELT_CORRELATIONS = {
    "laminar-cylinder": laminar_cylinder,
    "constant": constant_nusselt,
}


def nusselt_by_name(name: str):
    try:
        return NUSSELT_CORRELATIONS[name]
    except KeyError:
        known = ", ".join(sorted(NUSSELT_CORRELATIONS))
        raise ConfigError(f"unknown Nusselt correlation '{name}' (known: {known})")
