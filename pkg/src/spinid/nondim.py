"""Reference values, dimensionless groups, and experiment scaling.

Every physical quantity q is non-dimensionalized by a fixed reference q0;
the references live in the configuration file (section [references]) so that
several experiments can share one scaling during optimization. Derived scales
follow from mass conservation: A0 = Q0/(rho0 u0), d0 = sqrt(A0), N0 = Q0 u0,
f0 = Q0 u0 / L0.

The module also owns the configuration file format: an INI-style key-value
file with sections [references], [material], [air], [solver], [continuation]
and one [experiment.<id>] section per measurement series, all values in SI
units. See the README for the documented schema and defaults.
"""
from __future__ import annotations

import configparser
import math
from dataclasses import dataclass, fields, replace

from .closure import AirProperties, nusselt_by_name
from .errors import ConfigError
from .material import MaterialConstants


@dataclass(frozen=True)
class ReferenceValues:
    """Reference scales in SI units (defaults: the PMMA pilot setup).

    K0 is the consistency reference; it is fixed at 1 Pa so the dimensionless
    consistency equals K in pascals and the Deborah number is computed, never
    configured. The starred values are the air-side references.
    """

    Q0: float = 3.08e-5
    L0: float = 0.51
    u0: float = 0.0283
    T0: float = 513.15
    rho0: float = 1.077e3
    cp0: float = 2.2903e3
    mu0: float = 1.4865e3
    alpha0: float = 12.762
    K0: float = 1.0
    rho_star0: float = 1.0
    cp_star0: float = 1000.0
    nu_star0: float = 2.0e-5
    lambda_star0: float = 0.031
    g: float = 9.81

    def __post_init__(self):
        for f in fields(self):
            if getattr(self, f.name) <= 0.0:
                raise ValueError(f"reference {f.name} must be strictly positive")


@dataclass(frozen=True)
class DerivedReferences:
    """Scales derived from the primary references."""

    A0: float
    d0: float
    N0: float
    f0: float

    def __post_init__(self):
        for name in ("A0", "d0", "N0", "f0"):
            if getattr(self, name) <= 0.0:
                raise ValueError(f"derived reference {name} must be positive")


def derive_references(refs: ReferenceValues) -> DerivedReferences:
    """A0 = Q0/(rho0 u0), d0 = sqrt(A0), N0 = Q0 u0, f0 = Q0 u0/L0."""
    a0 = refs.Q0 / (refs.rho0 * refs.u0)
    return DerivedReferences(
        A0=a0,
        d0=math.sqrt(a0),
        N0=refs.Q0 * refs.u0,
        f0=refs.Q0 * refs.u0 / refs.L0,
    )


@dataclass(frozen=True)
class DimensionlessGroups:
    """The dimensionless numbers of the fiber model.

    re0 is the initial Reynolds number of the continuation family; it
    defaults to re, which degenerates the blend (c Re + (1-c) Re0) to Re.
    """

    re: float
    fr: float
    ec: float
    st: float
    re_star: float
    a_star: float
    nu_star: float
    pr_star: float
    de: float
    re0: float

    def __post_init__(self):
        for f in fields(self):
            v = getattr(self, f.name)
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError(f"group {f.name}={v} must be positive and finite")


def compute_groups(
    refs: ReferenceValues, derived: DerivedReferences, re0: float | None = None
) -> DimensionlessGroups:
    """All dimensionless groups from the references.

    Re = rho0 u0 L0/mu0, Fr = u0/sqrt(g L0), Ec = u0^2/(cp0 T0),
    St = alpha0 d0 L0/(cp0 Q0), Re* = d0 u0/nu*, A* = rho* d0 u0^2/f0,
    Nu* = alpha0 d0/lambda*, Pr* = cp* rho* nu*/lambda*, De = mu0 u0/(K0 L0).
    """
    re = refs.rho0 * refs.u0 * refs.L0 / refs.mu0
    return DimensionlessGroups(
        re=re,
        fr=refs.u0 / math.sqrt(refs.g * refs.L0),
        ec=refs.u0**2 / (refs.cp0 * refs.T0),
        st=refs.alpha0 * derived.d0 * refs.L0 / (refs.cp0 * refs.Q0),
        re_star=derived.d0 * refs.u0 / refs.nu_star0,
        a_star=refs.rho_star0 * derived.d0 * refs.u0**2 / derived.f0,
        nu_star=refs.alpha0 * derived.d0 / refs.lambda_star0,
        pr_star=refs.cp_star0 * refs.rho_star0 * refs.nu_star0 / refs.lambda_star0,
        de=refs.mu0 * refs.u0 / (refs.K0 * refs.L0),
        re0=re if re0 is None else re0,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    """One spinning experiment in SI units.

    Exactly one outlet condition must be given: the take-up velocity u_out
    (m/s) or the outlet diameter d_out (m). T_air is the ambient temperature
    of the still air; delta the slenderness ratio of the drag closure.
    """

    name: str
    L: float
    Q: float
    u_in: float
    T_in: float
    T_air: float = 293.15
    delta: float = 1e-3
    u_out: float | None = None
    d_out: float | None = None

    def __post_init__(self):
        for field_name in ("L", "Q", "u_in", "T_in", "T_air"):
            if getattr(self, field_name) <= 0.0:
                raise ValueError(f"experiment {self.name}: {field_name} must be positive")
        if not 0.0 < self.delta < 1.0:
            raise ValueError(f"experiment {self.name}: delta must lie in (0, 1)")
        given = (self.u_out is not None) + (self.d_out is not None)
        if given != 1:
            raise ValueError(
                f"experiment {self.name}: exactly one of u_out/d_out required"
            )
        for field_name in ("u_out", "d_out"):
            v = getattr(self, field_name)
            if v is not None and v <= 0.0:
                raise ValueError(f"experiment {self.name}: {field_name} must be positive")


def nondimensionalize(config: ExperimentConfig, refs: ReferenceValues) -> ExperimentConfig:
    """Divide every quantity by its reference; the outlet tag is preserved."""
    derived = derive_references(refs)
    return replace(
        config,
        L=config.L / refs.L0,
        Q=config.Q / refs.Q0,
        u_in=config.u_in / refs.u0,
        T_in=config.T_in / refs.T0,
        T_air=config.T_air / refs.T0,
        delta=config.delta,
        u_out=None if config.u_out is None else config.u_out / refs.u0,
        d_out=None if config.d_out is None else config.d_out / derived.d0,
    )


def redimensionalize(config: ExperimentConfig, refs: ReferenceValues) -> ExperimentConfig:
    """Inverse of nondimensionalize."""
    derived = derive_references(refs)
    return replace(
        config,
        L=config.L * refs.L0,
        Q=config.Q * refs.Q0,
        u_in=config.u_in * refs.u0,
        T_in=config.T_in * refs.T0,
        T_air=config.T_air * refs.T0,
        delta=config.delta,
        u_out=None if config.u_out is None else config.u_out * refs.u0,
        d_out=None if config.d_out is None else config.d_out * derived.d0,
    )


@dataclass(frozen=True)
class SolverSettings:
    """BVP solver knobs exposed in the [solver] config section."""

    tol: float | None = 1e-6  # None freezes the mesh (no refinement)
    max_nodes: int = 5000
    newton_tol: float = 1e-10

    def __post_init__(self):
        if (self.tol is not None and self.tol <= 0.0) or self.newton_tol <= 0.0:
            raise ValueError("solver tolerances must be positive")
        if self.max_nodes < 3:
            raise ValueError("max_nodes must be at least 3")


@dataclass(frozen=True)
class ProblemConfig:
    """Everything a command needs: references, laws, closures, experiments."""

    references: ReferenceValues
    material: MaterialConstants
    air: AirProperties
    nusselt_name: str
    experiments: tuple
    solver: SolverSettings
    dc0: float = 0.1
    dc_min: float = 1e-4
    re0: float | None = None

    @property
    def nusselt(self):
        return nusselt_by_name(self.nusselt_name)

    def experiment(self, name: str) -> ExperimentConfig:
        for exp in self.experiments:
            if exp.name == name:
                return exp
        raise ConfigError(f"no [experiment.{name}] section in configuration")


_REF_KEYS = {f.name for f in fields(ReferenceValues)} | {"re0"}
_MAT_KEYS = {"mu_c", "vft_b", "t_vf", "a_rho", "b_rho", "a_cp", "b_cp", "trouton"}
_AIR_KEYS = {"rho_star", "cp_star", "nu_star", "lambda_star", "nusselt"}
_EXP_KEYS = {"L", "Q", "u_in", "T_in", "T_air", "delta", "u_out", "d_out"}
_SOLVER_KEYS = {"tol", "max_nodes", "newton_tol"}
_CONT_KEYS = {"dc0", "dc_min"}


def _floats(parser, section, allowed, path):
    out = {}
    for key, raw in parser.items(section):
        if key not in allowed:
            raise ConfigError(f"{path}: unknown key '{key}' in [{section}]")
        try:
            out[key] = float(raw)
        except ValueError:
            raise ConfigError(f"{path}: [{section}] {key} = {raw!r} is not a number")
    return out


def load_config(path) -> ProblemConfig:
    """Parse and validate a problem configuration file."""
    parser = configparser.ConfigParser(interpolation=None)
    # keep experiment ids and keys like 'L' case-sensitive
    parser.optionxform = str
    read = parser.read(path)
    if not read:
        raise ConfigError(f"cannot read configuration file {path}")

    refs_kwargs = {}
    re0 = None
    material = MaterialConstants()
    air_si = {}
    nusselt_name = "laminar-cylinder"
    solver_kwargs = {}
    cont_kwargs = {}
    experiments = []

    for section in parser.sections():
        if section == "references":
            vals = _floats(parser, section, _REF_KEYS, path)
            re0 = vals.pop("re0", None)
            refs_kwargs = vals
        elif section == "material":
            try:
                material = MaterialConstants(**_floats(parser, section, _MAT_KEYS, path))
            except ValueError as exc:
                raise ConfigError(f"{path}: [material] {exc}")
        elif section == "air":
            if parser.has_option(section, "nusselt"):
                nusselt_name = parser.get(section, "nusselt")
                parser.remove_option(section, "nusselt")
            air_si = _floats(parser, section, _AIR_KEYS, path)
        elif section == "solver":
            vals = _floats(parser, section, _SOLVER_KEYS, path)
            if "max_nodes" in vals:
                vals["max_nodes"] = int(vals["max_nodes"])
            solver_kwargs = vals
        elif section == "continuation":
            cont_kwargs = _floats(parser, section, _CONT_KEYS, path)
        elif section.startswith("experiment."):
            name = section[len("experiment."):]
            if not name:
                raise ConfigError(f"{path}: empty experiment id in [{section}]")
            vals = _floats(parser, section, _EXP_KEYS, path)
            try:
                experiments.append(ExperimentConfig(name=name, **vals))
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"{path}: [{section}] {exc}")
        else:
            raise ConfigError(f"{path}: unknown section [{section}]")

    try:
        refs = ReferenceValues(**refs_kwargs)
        solver = SolverSettings(**solver_kwargs)
        air = AirProperties(
            rho_star=air_si.get("rho_star", refs.rho_star0) / refs.rho_star0,
            cp_star=air_si.get("cp_star", refs.cp_star0) / refs.cp_star0,
            nu_star=air_si.get("nu_star", refs.nu_star0) / refs.nu_star0,
            lambda_star=air_si.get("lambda_star", refs.lambda_star0) / refs.lambda_star0,
        )
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}")
    nusselt_by_name(nusselt_name)  # fail early on unknown names

    return ProblemConfig(
        references=refs,
        material=material,
        air=air,
        nusselt_name=nusselt_name,
        experiments=tuple(experiments),
        solver=solver,
        dc0=cont_kwargs.get("dc0", 0.1),
        dc_min=cont_kwargs.get("dc_min", 1e-4),
        re0=re0,
    )
