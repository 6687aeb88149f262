"""Shared fixtures: model setups, synthetic datasets, and a config file.

The synthetic datasets stand in for the unpublished pilot-plant measurements;
they are generated once per session from forward solves at the ground truth
p_true = (0.8, 11.71) and reused by the unit and acceptance tests.
"""
from __future__ import annotations

import numpy as np
import pytest

from spinid.closure import AirProperties
from spinid.continuation import solve_with_fallback
from spinid.data import synthesize
from spinid.ident import IdentificationProblem, build_cases, identify
from spinid.material import CarreauParams, MaterialConstants
from spinid.nondim import (ExperimentConfig, ProblemConfig, ReferenceValues,
                           SolverSettings)
from spinid.spinmodel import (auxiliary_guess, build_setup,
                              continuation_family)

SEED = 20260814
P_TRUE = CarreauParams(0.8, 11.71)
NOISE = 0.01

# still-air properties at room temperature (SI)
AIR_SI = (1.18, 1007.0, 1.57e-5, 0.0262)

CONFIG_TEMPLATE = """\
[references]
Q0 = 3.08e-5
L0 = 0.51
u0 = 0.0283
T0 = 513.15
rho0 = 1.077e3
cp0 = 2.2903e3
mu0 = 1.4865e3
alpha0 = 12.762
K0 = 1.0
rho_star0 = 1.0
cp_star0 = 1000.0
nu_star0 = 2.0e-5
lambda_star0 = 0.031
g = 9.81

[material]
mu_c = 3.7074e-4
vft_b = 3649.0
t_vf = 273.15
a_rho = -0.964
b_rho = 1572.33
a_cp = 3.2
b_cp = 648.22

[air]
rho_star = 1.18
cp_star = 1007.0
nu_star = 1.57e-5
lambda_star = 0.0262
nusselt = laminar-cylinder

[solver]
tol = 1e-6
max_nodes = 5000
newton_tol = 1e-10

[continuation]
dc0 = 0.1
dc_min = 1e-4
{experiments}"""

EXPERIMENT_TEMPLATE = """
[experiment.{name}]
L = 0.51
Q = 3.08e-5
u_in = 0.0283
T_in = 513.15
T_air = 293.15
u_out = {u_out!r}
"""


def make_setup(draws, T_air=293.15, refs=None):
    """Pilot-configuration setup with one experiment per draw ratio."""
    refs = refs or ReferenceValues()
    air = AirProperties.from_si(*AIR_SI, refs)
    exps = tuple(
        ExperimentConfig(name=f"d{d:03d}", L=0.51, Q=refs.Q0, u_in=refs.u0,
                         T_in=513.15, T_air=T_air, u_out=d * refs.u0)
        for d in draws
    )
    cfg = ProblemConfig(references=refs, material=MaterialConstants(),
                        air=air, nusselt_name="laminar-cylinder",
                        experiments=exps, solver=SolverSettings())
    return build_setup(cfg)


def make_dataset(setup, noise, seed):
    """Synthetic series at P_TRUE plus prepared cases and problem."""
    series, manifest = synthesize(setup, P_TRUE, noise_rel=noise, seed=seed)
    series_dl = [s.to_dimensionless(setup.references) for s in series]
    cases = build_cases(setup, series_dl)
    problem = IdentificationProblem(setup, cases)
    return series, series_dl, cases, problem


def config_text(draws):
    u0 = 0.0283
    blocks = "".join(
        EXPERIMENT_TEMPLATE.format(name=f"d{d:03d}", u_out=d * u0)
        for d in draws
    )
    return CONFIG_TEMPLATE.format(experiments=blocks)


@pytest.fixture(scope="session")
def refs():
    return ReferenceValues()


@pytest.fixture(scope="session")
def setup3():
    return make_setup((10, 35, 80))


@pytest.fixture(scope="session")
def setup6():
    return make_setup((10, 20, 35, 55, 80, 110))


@pytest.fixture(scope="session")
def dataset3(setup3):
    return make_dataset(setup3, NOISE, 99)


@pytest.fixture(scope="session")
def dataset6(setup6):
    return make_dataset(setup6, NOISE, SEED)


@pytest.fixture(scope="session")
def ident3(dataset3):
    """One converged identification on the 3-experiment set."""
    *_, problem = dataset3
    return identify(problem, start=CarreauParams(0.82, 11.5))


@pytest.fixture(scope="session")
def newton_solution(setup3):
    """Converged Newtonian draw-10 solution (direct solve succeeds)."""
    p = CarreauParams(1.0, 12.0)
    exp = setup3.experiment("d010")
    family = continuation_family(setup3, exp, p)
    guess = auxiliary_guess(setup3.context(exp, p, 0.0))
    sol, trace = solve_with_fallback(
        family, guess, solve_kwargs={"tol": 1e-6, "max_nodes": 5000,
                                     "newton_tol": 1e-10})
    assert trace is None
    return setup3, exp, p, sol


@pytest.fixture(scope="session")
def ini_path(tmp_path_factory):
    path = tmp_path_factory.mktemp("config") / "problem.ini"
    path.write_text(config_text((10, 35)))
    return path
