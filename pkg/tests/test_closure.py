"""Quiescent-air drag and heat-transfer closures."""
from __future__ import annotations

import numpy as np
import pytest

from spinid.closure import (DELTA_MAX, NUSSELT_CORRELATIONS, AirProperties,
                            alpha, constant_nusselt, f_air, laminar_cylinder,
                            nusselt_by_name, stokes_resistance)
from spinid.errors import ConfigError
from spinid.nondim import ReferenceValues, compute_groups, derive_references


@pytest.fixture(scope="module")
def groups():
    refs = ReferenceValues()
    return compute_groups(refs, derive_references(refs))


def test_stokes_resistance_frozen_values():
    assert stokes_resistance(1e-3) == pytest.approx(0.7803876190869355, rel=1e-14)
    assert stokes_resistance(1e-6) == pytest.approx(0.42011556752236473, rel=1e-14)
    assert stokes_resistance(0.1) == pytest.approx(1.818710738878064, rel=1e-14)


def test_stokes_resistance_at_validity_edge():
    # ln(4/delta) = 1 there, so r_tau = 2 pi + pi/2
    assert stokes_resistance(DELTA_MAX) == pytest.approx(
        2.0 * np.pi + np.pi / 2.0, rel=1e-12)


def test_stokes_resistance_domain():
    for delta in (0.0, -1e-3, DELTA_MAX * 1.0001, 2.0):
        with pytest.raises(ValueError, match="delta"):
            stokes_resistance(delta)


def test_stokes_resistance_positive_and_increasing():
    deltas = np.geomspace(1e-8, DELTA_MAX, 200)
    vals = np.array([stokes_resistance(d) for d in deltas])
    assert np.all(vals > 0.0)
    assert np.all(np.diff(vals) > 0.0)


def test_f_air_opposes_motion_and_is_linear(groups):
    air = AirProperties()
    f1 = f_air(1.0, 0.5, 0.2, groups, air)
    f2 = f_air(2.0, 0.9, 0.7, groups, air)  # independent of d and s
    assert f1 < 0.0
    assert f2 == pytest.approx(2.0 * f1, rel=1e-15)
    assert f_air(-1.0, 0.5, 0.2, groups, air) == pytest.approx(-f1, rel=1e-15)


def test_f_air_scales_with_resistance_coefficient(groups):
    air = AirProperties()
    ratio = f_air(1.0, 1.0, 0.0, groups, air, delta=1e-2) / f_air(
        1.0, 1.0, 0.0, groups, air, delta=1e-3)
    assert ratio == pytest.approx(
        stokes_resistance(1e-2) / stokes_resistance(1e-3), rel=1e-14)


def test_alpha_positive_and_increasing_in_velocity(groups):
    air = AirProperties()
    u = np.linspace(0.05, 40.0, 50)
    vals = alpha(u, 0.8, 0.3, groups, air, laminar_cylinder)
    assert np.all(vals > 0.0)
    assert np.all(np.diff(vals) > 0.0)


def test_alpha_rejects_nonpositive_diameter(groups):
    air = AirProperties()
    with pytest.raises(ValueError, match="diameter"):
        alpha(1.0, 0.0, 0.1, groups, air, laminar_cylinder)
    with pytest.raises(ValueError, match="diameter"):
        alpha(1.0, np.array([0.5, -0.1]), 0.1, groups, air, laminar_cylinder)


def test_alpha_with_constant_nusselt_scales_like_inverse_diameter(groups):
    air = AirProperties()
    a1 = alpha(1.0, 0.5, 0.0, groups, air, constant_nusselt)
    a2 = alpha(1.0, 1.0, 0.0, groups, air, constant_nusselt)
    assert a1 == pytest.approx(2.0 * a2, rel=1e-14)


def test_laminar_cylinder_floor_and_growth():
    assert laminar_cylinder(0.0, 0.0, 0.7) == pytest.approx(0.3)
    lo = laminar_cylinder(-1.0, 1.0, 0.7)
    hi = laminar_cylinder(-8.0, 8.0, 0.7)
    assert hi > lo > 0.3
    assert hi == pytest.approx(0.3 + 0.42 * (8.0 * 0.7) ** (1.0 / 3.0), rel=1e-14)


def test_constant_nusselt_broadcasts():
    out = constant_nusselt(0.0, np.ones(5), 0.7)
    assert np.array_equal(out, np.ones(5))


def test_nusselt_registry():
    assert nusselt_by_name("laminar-cylinder") is laminar_cylinder
    assert nusselt_by_name("constant") is constant_nusselt
    assert set(NUSSELT_CORRELATIONS) == {"laminar-cylinder", "constant"}
    with pytest.raises(ConfigError, match="unknown Nusselt"):
        nusselt_by_name("turbulent-jet")


def test_air_properties_from_si():
    refs = ReferenceValues()
    air = AirProperties.from_si(1.18, 1007.0, 1.57e-5, 0.0262, refs)
    assert air.rho_star == pytest.approx(1.18)
    assert air.cp_star == pytest.approx(1.007)
    assert air.nu_star == pytest.approx(0.785)
    assert air.lambda_star == pytest.approx(0.0262 / 0.031, rel=1e-14)


def test_air_properties_validation():
    AirProperties()  # defaults are the references themselves
    with pytest.raises(ValueError, match="positive"):
        AirProperties(rho_star=0.0)
    with pytest.raises(ValueError, match="positive"):
        AirProperties(nu_star=-1.0)
