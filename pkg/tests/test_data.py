"""Measurement I/O, the velocity ansatz fit, and synthetic data generation."""
from __future__ import annotations

import numpy as np
import pytest

from conftest import NOISE, P_TRUE, make_setup
from spinid.data import (CSV_HEADER, AnsatzFit, MeasurementSeries, d_fit,
                         fit_ansatz, load_measurements, read_manifest,
                         save_measurements, synthesize, u_f, write_manifest)
from spinid.errors import ConfigError
from spinid.nondim import ReferenceValues, derive_references


def ansatz_objective(series, b, c, v, u0):
    r = u_f(series.s, b, c, v, u0) * series.d**2 - 1.0
    return float(np.real(r) @ np.real(r))


def series_from_ansatz(b, c, v, u0, n=25):
    s = np.linspace(0.0, 1.0, n)
    d = 1.0 / np.sqrt(u_f(s, b, c, v, u0))
    return MeasurementSeries("synthetic", s, d, dimensionless=True)


def test_u_f_boundary_behavior():
    b, c, v, u0 = 1.7, 0.4, 60.0, 1.0
    assert u_f(0.0, b, c, v, u0) == pytest.approx(u0, rel=1e-15)
    assert u_f(50.0, b, c, v, u0) == pytest.approx(v, rel=1e-12)
    s = np.linspace(0.0, 1.0, 100)
    vals = u_f(s, b, c, v, u0)
    assert np.all(np.diff(vals) > 0.0)


def test_u_f_survives_extreme_trial_parameters():
    s = np.linspace(0.0, 1.0, 20)
    out = u_f(s, 400.0, 1e-6, 50.0, 1.0)  # overflowing exponent
    assert np.all(np.isfinite(out[1:]) | (out[1:] > 0))


def test_d_fit_is_inverse_root_velocity():
    fit = AnsatzFit(b=2.0, c=0.5, v=50.0, u0=1.0)
    assert d_fit(fit, 0.0) == pytest.approx(1.0, rel=1e-14)
    s = np.linspace(0.0, 1.0, 50)
    d = d_fit(fit, s)
    assert np.all(np.diff(d) < 0.0)
    assert d[-1] == pytest.approx(1.0 / np.sqrt(u_f(1.0, 2.0, 0.5, 50.0, 1.0)),
                                  rel=1e-14)


def test_ansatz_fit_requires_positive_parameters():
    with pytest.raises(ValueError, match="positive"):
        AnsatzFit(b=0.0, c=0.5, v=50.0, u0=1.0)
    with pytest.raises(ValueError, match="positive"):
        AnsatzFit(b=1.0, c=-0.5, v=50.0, u0=1.0)


def test_fit_recovers_exact_ansatz_data():
    series = series_from_ansatz(2.0, 0.5, 50.0, 1.0)
    fit = fit_ansatz(series)
    assert fit.b == pytest.approx(2.0, rel=1e-6)
    assert fit.c == pytest.approx(0.5, rel=1e-6)
    assert fit.v == pytest.approx(50.0, rel=1e-6)
    assert fit.u0 == pytest.approx(1.0, rel=1e-15)
    assert fit.objective <= 1e-12
    assert fit.grad_norm <= 1e-8 * (1.0 + fit.objective)


def test_fit_pins_u0_to_nozzle_nearest_point():
    series = series_from_ansatz(1.5, 0.4, 30.0, 0.25)
    fit = fit_ansatz(series)
    assert fit.u0 == pytest.approx(series.d[0] ** -2, rel=1e-15)
    assert fit.v == pytest.approx(30.0, rel=1e-5)


def test_fit_constant_diameter_gives_flat_velocity():
    s = np.linspace(0.0, 1.0, 10)
    series = MeasurementSeries("flat", s, np.ones(10), dimensionless=True)
    fit = fit_ansatz(series)
    assert fit.v == pytest.approx(fit.u0, rel=1e-6)
    assert fit.objective <= 1e-12


def test_fit_objective_matches_stored_value(dataset3):
    _, series_dl, cases, _ = dataset3
    for series, case in zip(series_dl, cases):
        fit = case.fit
        obj = ansatz_objective(series, fit.b, fit.c, fit.v, fit.u0)
        assert obj == pytest.approx(fit.objective, rel=1e-10, abs=1e-14)
        assert fit.grad_norm <= 1e-8 * (1.0 + fit.objective)


def test_fit_is_local_minimum(dataset3):
    """No 1e-3 relative perturbation of (b, c, v) improves the objective."""
    _, series_dl, cases, _ = dataset3
    rng = np.random.default_rng(77)
    for series, case in zip(series_dl, cases):
        fit = case.fit
        base = ansatz_objective(series, fit.b, fit.c, fit.v, fit.u0)
        theta = np.array([fit.b, fit.c, fit.v])
        for _ in range(20):
            pert = theta * (1.0 + 1e-3 * rng.standard_normal(3))
            obj = ansatz_objective(series, *pert, fit.u0)
            assert obj >= base - 1e-12 * (1.0 + base)


def test_fit_rejects_si_series():
    s = np.linspace(0.0, 0.5, 10)
    series = MeasurementSeries("si", s, 1e-3 * np.ones(10))
    with pytest.raises(ValueError, match="dimensionless"):
        fit_ansatz(series)


def test_series_validation():
    s = np.linspace(0.0, 1.0, 5)
    d = np.full(5, 0.5)
    MeasurementSeries("ok", s, d, dimensionless=True)
    with pytest.raises(ValueError, match="at least 4"):
        MeasurementSeries("short", s[:3], d[:3])
    with pytest.raises(ValueError, match="strictly increasing"):
        MeasurementSeries("dup", np.array([0.0, 0.1, 0.1, 0.2]), d[:4])
    with pytest.raises(ValueError, match="negative position"):
        MeasurementSeries("neg", np.array([-0.1, 0.1, 0.2, 0.3]), d[:4])
    with pytest.raises(ValueError, match="positive and finite"):
        MeasurementSeries("badd", s[:4], np.array([0.5, 0.0, 0.5, 0.5]))
    with pytest.raises(ValueError, match="positive and finite"):
        MeasurementSeries("nand", s[:4], np.array([0.5, np.nan, 0.5, 0.5]))
    with pytest.raises(ValueError, match="matching 1-d arrays"):
        MeasurementSeries("len", s, d[:4])


def test_to_dimensionless_scales_and_is_idempotent(refs):
    der = derive_references(refs)
    s = np.linspace(0.0, 0.51, 6)
    d = np.full(6, 1e-3)
    series = MeasurementSeries("e1", s, d)
    dl = series.to_dimensionless(refs)
    assert dl.dimensionless
    assert dl.s[-1] == pytest.approx(1.0, rel=1e-15)
    assert np.allclose(dl.d, 1e-3 / der.d0)
    assert dl.to_dimensionless(refs) is dl


def test_csv_round_trip(tmp_path):
    rng = np.random.default_rng(4)
    series_in = [
        MeasurementSeries("a", np.sort(rng.uniform(0.0, 0.5, 8)),
                          rng.uniform(1e-4, 1e-3, 8)),
        MeasurementSeries("b", np.sort(rng.uniform(0.0, 0.5, 5)),
                          rng.uniform(1e-4, 1e-3, 5)),
    ]
    path = tmp_path / "meas.csv"
    save_measurements(series_in, path)
    loaded = load_measurements(path)
    assert [s.experiment for s in loaded] == ["a", "b"]
    for orig, back in zip(series_in, loaded):
        assert np.array_equal(orig.s, back.s)  # repr round-trips exactly
        assert np.array_equal(orig.d, back.d)

    # a second save of the loaded data is byte-identical
    path2 = tmp_path / "meas2.csv"
    save_measurements(loaded, path2)
    assert path.read_bytes() == path2.read_bytes()


def test_load_groups_by_first_appearance(tmp_path):
    path = tmp_path / "meas.csv"
    rows = ["experiment,position_m,diameter_m"]
    rows += [f"b,{0.1 * i},0.001" for i in range(4)]
    rows += [f"a,{0.1 * i},0.002" for i in range(4)]
    path.write_text("\n".join(rows) + "\n")
    loaded = load_measurements(path)
    assert [s.experiment for s in loaded] == ["b", "a"]


def test_load_rejects_bad_header(tmp_path):
    path = tmp_path / "meas.csv"
    path.write_text("exp,pos,diam\na,0.0,0.001\n")
    with pytest.raises(ConfigError, match="header"):
        load_measurements(path)


def test_load_reports_line_numbers(tmp_path):
    path = tmp_path / "meas.csv"
    path.write_text(",".join(CSV_HEADER) + "\na,0.0,0.001\na,0.1\n")
    with pytest.raises(ConfigError, match=":3"):
        load_measurements(path)
    path.write_text(",".join(CSV_HEADER) + "\na,0.0,thick\n")
    with pytest.raises(ConfigError, match="non-numeric"):
        load_measurements(path)


def test_load_rejects_short_and_invalid_series(tmp_path):
    path = tmp_path / "meas.csv"
    rows = [",".join(CSV_HEADER)] + [f"a,{0.1 * i},0.001" for i in range(3)]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ConfigError, match="at least 4"):
        load_measurements(path)
    rows = [",".join(CSV_HEADER)] + ["a,0.0,0.001", "a,0.1,0.001",
                                     "a,0.1,0.001", "a,0.2,0.001"]
    path.write_text("\n".join(rows) + "\n")
    with pytest.raises(ConfigError, match="strictly increasing"):
        load_measurements(path)


def test_load_missing_and_empty_files(tmp_path):
    with pytest.raises(ConfigError, match="cannot read"):
        load_measurements(tmp_path / "absent.csv")
    path = tmp_path / "empty.csv"
    path.write_text("")
    with pytest.raises(ConfigError, match="empty"):
        load_measurements(path)
    path.write_text(",".join(CSV_HEADER) + "\n")
    with pytest.raises(ConfigError, match="no measurement rows"):
        load_measurements(path)


def test_load_with_refs_returns_dimensionless(tmp_path, refs):
    path = tmp_path / "meas.csv"
    rows = [",".join(CSV_HEADER)] + [f"a,{0.1 * i},0.001" for i in range(6)]
    path.write_text("\n".join(rows) + "\n")
    loaded = load_measurements(path, refs=refs)
    assert loaded[0].dimensionless
    assert loaded[0].s[-1] == pytest.approx(0.5 / refs.L0, rel=1e-14)


def test_save_rejects_dimensionless(tmp_path):
    series = MeasurementSeries("a", np.linspace(0, 1, 5), np.ones(5),
                               dimensionless=True)
    with pytest.raises(ValueError, match="SI"):
        save_measurements([series], tmp_path / "out.csv")


def test_synthesize_is_deterministic_and_on_curve():
    setup = make_setup((10, 35))
    s1, m1 = synthesize(setup, P_TRUE, noise_rel=NOISE, seed=123)
    s2, _ = synthesize(setup, P_TRUE, noise_rel=NOISE, seed=123)
    s3, _ = synthesize(setup, P_TRUE, noise_rel=NOISE, seed=124)
    for a, b in zip(s1, s2):
        assert np.array_equal(a.d, b.d)
        assert np.array_equal(a.s, b.s)
    assert not np.array_equal(s1[0].d, s3[0].d)

    clean, _ = synthesize(setup, P_TRUE, noise_rel=0.0, seed=123)
    noisy_ratio = s1[0].d / clean[0].d - 1.0
    assert np.max(np.abs(noisy_ratio)) <= 5 * NOISE
    assert np.max(np.abs(noisy_ratio)) > 0.0

    assert m1["p_true"] == {"n": 0.8, "kappa": 11.71}
    assert m1["seed"] == 123
    assert m1["experiments"] == ["d010", "d035"]
    assert clean[0].s[0] == 0.0
    assert clean[0].s[-1] == pytest.approx(0.51, rel=1e-14)  # SI positions
    assert np.all(np.diff(clean[0].d) < 0.0)


def test_manifest_round_trip(tmp_path):
    manifest = {"p_true": {"n": 0.8, "kappa": 11.71}, "seed": 5,
                "noise_rel": 0.01, "n_points": 25, "experiments": ["a"],
                "created": "2026-08-14T00:00:00+00:00"}
    path = tmp_path / "manifest.json"
    write_manifest(manifest, path)
    assert read_manifest(path) == manifest
