import json

import numpy as np
import pytest

from spincavity.cavity import SpectrumMap, s11_power
from spincavity.fitkit import (
    NoDipError,
    ResonanceTarget,
    estimate_noise,
    fit_lorentzian_trace,
    fit_map_traces,
    fit_resonance,
    lorentzian_dip,
    run_pipeline,
    shift_model,
    spin_count,
    width_model,
)
from spincavity.presets import PERPENDICULAR, WIDTH_FIT

import synth

FREQS = np.arange(18470.0, 18570.0 + 1e-9, 0.5)


# ---------------------------------------------------------------- stage 1


def test_lorentzian_exact_recovery():
    truth = (0.98, 3.1, 18521.3, 6.4)
    r = fit_lorentzian_trace(FREQS, lorentzian_dip(truth, FREQS))
    assert r.converged
    assert np.allclose([r.c, r.A, r.f_c_prime, r.kappa_c_prime], truth, rtol=1e-6)
    assert r.depth == pytest.approx(3.1 / 6.4, rel=1e-6)
    assert not r.flat_preferred


def test_flat_trace_has_no_dip():
    with pytest.raises(NoDipError):
        fit_lorentzian_trace(FREQS, np.ones_like(FREQS))
    rng = np.random.default_rng(3)
    with pytest.raises(NoDipError):
        fit_lorentzian_trace(FREQS, 1 + rng.normal(0, 0.01, FREQS.size), noise=0.01)


def test_reflection_trace_is_a_lorentzian_of_the_perturbed_cavity():
    for f0, k in ((18512.0, 5.84), (18530.7, 9.3)):
        y = s11_power(FREQS, f0, k, 5.84)
        r = fit_lorentzian_trace(FREQS, y)
        assert abs(r.f_c_prime - f0) < 1e-3
        assert r.kappa_c_prime == pytest.approx(k, rel=0.05)


def test_trace_scale_invariance():
    y = s11_power(FREQS, 18519.0, 7.0, 5.84)
    a = fit_lorentzian_trace(FREQS, y)
    b = fit_lorentzian_trace(FREQS, 0.37 * y)
    assert b.f_c_prime == pytest.approx(a.f_c_prime, abs=1e-8)
    assert b.kappa_c_prime == pytest.approx(a.kappa_c_prime, rel=1e-8)
    assert b.c == pytest.approx(0.37 * a.c, rel=1e-8)
    assert b.A == pytest.approx(0.37 * a.A, rel=1e-8)


def test_trace_argument_checks():
    with pytest.raises(ValueError):
        fit_lorentzian_trace(FREQS[:5], FREQS[:5])
    with pytest.raises(ValueError):
        fit_lorentzian_trace(FREQS, FREQS[:-1])


def test_noise_estimate_ignores_smooth_signal():
    rng = np.random.default_rng(11)
    y = lorentzian_dip((1, 3, 18520, 6), FREQS) + rng.normal(0, 0.02, FREQS.size)
    assert estimate_noise(y) == pytest.approx(0.02, rel=0.2)


def test_threads_do_not_change_stage1():
    m = synth.reference_map(field_step=5.0, noise_sigma=0.02, seed=5)
    a = fit_map_traces(m, threads=1)
    b = fit_map_traces(m, threads=4)
    assert np.array_equal(a.f_c_prime, b.f_c_prime, equal_nan=True)
    assert np.array_equal(a.kappa_c_prime, b.kappa_c_prime, equal_nan=True)
    assert a.failures == b.failures


def test_width_series_peaks_at_resonance(reference_locations):
    m = synth.reference_map(field_step=0.5)
    s = fit_map_traces(m)
    for label in ("R2-", "R3+"):
        loc = reference_locations[label]
        near = np.abs(s.fields - loc.H_r) < 20
        h_peak = s.fields[near][np.argmax(s.kappa_c_prime[near])]
        assert abs(h_peak - loc.H_r) <= 0.5, label


# ---------------------------------------------------------------- stage 2


def _series(loc, which, g, gam, h, k0=5.84, m=0.003):
    p = (k0 if which == "width" else 18520.0, m, g**2, gam, loc.H_r)
    return (width_model if which == "width" else shift_model)(p, h, loc.a1, loc.a2)


@pytest.mark.parametrize("which", ["width", "shift"])
def test_fit_resonance_recovers_truth(reference_locations, which):
    loc = reference_locations["R2-"]
    h = np.arange(loc.H_r - 60, loc.H_r + 60, 1.0)
    y = _series(loc, which, 4.4, 8.1, h)
    r = fit_resonance(h, y, loc, which)
    assert r.coupling_detected and r.converged
    assert r.gamma_s == pytest.approx(8.1, rel=0.01)
    assert r.g_c == pytest.approx(4.4, rel=0.01)
    assert r.H_r == pytest.approx(loc.H_r, abs=0.05)
    assert np.allclose(r.model(h), y, atol=1e-6)


def test_width_and_shift_fits_agree_within_two_sigma(reference_locations):
    loc = reference_locations["R1-"]
    rng = np.random.default_rng(8)
    h = np.arange(loc.H_r - 80, loc.H_r + 80, 1.0)
    w = fit_resonance(h, _series(loc, "width", 3.0, 7.3, h) + rng.normal(0, 0.05, h.size), loc, "width")
    s = fit_resonance(h, _series(loc, "shift", 3.0, 7.3, h) + rng.normal(0, 0.05, h.size), loc, "shift")
    for key in ("gamma_s", "g_c"):
        a, b = getattr(w, key), getattr(s, key)
        err = np.hypot(w.uncertainties[key], s.uncertainties[key])
        assert abs(a - b) <= 2 * err, key


def test_zero_coupling_flagged(reference_locations):
    loc = reference_locations["R2-"]
    h = np.arange(loc.H_r - 60, loc.H_r + 60, 1.0)
    y = 5.84 + 0.002 * (loc.H_r - h)
    r = fit_resonance(h, y, loc, "width")
    assert not r.coupling_detected
    assert r.g_c == 0.0 and np.isnan(r.gamma_s)
    assert r.baseline == pytest.approx(5.84, abs=1e-9)
    # a dip instead of a peak is not a coupling either
    y2 = y - _series(loc, "width", 3.0, 8.0, h, k0=0.0, m=0.0)
    assert not fit_resonance(h, y2, loc, "width").coupling_detected


def test_fit_resonance_argument_checks(reference_locations):
    loc = reference_locations["R2-"]
    with pytest.raises(ValueError):
        fit_resonance([1, 2, 3], [1, 2, 3], loc)
    with pytest.raises(ValueError):
        fit_resonance(np.arange(10.0), np.arange(10.0), loc, which="height")


def test_spin_count_examples():
    n = spin_count(1.78e9, 1.5, 5.84, 5.84 / 0.558)
    assert n == pytest.approx(7.55e7, rel=0.01)
    assert spin_count(1e9, 1.5, 5.0, 5.0) == pytest.approx(0.304e9 / 4)
    assert spin_count(1e9, 0.0, 2.0, 4.0, abundance=1.0) == pytest.approx(0.5e9)
    assert spin_count(1e9, 0.0, 8.0, 4.0, abundance=1.0, clamp=True) == pytest.approx(1e9)
    with pytest.raises(ValueError):
        spin_count(0, 1.5, 1, 1)


# ---------------------------------------------------------------- pipeline


@pytest.fixture(scope="module")
def noiseless_report(gd):
    return run_pipeline(synth.reference_map(), gd, PERPENDICULAR, synth.targets())


def test_pipeline_recovers_width_column(noiseless_report):
    for r, row in zip(noiseless_report.resonances, WIDTH_FIT):
        assert r.label == row[0]
        assert r.width.gamma_s == pytest.approx(row[3], rel=0.05), r.label
        assert r.width.g_c == pytest.approx(row[5], rel=0.05), r.label


def test_pipeline_report_outputs(noiseless_report):
    d = json.loads(noiseless_report.to_json())
    assert d["stage1"]["n_failed"] == 0
    assert [r["levels"] for r in d["resonances"]][:2] == [[4, 13], [4, 13]]
    assert all(r["cooperativity"] > 0 for r in d["resonances"])
    rows = noiseless_report.linewidth_slope_rows()
    assert [r[0] for r in rows] == [row[0] for row in WIDTH_FIT]
    table = noiseless_report.table()
    assert table.count("\n") == 8 and "R3+" in table


def test_empty_resonance_list(gd):
    m = synth.reference_map(field_step=10.0)
    rep = run_pipeline(m, gd, PERPENDICULAR, [])
    assert rep.resonances == []
    d = rep.to_dict()
    assert d["unperturbed_cavity"]["kappa_c_median"] == pytest.approx(5.84, rel=0.05)
    assert d["stage1"]["n_traces"] == m.fields.size


def test_abort_when_too_many_stage1_failures(gd, reference_locations):
    m = synth.reference_map(field_step=2.0)
    power = m.power.copy()
    loc = reference_locations["R2-"]
    # flatten most traces around R2-
    bad = np.abs(m.fields - loc.H_r) < 20
    power[bad] = 1.0
    flat = SpectrumMap(m.fields, m.freqs, power, m.metadata)
    targets = [ResonanceTarget("R2-", loc.transition, (30.0, 400.0))]
    rep = run_pipeline(flat, gd, PERPENDICULAR, targets, window=25.0)
    (r,) = rep.resonances
    assert r.aborted and r.width is None and "failed" in r.message
    assert np.all(~rep.series.ok[bad])


def test_no_resonance_in_bracket(gd):
    m = synth.reference_map(field_step=10.0)
    rep = run_pipeline(m, gd, PERPENDICULAR, [ResonanceTarget("X", (2, 13), (1000.0, 1400.0))])
    (r,) = rep.resonances
    assert r.location is None and r.aborted
