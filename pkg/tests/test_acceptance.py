"""Acceptance criteria 1-11; each test prints one PASS/FAIL line."""

import json
import math
import time

import numpy as np
import pytest
from scipy.stats import spearmanr

from spincavity.cavity import (
    CavityBackground,
    CavityParams,
    SpinResonance,
    perturbation,
    perturbed_cavity,
    synthesize_spectrum,
)
from spincavity.cli import main
from spincavity.constants import MU_B_MHZ_PER_G
from spincavity.fieldmap import (
    CHIP_NORMAL_ALONG_X,
    FieldMap,
    GridSpec,
    RegionMask,
    analytic_loop_field,
    ensemble_coupling,
    mode_volume,
    to_vacuum,
    vacuum_scale,
)
from spincavity.fitkit import cooperativity_value, run_pipeline, spin_count
from spincavity.presets import (
    GD_DENSITY_PER_UM3,
    KAPPA_C,
    N_TOTAL_SPINS,
    PARALLEL,
    PERPENDICULAR,
    TRANSITION_ELEMENTS,
    WIDTH_FIT,
)
from spincavity.spinham import Orientation, SpinSystem, basis_index, build_hamiltonian, eigensolve
from spincavity.transitions import NoResonanceError, find_resonance_field, transition_at

import synth

R2 = (2, 13)
PSI3_REF = 0.9989
PSI14_REF = (0.8376, 0.5415)


def _admixture(gd, h):
    """Largest amplitude of psi_3, and the two largest of psi_14, at field ``h``."""
    V = eigensolve(build_hamiltonian(gd, PERPENDICULAR.field(h))).states
    a3 = np.sort(np.abs(V[:, R2[0]]))[::-1]
    a14 = np.sort(np.abs(V[:, R2[1]]))[::-1]
    return a3[0], (a14[0], a14[1]), V


def _admixture_ok(a3, a14):
    return abs(a3 - PSI3_REF) <= 0.02 and all(abs(a - b) <= 0.02 for a, b in zip(a14, PSI14_REF))


# ---------------------------------------------------------------- 1


def test_criterion_1_admixture_in_scan_window(gd, report):
    t0 = time.perf_counter()
    hits, misses = [], 0
    for f in np.arange(17500.0, 18200.0 + 1e-9, 10.0):
        try:
            loc = find_resonance_field(gd, PERPENDICULAR, R2, f, (30.0, 400.0))[0]
        except NoResonanceError:
            misses += 1
            continue
        a3, a14, _ = _admixture(gd, loc.H_r)
        if _admixture_ok(a3, a14):
            hits.append(f)
    dt = time.perf_counter() - t0
    ok = bool(hits) and dt < 10
    detail = (f"admixture matched at {len(hits)} target frequencies in 17.5-18.2 GHz" if hits else
              f"levels 3/14 have no resonance field at any of the {misses} targets in 17.5-18.2 GHz "
              f"(the pair never drops below {_pair_minimum(gd):.0f} MHz)") + f"; {dt:.1f} s"
    assert report("criterion 1", ok, detail), detail


def _pair_minimum(gd):
    from spincavity.transitions import pair_frequencies

    h = np.linspace(-400, 400, 801)
    return float(pair_frequencies(gd, PERPENDICULAR, R2, h).min())


def test_criterion_1_diagnostic_at_reference_cavity(gd, report):
    """Same check where the pair does cross the cavity, at the reference 18.52 GHz."""
    loc = find_resonance_field(gd, PERPENDICULAR, R2, 18520.0, (30.0, 400.0))[0]
    a3, a14, V = _admixture(gd, loc.H_r)
    # the dominant components sit where the level diagram puts them
    assert np.argmax(np.abs(V[:, 2])) == basis_index(3.5, 1.5, -3.5, -0.5)
    assert np.argmax(np.abs(V[:, 13])) == basis_index(3.5, 1.5, 2.5, -0.5)
    ok = _admixture_ok(a3, a14)
    detail = f"H_r = {loc.H_r:.1f} G: |psi3| {a3:.4f}, |psi14| {a14[0]:.4f}/{a14[1]:.4f}"
    assert report("criterion 1 (18.52 GHz diagnostic)", ok, detail), detail


# ---------------------------------------------------------------- 2


def test_criterion_2_transition_elements(gd, report, reference_locations):
    t0 = time.perf_counter()
    worst = []
    ok = True
    for label, loc in reference_locations.items():
        t = transition_at(gd, PERPENDICULAR, loc.transition, loc.H_r)
        mx, mz, dsz = TRANSITION_ELEMENTS[label]
        row_ok = (abs(t.mx - mx) <= 0.05 and abs(t.dSz - dsz) <= 0.1
                  and abs(t.mx / t.my - 1) <= 0.01 and t.mz < 0.03)
        ok &= row_ok
        worst.append(f"{label} mx {t.mx:.3f} dSz {t.dSz:.2f}")
    dt = time.perf_counter() - t0
    ok &= dt < 30
    detail = "; ".join(worst) + f"; {dt:.1f} s"
    assert report("criterion 2", ok, detail), detail


# ---------------------------------------------------------------- 3


def test_criterion_3_forbiddenness_switch(gd, report, reference_locations):
    par = [transition_at(gd, PARALLEL, l.transition, l.H_r).mx for l in reference_locations.values()]
    perp = [transition_at(gd, PERPENDICULAR, l.transition, l.H_r).mx for l in reference_locations.values()]
    ok = max(par) < 1e-2 and min(perp) > 0.5
    detail = f"max |Sx| at beta=0: {max(par):.1e}; min |Sx| at beta=86.5: {min(perp):.3f}"
    assert report("criterion 3", ok, detail), detail


# ---------------------------------------------------------------- 4


def test_criterion_4_cavity_closed_forms(frozen, report):
    rng = np.random.default_rng(44)
    worst = 0.0
    for _ in range(100):
        f_c = rng.uniform(17000, 19000)
        kappa, g, gam = rng.uniform(0.5, 20, 3)
        p = CavityParams(f_c, kappa, g_c=g, gamma_s=gam)
        _, k0 = perturbed_cavity(p, 0.0)
        up, _ = perturbation(g, gam, gam)
        dn, _ = perturbation(g, gam, -gam)
        ext = g**2 / (2 * gam)
        worst = max(worst, abs(k0 / (kappa + g**2 / gam) - 1), abs(up / ext - 1), abs(dn / -ext - 1))
        # and they are the extrema
        near = perturbation(g, gam, gam * np.array([0.999, 1.001, -0.999, -1.001]))[0]
        assert np.all(near[:2] < up) and np.all(near[2:] > dn)
    # strong coupling: g = 10 kappa = 10 gamma
    g = 10 * KAPPA_C
    f0 = 2 * MU_B_MHZ_PER_G * 6430.0
    freqs = np.arange(f0 - 150, f0 + 150, 0.01)
    electron = SpinSystem(0.5, 0, 2.0, 2.0)
    smap = synthesize_spectrum(electron, Orientation(0.0), [SpinResonance((0, 1), g, KAPPA_C)],
                               CavityBackground(f0, KAPPA_C), [6430.0], freqs, detuning="probe")
    tr = smap.power[0]
    sep = freqs[freqs > f0][np.argmin(tr[freqs > f0])] - freqs[freqs < f0][np.argmin(tr[freqs < f0])]
    ok = worst <= 1e-10 and abs(sep / (2 * g) - 1) <= 0.10 and abs(sep - frozen["double_dip_separation_g58p4"]) < 0.02
    detail = (f"max relative error {worst:.1e} over 100 sets (shift +g^2/2gamma at D = +gamma); "
              f"double-dip separation {sep:.2f} MHz vs 2g = {2 * g:.1f}")
    assert report("criterion 4", ok, detail), detail


# ---------------------------------------------------------------- 5, 6, 11


@pytest.fixture(scope="module")
def cli_fit(tmp_path_factory):
    d = tmp_path_factory.mktemp("acceptance")
    t0 = time.perf_counter()
    assert main(["simulate", "--out", str(d), "--quiet"]) == 0
    assert main(["fit", str(d / "map.csv"), "--out", str(d), "--quiet"]) == 0
    return json.loads((d / "report.json").read_text()), time.perf_counter() - t0


def _noisy_trials(gd, n_seeds=50):
    cover, errs = [], []
    for seed in range(n_seeds):
        m = synth.reference_map(field_step=0.5, freq_step=0.5, noise_sigma=0.02, seed=seed)
        rep = run_pipeline(m, gd, PERPENDICULAR, synth.targets())
        for r, row in zip(rep.resonances, WIDTH_FIT):
            w = r.width
            for val, truth, err in ((w.gamma_s, row[3], w.uncertainties["gamma_s"]), (w.g_c, row[5], w.uncertainties["g_c"])):
                cover.append(abs(val - truth) <= 2 * err)
                errs.append(abs(val / truth - 1))
    return float(np.mean(cover)), float(np.max(errs))


def test_criterion_5_end_to_end_round_trip(gd, cli_fit, report):
    rep, t_cli = cli_fit
    noiseless = max(max(abs(r["width_fit"]["gamma_s"] / row[3] - 1), abs(r["width_fit"]["g_c"] / row[5] - 1))
                    for r, row in zip(rep["resonances"], WIDTH_FIT))
    t0 = time.perf_counter()
    coverage, noisy = _noisy_trials(gd)
    dt = t_cli + time.perf_counter() - t0
    ok = noiseless <= 0.05 and noisy <= 0.15 and coverage >= 0.90 and dt < 300
    detail = (f"noiseless max error {noiseless:.1%}; 2% noise over 50 seeds: max error {noisy:.1%}, "
              f"2-sigma coverage {coverage:.1%}; {dt:.0f} s")
    assert report("criterion 5", ok, detail), detail


def test_criterion_6_cooperativity_range(cli_fit, report):
    rep, _ = cli_fit
    cs = {r["label"]: r["cooperativity"] for r in rep["resonances"]}
    out = {k: v for k, v in cs.items() if not 0.14 <= v <= 0.47}
    ok = not out
    detail = ", ".join(f"{k} {v:.3f}" for k, v in cs.items())
    if out:
        detail += f"; outside [0.14, 0.47]: {', '.join(out)} (truth g=5.0, gamma=9.0 gives " \
                  f"{cooperativity_value(5.0, KAPPA_C, 9.0):.4f})"
    assert report("criterion 6", ok, detail), detail


def test_criterion_11_monotone_linewidth_vs_slope(gd, report):
    gammas = np.linspace(6.0, 12.0, 6)
    rep = run_pipeline(synth.reference_map(gammas=gammas), gd, PERPENDICULAR, synth.targets())
    slopes, fitted = zip(*[(x, y) for _, x, y, _ in rep.linewidth_slope_rows()])
    rho = spearmanr(slopes, fitted).statistic
    ok = len(fitted) == 6 and rho == 1.0
    detail = f"Spearman rho = {rho:.3f} over {len(fitted)} resonances; gamma_s " + \
             ", ".join(f"{g:.2f}" for g in fitted)
    assert report("criterion 11", ok, detail), detail


# ---------------------------------------------------------------- 7, 8


def test_criterion_7_spin_count(report):
    n = spin_count(N_TOTAL_SPINS, 1.5, KAPPA_C, KAPPA_C / 0.558)
    ok = abs(n / 7.55e7 - 1) <= 0.01
    detail = f"N_s = {n:.4g} vs 7.55e7 ({n / 7.55e7 - 1:+.2%})"
    assert report("criterion 7", ok, detail), detail


def test_criterion_8_vacuum_power(report):
    vs = vacuum_scale(18000.0, 5.84)
    ok = abs(vs.power_dBm + 126.7) <= 0.3
    detail = f"P_vac = {vs.power_W:.3e} W = {vs.power_dBm:.2f} dBm vs -126.7 dBm"
    assert report("criterion 8", ok, detail), detail


# ---------------------------------------------------------------- 9, 10


def _loop(step):
    grid = GridSpec.from_bounds((-25, -25, -8), (25, 25, 8), step)
    fm = analytic_loop_field(15.0, grid, power_dbm=-81.0, f_c=18520.0, kappa_c=KAPPA_C)
    return fm, RegionMask.slab(fm, 0.0, 3.0)


def test_criterion_9_mode_volume(report):
    grid = GridSpec.from_bounds((0, 0, 0), (10, 8, 6), 1.0)
    X, Y, Z = grid.mesh()
    box = (X > 2) & (X < 7) & (Y < 4)
    z = np.zeros(grid.dims)
    fm = FieldMap(grid, np.where(box, 2.0, 0.0), z, z)
    v_box = mode_volume(fm, RegionMask.from_predicates(fm, lambda x, y, z: (x > 2) & (x < 7) & (y < 4)))
    two = FieldMap(grid, np.where(X < 3, 2.0, 1.0), z, z)
    v_two = mode_volume(two, RegionMask.from_predicates(two, lambda x, y, z: x < 3))
    closed = 144.0**2 / (144.0 + 336.0 / 16)
    v_coarse = mode_volume(*_loop(0.5))
    v_fine = mode_volume(*_loop(0.25))
    ok = (v_box == box.sum() and abs(v_two / closed - 1) <= 1e-6 and abs(v_coarse / v_fine - 1) < 0.02)
    detail = (f"box {v_box:g} vs {box.sum()}; two-level rel. error {abs(v_two / closed - 1):.1e}; "
              f"loop V_m {v_coarse:.0f} / {v_fine:.0f} um^3 at 0.5 / 0.25 um "
              f"({abs(v_coarse / v_fine - 1):.2%}); same order as 1100 um^3, not a numeric gate")
    assert report("criterion 9", ok, detail), detail


def test_criterion_10_ensemble_coupling(gd, report, background):
    from spincavity.cavity import locate_on_background

    loc = locate_on_background(gd, PERPENDICULAR, R2, background, (30.0, 400.0))
    t = transition_at(gd, PERPENDICULAR, R2, loc.H_r)
    fm, mask = _loop(0.5)
    vac = to_vacuum(fm, 18520.0, KAPPA_C)
    ec = ensemble_coupling(vac, mask, t.elements, gd.I, GD_DENSITY_PER_UM3, KAPPA_C, 8.1,
                           abundance=gd.abundance, frame=CHIP_NORMAL_ALONG_X)
    ok = 1.0 <= ec.full <= 8.0
    detail = f"g_c/2pi = {ec.full:.2f} MHz (x-dominant {ec.x_dominant:.2f}) for R2- at {loc.H_r:.1f} G"
    assert report("criterion 10", ok, detail), detail
