"""Two-stage extraction of spin decoherence rate and coupling from reflection maps.

Stage 1 fits a Lorentzian dip to every frequency trace, giving the perturbed
cavity centre ``f_c'(H0)`` and HWHM ``kappa_c'(H0)``. Stage 2 fits those
series around each spin resonance with the dispersive and absorptive
perturbation shapes on a linear background, using the detuning polynomial

    D(H0) = (H_r - H0) [a1 + a2 (H_r + H0)]

from the spin Hamiltonian.
"""

from __future__ import annotations

import json
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Sequence

import numpy as np
from numpy.typing import NDArray
from scipy import stats

from .cavity import SpectrumMap
from .constants import GAMMA_E_MHZ_PER_G
from .lsq import LeastSquaresResult, RankDeficiencyError, least_squares
from .spinham import Orientation, SpinSystem
from .transitions import NoResonanceError, ResonanceLocation, find_resonance_field

log = logging.getLogger(__name__)

#: Cooperativity range reported for the reference sample.
REFERENCE_C_RANGE = (0.15, 0.45)


class NoDipError(ValueError):
    """The trace shows no dip above the noise."""


# ---------------------------------------------------------------- stage 1


def lorentzian_dip(params, f):
    """``c - A w / ((f - f0)^2 + w^2)``; depth ``A/w``, HWHM ``w``."""
    c, A, f0, w = params
    return c - A * w / ((f - f0) ** 2 + w**2)


@dataclass(frozen=True)
class LorentzianFitResult:
    c: float
    A: float
    f_c_prime: float
    kappa_c_prime: float
    rss: float
    converged: bool
    covariance: NDArray
    stderr: NDArray
    #: F-test p-value of the dip model against a flat line
    p_value: float = 0.0
    #: the dip model is not significantly better than a flat line
    flat_preferred: bool = False

    @property
    def depth(self) -> float:
        return self.A / self.kappa_c_prime


def estimate_noise(y: NDArray) -> float:
    """Robust noise level from second differences (insensitive to smooth signal)."""
    d2 = np.diff(np.asarray(y, dtype=float), 2)
    if d2.size == 0:
        return 0.0
    return float(1.4826 * np.median(np.abs(d2 - np.median(d2))) / np.sqrt(6.0))


def _initial_lorentzian(f: NDArray, y: NDArray) -> tuple[float, float, float, float]:
    n = f.size
    q = max(n // 4, 1)
    c = float(np.median(np.concatenate([y[:q], y[-q:]])))
    k = int(np.argmin(y))
    f0 = float(f[k])
    depth = c - float(y[k])
    half = c - depth / 2
    lo = k
    while lo > 0 and y[lo] < half:
        lo -= 1
    hi = k
    while hi < n - 1 and y[hi] < half:
        hi += 1
    w = 0.5 * float(f[hi] - f[lo])
    w = max(w, float(np.min(np.diff(f))))
    return c, depth * w, f0, w


def fit_lorentzian_trace(freqs, power, noise: float | None = None, alpha: float = 0.05) -> LorentzianFitResult:
    """Fit ``c - A w/((f - f0)^2 + w^2)`` to one frequency trace.

    Parameters
    ----------
    freqs, power : array_like
        At least 8 points; ``freqs`` ascending.
    noise : float, optional
        Noise level; estimated from the data when omitted.
    alpha : float
        Significance of the F-test against the flat model.

    Raises
    ------
    NoDipError
        If the minimum is not below the baseline by more than the noise.
    """
    f = np.asarray(freqs, dtype=float)
    y = np.asarray(power, dtype=float)
    if f.size < 8:
        raise ValueError("a trace needs at least 8 points")
    if f.size != y.size:
        raise ValueError("freqs and power differ in length")
    order = np.argsort(f)
    f, y = f[order], y[order]
    c0, A0, f00, w0 = _initial_lorentzian(f, y)
    sigma = estimate_noise(y) if noise is None else float(noise)
    depth = c0 - float(np.min(y))
    scale = max(abs(c0), 1e-300)
    if depth <= max(3 * sigma, 1e-9 * scale):
        raise NoDipError(f"no dip: depth {depth:.3g} vs noise {sigma:.3g}")
    # centre the frequency axis for conditioning
    fm = 0.5 * (f[0] + f[-1])
    span = f[-1] - f[0]
    fit = least_squares(
        lorentzian_dip,
        f - fm,
        y,
        [c0, A0, f00 - fm, w0],
        bounds=([-np.inf, -np.inf, -span, 1e-6 * span], [np.inf, np.inf, span, 10 * span]),
        names=("c", "A", "f_c_prime", "kappa_c_prime"),
    )
    c, A, f0, w = fit.params
    rss_flat = float(np.sum((y - y.mean()) ** 2))
    dof = f.size - 4
    if fit.rss <= 0:
        p_value = 0.0
    else:
        F = ((rss_flat - fit.rss) / 3) / (fit.rss / dof)
        p_value = float(stats.f.sf(F, 3, dof)) if F > 0 else 1.0
    return LorentzianFitResult(
        c=float(c),
        A=float(A),
        f_c_prime=float(f0 + fm),
        kappa_c_prime=float(w),
        rss=fit.rss,
        converged=fit.converged,
        covariance=fit.covariance,
        stderr=fit.stderr,
        p_value=p_value,
        flat_preferred=p_value > alpha,
    )


@dataclass
class TraceSeries:
    """Stage-1 output: perturbed cavity centre and width per field."""

    fields: NDArray
    f_c_prime: NDArray
    kappa_c_prime: NDArray
    f_err: NDArray
    kappa_err: NDArray
    #: True where the stage-1 fit succeeded
    ok: NDArray
    failures: dict = field(default_factory=dict)


def _fit_one(freqs, power, noise):
    try:
        return fit_lorentzian_trace(freqs, power, noise=noise)
    except (NoDipError, RankDeficiencyError, ValueError) as exc:
        return str(exc)


def fit_map_traces(smap: SpectrumMap, noise: float | None = None, threads: int = 1) -> TraceSeries:
    """Stage-1 fit of every trace; failures are recorded by field index, not raised."""
    n = smap.fields.size
    fc = np.full(n, np.nan)
    kc = np.full(n, np.nan)
    fe = np.full(n, np.nan)
    ke = np.full(n, np.nan)
    ok = np.zeros(n, dtype=bool)
    failures = {}
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(lambda k: _fit_one(smap.freqs, smap.power[k], noise), range(n)))
    else:
        results = [_fit_one(smap.freqs, smap.power[k], noise) for k in range(n)]
    for k, r in enumerate(results):
        if isinstance(r, str):
            failures[k] = r
            continue
        if not r.converged or r.flat_preferred:
            failures[k] = "non-converged" if not r.converged else "flat model preferred"
            continue
        fc[k], kc[k] = r.f_c_prime, r.kappa_c_prime
        fe[k], ke[k] = r.stderr[2], r.stderr[3]
        ok[k] = True
    if failures:
        log.info("stage 1: %d of %d traces excluded", len(failures), n)
    return TraceSeries(smap.fields.copy(), fc, kc, fe, ke, ok, failures)


# ---------------------------------------------------------------- stage 2


def detuning_poly(h, H_r, a1, a2):
    h = np.asarray(h, dtype=float)
    return (H_r - h) * (a1 + a2 * (H_r + h))


def width_model(params, h, a1, a2):
    """``kappa0 + m (H_r - H0) + A gamma / (D^2 + gamma^2)``; params (kappa0, m, A, gamma, H_r)."""
    k0, m, A, gam, H_r = params
    D = detuning_poly(h, H_r, a1, a2)
    return k0 + m * (H_r - h) + A * gam / (D**2 + gam**2)


def shift_model(params, h, a1, a2):
    """``f_c + m (H_r - H0) + A D / (D^2 + gamma^2)``; params (f_c, m, A, gamma, H_r)."""
    f0, m, A, gam, H_r = params
    D = detuning_poly(h, H_r, a1, a2)
    return f0 + m * (H_r - h) + A * D / (D**2 + gam**2)


def _perturbation_only(which, params, h, a1, a2):
    p = np.array(params, dtype=float)
    p[0] = 0.0
    p[1] = 0.0
    return (width_model if which == "width" else shift_model)(p, h, a1, a2)


@dataclass(frozen=True)
class ResonanceFitResult:
    which: str
    gamma_s: float
    g_c: float
    #: kappa_0 for width fits, f_c for shift fits
    baseline: float
    m: float
    H_r: float
    A: float
    uncertainties: dict
    converged: bool
    coupling_detected: bool = True
    gamma_identifiable: bool = True
    rss: float = 0.0
    n_points: int = 0
    a1: float = 0.0
    a2: float = 0.0
    message: str = ""

    def params(self) -> NDArray:
        return np.array([self.baseline, self.m, self.A, self.gamma_s, self.H_r])

    def model(self, h) -> NDArray:
        fn = width_model if self.which == "width" else shift_model
        return fn(self.params(), h, self.a1, self.a2)

    def perturbation(self, h) -> NDArray:
        return _perturbation_only(self.which, self.params(), h, self.a1, self.a2)

    def to_dict(self) -> dict:
        d = asdict(self)
        return d


def _no_coupling(which, h, y, loc, message) -> ResonanceFitResult:
    # background-only fit for reporting
    A = np.column_stack([np.ones_like(h), loc.H_r - h])
    coef, *_ = np.linalg.lstsq(A, y, rcond=None)
    rss = float(np.sum((A @ coef - y) ** 2))
    return ResonanceFitResult(
        which=which,
        gamma_s=float("nan"),
        g_c=0.0,
        baseline=float(coef[0]),
        m=float(coef[1]),
        H_r=loc.H_r,
        A=0.0,
        uncertainties={"gamma_s": float("nan"), "g_c": float("nan")},
        converged=True,
        coupling_detected=False,
        gamma_identifiable=False,
        rss=rss,
        n_points=int(h.size),
        a1=loc.a1,
        a2=loc.a2,
        message=message,
    )


def _initial_guess(which, h, y, loc, gamma0):
    slope = abs(loc.a1 + 2 * loc.a2 * loc.H_r) or 1.0
    edge = max(h.size // 6, 2)
    ends = np.concatenate([y[:edge], y[-edge:]])
    he = np.concatenate([h[:edge], h[-edge:]])
    Amat = np.column_stack([np.ones_like(he), loc.H_r - he])
    (b0, m0), *_ = np.linalg.lstsq(Amat, ends, rcond=None)
    resid = y - (b0 + m0 * (loc.H_r - h))
    if which == "width":
        k = int(np.argmax(resid))
        peak = max(float(resid[k]), 1e-9)
        above = h[resid >= 0.5 * peak]
        if above.size == 0:
            above = h[k:k + 1]
        if gamma0 is None:
            gamma0 = max(0.5 * float(above.max() - above.min()) * slope, 0.1)
        return [b0, m0, peak * gamma0, gamma0, float(h[k])]
    # shift: extrema of the dispersive shape sit at D = -/+ gamma
    kmax, kmin = int(np.argmax(resid)), int(np.argmin(resid))
    pp = float(resid[kmax] - resid[kmin])
    if gamma0 is None:
        gamma0 = max(0.5 * abs(float(h[kmax] - h[kmin])) * slope, 0.1)
    return [b0, m0, max(pp, 1e-9) * gamma0, gamma0, loc.H_r]


def fit_resonance(
    h,
    y,
    loc: ResonanceLocation,
    which: str = "width",
    init: Sequence[float] | None = None,
    sigma=None,
    gamma0: float | None = None,
) -> ResonanceFitResult:
    """Fit one resonance in a ``kappa_c'(H0)`` (``which="width"``) or ``f_c'(H0)`` series.

    Parameters
    ----------
    h, y : array_like
        Field points (G) and the series (MHz) inside the fit window.
    loc : ResonanceLocation
        Supplies the detuning polynomial ``(a1, a2)`` and the starting ``H_r``.
    init : sequence, optional
        Starting (baseline, m, A, gamma, H_r); a heuristic is used otherwise.

    Returns
    -------
    ResonanceFitResult
        ``g_c = sqrt(A)``. A negative fitted ``A`` is reported as no coupling.
    """
    if which not in ("width", "shift"):
        raise ValueError("which must be 'width' or 'shift'")
    h = np.asarray(h, dtype=float)
    y = np.asarray(y, dtype=float)
    good = np.isfinite(h) & np.isfinite(y)
    h, y = h[good], y[good]
    if sigma is not None:
        sigma = np.asarray(sigma, dtype=float)[good]
    if h.size < 6:
        raise ValueError("at least 6 points are needed for a resonance fit")
    fn = width_model if which == "width" else shift_model

    def model(p, x):
        return fn(p, x, loc.a1, loc.a2)

    names = ("baseline", "m", "A", "gamma_s", "H_r")
    span = float(h.max() - h.min())
    bounds = ([-np.inf, -np.inf, -np.inf, 1e-3, h.min() - span], [np.inf, np.inf, np.inf, np.inf, h.max() + span])
    starts = [list(init)] if init is not None else []
    base = _initial_guess(which, h, y, loc, gamma0)
    for fac in (1.0, 0.5, 2.0):
        s = list(base)
        s[3] = base[3] * fac
        s[2] = base[2] * fac
        starts.append(s)
    best: LeastSquaresResult | None = None
    last_error = None
    for s in starts:
        s[3] = max(s[3], 2e-3)
        s[4] = float(np.clip(s[4], bounds[0][4], bounds[1][4]))
        try:
            r = least_squares(model, h, y, s, bounds=bounds, names=names, sigma=sigma)
        except RankDeficiencyError as exc:
            last_error = exc
            continue
        if best is None or r.rss < best.rss:
            best = r
    if best is None:
        return _no_coupling(which, h, y, loc, f"unidentifiable: {last_error}")
    b, m, A, gam, H_r = map(float, best.params)
    if A <= 0:
        return _no_coupling(which, h, y, loc, "fitted A is not positive: no coupling detected")
    err = dict(zip(names, map(float, best.stderr)))
    g = float(np.sqrt(A))
    err["g_c"] = err["A"] / (2 * g)
    identifiable = bool(np.isfinite(err["gamma_s"]) and err["gamma_s"] < gam)
    return ResonanceFitResult(
        which=which,
        gamma_s=gam,
        g_c=g,
        baseline=b,
        m=m,
        H_r=H_r,
        A=A,
        uncertainties=err,
        converged=best.converged,
        coupling_detected=True,
        gamma_identifiable=identifiable,
        rss=best.rss,
        n_points=int(h.size),
        a1=loc.a1,
        a2=loc.a2,
        message=best.message,
    )


def spin_count(N_tot: float, I: float, kappa_c: float, gamma_s: float,
               abundance: float = 0.304, clamp: bool = False) -> float:
    """Spins excited per transition, ``abundance * N_tot/(2I+1) * kappa_c/gamma_s``.

    ``clamp`` limits the selectivity ``kappa_c/gamma_s`` to 1.
    """
    if min(N_tot, kappa_c, gamma_s) <= 0 or I < 0:
        raise ValueError("N_tot, kappa_c and gamma_s must be positive")
    ratio = kappa_c / gamma_s
    if clamp:
        ratio = min(ratio, 1.0)
    return abundance * N_tot / (2 * I + 1) * ratio


def cooperativity_value(g_c: float, kappa_c: float, gamma_s: float) -> float:
    return g_c**2 / (kappa_c * gamma_s)


# ---------------------------------------------------------------- pipeline


@dataclass(frozen=True)
class ResonanceTarget:
    """A resonance to extract: 0-based level pair and the field interval it lives in."""

    label: str
    pair: tuple[int, int]
    bracket: tuple[float, float]


@dataclass
class ResonanceReport:
    label: str
    pair: tuple[int, int]
    location: ResonanceLocation | None
    width: ResonanceFitResult | None
    shift: ResonanceFitResult | None
    window: tuple[float, float] = (0.0, 0.0)
    aborted: bool = False
    message: str = ""

    @property
    def cooperativity(self) -> float:
        if self.width is None or not self.width.coupling_detected:
            return float("nan")
        return cooperativity_value(self.width.g_c, self.width.baseline, self.width.gamma_s)

    def to_dict(self) -> dict:
        loc = self.location
        return {
            "label": self.label,
            "levels": [self.pair[0] + 1, self.pair[1] + 1],
            "H_r": None if loc is None else loc.H_r,
            "slope_MHz_per_G": None if loc is None else loc.slope,
            "slope_in_gamma_e": None if loc is None else loc.slope_in_gamma_e,
            "a1": None if loc is None else loc.a1,
            "a2": None if loc is None else loc.a2,
            "window": list(self.window),
            "aborted": self.aborted,
            "message": self.message,
            "cooperativity": _finite_or_none(self.cooperativity),
            "width_fit": None if self.width is None else _clean(self.width.to_dict()),
            "shift_fit": None if self.shift is None else _clean(self.shift.to_dict()),
        }


def _finite_or_none(v):
    return float(v) if v is not None and np.isfinite(v) else None


def _clean(d):
    if isinstance(d, dict):
        return {k: _clean(v) for k, v in d.items()}
    if isinstance(d, (list, tuple)):
        return [_clean(v) for v in d]
    if isinstance(d, (float, np.floating)):
        return _finite_or_none(d)
    if isinstance(d, (np.integer, np.bool_)):
        return d.item()
    return d


@dataclass
class PipelineReport:
    series: TraceSeries
    resonances: list[ResonanceReport]

    def to_dict(self) -> dict:
        s = self.series
        return {
            "stage1": {
                "n_traces": int(s.fields.size),
                "n_failed": int((~s.ok).sum()),
                "failed_fields": [float(s.fields[k]) for k in sorted(s.failures)],
            },
            "unperturbed_cavity": {
                "f_c_median": _finite_or_none(np.nanmedian(s.f_c_prime)) if s.ok.any() else None,
                "kappa_c_median": _finite_or_none(np.nanmedian(s.kappa_c_prime)) if s.ok.any() else None,
            },
            "cooperativity_reference_range": list(REFERENCE_C_RANGE),
            "resonances": [r.to_dict() for r in self.resonances],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    def linewidth_slope_rows(self) -> list[tuple[str, float, float, float]]:
        """(label, slope in gamma_e units, width-fit gamma_s, its 1-sigma)."""
        rows = []
        for r in self.resonances:
            if r.location is None or r.width is None or not r.width.coupling_detected:
                continue
            rows.append((r.label, r.location.slope_in_gamma_e, r.width.gamma_s, r.width.uncertainties["gamma_s"]))
        return rows

    def table(self) -> str:
        """Aligned text table: width-fit and shift-fit gamma_s and g_c per resonance."""
        head = f"{'':6s} {'levels':>7s} {'H_r (G)':>9s} {'slope/ge':>9s} " \
               f"{'gamma_w':>15s} {'g_w':>13s} {'gamma_f':>15s} {'g_f':>13s} {'C':>6s}"
        lines = [head, "-" * len(head)]

        def pm(res, key, unc):
            if res is None or not res.coupling_detected:
                return "n/a"
            v = getattr(res, key)
            e = res.uncertainties.get(unc, float("nan"))
            return f"{v:.2f}+/-{e:.2f}"

        for r in self.resonances:
            loc = r.location
            hr = f"{loc.H_r:9.2f}" if loc else f"{'-':>9s}"
            sl = f"{loc.slope_in_gamma_e:9.4f}" if loc else f"{'-':>9s}"
            c = r.cooperativity
            lines.append(
                f"{r.label:6s} {f'{r.pair[0] + 1}->{r.pair[1] + 1}':>7s} {hr} {sl} "
                f"{pm(r.width, 'gamma_s', 'gamma_s'):>15s} {pm(r.width, 'g_c', 'g_c'):>13s} "
                f"{pm(r.shift, 'gamma_s', 'gamma_s'):>15s} {pm(r.shift, 'g_c', 'g_c'):>13s} "
                f"{(f'{c:.3f}' if np.isfinite(c) else 'n/a'):>6s}"
            )
        return "\n".join(lines) + "\n"


def _windows(centres: list[float], brackets: list[tuple[float, float]], half: float) -> list[tuple[float, float]]:
    out = []
    for j, (hc, (blo, bhi)) in enumerate(zip(centres, brackets)):
        lo, hi = hc - half, hc + half
        for k, other in enumerate(centres):
            if k == j:
                continue
            mid = 0.5 * (hc + other)
            if other > hc:
                hi = min(hi, mid)
            elif other < hc:
                lo = max(lo, mid)
        out.append((max(lo, blo), min(hi, bhi)))
    return out


def _weights(err: NDArray) -> NDArray | None:
    """Stage-1 standard errors as stage-2 weights; None when they carry no information."""
    med = float(np.nanmedian(err)) if err.size else 0.0
    if not np.isfinite(med) or med <= 0:
        return None
    return np.maximum(np.nan_to_num(err, nan=med), 1e-3 * med)


def run_pipeline(
    smap: SpectrumMap,
    sys: SpinSystem,
    orientation: Orientation,
    targets: Sequence[ResonanceTarget],
    window: float = 150.0,
    backfit_passes: int = 3,
    max_failure_fraction: float = 0.3,
    noise: float | None = None,
    track_cavity: bool = True,
    scan_step: float = 5.0,
    threads: int = 1,
) -> PipelineReport:
    """Stage 1 per trace, then width and shift fits per target resonance.

    The stage-2 window is ``H_r +/- window`` clipped to half the distance to
    neighbouring targets and to the target bracket. Overlapping tails are
    handled by backfitting: each resonance is refitted after subtracting the
    current perturbation estimates of all others.

    With ``track_cavity`` the detuning is measured from the probe, which
    follows the cavity background, to the spin transition: the fitted
    shift-background slope ``m`` is added to ``a1`` for subsequent passes.
    Without it the detuning is ``omega_s(H_r) - omega_s(H0)`` only.
    """
    series = fit_map_traces(smap, noise=noise, threads=threads)
    h_all = series.fields
    reports: list[ResonanceReport] = []
    if not targets:
        return PipelineReport(series, reports)

    # initial resonance fields from the median cavity frequency in each bracket
    locs: list[ResonanceLocation | None] = []
    for t in targets:
        inb = (h_all >= min(t.bracket)) & (h_all <= max(t.bracket)) & series.ok
        f_target = float(np.median(series.f_c_prime[inb])) if inb.any() else float(np.nanmedian(series.f_c_prime))
        try:
            cand = find_resonance_field(sys, orientation, t.pair, f_target, t.bracket, scan_step=scan_step)
            locs.append(cand[0])
        except NoResonanceError as exc:
            log.warning("%s: %s", t.label, exc)
            locs.append(None)

    active = [k for k, l in enumerate(locs) if l is not None]
    centres = [locs[k].H_r for k in active]
    wins = dict(zip(active, _windows(centres, [tuple(sorted(targets[k].bracket)) for k in active], window)))

    width_fits: dict[int, ResonanceFitResult] = {}
    shift_fits: dict[int, ResonanceFitResult] = {}
    aborted: dict[int, str] = {}
    cavity_slope: dict[int, float] = {}

    def others(which, k, h):
        total = np.zeros_like(h)
        fits = width_fits if which == "width" else shift_fits
        for j, res in fits.items():
            if j == k or not res.coupling_detected:
                continue
            lo, hi = sorted(targets[j].bracket)
            inside = (h >= lo) & (h <= hi)
            total[inside] += res.perturbation(h[inside])
        return total

    for _ in range(max(backfit_passes, 1)):
        for k in active:
            lo, hi = wins[k]
            inw = (h_all >= lo) & (h_all <= hi)
            n_in = int(inw.sum())
            frac_fail = 1.0 - (series.ok & inw).sum() / n_in if n_in else 1.0
            if n_in == 0 or frac_fail > max_failure_fraction:
                aborted[k] = f"{frac_fail:.0%} of stage-1 fits failed in the window"
                continue
            sel = inw & series.ok
            h = h_all[sel]
            loc = locs[k]
            if k in cavity_slope:
                loc = replace(loc, a1=loc.a1 + cavity_slope[k])
            prev_w = width_fits.get(k)
            prev_s = shift_fits.get(k)
            try:
                yw = series.kappa_c_prime[sel] - others("width", k, h)
                width_fits[k] = fit_resonance(h, yw, loc, "width", sigma=_weights(series.kappa_err[sel]),
                                              init=None if prev_w is None or not prev_w.coupling_detected else prev_w.params())
                ys = series.f_c_prime[sel] - others("shift", k, h)
                g0 = width_fits[k].gamma_s if width_fits[k].coupling_detected else None
                shift_fits[k] = fit_resonance(h, ys, loc, "shift", gamma0=g0, sigma=_weights(series.f_err[sel]),
                                              init=None if prev_s is None or not prev_s.coupling_detected else prev_s.params())
            except ValueError as exc:
                aborted[k] = str(exc)
                continue
            # refresh the detuning polynomial on the fitted cavity frequency
            sf = shift_fits[k]
            f_ref = sf.baseline if sf.coupling_detected else float(np.median(series.f_c_prime[sel]))
            try:
                cand = find_resonance_field(sys, orientation, targets[k].pair, f_ref, targets[k].bracket,
                                            scan_step=scan_step)
                locs[k] = min(cand, key=lambda r: abs(r.H_r - loc.H_r))
            except NoResonanceError:
                pass
            if track_cavity and sf.coupling_detected:
                cavity_slope[k] = sf.m

    for k, t in enumerate(targets):
        if locs[k] is None:
            reports.append(ResonanceReport(t.label, t.pair, None, None, None, aborted=True,
                                           message="no resonance inside the bracket"))
            continue
        msg = aborted.get(k, "")
        reports.append(
            ResonanceReport(
                t.label,
                t.pair,
                locs[k],
                None if msg else width_fits.get(k),
                None if msg else shift_fits.get(k),
                window=wins[k],
                aborted=bool(msg),
                message=msg,
            )
        )
    return PipelineReport(series, reports)
