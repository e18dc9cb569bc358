"""Transitions, resonance fields and local field dependence of transition frequencies.

Level indices are 0-based in the Python API (level ``k`` is the k-th lowest
eigenvalue). Files and reports use 1-based level numbers.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray
from scipy.optimize import brentq, linear_sum_assignment

from .constants import GAMMA_E_MHZ_PER_G
from .spinham import (
    EigenSolution,
    Orientation,
    SpinSystem,
    eigensolve,
    eigensolve_stack,
    hamiltonian_stack,
    product_operators,
)


class NoResonanceError(ValueError):
    """The transition frequency does not cross the target inside the bracket."""


class TrackingError(RuntimeError):
    """Level tracking by eigenvector overlap became ambiguous."""

    def __init__(self, message: str, field_G: float):
        super().__init__(f"{message} at H0 = {field_G:.3f} G")
        self.field_G = field_G


@dataclass(frozen=True)
class Transition:
    i: int
    f: int
    freq: float
    mx: float
    my: float
    mz: float
    dSz: float
    dIz: float
    #: complex <f|S_a|i> for a = x, y, z
    elements: tuple[complex, complex, complex] = (0j, 0j, 0j)

    @property
    def levels(self) -> tuple[int, int]:
        """1-based level numbers."""
        return self.i + 1, self.f + 1


def _transition(eig: EigenSolution, ops, i: int, f: int) -> Transition:
    a = eig.states[:, i]
    b = eig.states[:, f]
    ex = complex(b.conj() @ ops.Sx @ a)
    ey = complex(b.conj() @ ops.Sy @ a)
    ez = complex(b.conj() @ ops.Sz @ a)
    sz_i = float(np.real(a.conj() @ ops.Sz @ a))
    sz_f = float(np.real(b.conj() @ ops.Sz @ b))
    iz_i = float(np.real(a.conj() @ ops.Iz @ a))
    iz_f = float(np.real(b.conj() @ ops.Iz @ b))
    return Transition(
        i=i,
        f=f,
        freq=float(eig.energies[f] - eig.energies[i]),
        mx=abs(ex),
        my=abs(ey),
        mz=abs(ez),
        dSz=abs(sz_f - sz_i),
        dIz=abs(iz_f - iz_i),
        elements=(ex, ey, ez),
    )


def transition_table(
    eig: EigenSolution,
    sys: SpinSystem,
    min_element: float | None = None,
    freq_window: tuple[float, float] | None = None,
) -> list[Transition]:
    """All level pairs ``i < f`` with their spin matrix elements.

    ``min_element`` keeps pairs whose largest of (mx, my, mz) reaches it;
    ``freq_window`` keeps pairs with ``lo <= freq <= hi`` (MHz).
    """
    ops = product_operators(sys.S, sys.I)
    V = eig.states
    # all elements at once: M_a[f, i] = <f|S_a|i>
    Mx = V.conj().T @ ops.Sx @ V
    My = V.conj().T @ ops.Sy @ V
    Mz = V.conj().T @ ops.Sz @ V
    sz = np.real(np.diag(Mz))
    iz = np.real(np.einsum("ki,kl,li->i", V.conj(), ops.Iz, V))
    out = []
    n = eig.dim
    for i in range(n):
        for f in range(i + 1, n):
            freq = float(eig.energies[f] - eig.energies[i])
            if freq_window is not None and not (freq_window[0] <= freq <= freq_window[1]):
                continue
            t = Transition(
                i=i,
                f=f,
                freq=freq,
                mx=abs(Mx[f, i]),
                my=abs(My[f, i]),
                mz=abs(Mz[f, i]),
                dSz=abs(sz[f] - sz[i]),
                dIz=abs(iz[f] - iz[i]),
                elements=(complex(Mx[f, i]), complex(My[f, i]), complex(Mz[f, i])),
            )
            if min_element is not None and max(t.mx, t.my, t.mz) < min_element:
                continue
            out.append(t)
    return out


def transition_at(sys: SpinSystem, orientation: Orientation, pair: tuple[int, int], h: float) -> Transition:
    """The transition between levels ``pair`` at signed field ``h``."""
    from .spinham import build_hamiltonian

    eig = eigensolve(build_hamiltonian(sys, orientation.field(h)))
    return _transition(eig, product_operators(sys.S, sys.I), *pair)


def pair_frequencies(sys: SpinSystem, orientation: Orientation, pair: tuple[int, int], fields) -> NDArray:
    """E_f - E_i by raw (sorted) level index at each signed field; continuous in H0."""
    fields = np.atleast_1d(np.asarray(fields, dtype=float))
    w = np.linalg.eigvalsh(hamiltonian_stack(sys, orientation, fields))
    return w[:, pair[1]] - w[:, pair[0]]


@dataclass(frozen=True)
class FrequencyCurve:
    fields: NDArray
    freqs: NDArray
    #: raw level indices followed at each field point, shape (n, 2)
    indices: NDArray
    pair: tuple[int, int]

    def interpolate(self, h) -> NDArray:
        return np.interp(h, self.fields, self.freqs)


def _track(V: NDArray, start: list[int], fields: NDArray, ambiguity: float) -> NDArray:
    idx = np.empty((len(fields), len(start)), dtype=int)
    idx[0] = start
    for n in range(1, len(fields)):
        for c, prev in enumerate(idx[n - 1]):
            ov = np.abs(V[n].conj().T @ V[n - 1][:, prev])
            order = np.argsort(ov)[::-1]
            if ov[order[0]] - ov[order[1]] < ambiguity:
                raise TrackingError(
                    f"ambiguous overlap for level {prev + 1} "
                    f"({ov[order[0]]:.4f} vs {ov[order[1]]:.4f})",
                    float(fields[n]),
                )
            idx[n, c] = order[0]
    return idx


def frequency_curve(
    sys: SpinSystem,
    orientation: Orientation,
    pair: tuple[int, int],
    H_range: tuple[float, float],
    step: float,
    ambiguity: float = 1e-3,
) -> FrequencyCurve:
    """Transition frequency of a level pair followed by eigenvector continuity.

    ``pair`` names the levels at the first field point; at each next point
    each level is matched to the eigenvector of maximal overlap with it.
    """
    lo, hi = H_range
    if not hi > lo:
        raise ValueError("H_range must be ascending")
    if step <= 0:
        raise ValueError("step must be positive")
    n = int(np.floor((hi - lo) / step + 1e-9)) + 1
    fields = lo + step * np.arange(n)
    w, V = eigensolve_stack(hamiltonian_stack(sys, orientation, fields))
    idx = _track(V, list(pair), fields, ambiguity)
    rows = np.arange(n)
    freqs = w[rows, idx[:, 1]] - w[rows, idx[:, 0]]
    return FrequencyCurve(fields, freqs, idx, tuple(pair))


def level_curves(sys: SpinSystem, orientation: Orientation, fields, track: bool = True) -> NDArray:
    """Energies (n_fields, D); with ``track`` columns follow states by overlap."""
    fields = np.asarray(fields, dtype=float)
    w, V = eigensolve_stack(hamiltonian_stack(sys, orientation, fields))
    if not track:
        return w
    out = np.empty_like(w)
    perm = np.arange(w.shape[1])
    out[0] = w[0]
    for n in range(1, len(fields)):
        ov = np.abs(V[n].conj().T @ V[n - 1][:, perm])
        rows, cols = linear_sum_assignment(-ov)
        new_perm = np.empty_like(perm)
        new_perm[cols] = rows
        perm = new_perm
        out[n] = w[n, perm]
    return out


@dataclass(frozen=True)
class ResonanceLocation:
    transition: tuple[int, int]
    H_r: float
    slope: float
    a1: float
    a2: float
    f_target: float
    r_squared: float = 1.0
    fit_window: tuple[float, float] = (0.0, 0.0)
    #: more than one root was found inside the bracket
    multiple: bool = False

    @property
    def slope_in_gamma_e(self) -> float:
        return self.slope / GAMMA_E_MHZ_PER_G

    def detuning(self, h) -> NDArray:
        """Delta/2pi = (H_r - H0)[a1 + a2 (H_r + H0)] in MHz."""
        h = np.asarray(h, dtype=float)
        return (self.H_r - h) * (self.a1 + self.a2 * (self.H_r + h))


def _refine_root(func, a: float, b: float, fa: float, fb: float, tol: float, coarse: float) -> float:
    # bisection down to the coarse width
    while b - a > coarse:
        m = 0.5 * (a + b)
        fm = func(m)
        if fm == 0:
            return m
        if np.sign(fm) == np.sign(fa):
            a, fa = m, fm
        else:
            b, fb = m, fm
    # quadratic interpolation through (a, m, b), kept inside the bracket
    for _ in range(20):
        m = 0.5 * (a + b)
        fm = func(m)
        if abs(fm) <= tol:
            return m
        c2, c1, c0 = np.polyfit([a, m, b], [fa, fm, fb], 2)
        roots = np.roots([c2, c1, c0]) if abs(c2) > 1e-300 else np.array([-c0 / c1])
        roots = roots[np.isreal(roots)].real
        roots = roots[(roots >= a) & (roots <= b)]
        x = float(roots[np.argmin(np.abs(roots - m))]) if len(roots) else m
        fx = func(x)
        if abs(fx) <= tol:
            return x
        if np.sign(fx) == np.sign(fa):
            a, fa = x, fx
        else:
            b, fb = x, fx
        if np.sign(fm) == np.sign(fa) and a < m < b:
            a, fa = m, fm
        elif a < m < b:
            b, fb = m, fm
    return brentq(func, a, b, xtol=1e-9)


def find_resonance_field(
    sys: SpinSystem,
    orientation: Orientation,
    pair: tuple[int, int],
    f_target: float,
    bracket: tuple[float, float],
    scan_step: float = 1.0,
    slope_step: float = 1.0,
    fit_halfwidth: float = 100.0,
    fit_step: float = 1.0,
    tol: float = 1e-3,
) -> list[ResonanceLocation]:
    """Fields in ``bracket`` where the ``pair`` frequency equals ``f_target`` (MHz).

    Roots are bracketed on a ``scan_step`` grid, bisected to 0.2 G and polished
    by quadratic interpolation to ``tol`` MHz. For each root the slope comes
    from a centred difference of half-width ``slope_step`` and ``(a1, a2)``
    from a least-squares quadratic ``omega_s = c + a1 H0 + a2 H0**2`` over
    ``H_r +/- fit_halfwidth``. The window never extends past half the distance
    to zero field, where sorted levels stop being smooth.

    Returns every root found (flagged ``multiple`` when more than one).
    """
    lo, hi = sorted(bracket)
    n = max(int(np.ceil((hi - lo) / scan_step)), 1) + 1
    grid = np.linspace(lo, hi, n)
    resid = pair_frequencies(sys, orientation, pair, grid) - f_target

    def func(h):
        return float(pair_frequencies(sys, orientation, pair, [h])[0] - f_target)

    roots = []
    for k in range(n - 1):
        r0, r1 = resid[k], resid[k + 1]
        if r0 == 0:
            roots.append(float(grid[k]))
        elif r0 * r1 < 0:
            roots.append(_refine_root(func, grid[k], grid[k + 1], r0, r1, tol, 0.2))
    if resid[-1] == 0:
        roots.append(float(grid[-1]))
    if not roots:
        raise NoResonanceError(
            f"levels {pair[0] + 1}->{pair[1] + 1} do not reach {f_target:.3f} MHz "
            f"between {lo:g} and {hi:g} G"
        )
    out = []
    for hr in roots:
        f_plus, f_minus = pair_frequencies(sys, orientation, pair, [hr + slope_step, hr - slope_step])
        signed_slope = (f_plus - f_minus) / (2 * slope_step)
        slope = abs(signed_slope)
        half = min(fit_halfwidth, 0.5 * abs(hr)) if hr != 0 else fit_halfwidth
        half = max(half, 2 * fit_step)
        while True:
            m = int(round(2 * half / fit_step)) + 1
            hs = np.linspace(hr - half, hr + half, m)
            ws = pair_frequencies(sys, orientation, pair, hs)
            a2, a1, c0 = np.polyfit(hs, ws, 2)
            # a kink from a nearby level crossing spoils the local quadratic: shrink
            mismatch = abs(a1 + 2 * a2 * hr - signed_slope)
            if mismatch <= 0.01 * slope or half <= 10 * fit_step:
                break
            half = max(half / 2, 10 * fit_step)
        model = c0 + a1 * hs + a2 * hs**2
        ss_res = float(np.sum((ws - model) ** 2))
        ss_tot = float(np.sum((ws - ws.mean()) ** 2)) or 1.0
        out.append(
            ResonanceLocation(
                transition=tuple(pair),
                H_r=float(hr),
                slope=float(slope),
                a1=float(a1),
                a2=float(a2),
                f_target=float(f_target),
                r_squared=1.0 - ss_res / ss_tot,
                fit_window=(float(hs[0]), float(hs[-1])),
                multiple=len(roots) > 1,
            )
        )
    return out


def write_curve_csv(path, curve: FrequencyCurve) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["field_G", "freq_MHz", "level_i", "level_f"])
        for h, fr, (a, b) in zip(curve.fields, curve.freqs, curve.indices):
            w.writerow([f"{h:.6f}", f"{fr:.6f}", a + 1, b + 1])


def write_transitions_csv(path, transitions: list[Transition], field_G: float | None = None) -> None:
    cols = ["level_i", "level_f", "freq_MHz", "mx", "my", "mz", "dSz", "dIz"]
    if field_G is not None:
        cols = ["field_G"] + cols
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for t in transitions:
            row = [t.i + 1, t.f + 1, f"{t.freq:.6f}"] + [
                f"{v:.6g}" for v in (t.mx, t.my, t.mz, t.dSz, t.dIz)
            ]
            if field_G is not None:
                row = [f"{field_G:.4f}"] + row
            w.writerow(row)
