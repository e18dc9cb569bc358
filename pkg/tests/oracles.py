"""Independent reference computations used to freeze and check values.

Nothing here imports the package's numerical code. Run as a script to
regenerate ``data/frozen.json``:

    python3 tests/oracles.py
"""

from __future__ import annotations

import json
import math
from fractions import Fraction
from pathlib import Path

import numpy as np
from scipy.optimize import minimize_scalar

FROZEN_PATH = Path(__file__).with_name("data") / "frozen.json"

MU_B = 1.3996246  # MHz/G
GAMMA_E = 2.8025  # MHz/G

# Gd3+ in CaWO4, transcribed separately from the package presets
GD = dict(S=3.5, I=1.5, g_par=1.991, g_perp=1.992, A=14.34,
          B={(2, 0): -938.4, (4, 0): -1.247, (4, 4): -7.305, (6, 0): 5.712e-4, (6, 4): 70.0e-4})


# ---------------------------------------------------------------- spins


def m_values(j):
    """m = j, j-1, ..., -j as Fractions."""
    j = Fraction(j)
    return [j - n for n in range(int(2 * j) + 1)]


def raise_element(j, m):
    """<m+1|J+|m>."""
    return math.sqrt(float(j * (j + 1) - m * (m + 1)))


def ladder_product(j, m, q):
    """<m+q|J+^q|m> as a product of single-step elements."""
    out = 1.0
    for n in range(q):
        out *= raise_element(j, m + n)
    return out


def stevens_diag_poly(k, q, j, m):
    """Diagonal polynomial multiplying the ladder part, from the standard tables.

    Written as explicit functions of m so it shares no code with the package.
    """
    X = j * (j + 1)
    m = Fraction(m)
    table = {
        (2, 0): lambda: 3 * m**2 - X,
        (2, 2): lambda: Fraction(1),
        (4, 0): lambda: 35 * m**4 - 30 * X * m**2 + 25 * m**2 - 6 * X + 3 * X**2,
        (4, 2): lambda: 7 * m**2 - X - 5,
        (4, 4): lambda: Fraction(1),
        (6, 0): lambda: (231 * m**6 - 315 * X * m**4 + 735 * m**4 + 105 * X**2 * m**2
                         - 525 * X * m**2 + 294 * m**2 - 5 * X**3 + 40 * X**2 - 60 * X),
        (6, 4): lambda: 11 * m**2 - X - 38,
    }
    return table[(k, q)]()


def stevens_element(k, q, j, mp, m):
    """<mp|O_k^q|m> for the cosine-type operator, element by element."""
    j = Fraction(j)
    mp, m = Fraction(mp), Fraction(m)
    if q == 0:
        return float(stevens_diag_poly(k, 0, j, m)) if mp == m else 0.0
    # O = (P L + L P)/4 with L = J+^q + J-^q; <m+q|L|m> = <m|L|m+q>
    if mp == m + q:
        lad = ladder_product(j, m, q)
    elif mp == m - q:
        lad = ladder_product(j, mp, q)
    else:
        return 0.0
    return 0.25 * lad * float(stevens_diag_poly(k, q, j, mp) + stevens_diag_poly(k, q, j, m))


def exact_stevens_diagonal(k, j):
    """Exact rational diagonal of O_k^0 (m descending), as strings."""
    return [str(stevens_diag_poly(k, 0, Fraction(j), m)) for m in m_values(j)]


def wigner_eckart_ratios(matrix, k, q, j):
    """<m'|O|m> / <j m; k dq | j m'> for the two blocks dq = +q and dq = -q.

    A correct irreducible tensor component gives a constant ratio within each
    block (Wigner-Eckart). Uses sympy's Clebsch-Gordan coefficients.
    """
    from sympy import Rational, S
    from sympy.physics.quantum.cg import CG

    jj = Rational(Fraction(j).numerator, Fraction(j).denominator)
    ms = m_values(j)
    blocks = {}
    for dq in ((q, -q) if q else (0,)):
        ratios = []
        for c, m in enumerate(ms):
            mp = m + dq
            if abs(mp) > Fraction(j):
                continue
            r = ms.index(mp)
            cg = float(CG(jj, Rational(m.numerator, m.denominator), S(k), S(dq),
                          jj, Rational(mp.numerator, mp.denominator)).doit())
            if abs(cg) < 1e-12:
                continue
            ratios.append(complex(matrix[r, c]).real / cg)
        blocks[dq] = ratios
    return blocks


# ---------------------------------------------------------------- Hamiltonian


def brute_force_hamiltonian(sys=GD, field=(0.0, 0.0, 0.0)):
    """Element-by-element assembly in the |mS, mI> basis (mS major, both descending)."""
    S, I = Fraction(sys["S"]), Fraction(sys["I"])
    ms_list, mi_list = m_values(S), m_values(I)
    basis = [(a, b) for a in ms_list for b in mi_list]
    n = len(basis)
    H = np.zeros((n, n), dtype=complex)
    hx, hy, hz = field
    A = sys["A"]
    for c, (ms, mi) in enumerate(basis):
        for r, (ms2, mi2) in enumerate(basis):
            v = 0j
            if mi2 == mi:
                # Zeeman and crystal field act on the electron only
                if ms2 == ms:
                    v += MU_B * sys["g_par"] * hz * float(ms)
                if ms2 == ms + 1:
                    sp = raise_element(S, ms)
                    v += MU_B * sys["g_perp"] * (hx * sp / 2 - 1j * hy * sp / 2)
                if ms2 == ms - 1:
                    sm = raise_element(S, ms2)
                    v += MU_B * sys["g_perp"] * (hx * sm / 2 + 1j * hy * sm / 2)
                for (k, q), B in sys["B"].items():
                    v += B * stevens_element(k, q, S, ms2, ms)
            # hyperfine A (Sz Iz + (S+ I- + S- I+)/2)
            if ms2 == ms and mi2 == mi:
                v += A * float(ms * mi)
            if ms2 == ms + 1 and mi2 == mi - 1:
                v += A / 2 * raise_element(S, ms) * raise_element(I, mi2)
            if ms2 == ms - 1 and mi2 == mi + 1:
                v += A / 2 * raise_element(S, ms2) * raise_element(I, mi)
            H[r, c] = v
    return H


def field_vector(h, beta_deg, phi_deg=0.0):
    b, p = math.radians(beta_deg), math.radians(phi_deg)
    return (h * math.sin(b) * math.cos(p), h * math.sin(b) * math.sin(p), h * math.cos(b))


# ---------------------------------------------------------------- cavity


def reflection_textbook(omega, f_c, kappa_c, kappa_e, g, gamma, f_s):
    """Coupled cavity plus spin bath: ``1 - kappa_e/(kappa_c - i dc + g^2/(gamma - i ds))``."""
    dc = omega - f_c
    ds = omega - f_s
    r = 1 - kappa_e / (kappa_c - 1j * dc + g**2 / (gamma - 1j * ds))
    return abs(r) ** 2


def double_dip_separation(g, kappa, gamma, f0=18000.0):
    """Distance between the two reflection minima at zero cavity-spin detuning."""
    fun = lambda w: reflection_textbook(w, f0, kappa, kappa, g, gamma, f0)  # noqa: E731
    lo = minimize_scalar(fun, bounds=(f0 - 3 * g, f0), method="bounded", options={"xatol": 1e-9})
    hi = minimize_scalar(fun, bounds=(f0, f0 + 3 * g), method="bounded", options={"xatol": 1e-9})
    return hi.x - lo.x


# ---------------------------------------------------------------- fields


def discrete_spin_coupling(field_gauss, elements, lower_um, upper_um, lattice_um, I, kappa_c, gamma_s,
                           abundance=0.304):
    """Ensemble coupling from explicit spins on a cubic lattice inside a box.

    ``field_gauss(x, y, z)`` returns the rms field vector (G) at one spin.
    Each site holds one spin, so the density is ``1/lattice_um**3``; the
    result is ``sqrt(sum_i |g0_i|^2 * s * abundance/(2I+1))``.
    """
    axes = [np.arange(lo + lattice_um / 2, hi, lattice_um) for lo, hi in zip(lower_um, upper_um)]
    total = 0.0
    for x in axes[0]:
        for y in axes[1]:
            for z in axes[2]:
                hx, hy, hz = field_gauss(x, y, z)
                amp = hx * elements[0] + hy * elements[1] + hz * elements[2]
                total += (GAMMA_E * abs(amp)) ** 2
    s = min(kappa_c / gamma_s, 1.0)
    return math.sqrt(total * s * abundance / (2 * I + 1))


def vacuum_power_dbm(f_mhz, kappa_mhz):
    h = 6.62607015e-34
    p = h * f_mhz * 1e6 * 2 * math.pi * kappa_mhz * 1e6 / 2
    return p, 10 * math.log10(p / 1e-3)


# ---------------------------------------------------------------- freeze


def build_frozen() -> dict:
    H0 = brute_force_hamiltonian()
    e0 = np.linalg.eigvalsh(H0)
    Hx = brute_force_hamiltonian(field=field_vector(170.4, 86.5))
    ex = np.linalg.eigvalsh(Hx)
    p, dbm = vacuum_power_dbm(18000.0, 5.84)
    return {
        "jx_3half_top": math.sqrt(3) / 2,
        "stevens_O20_j7half": exact_stevens_diagonal(2, Fraction(7, 2)),
        "stevens_O40_j7half": exact_stevens_diagonal(4, Fraction(7, 2)),
        "stevens_O60_j7half": exact_stevens_diagonal(6, Fraction(7, 2)),
        "gd_zero_field_levels_MHz": [float(v) for v in e0],
        "gd_levels_170p4G_perp_MHz": [float(v) for v in ex],
        "double_dip_separation_g58p4": double_dip_separation(58.4, 5.84, 5.84),
        "kappa_prime_R2minus_resonant": 5.84 + 4.4**2 / 8.1,
        "s11_half_point": abs(1 + 1 / (1j - 1)) ** 2,
        "vacuum_power_W": p,
        "vacuum_power_dBm": dbm,
        "two_level_mode_volume_V1_27_V2_98": 27.0**2 / (27.0 + 98.0 / 16),
        "spin_count_ratio_0p558": 0.304 * 1.78e9 / 4 * 0.558,
    }


if __name__ == "__main__":
    FROZEN_PATH.parent.mkdir(exist_ok=True)
    FROZEN_PATH.write_text(json.dumps(build_frozen(), indent=1) + "\n")
    print(f"wrote {FROZEN_PATH}")
