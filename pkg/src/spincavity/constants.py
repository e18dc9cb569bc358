"""Physical constants and unit conventions.

Energies and frequencies are in MHz, static fields in Gauss, lengths in
micrometres. Rates quoted as ``kappa`` or ``gamma`` are HWHM values divided
by 2*pi, i.e. plain MHz.
"""

import math

#: Bohr magneton over Planck constant, MHz/G.
MU_B_MHZ_PER_G = 1.3996246

#: Free-electron gyromagnetic ratio gamma_e/2pi, MHz/G.
GAMMA_E_MHZ_PER_G = 2.8025

#: Planck constant, J s.
PLANCK_H = 6.62607015e-34

#: Reduced Planck constant, J s.
HBAR = PLANCK_H / (2 * math.pi)

#: Conversion from A/m to Gauss (B = mu_0 H in vacuum).
GAUSS_PER_A_PER_M = 4 * math.pi * 1e-3

#: Formula units of CaWO4 per cubic micrometre (a = 5.243 A, c = 11.376 A, Z = 4).
CAWO4_SITES_PER_UM3 = 4.0 / (5.243**2 * 11.376) * 1e12


def watts_to_dbm(p_w: float) -> float:
    return 10.0 * math.log10(p_w / 1e-3)


def dbm_to_watts(p_dbm: float) -> float:
    return 1e-3 * 10.0 ** (p_dbm / 10.0)
