"""Reference parameter sets for odd-isotope Gd3+ in CaWO4."""

from .constants import CAWO4_SITES_PER_UM3
from .spinham import Orientation, SpinSystem

#: Odd Gd isotopes (155, 157) together.
GD_ODD_ABUNDANCE = 0.304

#: Gd concentration of the reference crystal (0.05 % of Ca sites).
GD_CONCENTRATION = 5e-4

#: Gd spins per cubic micrometre in the reference crystal (all isotopes).
GD_DENSITY_PER_UM3 = GD_CONCENTRATION * CAWO4_SITES_PER_UM3

#: Close-to-perpendicular field orientation used for the forbidden transitions.
PERPENDICULAR = Orientation(beta=86.5, phi=0.0)
PARALLEL = Orientation(beta=0.0, phi=0.0)

#: Total spins in the effective cavity volume.
N_TOTAL_SPINS = 1.78e9

#: Mean unperturbed cavity HWHM, MHz.
KAPPA_C = 5.84

#: Cavity-width fit results per resonance: label, level pair (1-based), I_z,
#: gamma_s/2pi, its 1-sigma, g_c/2pi, its 1-sigma (MHz). Rows are in
#: increasing order of |d omega_s / d H0| at resonance.
WIDTH_FIT = (
    ("R1-", (4, 13), -1.5, 7.3, 0.4, 3.0, 0.1),
    ("R1+", (4, 13), +1.5, 7.6, 0.5, 2.9, 0.1),
    ("R2-", (3, 14), -0.5, 8.1, 0.25, 4.4, 0.1),
    ("R2+", (3, 14), +0.5, 9.0, 0.4, 5.0, 0.1),
    ("R3-", (2, 15), +0.5, 9.8, 0.3, 4.7, 0.1),
    ("R3+", (2, 15), -0.5, 10.0, 0.4, 5.1, 0.1),
)

#: Frequency-shift fit results, same layout as :data:`WIDTH_FIT`.
SHIFT_FIT = (
    ("R1-", (4, 13), -1.5, 11.0, 0.6, 3.3, 0.1),
    ("R1+", (4, 13), +1.5, 9.4, 2.2, 2.7, 0.2),
    ("R2-", (3, 14), -0.5, 19.9, 0.25, 8.0, 0.1),
    ("R2+", (3, 14), +0.5, 10.2, 0.5, 5.2, 0.1),
    ("R3-", (2, 15), +0.5, 18.3, 0.4, 6.4, 0.1),
    ("R3+", (2, 15), -0.5, 15.5, 1.2, 5.6, 0.2),
)

#: |<f|Sx|i>|, |<f|Sz|i>|, Delta<Sz> per resonance.
TRANSITION_ELEMENTS = {
    "R1-": (0.796, 0.0255, 4.14),
    "R1+": (0.808, 0.0245, 4.085),
    "R2-": (0.710, 0.0165, 4.52),
    "R2+": (0.715, 0.016, 4.50),
    "R3-": (0.546, 0.008, 5.12),
    "R3+": (0.539, 0.007, 5.14),
}


def gd_cawo4(A: float = 14.34) -> SpinSystem:
    """S = 7/2, I = 3/2 Gd3+ in CaWO4 with a single isotropic hyperfine constant."""
    return SpinSystem(
        S=3.5,
        I=1.5,
        g_par=1.991,
        g_perp=1.992,
        A_diag=(A, A, A),
        stevens=(
            (2, 0, -938.4),
            (4, 0, -1.247),
            (4, 4, -7.305),
            (6, 0, 5.712e-4),
            (6, 4, 70.0e-4),
        ),
        abundance=GD_ODD_ABUNDANCE,
    )
