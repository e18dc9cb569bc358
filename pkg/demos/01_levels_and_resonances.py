"""Energy levels of odd-isotope Gd3+ in CaWO4 and the six forbidden transitions.

Run from the repository root:  python3 demos/01_levels_and_resonances.py
"""

import numpy as np

from spincavity.cavity import CavityBackground, locate_on_background
from spincavity.presets import PARALLEL, PERPENDICULAR, WIDTH_FIT, gd_cawo4
from spincavity.spinham import basis_labels, build_hamiltonian, eigensolve
from spincavity.transitions import level_curves, transition_at

gd = gd_cawo4()
print(f"S = {gd.S}, I = {gd.I}: {gd.dim} electro-nuclear levels")

# zero-field splitting: four Kramers doublets, each spread into 8 levels by the hyperfine term
E0 = eigensolve(build_hamiltonian(gd, PERPENDICULAR.field(0.0))).energies
print("lowest level of each doublet at zero field (MHz):", np.round(E0[::8], 1))

# a short sweep close to perpendicular; track=True follows states through crossings
fields = np.linspace(0, 400, 81)
E = level_curves(gd, PERPENDICULAR, fields)
print(f"levels 3 and 14 at 400 G: {E[-1, 2]:.1f}, {E[-1, 13]:.1f} MHz")

# the resonances where the level pairs cross an 18.52 GHz cavity
bg = CavityBackground(f0=18520.0, kappa0=5.84, m_f=0.01)
labels = basis_labels(gd.S, gd.I)
print(f"\n{'':5s} {'levels':>7s} {'H_r/G':>8s} {'|Sx|':>6s} {'|Sz|':>7s} {'dSz':>5s}  |Sx| at beta=0")
for label, (i, f), *_ in WIDTH_FIT:
    pair = (i - 1, f - 1)
    bracket = (30.0, 400.0) if label.endswith("-") else (-400.0, -30.0)
    loc = locate_on_background(gd, PERPENDICULAR, pair, bg, bracket)
    t = transition_at(gd, PERPENDICULAR, pair, loc.H_r)
    t0 = transition_at(gd, PARALLEL, pair, loc.H_r)
    print(f"{label:5s} {i:>3d}->{f:<3d} {loc.H_r:8.1f} {t.mx:6.3f} {t.mz:7.4f} {t.dSz:5.2f}  {t0.mx:.1e}")

# what the states look like: psi_3 is nearly pure, psi_14 a mixture
V = eigensolve(build_hamiltonian(gd, PERPENDICULAR.field(170.4))).states
for k in (2, 13):
    top = np.argsort(np.abs(V[:, k]))[::-1][:2]
    parts = ", ".join(f"{abs(V[j, k]):.3f}|{labels[j][0]:+g},{labels[j][1]:+g}>" for j in top)
    print(f"psi_{k + 1} at 170.4 G: {parts}")
