"""Mode volume and collective coupling for a loop resonator.

A circular current loop stands in for the finite-element field map. The
map is scaled to the vacuum-fluctuation field and integrated over a 3 um
thick sample slab above the loop.

Run from the repository root:  python3 demos/03_mode_volume.py
"""

import numpy as np

from spincavity.cavity import CavityBackground, locate_on_background
from spincavity.fieldmap import (
    CHIP_NORMAL_ALONG_X,
    GridSpec,
    RegionMask,
    analytic_loop_field,
    ensemble_coupling,
    mode_volume,
    threshold_volume_curve,
    to_vacuum,
    vacuum_scale,
)
from spincavity.presets import GD_DENSITY_PER_UM3, KAPPA_C, PERPENDICULAR, gd_cawo4
from spincavity.transitions import transition_at

f_c = 18520.0
grid = GridSpec.from_bounds((-25, -25, -8), (25, 25, 8), 0.5)
fmap = analytic_loop_field(15.0, grid, power_dbm=-81.0, f_c=f_c, kappa_c=KAPPA_C)
mask = RegionMask.slab(fmap, 0.0, 3.0)
print(f"grid {grid.dims}, {np.count_nonzero(~fmap.valid)} cells masked on the wire")
print(f"mode volume: {mode_volume(fmap, mask):.0f} um^3")

t = [0.1, 0.25, 0.5, 0.75, 1.0]
for th, v in zip(t, threshold_volume_curve(fmap, t)):
    print(f"  |H| >= {th:.2f} H_max: {v:10.2f} um^3")

vs = vacuum_scale(f_c, KAPPA_C, fmap.drive_power)
print(f"vacuum power {vs.power_dBm:.1f} dBm; field amplitude scale {vs.amplitude_scale:.3e}")

gd = gd_cawo4()
bg = CavityBackground(f0=f_c, kappa0=KAPPA_C, m_f=0.01)
loc = locate_on_background(gd, PERPENDICULAR, (2, 13), bg, (30.0, 400.0))
tr = transition_at(gd, PERPENDICULAR, (2, 13), loc.H_r)

# the crystal lies on the chip with c in the plane: the loop's normal field drives crystal x
ec = ensemble_coupling(to_vacuum(fmap, f_c, KAPPA_C), mask, tr.elements, gd.I, GD_DENSITY_PER_UM3,
                       KAPPA_C, 8.1, abundance=gd.abundance, frame=CHIP_NORMAL_ALONG_X)
print(f"R2- at {loc.H_r:.1f} G: g_c/2pi = {ec.full:.2f} MHz (x only {ec.x_dominant:.2f} MHz), "
      f"selectivity {ec.selectivity:.2f}")
