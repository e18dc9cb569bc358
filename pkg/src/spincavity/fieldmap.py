"""Mode volume and spin-photon coupling integrals over gridded microwave fields.

Grids are regular with values at cell centres; integrals use the midpoint
rule. Lengths are in micrometres, stored fields in A/m; coupling math works
in Gauss and MHz.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from numpy.typing import NDArray
from scipy.special import ellipe, ellipk

from .constants import GAMMA_E_MHZ_PER_G, GAUSS_PER_A_PER_M, PLANCK_H, dbm_to_watts, watts_to_dbm


class DegenerateFieldError(ValueError):
    """The field vanishes over the integration region."""


#: Map-to-crystal rotation placing the chip normal (map z) on the crystal x axis,
#: as for a crystal lying on the chip with its c axis in the chip plane.
CHIP_NORMAL_ALONG_X = np.array([[0.0, 0.0, 1.0], [0.0, 1.0, 0.0], [-1.0, 0.0, 0.0]])


@dataclass(frozen=True)
class GridSpec:
    """Cell-centre grid: ``origin`` is the centre of cell (0, 0, 0)."""

    origin: tuple[float, float, float]
    spacing: tuple[float, float, float]
    dims: tuple[int, int, int]

    def __post_init__(self):
        if len(self.origin) != 3 or len(self.spacing) != 3 or len(self.dims) != 3:
            raise ValueError("origin, spacing and dims need three entries")
        if any(s <= 0 for s in self.spacing):
            raise ValueError("spacing must be positive")
        if any(int(n) < 1 for n in self.dims):
            raise ValueError("dims must be positive")

    @classmethod
    def from_bounds(cls, lower, upper, step) -> "GridSpec":
        """Cells of size ``step`` tiling the box ``[lower, upper]`` (each axis)."""
        step = np.broadcast_to(np.asarray(step, dtype=float), (3,))
        lower = np.asarray(lower, dtype=float)
        upper = np.asarray(upper, dtype=float)
        dims = np.rint((upper - lower) / step).astype(int)
        if np.any(dims < 1):
            raise ValueError("box smaller than one cell")
        return cls(tuple(lower + step / 2), tuple(step), tuple(int(n) for n in dims))

    def axis(self, k: int) -> NDArray:
        return self.origin[k] + self.spacing[k] * np.arange(self.dims[k])

    def mesh(self) -> tuple[NDArray, NDArray, NDArray]:
        return np.meshgrid(self.axis(0), self.axis(1), self.axis(2), indexing="ij")

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))


@dataclass
class FieldMap:
    """Microwave magnetic field components on a regular grid (A/m).

    Cells holding NaN (e.g. inside a conductor) are excluded from every
    integral.
    """

    grid: GridSpec
    Hx: NDArray
    Hy: NDArray
    Hz: NDArray
    #: drive power (dBm) at which the field was computed
    drive_power: float | None = None

    def __post_init__(self):
        shape = tuple(self.grid.dims)
        for name in ("Hx", "Hy", "Hz"):
            arr = np.asarray(getattr(self, name), dtype=float)
            if arr.shape != shape:
                raise ValueError(f"{name} has shape {arr.shape}, grid is {shape}")
            setattr(self, name, arr)

    @property
    def valid(self) -> NDArray:
        return np.isfinite(self.Hx) & np.isfinite(self.Hy) & np.isfinite(self.Hz)

    def magnitude(self) -> NDArray:
        return np.sqrt(self.Hx**2 + self.Hy**2 + self.Hz**2)

    def components_gauss(self) -> NDArray:
        """Field in Gauss, shape ``dims + (3,)``; invalid cells set to zero."""
        H = np.stack([self.Hx, self.Hy, self.Hz], axis=-1) * GAUSS_PER_A_PER_M
        H[~self.valid] = 0.0
        return H

    def scaled(self, factor: float, drive_power: float | None = None) -> "FieldMap":
        return FieldMap(self.grid, self.Hx * factor, self.Hy * factor, self.Hz * factor,
                        self.drive_power if drive_power is None else drive_power)

    def save(self, path) -> None:
        """CSV ``x_um,y_um,z_um,Hx,Hy,Hz`` (A/m) plus ``<path>.json`` grid sidecar."""
        path = Path(path)
        X, Y, Z = self.grid.mesh()
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["x_um", "y_um", "z_um", "Hx", "Hy", "Hz"])
            for row in zip(X.ravel(), Y.ravel(), Z.ravel(), self.Hx.ravel(), self.Hy.ravel(), self.Hz.ravel()):
                w.writerow([repr(float(v)) for v in row])
        meta = {
            "origin": list(self.grid.origin),
            "spacing": list(self.grid.spacing),
            "dims": list(self.grid.dims),
            "drive_power_dbm": self.drive_power,
            "units": {"length": "um", "field": "A/m"},
        }
        path.with_suffix(path.suffix + ".json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path) -> "FieldMap":
        """Read a CSV map; the grid comes from the sidecar, or is inferred from the coordinates."""
        path = Path(path)
        data = np.genfromtxt(path, delimiter=",", skip_header=1, ndmin=2)
        if data.shape[1] != 6:
            raise ValueError(f"{path}: expected columns x_um,y_um,z_um,Hx,Hy,Hz")
        sidecar = path.with_suffix(path.suffix + ".json")
        drive = None
        if sidecar.exists():
            meta = json.loads(sidecar.read_text())
            drive = meta.get("drive_power_dbm")
        axes = [np.unique(data[:, k]) for k in range(3)]
        dims = tuple(a.size for a in axes)
        if int(np.prod(dims)) != data.shape[0]:
            raise ValueError(f"{path}: points do not form a full regular grid")
        spacing = []
        for a in axes:
            if a.size == 1:
                spacing.append(1.0)
                continue
            d = np.diff(a)
            if not np.allclose(d, d[0], rtol=1e-6):
                raise ValueError(f"{path}: grid is not regular")
            spacing.append(float(d[0]))
        if sidecar.exists() and "spacing" in meta:
            spacing = [float(s) for s in meta["spacing"]]
        grid = GridSpec(tuple(float(a[0]) for a in axes), tuple(spacing), dims)
        idx = [np.rint((data[:, k] - axes[k][0]) / spacing[k]).astype(int) if dims[k] > 1
               else np.zeros(data.shape[0], int) for k in range(3)]
        comps = []
        for c in range(3):
            arr = np.full(dims, np.nan)
            arr[idx[0], idx[1], idx[2]] = data[:, 3 + c]
            comps.append(arr)
        return cls(grid, *comps, drive_power=drive)


@dataclass(frozen=True)
class RegionMask:
    """Cells of the sample volume and of the cavity volume (sample within cavity)."""

    sample: NDArray
    cavity: NDArray

    def __post_init__(self):
        s = np.asarray(self.sample, dtype=bool)
        c = np.asarray(self.cavity, dtype=bool)
        if s.shape != c.shape:
            raise ValueError("sample and cavity masks differ in shape")
        if np.any(s & ~c):
            raise ValueError("the sample region must lie inside the cavity region")
        object.__setattr__(self, "sample", s)
        object.__setattr__(self, "cavity", c)

    @classmethod
    def everywhere(cls, fmap: FieldMap) -> "RegionMask":
        v = fmap.valid
        return cls(v, v.copy())

    @classmethod
    def from_predicates(
        cls,
        fmap: FieldMap,
        sample: Callable[[NDArray, NDArray, NDArray], NDArray],
        cavity: Callable[[NDArray, NDArray, NDArray], NDArray] | None = None,
    ) -> "RegionMask":
        """Predicates take cell-centre coordinate arrays ``(x, y, z)`` in µm."""
        X, Y, Z = fmap.grid.mesh()
        v = fmap.valid
        cav = v if cavity is None else (np.asarray(cavity(X, Y, Z), bool) & v)
        return cls(np.asarray(sample(X, Y, Z), bool) & cav, cav)

    @classmethod
    def slab(cls, fmap: FieldMap, z_min: float, z_max: float) -> "RegionMask":
        """Sample = cells with ``z_min < z <= z_max``; cavity = whole valid grid."""
        return cls.from_predicates(fmap, lambda x, y, z: (z > z_min) & (z <= z_max))


def mode_volume(fmap: FieldMap, mask: RegionMask) -> float:
    """``(sum_sample |H|^2 dV)^2 / sum_cavity |H|^4 dV`` in µm³."""
    if not mask.sample.any() or not mask.cavity.any():
        raise ValueError("empty integration region")
    h2 = fmap.magnitude() ** 2
    h2 = np.where(fmap.valid, h2, 0.0)
    dv = fmap.grid.cell_volume
    num = np.sum(h2[mask.sample]) * dv
    den = np.sum(h2[mask.cavity] ** 2) * dv
    if den == 0:
        raise DegenerateFieldError("the field is zero over the cavity region")
    return float(num**2 / den)


def threshold_volume_curve(fmap: FieldMap, thresholds: Sequence[float], region: NDArray | None = None) -> NDArray:
    """Volume (µm³) of cells with ``|H| >= t * max|H|`` for each threshold ``t`` in (0, 1]."""
    t = np.asarray(thresholds, dtype=float)
    if np.any(np.diff(t) < 0):
        raise ValueError("thresholds must be ascending")
    if np.any((t <= 0) | (t > 1)):
        raise ValueError("thresholds must lie in (0, 1]")
    region = fmap.valid if region is None else (np.asarray(region, bool) & fmap.valid)
    mag = fmap.magnitude()[region]
    if mag.size == 0:
        return np.zeros_like(t)
    hmax = mag.max()
    srt = np.sort(mag)
    # cells at or above t*hmax; relative slack keeps the max cell at t = 1
    counts = srt.size - np.searchsorted(srt, t * hmax * (1 - 1e-12), side="left")
    return counts * fmap.grid.cell_volume


@dataclass(frozen=True)
class VacuumScale:
    power_W: float
    power_dBm: float
    #: factor turning a map computed at its drive power into the vacuum rms field
    amplitude_scale: float | None


def vacuum_power(f_c: float, kappa_c: float) -> float:
    """``h f_c kappa/2`` with ``kappa = 2 pi kappa_c`` (W); inputs in MHz."""
    if f_c <= 0 or kappa_c < 0:
        raise ValueError("f_c must be positive and kappa_c non-negative")
    return PLANCK_H * f_c * 1e6 * (2 * math.pi * kappa_c * 1e6) / 2


def vacuum_scale(f_c: float, kappa_c: float, drive_power_dbm: float | None = None) -> VacuumScale:
    p = vacuum_power(f_c, kappa_c)
    dbm = watts_to_dbm(p) if p > 0 else -math.inf
    scale = None
    if drive_power_dbm is not None:
        scale = math.sqrt(p / dbm_to_watts(drive_power_dbm))
    return VacuumScale(p, dbm, scale)


def to_vacuum(fmap: FieldMap, f_c: float, kappa_c: float) -> FieldMap:
    """Rescale a driven map to the vacuum-fluctuation rms field."""
    if fmap.drive_power is None:
        raise ValueError("the field map carries no drive power")
    vs = vacuum_scale(f_c, kappa_c, fmap.drive_power)
    return fmap.scaled(vs.amplitude_scale, drive_power=vs.power_dBm)


def single_spin_coupling(delta_H_gauss, elements) -> NDArray:
    """``gamma_e |dHx <Sx> + dHy <Sy> + dHz <Sz>|`` in MHz.

    ``delta_H_gauss`` has a trailing axis of length 3; ``elements`` are the
    complex ``<f|S_a|i>``.
    """
    dH = np.asarray(delta_H_gauss, dtype=float)
    e = np.asarray(elements, dtype=complex)
    return GAMMA_E_MHZ_PER_G * np.abs(dH @ e)


@dataclass(frozen=True)
class EnsembleCoupling:
    #: from the full integral of |g0|^2
    full: float
    #: from the dominant crystal-x component only
    x_dominant: float
    selectivity: float
    n_effective: float


def ensemble_coupling(
    fmap: FieldMap,
    mask: RegionMask,
    elements,
    I: float,
    rho: float,
    kappa_c: float,
    gamma_s: float,
    abundance: float = 0.304,
    frame: NDArray | None = None,
    clamp: bool = True,
) -> EnsembleCoupling:
    """Collective coupling ``g_c/2pi`` (MHz) of the spins in the sample region.

    ``g_c = sqrt(rho * s * abundance/(2I+1) * sum |g0|^2 dV)`` with
    selectivity ``s = min(kappa_c/gamma_s, 1)`` (unclamped when ``clamp``
    is False). ``fmap`` must already hold the vacuum rms field. ``frame``
    rotates map vectors into the crystal frame of the matrix elements.

    Parameters
    ----------
    elements : sequence of 3 complex
        ``<f|S_x|i>, <f|S_y|i>, <f|S_z|i>`` in the crystal frame.
    rho : float
        Spin density per µm³ (all isotopes).
    """
    if not mask.sample.any():
        raise ValueError("empty sample region")
    if rho <= 0 or kappa_c <= 0 or gamma_s <= 0:
        raise ValueError("rho, kappa_c and gamma_s must be positive")
    H = fmap.components_gauss()[mask.sample]
    if frame is not None:
        H = H @ np.asarray(frame, dtype=float).T
    sel = kappa_c / gamma_s
    if clamp:
        sel = min(sel, 1.0)
    weight = rho * sel * abundance / (2 * I + 1)
    dv = fmap.grid.cell_volume
    g0 = single_spin_coupling(H, elements)
    full = math.sqrt(weight * np.sum(g0**2) * dv)
    ex = abs(complex(elements[0]))
    xdom = GAMMA_E_MHZ_PER_G * ex * math.sqrt(weight * np.sum(H[:, 0] ** 2) * dv)
    return EnsembleCoupling(full, xdom, sel, weight * mask.sample.sum() * dv)


def loop_current_from_power(power_W: float, f_c: float, kappa_c: float, z0: float = 50.0) -> float:
    """RMS current at the short of a quarter-wave resonator holding ``power_W``.

    Stored energy ``U = P/kappa`` and ``U = pi Z0 I_rms^2/(4 omega)`` for a
    shorted quarter-wave line give ``I_rms^2 = 4 omega P/(pi Z0 kappa)``.
    """
    omega = 2 * math.pi * f_c * 1e6
    kappa = 2 * math.pi * kappa_c * 1e6
    return math.sqrt(4 * omega * power_W / (math.pi * z0 * kappa))


def loop_field(radius: float, current: float, x, y, z) -> tuple[NDArray, NDArray, NDArray]:
    """H (A/m) of a circular filament of ``radius`` (µm) in the z = 0 plane at points in µm."""
    R = radius * 1e-6
    x = np.asarray(x, dtype=float) * 1e-6
    y = np.asarray(y, dtype=float) * 1e-6
    z = np.asarray(z, dtype=float) * 1e-6
    rho = np.hypot(x, y)
    a2 = (R + rho) ** 2 + z**2
    b2 = (R - rho) ** 2 + z**2
    m = 4 * R * rho / a2
    K = ellipk(m)
    E = ellipe(m)
    pref = current / (2 * np.pi * np.sqrt(a2))
    with np.errstate(divide="ignore", invalid="ignore"):
        Hz = pref * (K + (R**2 - rho**2 - z**2) / b2 * E)
        Hr = np.where(rho > 1e-15, pref * z / rho * (-K + (R**2 + rho**2 + z**2) / b2 * E), 0.0)
        cos = np.where(rho > 1e-15, x / rho, 0.0)
        sin = np.where(rho > 1e-15, y / rho, 0.0)
    return Hr * cos, Hr * sin, Hz


def analytic_loop_field(
    radius: float,
    grid: GridSpec,
    current: float | None = None,
    power_dbm: float | None = None,
    f_c: float = 18000.0,
    kappa_c: float = 5.84,
    z0: float = 50.0,
    wire_radius: float = 1.0,
) -> FieldMap:
    """Field of a circular current loop (radius in µm) centred at the origin, normal along z.

    Give either the rms ``current`` (A) or a drive ``power_dbm``; the power is
    converted with :func:`loop_current_from_power`. Cells within
    ``wire_radius`` of the filament are set to NaN.
    """
    if (current is None) == (power_dbm is None):
        raise ValueError("give exactly one of current or power_dbm")
    if current is None:
        current = loop_current_from_power(dbm_to_watts(power_dbm), f_c, kappa_c, z0)
    else:
        omega = 2 * math.pi * f_c * 1e6
        kappa = 2 * math.pi * kappa_c * 1e6
        p = math.pi * z0 * kappa * current**2 / (4 * omega)
        power_dbm = watts_to_dbm(p) if p > 0 else None
    X, Y, Z = grid.mesh()
    Hx, Hy, Hz = loop_field(radius, current, X, Y, Z)
    d_wire = np.hypot(np.hypot(X, Y) - radius, Z)
    bad = d_wire < wire_radius
    for arr in (Hx, Hy, Hz):
        arr[bad] = np.nan
    return FieldMap(grid, Hx, Hy, Hz, drive_power=power_dbm)
