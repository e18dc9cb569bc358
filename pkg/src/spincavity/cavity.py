"""Cavity perturbation by a spin ensemble and synthesis of reflection maps.

All rates are HWHM values in MHz (``kappa/2pi``, ``gamma/2pi``), frequencies
in MHz and fields in Gauss.
"""

from __future__ import annotations

import csv
import json
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from numpy.typing import NDArray

from .spinham import Orientation, SpinSystem
from .transitions import find_resonance_field, pair_frequencies


@dataclass(frozen=True)
class CavityParams:
    f_c: float
    kappa_c: float
    kappa_e: float | None = None
    g_c: float = 0.0
    gamma_s: float = 1.0

    def __post_init__(self):
        if not self.kappa_c > 0:
            raise ValueError("kappa_c must be positive")
        if not self.gamma_s > 0:
            raise ValueError("gamma_s must be positive")
        if self.g_c < 0:
            raise ValueError("g_c must be non-negative")
        if self.kappa_e is None:
            object.__setattr__(self, "kappa_e", self.kappa_c)
        elif not self.kappa_e > 0:
            raise ValueError("kappa_e must be positive")


def perturbation(g_c, gamma_s, delta):
    """(frequency shift, width increase) of the cavity for detuning ``delta``."""
    delta = np.asarray(delta, dtype=float)
    den = delta**2 + gamma_s**2
    return g_c**2 * delta / den, g_c**2 * gamma_s / den


def perturbed_cavity(p: CavityParams, delta):
    """Perturbed cavity centre and HWHM, ``f_c + g^2 D/(D^2+g^2)`` and ``kappa_c + g^2 gamma/(D^2+gamma^2)``."""
    shift, widen = perturbation(p.g_c, p.gamma_s, delta)
    return p.f_c + shift, p.kappa_c + widen


def s11_power(omega, f_c_prime, kappa_c_prime, kappa_e):
    """Reflected power ``|1 + kappa_e/(i(omega - f_c') - kappa_c')|^2``."""
    z = 1.0 + kappa_e / (1j * (np.asarray(omega, dtype=float) - f_c_prime) - kappa_c_prime)
    return np.abs(z) ** 2


def cooperativity(p: CavityParams) -> float:
    return p.g_c**2 / (p.kappa_c * p.gamma_s)


@dataclass(frozen=True)
class CavityBackground:
    """Unperturbed cavity versus field: linear around ``H_ref`` or tabulated.

    A user table ``(fields, f_c, kappa_c)`` replaces the linear model and is
    linearly interpolated.
    """

    f0: float
    kappa0: float
    m_f: float = 0.0
    m_kappa: float = 0.0
    H_ref: float = 0.0
    table: tuple[tuple[float, ...], tuple[float, ...], tuple[float, ...]] | None = None

    def f_c(self, h):
        h = np.asarray(h, dtype=float)
        if self.table is not None:
            return np.interp(h, self.table[0], self.table[1])
        return self.f0 + self.m_f * (h - self.H_ref)

    def kappa_c(self, h):
        h = np.asarray(h, dtype=float)
        if self.table is not None:
            return np.interp(h, self.table[0], self.table[2])
        return self.kappa0 + self.m_kappa * (h - self.H_ref)


@dataclass(frozen=True)
class SpinResonance:
    """One spin transition coupled to the cavity.

    ``pair`` is 0-based (sorted levels). The perturbation acts only for
    fields inside ``field_range``; use it to pick one sign of the field.
    """

    pair: tuple[int, int]
    g_c: float
    gamma_s: float
    field_range: tuple[float, float] = (0.0, np.inf)
    label: str = ""

    def __post_init__(self):
        if not self.gamma_s > 0:
            raise ValueError("gamma_s must be positive")
        if self.g_c < 0:
            raise ValueError("g_c must be non-negative")


@dataclass
class SpectrumMap:
    fields: NDArray
    freqs: NDArray
    #: |S11|^2 with shape (len(fields), len(freqs))
    power: NDArray
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.fields = np.asarray(self.fields, dtype=float)
        self.freqs = np.asarray(self.freqs, dtype=float)
        self.power = np.asarray(self.power, dtype=float)
        if self.power.shape != (self.fields.size, self.freqs.size):
            raise ValueError(
                f"power shape {self.power.shape} does not match axes "
                f"({self.fields.size}, {self.freqs.size})"
            )

    def trace(self, k: int) -> tuple[NDArray, NDArray]:
        return self.freqs, self.power[k]

    def save(self, path) -> None:
        """Long-format CSV (field_G, freq_MHz, power) plus ``<path>.json`` sidecar."""
        path = Path(path)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["field_G", "freq_MHz", "power"])
            for h, row in zip(self.fields, self.power):
                hs = repr(float(h))
                for f, p in zip(self.freqs, row):
                    w.writerow([hs, repr(float(f)), repr(float(p))])
        sidecar = path.with_suffix(path.suffix + ".json")
        sidecar.write_text(json.dumps(self.metadata, indent=2, sort_keys=True, default=_jsonable) + "\n")

    @classmethod
    def load(cls, path) -> "SpectrumMap":
        path = Path(path)
        data = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
        if data.shape[1] != 3:
            raise ValueError(f"{path}: expected 3 columns field_G,freq_MHz,power")
        fields = np.unique(data[:, 0])
        freqs = np.unique(data[:, 1])
        if fields.size * freqs.size != data.shape[0]:
            raise ValueError(f"{path}: rows do not form a full field x frequency grid")
        order = np.lexsort((data[:, 1], data[:, 0]))
        power = data[order, 2].reshape(fields.size, freqs.size)
        sidecar = path.with_suffix(path.suffix + ".json")
        meta = json.loads(sidecar.read_text()) if sidecar.exists() else {}
        return cls(fields, freqs, power, meta)


def _jsonable(obj):
    if isinstance(obj, np.ndarray):
        return obj.tolist()
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    if isinstance(obj, float) and not np.isfinite(obj):
        return str(obj)
    raise TypeError(f"cannot serialise {type(obj).__name__}")


def locate_on_background(
    sys: SpinSystem,
    orientation: Orientation,
    pair: tuple[int, int],
    background: CavityBackground,
    bracket: tuple[float, float],
    iterations: int = 8,
    tol: float = 1e-3,
):
    """Resonance where the transition meets the field-dependent cavity frequency.

    Fixed-point iteration on ``f_target = f_c(H_r)``; converges quickly since
    the cavity slope is tiny compared with the spin slope.
    """
    lo, hi = bracket
    guess = 0.5 * (lo + hi)
    loc = None
    for _ in range(iterations):
        f_target = float(background.f_c(guess))
        locs = find_resonance_field(sys, orientation, pair, f_target, bracket, tol=tol * 0.1)
        loc = min(locs, key=lambda r: abs(r.H_r - guess)) if loc is not None else locs[0]
        if abs(float(background.f_c(loc.H_r)) - f_target) < tol:
            break
        guess = loc.H_r
    return loc


def synthesize_spectrum(
    sys: SpinSystem,
    orientation: Orientation,
    resonances: Sequence[SpinResonance],
    background: CavityBackground,
    fields,
    freqs,
    noise_sigma: float = 0.0,
    seed: int | None = None,
    kappa_e: float | None = None,
    detuning: str = "cavity",
    scale: float = 1.0,
) -> SpectrumMap:
    """Reflection map |S11|^2 over a field x frequency grid.

    For each field the spin detuning is taken against the unperturbed cavity
    (``detuning="cavity"``: ``D = f_c(H) - f_s(H)``, so every trace is an exact
    Lorentzian) or against each probe frequency (``"probe"``: ``D = f - f_s(H)``,
    the full input-output response that shows the double dip at strong
    coupling). Perturbations of all resonances are summed. ``kappa_e``
    defaults to the unperturbed ``kappa_c(H)``.

    Noise is additive Gaussian on the power, drawn from
    ``default_rng([seed, k])`` for field index ``k`` so that any subset or
    ordering of fields reproduces the same values.
    """
    if detuning not in ("cavity", "probe"):
        raise ValueError("detuning must be 'cavity' or 'probe'")
    if noise_sigma < 0:
        raise ValueError("noise_sigma must be non-negative")
    if noise_sigma > 0 and seed is None:
        raise ValueError("a seed is required when noise_sigma > 0")
    fields = np.asarray(fields, dtype=float)
    freqs = np.asarray(freqs, dtype=float)
    if fields.ndim != 1 or freqs.ndim != 1 or fields.size == 0 or freqs.size < 2:
        raise ValueError("fields and freqs must be non-empty 1-D axes")

    fc = background.f_c(fields)[:, None]
    kc = background.kappa_c(fields)[:, None]
    ke = kc if kappa_e is None else np.full_like(kc, kappa_e)
    # complex self-energy g^2/(gamma - i D): real part widens, imaginary part shifts
    sigma = np.zeros((fields.size, 1 if detuning == "cavity" else freqs.size), dtype=complex)
    for r in resonances:
        if r.g_c == 0:
            continue
        inside = (fields >= r.field_range[0]) & (fields <= r.field_range[1])
        if not inside.any():
            continue
        fs = pair_frequencies(sys, orientation, r.pair, fields[inside])[:, None]
        if detuning == "cavity":
            d = fc[inside] - fs
        else:
            d = freqs[None, :] - fs
        sigma[inside] += r.g_c**2 / (r.gamma_s - 1j * d)
    f_prime = fc + sigma.imag
    k_prime = kc + sigma.real
    power = scale * s11_power(freqs[None, :], f_prime, k_prime, ke)

    if noise_sigma > 0:
        for k in range(fields.size):
            rng = np.random.default_rng([int(seed), k])
            power[k] += rng.normal(0.0, noise_sigma, freqs.size)

    step = float(np.min(np.diff(np.sort(freqs))))
    kmin = float(np.min(kc))
    warn = []
    if step > kmin / 5:
        warn.append(f"frequency step {step:g} MHz gives fewer than 5 points per kappa_c ({kmin:g} MHz)")
        warnings.warn(warn[-1], RuntimeWarning, stacklevel=2)
    meta = {
        "generator": "synthesize_spectrum",
        "spin_system": sys.to_dict(),
        "orientation": {"beta": orientation.beta, "phi": orientation.phi},
        "background": {k: v for k, v in asdict(background).items()},
        "resonances": [
            {
                "label": r.label,
                "levels": [r.pair[0] + 1, r.pair[1] + 1],
                "g_c": r.g_c,
                "gamma_s": r.gamma_s,
                "field_range": [float(x) if np.isfinite(x) else None for x in r.field_range],
            }
            for r in resonances
        ],
        "noise_sigma": noise_sigma,
        "seed": seed,
        "kappa_e": kappa_e,
        "detuning": detuning,
        "scale": scale,
        "warnings": warn,
    }
    return SpectrumMap(fields, freqs, power, meta)
