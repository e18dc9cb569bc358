"""Static SVG figures with reproducible bytes (fixed hash salt, no date stamp)."""

from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

plt.rcParams["svg.hashsalt"] = "spincavity"
plt.rcParams["svg.fonttype"] = "none"


def _save(fig, path) -> None:
    fig.savefig(path, format="svg", metadata={"Date": None})
    plt.close(fig)


def plot_levels(path, fields, energies, title: str, overlay=None) -> None:
    """Energy levels (GHz) versus field; ``overlay`` is a second ``(fields, energies, label)``."""
    fig, ax = plt.subplots(figsize=(6, 5))
    ax.plot(fields, energies / 1e3, color="darkred", lw=0.8)
    if overlay is not None:
        f2, e2, label = overlay
        ax.plot(f2, e2 / 1e3, color="navy", lw=0.6, alpha=0.6)
        ax.plot([], [], color="navy", label=label)
        ax.plot([], [], color="darkred", label=title)
        ax.legend(loc="upper left", fontsize=8)
    ax.set_xlabel("H0 (G)")
    ax.set_ylabel("E (GHz)")
    ax.set_title(title, fontsize=9)
    _save(fig, path)


def plot_map(path, smap) -> None:
    fig, ax = plt.subplots(figsize=(7, 4))
    # embedded raster keeps the file small for dense maps
    extent = (smap.fields[0], smap.fields[-1], smap.freqs[0] / 1e3, smap.freqs[-1] / 1e3)
    im = ax.imshow(smap.power.T, origin="lower", aspect="auto", extent=extent, cmap="viridis",
                   interpolation="nearest")
    fig.colorbar(im, ax=ax, label="|S11|^2")
    ax.set_xlabel("H0 (G)")
    ax.set_ylabel("f (GHz)")
    _save(fig, path)


def plot_resonance_fit(path, label, h, y_width, width_fit, h_s, y_shift, shift_fit) -> None:
    fig, (a1, a2) = plt.subplots(2, 1, figsize=(5, 6), sharex=True)
    a1.plot(h, y_width, ".", ms=2, color="red")
    if width_fit is not None and width_fit.coupling_detected:
        a1.plot(h, width_fit.model(h), color="k", lw=1)
    a1.set_ylabel("kappa_c' (MHz)")
    a1.set_title(label)
    a2.plot(h_s, y_shift, ".", ms=2, color="navy")
    if shift_fit is not None and shift_fit.coupling_detected:
        a2.plot(h_s, shift_fit.model(h_s), color="k", lw=1)
    a2.set_ylabel("f_c' (MHz)")
    a2.set_xlabel("H0 (G)")
    _save(fig, path)


def plot_linewidth_vs_slope(path, rows) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    if rows:
        x = np.array([r[1] for r in rows])
        y = np.array([r[2] for r in rows])
        e = np.array([r[3] for r in rows])
        ax.errorbar(x, y, yerr=e, fmt="o", color="darkred")
        for r in rows:
            ax.annotate(r[0], (r[1], r[2]), fontsize=7, xytext=(3, 3), textcoords="offset points")
    ax.set_xlabel("|d omega_s/d H0|_r (gamma_e/2pi)")
    ax.set_ylabel("gamma_s/2pi (MHz)")
    _save(fig, path)


def plot_threshold_curve(path, thresholds, volumes) -> None:
    fig, ax = plt.subplots(figsize=(5, 4))
    ax.step(thresholds, volumes, where="post", color="navy")
    ax.set_yscale("log")
    ax.set_xlabel("H_th/H_max")
    ax.set_ylabel("V (um^3)")
    _save(fig, path)
