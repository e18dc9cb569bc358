"""Command-line front end: ``spincavity {levels,resonances,simulate,fit,modevolume}``.

Exit codes: 0 success, 1 usage or configuration error, 2 numerical failure.
Errors are also written to stderr as one JSON object.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import cavity, fieldmap, fitkit, transitions
from .config import ConfigError, RunConfig, load_config
from .lsq import RankDeficiencyError
from .spinham import EigenConvergenceError, Orientation

EXIT_OK, EXIT_USAGE, EXIT_NUMERICAL = 0, 1, 2

NUMERICAL_ERRORS = (
    transitions.NoResonanceError,
    transitions.TrackingError,
    RankDeficiencyError,
    EigenConvergenceError,
    fieldmap.DegenerateFieldError,
    FloatingPointError,
    np.linalg.LinAlgError,
)


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


class _Console:
    def __init__(self, quiet: bool):
        self.quiet = quiet

    def __call__(self, *parts):
        if not self.quiet:
            print(*parts)


def _build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", metavar="PATH", help="JSON run configuration")
    common.add_argument("--out", metavar="DIR", help="output directory (overrides the config)")
    common.add_argument("--seed", type=int, metavar="N", help="noise seed (overrides the config)")
    common.add_argument("--threads", type=int, default=1, metavar="N", help="worker threads for per-trace fits")
    common.add_argument("--quiet", action="store_true", help="suppress console output")

    p = _Parser(prog="spincavity", description=__doc__.splitlines()[0], parents=[common])
    sub = p.add_subparsers(dest="command", metavar="COMMAND", parser_class=_Parser)
    sub.add_parser("levels", parents=[common], help="energy levels versus field (CSV + SVG)")
    sub.add_parser("resonances", parents=[common], help="resonance fields and transition elements")
    sub.add_parser("simulate", parents=[common], help="synthesise a reflection map")
    fp = sub.add_parser("fit", parents=[common], help="two-stage fit of a reflection map")
    fp.add_argument("map", nargs="?", help="map CSV written by 'simulate' (overrides fit.map)")
    mp = sub.add_parser("modevolume", parents=[common], help="mode volume, threshold curve and coupling estimate")
    src = mp.add_mutually_exclusive_group()
    src.add_argument("--fieldmap", metavar="CSV", help="gridded field map (x_um,y_um,z_um,Hx,Hy,Hz)")
    src.add_argument("--analytic-loop", action="store_true", help="use the analytic current-loop field")
    return p


def _write_csv(path: Path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def _fmt(v, spec=".6f"):
    if v is None or (isinstance(v, float) and not np.isfinite(v)):
        return ""
    return format(v, spec)


def _background(cfg: RunConfig) -> cavity.CavityBackground:
    c = cfg.cavity
    return cavity.CavityBackground(f0=c["f0"], kappa0=c["kappa_c"], m_f=c["m_f"], m_kappa=c["m_kappa"],
                                   table=c["baseline_table"])


# ------------------------------------------------------------------ commands


def cmd_levels(cfg: RunConfig, out: Path, say, **_) -> int:
    lv = cfg.levels
    n = int(np.floor((lv["field_max"] - lv["field_min"]) / lv["step"] + 1e-9)) + 1
    fields = lv["field_min"] + lv["step"] * np.arange(n)
    E = transitions.level_curves(cfg.spin_system, cfg.orientation, fields, track=lv["track"])
    header = ["field_G"] + [f"E{k + 1}_MHz" for k in range(E.shape[1])]
    _write_csv(out / "levels.csv", header, [[_fmt(h, ".4f")] + [_fmt(e) for e in row] for h, row in zip(fields, E)])
    overlay = None
    if lv["compare_parallel"] and cfg.orientation.beta != 0:
        Ep = transitions.level_curves(cfg.spin_system, Orientation(0.0, 0.0), fields, track=lv["track"])
        overlay = (fields, Ep, "beta = 0")
    from .plotting import plot_levels

    plot_levels(out / "levels.svg", fields, E, f"beta = {cfg.orientation.beta:g} deg", overlay)
    say(f"levels: {E.shape[1]} levels x {fields.size} fields -> {out / 'levels.csv'}")
    return EXIT_OK


def _locate_all(cfg: RunConfig, say):
    """Resonance location per configured target; None where no crossing exists."""
    bg = _background(cfg)
    found = []
    for r in cfg.resonances:
        try:
            if cfg.f_target is not None:
                locs = transitions.find_resonance_field(cfg.spin_system, cfg.orientation, r.pair, cfg.f_target, r.bracket)
                loc = locs[0]
                if len(locs) > 1:
                    say(f"note: {r.label} has {len(locs)} crossings in its bracket; reporting the first")
            else:
                loc = cavity.locate_on_background(cfg.spin_system, cfg.orientation, r.pair, bg, r.bracket)
        except transitions.NoResonanceError as exc:
            say(f"notice: {r.label}: {exc}")
            loc = None
        found.append((r, loc))
    return found


def cmd_resonances(cfg: RunConfig, out: Path, say, **_) -> int:
    rows = []
    lines = []
    for r, loc in _locate_all(cfg, say):
        if loc is None:
            continue
        t = transitions.transition_at(cfg.spin_system, cfg.orientation, r.pair, loc.H_r)
        rows.append([r.label, r.pair[0] + 1, r.pair[1] + 1, _fmt(loc.H_r, ".4f"), _fmt(loc.slope),
                     _fmt(loc.slope_in_gamma_e), _fmt(loc.a1, ".8g"), _fmt(loc.a2, ".8g"), _fmt(t.freq, ".4f"),
                     _fmt(t.mx, ".5f"), _fmt(t.my, ".5f"), _fmt(t.mz, ".5f"), _fmt(t.dSz, ".4f"), _fmt(t.dIz, ".4f")])
        lines.append(f"{r.label:5s} {r.pair[0] + 1:>3d}->{r.pair[1] + 1:<3d} H_r={loc.H_r:9.3f} G  "
                     f"slope={loc.slope_in_gamma_e:.4f} ge  mx={t.mx:.3f} my={t.my:.3f} mz={t.mz:.4f} dSz={t.dSz:.3f}")
    header = ["label", "level_i", "level_f", "H_r_G", "slope_MHz_per_G", "slope_in_gamma_e", "a1_MHz_per_G",
              "a2_MHz_per_G2", "freq_MHz", "mx", "my", "mz", "dSz", "dIz"]
    _write_csv(out / "resonances.csv", header, rows)
    if not rows:
        say("no resonance inside the configured brackets; wrote an empty table")
    for line in lines:
        say(line)
    return EXIT_OK


def _grid(cfg: RunConfig):
    s = cfg.scan
    nf = int(np.floor((s["field_max"] - s["field_min"]) / s["field_step"] + 1e-9)) + 1
    nq = int(np.floor((s["freq_max"] - s["freq_min"]) / s["freq_step"] + 1e-9)) + 1
    return s["field_min"] + s["field_step"] * np.arange(nf), s["freq_min"] + s["freq_step"] * np.arange(nq)


def cmd_simulate(cfg: RunConfig, out: Path, say, **_) -> int:
    fields, freqs = _grid(cfg)
    res = []
    for r in cfg.resonances:
        lo, hi = r.bracket
        res.append(cavity.SpinResonance(r.pair, r.g_c, r.gamma_s, (lo, hi), r.label))
    import warnings

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        smap = cavity.synthesize_spectrum(
            cfg.spin_system, cfg.orientation, res, _background(cfg), fields, freqs,
            noise_sigma=cfg.noise_sigma, seed=cfg.seed, kappa_e=cfg.cavity["kappa_e"],
            detuning=cfg.cavity["detuning"],
        )
    smap.save(out / "map.csv")
    from .plotting import plot_map

    plot_map(out / "map.svg", smap)
    for w in smap.metadata.get("warnings", []):
        say(f"warning: {w}")
    say(f"simulate: {fields.size} fields x {freqs.size} frequencies -> {out / 'map.csv'}")
    return EXIT_OK


def cmd_fit(cfg: RunConfig, out: Path, say, map_path=None, threads: int = 1, **_) -> int:
    path = map_path or cfg.fit["map"]
    if path is None:
        raise ConfigError("no map given: pass a map file or set 'fit.map'")
    if not Path(path).exists():
        raise ConfigError(f"map file not found: {path}")
    try:
        smap = cavity.SpectrumMap.load(path)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    targets = [fitkit.ResonanceTarget(r.label, r.pair, r.bracket) for r in cfg.resonances]
    rep = fitkit.run_pipeline(
        smap, cfg.spin_system, cfg.orientation, targets,
        window=cfg.fit["window"], backfit_passes=cfg.fit["backfit_passes"],
        max_failure_fraction=cfg.fit["max_failure_fraction"], track_cavity=cfg.fit["track_cavity"],
        threads=threads,
    )
    (out / "report.json").write_text(rep.to_json())
    table = rep.table()
    lo, hi = fitkit.REFERENCE_C_RANGE
    cs = [r.cooperativity for r in rep.resonances if np.isfinite(r.cooperativity)]
    if cs:
        inside = sum(lo <= c <= hi for c in cs)
        table += f"cooperativity: {inside}/{len(cs)} inside the reference range [{lo}, {hi}]\n"
    (out / "report.txt").write_text(table)
    rows = rep.linewidth_slope_rows()
    _write_csv(out / "linewidth_vs_slope.csv", ["label", "slope_in_gamma_e", "gamma_s_MHz", "gamma_s_err_MHz"],
               [[lab, _fmt(x), _fmt(y), _fmt(e)] for lab, x, y, e in rows])
    s = rep.series
    _write_csv(out / "series.csv", ["field_G", "f_c_prime_MHz", "kappa_c_prime_MHz", "ok"],
               [[_fmt(h, ".4f"), _fmt(f), _fmt(k), int(ok)] for h, f, k, ok in
                zip(s.fields, s.f_c_prime, s.kappa_c_prime, s.ok)])
    from .plotting import plot_linewidth_vs_slope, plot_resonance_fit

    plot_linewidth_vs_slope(out / "linewidth_vs_slope.svg", rows)
    for r in rep.resonances:
        if r.aborted or r.location is None:
            continue
        lo_w, hi_w = r.window
        sel = s.ok & (s.fields >= lo_w) & (s.fields <= hi_w)
        safe = "".join(ch if ch.isalnum() else {"-": "m", "+": "p"}.get(ch, "_") for ch in r.label)
        plot_resonance_fit(out / f"fit_{safe}.svg", r.label, s.fields[sel], s.kappa_c_prime[sel], r.width,
                           s.fields[sel], s.f_c_prime[sel], r.shift)
    say(table.rstrip())
    return EXIT_OK


def cmd_modevolume(cfg: RunConfig, out: Path, say, fieldmap_path=None, analytic=False, **_) -> int:
    mv = cfg.modevolume
    path = fieldmap_path or (None if analytic else mv["fieldmap"])
    kappa = cfg.cavity["kappa_c"]
    if path is not None:
        if not Path(path).exists():
            raise ConfigError(f"field map not found: {path}")
        try:
            fmap = fieldmap.FieldMap.load(path)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
        source = str(path)
    else:
        lp = mv["analytic_loop"]
        grid = fieldmap.GridSpec.from_bounds(lp["lower"], lp["upper"], lp["step"])
        fmap = fieldmap.analytic_loop_field(lp["radius"], grid, power_dbm=lp["power_dbm"], f_c=mv["f_c"],
                                            kappa_c=kappa, wire_radius=lp["wire_radius"])
        source = "analytic_loop"
    z0, z1 = mv["sample_z"]
    mask = fieldmap.RegionMask.slab(fmap, z0, z1)
    if not mask.sample.any():
        raise ConfigError("the sample slab contains no grid cells")
    vm = fieldmap.mode_volume(fmap, mask)
    th = mv["thresholds"]
    vols = fieldmap.threshold_volume_curve(fmap, th)
    _write_csv(out / "threshold.csv", ["H_th_over_H_max", "volume_um3"], [[_fmt(t, ".4f"), _fmt(v, ".6g")] for t, v in zip(th, vols)])
    vac = fieldmap.vacuum_scale(mv["f_c"], kappa, fmap.drive_power)
    result = {
        "source": source,
        "mode_volume_um3": vm,
        "sample_z_um": [z0, z1],
        "vacuum_power_W": vac.power_W,
        "vacuum_power_dBm": vac.power_dBm,
        "drive_power_dBm": fmap.drive_power,
    }
    if fmap.drive_power is not None:
        vmap = fmap.scaled(vac.amplitude_scale, drive_power=vac.power_dBm)
        hr = mv["transition_field"]
        pair = mv["levels"]
        if pair is None:
            raise ConfigError("'modevolume.levels' is required for a spin system with fewer than 14 levels")
        if hr is None:
            bg = _background(cfg)
            bracket = next((r.bracket for r in cfg.resonances if r.pair == pair), (30.0, 400.0))
            hr = cavity.locate_on_background(cfg.spin_system, cfg.orientation, pair, bg, bracket).H_r
        t = transitions.transition_at(cfg.spin_system, cfg.orientation, pair, hr)
        frame = fieldmap.CHIP_NORMAL_ALONG_X if mv["frame"] == "chip_normal_x" else None
        ec = fieldmap.ensemble_coupling(vmap, mask, t.elements, cfg.spin_system.I, mv["density"], kappa,
                                        mv["gamma_s"], abundance=cfg.spin_system.abundance, frame=frame)
        result.update({
            "amplitude_scale": vac.amplitude_scale,
            "transition": {"levels": [pair[0] + 1, pair[1] + 1], "field_G": hr, "mx": t.mx, "my": t.my, "mz": t.mz},
            "density_per_um3": mv["density"],
            "gamma_s_MHz": mv["gamma_s"],
            "frame": mv["frame"],
            "g_c_full_MHz": ec.full,
            "g_c_x_dominant_MHz": ec.x_dominant,
            "selectivity": ec.selectivity,
        })
    (out / "modevolume.json").write_text(json.dumps(result, indent=2, sort_keys=True) + "\n")
    from .plotting import plot_threshold_curve

    plot_threshold_curve(out / "threshold.svg", th, vols)
    say(f"mode volume: {vm:.1f} um^3 ({source})")
    if "g_c_full_MHz" in result:
        say(f"ensemble coupling: {result['g_c_full_MHz']:.2f} MHz (full), {result['g_c_x_dominant_MHz']:.2f} MHz (x only)")
    return EXIT_OK


COMMANDS = {
    "levels": cmd_levels,
    "resonances": cmd_resonances,
    "simulate": cmd_simulate,
    "fit": cmd_fit,
    "modevolume": cmd_modevolume,
}


def _fail(kind: str, message: str, code: int, line=None) -> int:
    err = {"error": kind, "message": message, "exit_code": code}
    if line is not None:
        err["line"] = line
    sys.stderr.write(json.dumps(err, sort_keys=True) + "\n")
    return code


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        if args.command is None:
            raise UsageError("a command is required: " + ", ".join(COMMANDS))
        if args.threads < 1:
            raise UsageError("--threads must be at least 1")
    except UsageError as exc:
        return _fail("usage", str(exc), EXIT_USAGE)
    except SystemExit as exc:  # --help
        return int(exc.code or 0)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(message)s")
    say = _Console(args.quiet)
    try:
        overrides = {"seed": args.seed, "out": args.out}
        if args.config is not None:
            cfg = load_config(args.config, overrides=overrides)
        else:
            cfg = load_config(text='{"schema": "spincavity/1"}', overrides=overrides)
        out = cfg.output
        out.mkdir(parents=True, exist_ok=True)
        kwargs = {"threads": args.threads}
        if args.command == "fit":
            kwargs["map_path"] = args.map
        if args.command == "modevolume":
            kwargs["fieldmap_path"] = args.fieldmap
            kwargs["analytic"] = args.analytic_loop
        return COMMANDS[args.command](cfg, out, say, **kwargs)
    except ConfigError as exc:
        return _fail("config", str(exc), EXIT_USAGE, exc.line)
    except NUMERICAL_ERRORS as exc:
        return _fail("numerical", f"{type(exc).__name__}: {exc}", EXIT_NUMERICAL)
    except OSError as exc:
        return _fail("io", str(exc), EXIT_USAGE)


if __name__ == "__main__":
    raise SystemExit(main())
