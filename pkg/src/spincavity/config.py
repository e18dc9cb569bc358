"""Run configuration: one JSON document with a ``schema`` key.

Errors carry the line of the offending key so that messages point into the
file. Level numbers in configuration files are 1-based.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from . import presets
from .spinham import Orientation, SpinSystem

SCHEMA = "spincavity/1"

TOP_KEYS = {
    "schema", "spin_system", "orientation", "levels", "cavity", "scan", "resonances",
    "f_target", "noise", "fit", "modevolume", "output",
}


class ConfigError(ValueError):
    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        where = ""
        if source is not None:
            where = f"{source}:{line}: " if line is not None else f"{source}: "
        elif line is not None:
            where = f"line {line}: "
        super().__init__(where + message)
        self.line = line
        self.source = source
        self.bare_message = message


def _line_of(text: str, path: tuple) -> int | None:
    """Best-effort 1-based line of the last key in ``path``."""
    pos = 0
    for comp in path:
        if isinstance(comp, int):
            continue
        m = re.compile(r'"%s"\s*:' % re.escape(str(comp))).search(text, pos)
        if m is None:
            return None
        pos = m.start()
    return text.count("\n", 0, pos) + 1 if path else 1


@dataclass(frozen=True)
class ResonanceSpec:
    label: str
    pair: tuple[int, int]
    bracket: tuple[float, float]
    g_c: float = 0.0
    gamma_s: float = 1.0


@dataclass(frozen=True)
class RunConfig:
    spin_system: SpinSystem
    orientation: Orientation
    levels: dict
    cavity: dict
    scan: dict
    resonances: tuple[ResonanceSpec, ...]
    f_target: float | None
    noise_sigma: float
    seed: int | None
    fit: dict
    modevolume: dict
    output: Path
    source: Path | None = None
    raw: dict = field(default_factory=dict, compare=False)


class _Reader:
    def __init__(self, text: str, source: str | None):
        self.text = text
        self.source = source

    def fail(self, message: str, path: tuple):
        raise ConfigError(message, _line_of(self.text, path), self.source)

    def get(self, d: dict, key: str, path: tuple, kind, default=Any, check=None):
        if key not in d:
            if default is Any:
                self.fail(f"missing required key '{'.'.join(map(str, path + (key,)))}'", path)
            return default
        v = d[key]
        p = path + (key,)
        if kind is float:
            if isinstance(v, bool) or not isinstance(v, (int, float)):
                self.fail(f"'{'.'.join(map(str, p))}' must be a number", p)
            v = float(v)
            if not np.isfinite(v):
                self.fail(f"'{'.'.join(map(str, p))}' must be finite", p)
        elif kind is int:
            if isinstance(v, bool) or not isinstance(v, int):
                self.fail(f"'{'.'.join(map(str, p))}' must be an integer", p)
        elif kind is bool:
            if not isinstance(v, bool):
                self.fail(f"'{'.'.join(map(str, p))}' must be true or false", p)
        elif kind is str:
            if not isinstance(v, str):
                self.fail(f"'{'.'.join(map(str, p))}' must be a string", p)
        elif kind is dict:
            if not isinstance(v, dict):
                self.fail(f"'{'.'.join(map(str, p))}' must be an object", p)
        elif kind is list:
            if not isinstance(v, list):
                self.fail(f"'{'.'.join(map(str, p))}' must be a list", p)
        if check is not None:
            msg = check(v)
            if msg:
                self.fail(f"'{'.'.join(map(str, p))}' {msg}", p)
        return v

    def unknown(self, d: dict, allowed: set, path: tuple):
        extra = sorted(set(d) - allowed)
        if extra:
            self.fail(f"unknown key '{extra[0]}'" + (f" in '{'.'.join(map(str, path))}'" if path else ""),
                      path + (extra[0],))


def _positive(v):
    return None if v > 0 else "must be positive"


def _nonneg(v):
    return None if v >= 0 else "must be non-negative"


def reference_resonances() -> list[ResonanceSpec]:
    """The six observed resonances: width-fit truths, R- at positive and R+ at negative field."""
    out = []
    for label, (i, f), _, gam, _, g, _ in presets.WIDTH_FIT:
        bracket = (30.0, 400.0) if label.endswith("-") else (-400.0, -30.0)
        out.append(ResonanceSpec(label, (i - 1, f - 1), bracket, g, gam))
    return out


def load_config(path=None, text: str | None = None, overrides: dict | None = None) -> RunConfig:
    """Parse and validate a run configuration from ``path`` or ``text``."""
    source = None
    base = Path.cwd()
    if text is None:
        if path is None:
            raise ConfigError("no configuration given")
        p = Path(path)
        if not p.exists():
            raise ConfigError(f"configuration file not found: {p}")
        text = p.read_text()
        source = str(p)
        base = p.resolve().parent
    try:
        raw = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno, source) from None
    r = _Reader(text, source)
    if not isinstance(raw, dict):
        r.fail("top level must be an object", ())
    schema = r.get(raw, "schema", (), str)
    if schema != SCHEMA:
        r.fail(f"unsupported schema '{schema}', expected '{SCHEMA}'", ("schema",))
    r.unknown(raw, TOP_KEYS, ())
    overrides = overrides or {}

    # spin system: preset name, inline object or path to a JSON file
    ss = raw.get("spin_system", "gd_cawo4")
    if isinstance(ss, str):
        if ss == "gd_cawo4":
            sys = presets.gd_cawo4()
        else:
            sp = (base / ss) if not Path(ss).is_absolute() else Path(ss)
            if not sp.exists():
                r.fail(f"spin system file not found: {ss}", ("spin_system",))
            try:
                sys = SpinSystem.load(sp)
            except (ValueError, json.JSONDecodeError) as exc:
                r.fail(f"bad spin system file {ss}: {exc}", ("spin_system",))
    elif isinstance(ss, dict):
        try:
            sys = SpinSystem.from_dict(ss)
        except (ValueError, TypeError) as exc:
            r.fail(f"invalid spin system: {exc}", ("spin_system",))
    else:
        r.fail("'spin_system' must be a preset name, a file path or an object", ("spin_system",))

    od = r.get(raw, "orientation", (), dict, {})
    r.unknown(od, {"beta", "phi"}, ("orientation",))
    beta = r.get(od, "beta", ("orientation",), float, presets.PERPENDICULAR.beta,
                 lambda v: None if 0 <= v <= 180 else "must lie in [0, 180]")
    phi = r.get(od, "phi", ("orientation",), float, 0.0,
                lambda v: None if 0 <= v < 360 else "must lie in [0, 360)")
    orientation = Orientation(beta=beta, phi=phi)

    lv = r.get(raw, "levels", (), dict, {})
    r.unknown(lv, {"field_min", "field_max", "step", "track", "compare_parallel"}, ("levels",))
    levels = {
        "field_min": r.get(lv, "field_min", ("levels",), float, 0.0),
        "field_max": r.get(lv, "field_max", ("levels",), float, 6000.0),
        "step": r.get(lv, "step", ("levels",), float, 10.0, _positive),
        "track": r.get(lv, "track", ("levels",), bool, True),
        "compare_parallel": r.get(lv, "compare_parallel", ("levels",), bool, True),
    }
    if not levels["field_max"] > levels["field_min"]:
        r.fail("'levels.field_max' must exceed 'levels.field_min'", ("levels", "field_max"))

    cv = r.get(raw, "cavity", (), dict, {})
    r.unknown(cv, {"f0", "kappa_c", "m_f", "m_kappa", "kappa_e", "detuning", "baseline_table"}, ("cavity",))
    cavity = {
        "f0": r.get(cv, "f0", ("cavity",), float, 18520.0, _positive),
        "kappa_c": r.get(cv, "kappa_c", ("cavity",), float, presets.KAPPA_C, _positive),
        "m_f": r.get(cv, "m_f", ("cavity",), float, 0.01),
        "m_kappa": r.get(cv, "m_kappa", ("cavity",), float, 0.0),
        "kappa_e": r.get(cv, "kappa_e", ("cavity",), float, None, _positive),
        "detuning": r.get(cv, "detuning", ("cavity",), str, "cavity",
                          lambda v: None if v in ("cavity", "probe") else "must be 'cavity' or 'probe'"),
        "baseline_table": None,
    }
    if "baseline_table" in cv:
        bt = r.get(cv, "baseline_table", ("cavity",), str)
        bp = (base / bt) if not Path(bt).is_absolute() else Path(bt)
        if not bp.exists():
            r.fail(f"baseline table not found: {bt}", ("cavity", "baseline_table"))
        try:
            tab = np.loadtxt(bp, delimiter=",", skiprows=1, ndmin=2)
        except ValueError as exc:
            r.fail(f"bad baseline table {bt}: {exc}", ("cavity", "baseline_table"))
        if tab.shape[1] != 3 or np.any(np.diff(tab[:, 0]) <= 0):
            r.fail("baseline table needs ascending rows field_G,f_c_MHz,kappa_c_MHz", ("cavity", "baseline_table"))
        cavity["baseline_table"] = tuple(tuple(map(float, col)) for col in tab.T)

    sc = r.get(raw, "scan", (), dict, {})
    r.unknown(sc, {"field_min", "field_max", "field_step", "freq_min", "freq_max", "freq_step"}, ("scan",))
    scan = {
        "field_min": r.get(sc, "field_min", ("scan",), float, -300.0),
        "field_max": r.get(sc, "field_max", ("scan",), float, 300.0),
        "field_step": r.get(sc, "field_step", ("scan",), float, 0.5, _positive),
        "freq_min": r.get(sc, "freq_min", ("scan",), float, cavity["f0"] - 50.0),
        "freq_max": r.get(sc, "freq_max", ("scan",), float, cavity["f0"] + 50.0),
        "freq_step": r.get(sc, "freq_step", ("scan",), float, 0.5, _positive),
    }
    if not scan["field_max"] > scan["field_min"]:
        r.fail("'scan.field_max' must exceed 'scan.field_min'", ("scan", "field_max"))
    if not scan["freq_max"] > scan["freq_min"]:
        r.fail("'scan.freq_max' must exceed 'scan.freq_min'", ("scan", "freq_max"))

    rs = raw.get("resonances", "reference")
    resonances: list[ResonanceSpec] = []
    if rs == "reference":
        resonances = reference_resonances()
    elif isinstance(rs, list):
        for n, item in enumerate(rs):
            p = ("resonances", n)
            if not isinstance(item, dict):
                r.fail(f"resonance #{n + 1} must be an object", ("resonances",))
            r.unknown(item, {"label", "levels", "bracket", "g_c", "gamma_s"}, p)
            label = r.get(item, "label", p, str, f"T{n + 1}")
            lev = r.get(item, "levels", p, list)
            if len(lev) != 2 or not all(isinstance(v, int) and not isinstance(v, bool) for v in lev):
                r.fail("'levels' must be two integers (1-based)", p + ("levels",))
            if not (1 <= lev[0] < lev[1] <= sys.dim):
                r.fail(f"'levels' must satisfy 1 <= i < f <= {sys.dim}", p + ("levels",))
            br = r.get(item, "bracket", p, list)
            if len(br) != 2 or not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in br) \
                    or not br[0] < br[1]:
                r.fail("'bracket' must be an ascending pair of fields in G", p + ("bracket",))
            g_c = r.get(item, "g_c", p, float, 0.0, _nonneg)
            gam = r.get(item, "gamma_s", p, float, 1.0, _positive)
            resonances.append(ResonanceSpec(label, (lev[0] - 1, lev[1] - 1), (float(br[0]), float(br[1])), g_c, gam))
        labels = [x.label for x in resonances]
        if len(set(labels)) != len(labels):
            r.fail("resonance labels must be unique", ("resonances",))
    else:
        r.fail("'resonances' must be a list or \"reference\"", ("resonances",))

    f_target = r.get(raw, "f_target", (), float, None, _positive)

    nz = r.get(raw, "noise", (), dict, {})
    r.unknown(nz, {"sigma", "seed"}, ("noise",))
    sigma = r.get(nz, "sigma", ("noise",), float, 0.0, _nonneg)
    seed = r.get(nz, "seed", ("noise",), int, None, _nonneg)
    if overrides.get("seed") is not None:
        seed = int(overrides["seed"])
    if sigma > 0 and seed is None:
        r.fail("'noise.seed' is required when 'noise.sigma' > 0", ("noise", "sigma"))

    ft = r.get(raw, "fit", (), dict, {})
    r.unknown(ft, {"map", "window", "backfit_passes", "max_failure_fraction", "track_cavity"}, ("fit",))
    fit = {
        "map": None,
        "window": r.get(ft, "window", ("fit",), float, 150.0, _positive),
        "backfit_passes": r.get(ft, "backfit_passes", ("fit",), int, 3, _positive),
        "max_failure_fraction": r.get(ft, "max_failure_fraction", ("fit",), float, 0.3,
                                      lambda v: None if 0 <= v <= 1 else "must lie in [0, 1]"),
        "track_cavity": r.get(ft, "track_cavity", ("fit",), bool, True),
    }
    if "map" in ft:
        mp = r.get(ft, "map", ("fit",), str)
        fit["map"] = str((base / mp) if not Path(mp).is_absolute() else Path(mp))

    mv = r.get(raw, "modevolume", (), dict, {})
    r.unknown(mv, {"fieldmap", "analytic_loop", "sample_z", "thresholds", "density", "levels",
                   "gamma_s", "f_c", "frame", "transition_field"}, ("modevolume",))
    loop = r.get(mv, "analytic_loop", ("modevolume",), dict, {})
    lp = ("modevolume", "analytic_loop")
    r.unknown(loop, {"radius", "lower", "upper", "step", "power_dbm", "wire_radius"}, lp)

    def _vec3(d, key, path, default):
        v = r.get(d, key, path, list, default)
        if len(v) != 3 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in v):
            r.fail(f"'{key}' must be three numbers", path + (key,))
        return [float(x) for x in v]

    modevolume = {
        "fieldmap": None,
        "analytic_loop": {
            "radius": r.get(loop, "radius", lp, float, 15.0, _positive),
            "lower": _vec3(loop, "lower", lp, [-25.0, -25.0, -8.0]),
            "upper": _vec3(loop, "upper", lp, [25.0, 25.0, 8.0]),
            "step": r.get(loop, "step", lp, float, 0.5, _positive),
            "power_dbm": r.get(loop, "power_dbm", lp, float, -81.0),
            "wire_radius": r.get(loop, "wire_radius", lp, float, 1.0, _nonneg),
        },
        "sample_z": None,
        "thresholds": None,
        "density": r.get(mv, "density", ("modevolume",), float, presets.GD_DENSITY_PER_UM3, _positive),
        "levels": None,
        "gamma_s": r.get(mv, "gamma_s", ("modevolume",), float, 8.1, _positive),
        "f_c": r.get(mv, "f_c", ("modevolume",), float, cavity["f0"], _positive),
        "frame": r.get(mv, "frame", ("modevolume",), str, "chip_normal_x",
                       lambda v: None if v in ("chip_normal_x", "identity") else "must be 'chip_normal_x' or 'identity'"),
        "transition_field": r.get(mv, "transition_field", ("modevolume",), float, None),
    }
    if "fieldmap" in mv:
        fp = r.get(mv, "fieldmap", ("modevolume",), str)
        modevolume["fieldmap"] = str((base / fp) if not Path(fp).is_absolute() else Path(fp))
    sz = r.get(mv, "sample_z", ("modevolume",), list, [0.0, 3.0])
    if len(sz) != 2 or not all(isinstance(x, (int, float)) and not isinstance(x, bool) for x in sz) or not sz[0] < sz[1]:
        r.fail("'sample_z' must be an ascending pair", ("modevolume", "sample_z"))
    modevolume["sample_z"] = [float(x) for x in sz]
    th = r.get(mv, "thresholds", ("modevolume",), list, [round(0.05 * k, 2) for k in range(1, 21)])
    if not th or not all(isinstance(x, (int, float)) and not isinstance(x, bool) and 0 < x <= 1 for x in th) \
            or any(b < a for a, b in zip(th, th[1:])):
        r.fail("'thresholds' must be ascending numbers in (0, 1]", ("modevolume", "thresholds"))
    modevolume["thresholds"] = [float(x) for x in th]
    if "levels" in mv:
        lev = r.get(mv, "levels", ("modevolume",), list)
        if len(lev) != 2 or not all(isinstance(v, int) for v in lev) or not 1 <= lev[0] < lev[1] <= sys.dim:
            r.fail("'levels' must be two increasing 1-based level numbers", ("modevolume", "levels"))
        modevolume["levels"] = (lev[0] - 1, lev[1] - 1)
    elif sys.dim >= 14:
        # the R2 pair of the reference system
        modevolume["levels"] = (2, 13)

    out = overrides.get("out") or r.get(raw, "output", (), str, "out")
    out_path = Path(out)
    if not out_path.is_absolute() and overrides.get("out") is None:
        out_path = base / out_path

    return RunConfig(
        spin_system=sys,
        orientation=orientation,
        levels=levels,
        cavity=cavity,
        scan=scan,
        resonances=tuple(resonances),
        f_target=f_target,
        noise_sigma=sigma,
        seed=seed,
        fit=fit,
        modevolume=modevolume,
        output=out_path,
        source=Path(source) if source else None,
        raw=raw,
    )
