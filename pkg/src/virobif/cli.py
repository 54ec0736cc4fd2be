"""Batch front-end: named figure presets and config-driven runs.

Usage::

    virobif list
    virobif show fig-P22
    virobif run fig-bif11T --out results
    virobif run --config my.cfg --format json

Every run writes its data files into ``<out>/<scenario name>/`` together
with ``manifest.json`` (inputs, versions, wall time, checksums).  Data
files carry no timestamps so reruns are byte-identical.

Exit codes: 0 ok, 1 numerical failure (artifacts renamed ``*.partial``),
2 usage or configuration error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import math
import os
import platform
import sys
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Callable, Sequence

import numpy as np
import scipy

from . import __version__
from .bifurcation import locate_critical, region_map, sweep_branches
from .dynamics import (
    DEFAULT_ATOL,
    DEFAULT_RTOL,
    continue_cycles,
    cycle_from_hopf,
    find_limit_cycle,
    first_lyapunov_coefficient,
    integrate,
    largest_lyapunov_exponent,
)
from .equilibria import all_equilibria
from .export import csv_text, json_text
from .model import ModelParams
from .stability import classify

__all__ = ["Scenario", "ConfigError", "NumericalFailure", "PRESETS", "load_config", "run_scenario", "main"]

OUT_ENV = "VIROBIF_OUT"
DEFAULT_OUT = "virobif-out"
KINDS = ("sweep", "region_map", "integrate", "cycle", "critical_points", "equilibria")
PARAM_KEYS = ("lambda", "K", "beta", "gamma", "b", "delta", "beta_y", "beta_v", "beta_z", "c", "epsilon")
STATE = ("x", "y", "v", "z")

EXIT_OK, EXIT_NUMERIC, EXIT_USAGE = 0, 1, 2


class ConfigError(ValueError):
    """Invalid scenario; ``line`` points into the config file when known."""

    def __init__(self, message: str, line: int | None = None, source: str | None = None):
        self.line, self.source, self.bare = line, source, message
        where = ""
        if source:
            where = f"{source}:{line}: " if line else f"{source}: "
        elif line:
            where = f"line {line}: "
        super().__init__(where + message)


class NumericalFailure(RuntimeError):
    pass


@dataclass(frozen=True)
class Scenario:
    name: str
    figure: str
    kind: str
    params: dict
    options: dict
    description: str = ""
    notes: tuple = ()

    def model(self) -> ModelParams:
        return ModelParams.from_dict(self.params)

    def to_dict(self) -> dict:
        return {"name": self.name, "figure": self.figure, "kind": self.kind, "params": dict(self.params),
                "options": dict(self.options), "description": self.description, "notes": list(self.notes)}


# -- presets -------------------------------------------------------------------

P3D = {"lambda": 0.36, "beta": 0.11, "delta": 0.44, "K": 1.0, "gamma": 1.0}
P_EPS0 = {"lambda": 0.36, "beta": 0.11, "delta": 0.2, "K": 1.0, "gamma": 1.0,
          "beta_v": 0.16, "beta_y": 0.48, "beta_z": 0.6, "c": 0.036, "epsilon": 0}
P_EPS1 = {"K": 1.0, "beta": 43.5, "lambda": 1.0, "gamma": 1 / 128, "delta": 0.5,
          "beta_y": 1.0, "beta_v": 1.0, "beta_z": 1.0, "c": 1.0, "epsilon": 1}

FAR = [0.9, 0.01, 0.01, 0.01]


def _preset(name, figure, kind, params, description, notes=(), **options) -> Scenario:
    return Scenario(name, figure, kind, dict(params), options, description, tuple(notes))


PRESET_LIST = [
    _preset("fig-bif11T", "bif11T", "sweep", {**P3D, "b": 28.0},
            "immune-free model: equilibrium branches in b, transcritical at b0 = 5 and Hopf at bH",
            dim=3, grid=[1.0, 40.0, 400]),
    _preset("fig-fig5T", "fig5T", "integrate", {**P3D, "b": 28.0},
            "immune-free model at b = 28: time series from a start near E* and one far away",
            ["the far-away start is not given numerically; (0.9, 0.01, 0.01) is used"],
            dim=3, inits=[[0.149, 0.0431317, 2.64672], [0.9, 0.01, 0.01]], t_end=2000.0, samples=4001),
    _preset("fig-cy113D", "cy113D", "cycle", {**P3D, "b": 28.0},
            "immune-free model at b = 28: attracting cycle around the unstable E*, with both paths",
            ["the far-away start is not given numerically; (0.9, 0.01, 0.01) is used"],
            dim=3, seed_state=[0.149, 0.0431317, 2.64672], t_transient=20000.0, t_window=1000.0,
            inits=[[0.149, 0.0431317, 2.64672], [0.9, 0.01, 0.01]], t_end=2000.0, samples=4001),
    _preset("fig-BiifT17", "BiifT17", "sweep", {**P_EPS0, "b": 9.5},
            "epsilon = 0: branches in b with transcritical, immune-window edges, fold and Hopf points",
            grid=[1.0, 25.0, 400]),
    _preset("fig-Bifx", "Bifx", "sweep", {**P_EPS0, "b": 9.5},
            "epsilon = 0: x of the equilibria against b, with the interior v >= 0 constraint curve",
            grid=[1.0, 25.0, 400]),
    _preset("fig-map4", "map4", "region_map", {**P_EPS0, "b": 9.5},
            "epsilon = 0: (b, beta) plane labelled by stable-attractor signature, with boundary curves",
            ["axis ranges are not given numerically; b in [1, 25] and beta in [0.01, 0.3] are used"],
            b_range=[1.0, 25.0], beta_range=[0.01, 0.3], resolution=[200, 200]),
    _preset("fig-P22", "P22", "integrate", {**P_EPS0, "b": 9.5},
            "epsilon = 0, b = 9.5: bistability, one orbit to E* and one to E_im",
            ["the E* start completes (0.9, 0.01) with v0 = 1.2, z0 = 0.01"],
            inits=[[0.9, 0.01, 1.2, 0.01], [0.5, 0.01, 1.2, 0.5]], t_end=1900.0, samples=3801),
    _preset("fig-PHI", "PHI", "cycle", {**P_EPS0, "b": 23.0},
            "epsilon = 0, b = 23: x time plots from x(0) = 0.3, 0.9 and the limit cycle",
            ["v0 = z0 = 0.5 complete the partially specified starts"],
            seed_state=[0.25, 0.05, 0.5, 0.5], t_transient=2000.0, t_window=1000.0,
            inits=[[0.3, 0.05, 0.5, 0.5], [0.9, 0.05, 0.5, 0.5]], t_end=1000.0, samples=2001),
    _preset("fig-EriB", "EriB", "sweep", {**P_EPS1, "b": 27.0},
            "epsilon = 1: y of the equilibria against b, folds, Hopf and the y_b crossing",
            ["b0 = 1.02299 would need K = 1/2; K = 1 (b0 = 1.01149) is used, matching the immune-bound crossing at 14.0011"],
            grid=[1.0, 60.0, 400]),
    _preset("fig-Bif1x", "Bif1x", "sweep", {**P_EPS1, "b": 27.0},
            "epsilon = 1: x of the equilibria against b",
            grid=[1.0, 60.0, 400]),
    _preset("fig-LC-diag", "LC-diag", "cycle", {**P_EPS1, "b": 29.9},
            "epsilon = 1: cycle branch from the Hopf point on E_im, with its two limit points in b",
            mode="hopf_branch", branch="E_im", hopf_bracket=[29.8, 30.0], range=[29.8, 31.5],
            ds=1e-3, ds_max=0.05, max_steps=400),
    _preset("fig-PG-01b", "PG-01b", "integrate", {**P_EPS1, "b": 27.0},
            "epsilon = 1, b = 27: convergence to E_plus", inits=[FAR], t_end=400.0, samples=4001),
    _preset("fig-PG-02", "PG-02", "integrate", {**P_EPS1, "b": 29.5},
            "epsilon = 1, b = 29.5: convergence to E_plus", inits=[FAR], t_end=400.0, samples=4001),
    _preset("fig-ppG-2LC", "ppG-2LC", "integrate", {**P_EPS1, "b": 42.0},
            "epsilon = 1, b = 42: bistability between a cycle and E_plus",
            inits=[FAR, [0.05, 0.05, 0.0043, 0.1954]], t_end=3000.0, samples=6001),
    _preset("fig-PG-03", "PG-03", "integrate", {**P_EPS1, "b": 50.0},
            "epsilon = 1, b = 50: no stable attractor; orbit and largest Lyapunov exponent estimate",
            inits=[FAR], t_end=125.0, samples=2501, lyapunov_horizon=2000.0, lyapunov_renorm=1.0),
]
PRESETS: dict[str, Scenario] = {}


# -- config parsing ------------------------------------------------------------


def _key_lines_json(text: str, keys) -> dict[str, int]:
    lines = {}
    for k in keys:
        needle = json.dumps(k)
        for i, raw in enumerate(text.splitlines(), 1):
            if needle in raw:
                lines[k] = i
                break
    return lines


def parse_config_text(text: str, json_format: bool | None = None) -> tuple[dict, dict[str, int]]:
    """Raw ``{key: value}`` and ``{key: line}`` from JSON or ``key = value`` text.

    In the line format a value is parsed as JSON when possible (numbers,
    lists, quoted strings, true/false) and otherwise kept as a bare word.
    """
    if json_format is None:
        json_format = text.lstrip().startswith("{")
    if json_format:
        try:
            data = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"invalid JSON: {exc.msg} (column {exc.colno})", exc.lineno) from None
        if not isinstance(data, dict):
            raise ConfigError("top level must be an object", 1)
        return data, _key_lines_json(text, data)
    data, lines = {}, {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"expected 'name = value', got {raw.strip()!r}", lineno)
        key, val = (t.strip() for t in line.split("=", 1))
        if not key:
            raise ConfigError("missing name before '='", lineno)
        if key in data:
            raise ConfigError(f"duplicate key {key!r} (first on line {lines[key]})", lineno)
        if not val:
            raise ConfigError(f"missing value for {key!r}", lineno)
        try:
            data[key] = json.loads(val)
        except json.JSONDecodeError:
            if val[0] in "[{\"":
                raise ConfigError(f"malformed value for {key!r}: {val!r}", lineno) from None
            data[key] = val
        lines[key] = lineno
    return data, lines


def _num(v) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


class _Checker:
    def __init__(self, lines: dict[str, int], source: str | None):
        self.lines, self.source = lines, source

    def fail(self, key: str | None, msg: str):
        raise ConfigError(msg, self.lines.get(key) if key else None, self.source)

    def number(self, key, v, positive=False, nonneg=False) -> float:
        if not _num(v):
            self.fail(key, f"{key} must be a finite number, got {v!r}")
        if positive and v <= 0:
            self.fail(key, f"{key} must be positive, got {v!r}")
        if nonneg and v < 0:
            self.fail(key, f"{key} must be nonnegative, got {v!r}")
        return float(v)

    def integer(self, key, v, low=None) -> int:
        if not _num(v) or float(v) != int(v):
            self.fail(key, f"{key} must be an integer, got {v!r}")
        if low is not None and v < low:
            self.fail(key, f"{key} must be at least {low}, got {v!r}")
        return int(v)

    def word(self, key, v, choices=None) -> str:
        if not isinstance(v, str) or not v:
            self.fail(key, f"{key} must be a non-empty string, got {v!r}")
        if choices is not None and v not in choices:
            self.fail(key, f"{key} must be one of {', '.join(choices)}; got {v!r}")
        return v

    def pair(self, key, v) -> list[float]:
        if not isinstance(v, list) or len(v) != 2 or not all(_num(a) for a in v):
            self.fail(key, f"{key} must be [low, high], got {v!r}")
        if not v[0] < v[1]:
            self.fail(key, f"{key} must be increasing, got {v!r}")
        return [float(a) for a in v]

    def grid(self, key, v) -> list:
        if not isinstance(v, list) or len(v) != 3 or not all(_num(a) for a in v):
            self.fail(key, f"{key} must be [start, stop, count], got {v!r}")
        if not v[0] < v[1]:
            self.fail(key, f"{key} is empty: start {v[0]} is not below stop {v[1]}")
        count = self.integer(key, v[2], low=2)
        return [float(v[0]), float(v[1]), count]

    def states(self, key, v, dim) -> list[list[float]]:
        if not isinstance(v, list) or not v:
            self.fail(key, f"{key} must be a non-empty list of states")
        out = []
        for s in v:
            out.append(self.state(key, s, dim))
        return out

    def state(self, key, v, dim) -> list[float]:
        if not isinstance(v, list) or len(v) != dim or not all(_num(a) for a in v):
            self.fail(key, f"{key}: each state needs {dim} finite numbers, got {v!r}")
        return [float(a) for a in v]


_COMMON = ("preset", "name", "figure", "kind", "description", "dim", "tol_abs", "tol_rel", "seed")
_OPTIONS = {
    "sweep": ("param", "grid"),
    "critical_points": ("param", "grid"),
    "region_map": ("b_range", "beta_range", "resolution"),
    "integrate": ("inits", "t_end", "samples", "lyapunov_horizon", "lyapunov_renorm"),
    "cycle": ("mode", "seed_state", "t_transient", "t_window", "segments", "inits", "t_end", "samples",
              "branch", "hopf_bracket", "range", "ds", "ds_max", "max_steps"),
    "equilibria": (),
}


def build_scenario(data: dict, lines: dict[str, int] | None = None, source: str | None = None) -> Scenario:
    """Validate raw config values (optionally layered on a preset)."""
    lines = lines or {}
    ck = _Checker(lines, source)
    base = None
    if "preset" in data:
        pname = ck.word("preset", data["preset"])
        if pname not in PRESETS:
            ck.fail("preset", f"unknown preset {pname!r}; run 'list' to see the available names")
        base = PRESETS[pname]
    params = dict(base.params) if base else {}
    options = dict(base.options) if base else {}
    kind = data.get("kind", base.kind if base else None)
    if kind is None:
        ck.fail(None, "missing 'kind' (one of " + ", ".join(KINDS) + ")")
    kind = ck.word("kind", kind, KINDS)
    allowed = set(_COMMON) | set(_OPTIONS[kind]) | set(PARAM_KEYS)
    for key, val in data.items():
        if key not in allowed:
            ck.fail(key, f"unknown key {key!r} for kind {kind}")
        if key in PARAM_KEYS:
            params[key] = ck.number(key, val)
        elif key not in ("preset", "kind", "name", "figure", "description"):
            options[key] = val
    if base and kind != base.kind:
        options = {k: v for k, v in options.items() if k in _OPTIONS[kind] or k in _COMMON}

    try:
        model = ModelParams.from_dict(params)
    except (TypeError, ValueError) as exc:
        msg = str(exc)
        key = next((k for k in PARAM_KEYS if k in msg and k in lines), None)
        if key is None and "lam" in msg:
            key = "lambda"
        if "missing" in msg and "lam" in msg:
            msg = "parameter 'lambda' is required"
        ck.fail(key, msg)
    opts = _check_options(ck, kind, options, model)
    name = data.get("name", base.name if base else Path(source).stem if source else "scenario")
    name = ck.word("name", name)
    if any(c in name for c in "/\\") or name.startswith("."):
        ck.fail("name", f"name must be a plain file name, got {name!r}")
    figure = ck.word("figure", data.get("figure", base.figure if base else "custom"))
    desc = data.get("description", base.description if base else "")
    return Scenario(name, figure, kind, params, opts, str(desc), base.notes if base else ())


def _check_options(ck: _Checker, kind: str, o: dict, model: ModelParams) -> dict:
    out: dict[str, Any] = {}
    dim = ck.integer("dim", o.get("dim", 4))
    if dim not in (3, 4):
        ck.fail("dim", f"dim must be 3 or 4, got {dim}")
    out["dim"] = dim
    for key in ("tol_abs", "tol_rel"):
        if key in o:
            out[key] = ck.number(key, o[key], positive=True)
    out["seed"] = ck.integer("seed", o.get("seed", 0), low=0)
    if kind in ("sweep", "critical_points"):
        out["param"] = ck.word("param", o.get("param", "b"), PARAM_KEYS[:-1])
        if "grid" not in o:
            ck.fail(None, "sweep needs 'grid = [start, stop, count]'")
        out["grid"] = ck.grid("grid", o["grid"])
    elif kind == "region_map":
        if model.epsilon != 0 or dim != 4:
            ck.fail("kind", "region_map needs epsilon = 0 and dim = 4")
        for key in ("b_range", "beta_range"):
            if key not in o:
                ck.fail(None, f"region_map needs '{key} = [low, high]'")
            out[key] = ck.pair(key, o[key])
        if out["b_range"][0] < 1:
            ck.fail("b_range", "b_range must start at b >= 1")
        if out["beta_range"][0] <= 0:
            ck.fail("beta_range", "beta_range must be positive")
        res = o.get("resolution", [200, 200])
        if _num(res):
            res = [res, res]
        if not isinstance(res, list) or len(res) != 2:
            ck.fail("resolution", f"resolution must be [nb, nbeta], got {res!r}")
        out["resolution"] = [ck.integer("resolution", r, low=2) for r in res]
    elif kind == "integrate":
        if "inits" not in o or "t_end" not in o:
            ck.fail(None, "integrate needs 'inits' and 't_end'")
        _orbit_options(ck, o, out, dim)
        out["lyapunov_horizon"] = ck.number("lyapunov_horizon", o.get("lyapunov_horizon", 0.0), nonneg=True)
        out["lyapunov_renorm"] = ck.number("lyapunov_renorm", o.get("lyapunov_renorm", 1.0), positive=True)
    elif kind == "cycle":
        mode = ck.word("mode", o.get("mode", "seed"), ("seed", "hopf_branch"))
        out["mode"] = mode
        if mode == "seed":
            if "seed_state" not in o:
                ck.fail(None, "cycle needs 'seed_state = [x, y, v(, z)]'")
            out["seed_state"] = ck.state("seed_state", o["seed_state"], dim)
            out["t_transient"] = ck.number("t_transient", o.get("t_transient", 2000.0), nonneg=True)
            out["t_window"] = ck.number("t_window", o.get("t_window", 1000.0), positive=True)
            out["segments"] = ck.integer("segments", o.get("segments", 1), low=1)
            if "inits" in o:
                if "t_end" not in o:
                    ck.fail("inits", "extra orbits need 't_end'")
                _orbit_options(ck, o, out, dim)
        else:
            if dim != 4:
                ck.fail("dim", "hopf_branch mode needs dim = 4")
            out["branch"] = ck.word("branch", o.get("branch", "E_im"))
            if "hopf_bracket" not in o or "range" not in o:
                ck.fail(None, "hopf_branch needs 'hopf_bracket' and 'range'")
            out["hopf_bracket"] = ck.pair("hopf_bracket", o["hopf_bracket"])
            out["range"] = ck.pair("range", o["range"])
            out["ds"] = ck.number("ds", o.get("ds", 1e-3), positive=True)
            out["ds_max"] = ck.number("ds_max", o.get("ds_max", 0.05), positive=True)
            out["max_steps"] = ck.integer("max_steps", o.get("max_steps", 400), low=1)
    return out


def _orbit_options(ck: _Checker, o: dict, out: dict, dim: int) -> None:
    out["inits"] = ck.states("inits", o["inits"], dim)
    out["t_end"] = ck.number("t_end", o["t_end"], positive=True)
    out["samples"] = ck.integer("samples", o.get("samples", 2001), low=2)


def _normalize(s: Scenario) -> Scenario:
    opts = _check_options(_Checker({}, s.name), s.kind, s.options, s.model())
    return Scenario(s.name, s.figure, s.kind, s.params, opts, s.description, s.notes)


PRESET_LIST = [_normalize(s) for s in PRESET_LIST]
PRESETS.update((s.name, s) for s in PRESET_LIST)


def load_config(path: str | Path) -> Scenario:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config not found: {path}")
    try:
        text = path.read_text()
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    try:
        data, lines = parse_config_text(text, path.suffix.lower() == ".json" or None)
        return build_scenario(data, lines, str(path))
    except ConfigError as exc:
        if exc.source is None:
            raise ConfigError(exc.bare, exc.line, str(path)) from None
        raise


def scenario_text(s: Scenario) -> str:
    """``key = value`` rendering of a scenario, loadable by ``load_config``."""
    rows = [("name", s.name), ("figure", s.figure), ("kind", s.kind), ("description", s.description)]
    rows += [(k, s.params[k]) for k in PARAM_KEYS if k in s.params]
    rows += sorted(s.options.items())
    out = []
    for k, v in rows:
        out.append(f"{k} = {json.dumps(v)}\n")
    return "".join(out)


# -- artifact sink -------------------------------------------------------------


class _Sink:
    """Writes tables as they are produced and remembers them for the manifest."""

    def __init__(self, folder: Path, fmt: str):
        self.folder, self.fmt = folder, fmt
        self.files: list[str] = []

    def table(self, stem: str, header: Sequence[str], rows: Sequence[Sequence]) -> None:
        if self.fmt == "csv":
            name, body = f"{stem}.csv", csv_text(header, rows)
        else:
            name, body = f"{stem}.json", json_text({"columns": list(header), "rows": [list(r) for r in rows]})
        (self.folder / name).write_text(body)
        self.files.append(name)

    def mark_partial(self) -> None:
        renamed = []
        for name in self.files:
            src = self.folder / name
            dst = self.folder / (name + ".partial")
            src.replace(dst)
            renamed.append(dst.name)
        self.files = renamed


def _sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


# -- runners -------------------------------------------------------------------


@dataclass
class _Ctx:
    scenario: Scenario
    p: ModelParams
    sink: _Sink
    jobs: int
    atol: float
    rtol: float
    summary: dict = field(default_factory=dict)


def _kv_rows(d: dict) -> list[list]:
    return [[k, v] for k, v in d.items()]


def _run_sweep(ctx: _Ctx, critical_only: bool = False) -> None:
    o = ctx.scenario.options
    start, stop, count = o["grid"]
    d = sweep_branches(ctx.p, o["param"], np.linspace(start, stop, count), dim=o["dim"], jobs=ctx.jobs)
    if not critical_only:
        ctx.sink.table("branches", d.header(), d.rows())
    ctx.sink.table("critical_points", ["kind", d.swept_param, "branch"],
                   [[c.kind, c.value, c.branch] for c in d.critical_points])
    if d.domain_curves and not critical_only:
        rows = [[name, a, b] for name in sorted(d.domain_curves) for a, b in d.domain_curves[name]]
        ctx.sink.table("domain_curves", ["curve", d.swept_param, "value"], rows)
    ctx.summary["critical_points"] = [[c.kind, c.value, c.branch] for c in d.critical_points]
    ctx.summary["warnings"] = list(d.warnings)


def _run_region_map(ctx: _Ctx) -> None:
    o = ctx.scenario.options
    m = region_map(ctx.p, tuple(o["b_range"]), tuple(o["beta_range"]), tuple(o["resolution"]), jobs=ctx.jobs)
    rows = [[float(b), float(be), str(m.labels[i, j])] for i, be in enumerate(m.beta_grid)
            for j, b in enumerate(m.b_grid)]
    ctx.sink.table("regions", ["b", "beta", "label"], rows)
    crows = [[name, float(b), float(be)] for name in sorted(m.boundary_curves) for b, be in m.boundary_curves[name]]
    ctx.sink.table("boundaries", ["curve", "b", "beta"], crows)
    labels, counts = np.unique(m.labels.astype(str), return_counts=True)
    ctx.summary["label_counts"] = {str(a): int(c) for a, c in zip(labels, counts)}


def _nearest(p: ModelParams, s: np.ndarray, dim: int) -> tuple[str, float]:
    best, dist = "", math.inf
    for e in all_equilibria(p, dim=dim):
        d = float(np.linalg.norm(s - e.point))
        if d < dist:
            best, dist = e.name, d
    return best, dist


def _run_orbits(ctx: _Ctx) -> None:
    o = ctx.scenario.options
    dim = o["dim"]
    header = ["orbit", *[f"{c}0" for c in STATE[:dim]], *[f"{c}_final" for c in STATE[:dim]],
              "nearest_equilibrium", "distance", "tail_range_x", "violations", "success"]
    ends = []
    failure = None
    for k, init in enumerate(o["inits"], 1):
        orb = integrate(ctx.p, init, (0.0, o["t_end"]), rtol=ctx.rtol, atol=ctx.atol, samples=o["samples"])
        ctx.sink.table(f"orbit_{k}", orb.header(), orb.to_rows())
        tail = orb.states[orb.times >= orb.times[-1] * 0.75, 0]
        name, dist = _nearest(ctx.p, orb.final, dim)
        ends.append([k, *init, *map(float, orb.final), name, dist, float(np.ptp(tail)), orb.violations,
                     orb.success])
        if not orb.success:
            failure = f"orbit {k}: {orb.message}"
            break
    ctx.sink.table("endpoints", header, ends)
    ctx.summary["endpoints"] = [dict(zip(header, r)) for r in ends]
    if failure:
        raise NumericalFailure(failure)


def _run_integrate(ctx: _Ctx) -> None:
    o = ctx.scenario.options
    _run_orbits(ctx)
    if o["lyapunov_horizon"] > 0:
        est = largest_lyapunov_exponent(ctx.p, o["inits"][0], o["lyapunov_horizon"], renorm=o["lyapunov_renorm"],
                                        seed=o["seed"])
        ctx.sink.table("lyapunov", ["t", "estimate"], est.trace)
        ctx.summary["largest_lyapunov_exponent"] = est.value


def _run_cycle(ctx: _Ctx) -> None:
    o = ctx.scenario.options
    if o["mode"] == "hopf_branch":
        _run_hopf_branch(ctx)
        return
    if "inits" in o:
        _run_orbits(ctx)
    cyc = find_limit_cycle(ctx.p, o["seed_state"], t_transient=o["t_transient"], t_window=o["t_window"],
                           segments=o["segments"])
    dim = o["dim"]
    times = np.linspace(0.0, cyc.period, len(cyc.samples))
    ctx.sink.table("cycle", ["t", *STATE[:dim]], [[t, *map(float, s)] for t, s in zip(times, cyc.samples)])
    info = {"period": cyc.period, "refined": cyc.refined, "residual": cyc.residual, "stability": cyc.stability,
            "iterations": cyc.iterations, "div_integral": cyc.div_integral,
            **{f"anchor_{c}": float(a) for c, a in zip(STATE, cyc.anchor)}}
    ctx.sink.table("cycle_summary", ["key", "value"], _kv_rows(info))
    ctx.sink.table("floquet", ["index", "re", "im", "modulus"],
                   [[i, float(m.real), float(m.imag), abs(m)] for i, m in enumerate(cyc.floquet, 1)])
    ctx.summary["cycle"] = {"period": cyc.period, "refined": cyc.refined, "stability": cyc.stability}
    if not cyc.refined:
        raise NumericalFailure("shooting Newton did not converge; Poincare estimate written")


def _run_hopf_branch(ctx: _Ctx) -> None:
    o = ctx.scenario.options
    p = ctx.p
    bH = locate_critical(p, "hopf", tuple(o["hopf_bracket"]), "b", o["branch"], 4)
    pH = p.with_(b=bH)
    eqs = [e for e in all_equilibria(pH) if e.name == o["branch"]]
    if not eqs:
        raise NumericalFailure(f"branch {o['branch']} not present at b = {bH}")
    point = eqs[0].point
    l1 = first_lyapunov_coefficient(pH, point)
    ev = classify(pH, point).eigenvalues
    omega = max(z.imag for z in ev)
    info = {"b_H": bH, "branch": o["branch"], "omega": omega, "period_limit": 2 * math.pi / omega,
            "first_lyapunov_coefficient": l1, **{f"{c}": float(a) for c, a in zip(STATE, point)}}
    ctx.sink.table("hopf", ["key", "value"], _kv_rows(info))
    start = cycle_from_hopf(pH, point)
    br = continue_cycles(pH, "b", start, tuple(o["range"]), ds=o["ds"], ds_max=o["ds_max"],
                         max_steps=o["max_steps"])
    header = br.header() + ["max_multiplier_modulus"]
    rows = [r + [max(abs(m) for m in ms)] for r, ms in zip(br.to_rows(), br.multipliers)]
    ctx.sink.table("cycle_branch", header, rows)
    ctx.sink.table("lpc", ["kind", "b"], [[k, f] for f, k in sorted(zip(br.folds, br.fold_kinds))])
    ctx.summary["hopf"] = {"b_H": bH, "first_lyapunov_coefficient": l1}
    ctx.summary["folds"] = [[k, f] for f, k in sorted(zip(br.folds, br.fold_kinds))]
    ctx.summary["branch_message"] = br.message
    if br.message.startswith("step failure"):
        raise NumericalFailure(f"cycle continuation stopped: {br.message}")


def _run_equilibria(ctx: _Ctx) -> None:
    dim = ctx.scenario.options["dim"]
    header = ["name", "tag", *STATE[:dim], "classification", "leading_re",
              *[f"eig{i}_{part}" for i in range(1, dim + 1) for part in ("re", "im")]]
    rows = []
    for e in all_equilibria(ctx.p, dim=dim):
        rep = classify(ctx.p, e)
        eig = [a for z in rep.eigenvalues for a in (float(z.real), float(z.imag))]
        rows.append([e.name, e.tag, *map(float, e.point), rep.classification, rep.leading_real_part, *eig])
    ctx.sink.table("equilibria", header, rows)
    ctx.summary["equilibria"] = [[r[0], r[dim + 2]] for r in rows]


RUNNERS: dict[str, Callable[[_Ctx], None]] = {
    "sweep": _run_sweep,
    "critical_points": lambda ctx: _run_sweep(ctx, critical_only=True),
    "region_map": _run_region_map,
    "integrate": _run_integrate,
    "cycle": _run_cycle,
    "equilibria": _run_equilibria,
}


def _versions() -> dict:
    return {"virobif": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__}


def run_scenario(
    s: Scenario,
    out_dir: str | Path,
    fmt: str = "csv",
    jobs: int = 1,
    tol_abs: float | None = None,
    tol_rel: float | None = None,
    log: Callable[[str], None] | None = None,
) -> tuple[int, Path]:
    """Run one scenario; returns (exit code, scenario folder)."""
    folder = Path(out_dir) / s.name
    folder.mkdir(parents=True, exist_ok=True)
    _clear_previous(folder)
    atol = tol_abs if tol_abs is not None else s.options.get("tol_abs", DEFAULT_ATOL)
    rtol = tol_rel if tol_rel is not None else s.options.get("tol_rel", DEFAULT_RTOL)
    sink = _Sink(folder, fmt)
    ctx = _Ctx(s, s.model(), sink, jobs, atol, rtol)
    t0 = time.perf_counter()
    status, error, code = "ok", None, EXIT_OK
    try:
        RUNNERS[s.kind](ctx)
    except Exception as exc:  # any numerical breakdown inside a runner
        status, error, code = "failed", f"{type(exc).__name__}: {exc}", EXIT_NUMERIC
        sink.mark_partial()
    wall = time.perf_counter() - t0
    manifest = {
        "scenario": s.to_dict(),
        "figure": s.figure,
        "format": fmt,
        "tolerances": {"abs": atol, "rel": rtol},
        "jobs": jobs,
        "versions": _versions(),
        "started": time.strftime("%Y-%m-%dT%H:%M:%S%z"),
        "wall_time_s": wall,
        "status": status,
        "error": error,
        "summary": ctx.summary,
        "files": {name: _sha256(folder / name) for name in sink.files},
    }
    (folder / "manifest.json").write_text(json_text(manifest))
    if log:
        log(f"{s.name}: {status} in {wall:.2f} s -> {folder}" + (f" ({error})" if error else ""))
    return code, folder


def _clear_previous(folder: Path) -> None:
    """Drop data files recorded by an earlier run of the same scenario."""
    man = folder / "manifest.json"
    if not man.is_file():
        return
    try:
        names = json.loads(man.read_text()).get("files", {})
    except (ValueError, OSError):
        return
    for name in names:
        target = folder / name
        if target.parent == folder and target.is_file():
            target.unlink()


# -- command line --------------------------------------------------------------


def _parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="virobif", description="Oncolytic virotherapy model analysis.")
    sub = ap.add_subparsers(dest="command", required=True)
    sub.add_parser("list", help="list the figure presets")
    sh = sub.add_parser("show", help="print a preset as an editable config")
    sh.add_argument("preset")
    run = sub.add_parser("run", help="run a preset or a config file")
    run.add_argument("preset", nargs="?", help="preset name (see 'list')")
    run.add_argument("--config", help="scenario file: JSON or 'key = value' lines")
    run.add_argument("--out", default=None, help=f"output directory (default ${OUT_ENV} or ./{DEFAULT_OUT})")
    run.add_argument("--jobs", type=int, default=1, help="worker processes for grid evaluations")
    run.add_argument("--tol-abs", type=float, default=None, help="absolute integration tolerance")
    run.add_argument("--tol-rel", type=float, default=None, help="relative integration tolerance")
    run.add_argument("--format", choices=("csv", "json"), default="csv")
    return ap


def _list(out) -> None:
    w = max(len(n) for n in PRESETS)
    out.write(f"{'preset':<{w}}  {'figure':<8}  {'kind':<11}  description\n")
    for s in PRESET_LIST:
        out.write(f"{s.name:<{w}}  {s.figure:<8}  {s.kind:<11}  {s.description}\n")


def main(argv: Sequence[str] | None = None) -> int:
    ap = _parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_USAGE
    err = sys.stderr
    if args.command == "list":
        _list(sys.stdout)
        return EXIT_OK
    if args.command == "show":
        if args.preset not in PRESETS:
            err.write(f"error: unknown preset {args.preset!r}\n")
            return EXIT_USAGE
        sys.stdout.write(scenario_text(PRESETS[args.preset]))
        return EXIT_OK
    if (args.preset is None) == (args.config is None):
        err.write("error: give exactly one of a preset name or --config FILE\n")
        return EXIT_USAGE
    if args.jobs < 1:
        err.write("error: --jobs must be at least 1\n")
        return EXIT_USAGE
    for flag, val in (("--tol-abs", args.tol_abs), ("--tol-rel", args.tol_rel)):
        if val is not None and not (math.isfinite(val) and val > 0):
            err.write(f"error: {flag} must be a positive number\n")
            return EXIT_USAGE
    try:
        if args.config:
            scenario = load_config(args.config)
        elif args.preset in PRESETS:
            scenario = PRESETS[args.preset]
        else:
            raise ConfigError(f"unknown preset {args.preset!r}; run 'list' to see the available names")
    except ConfigError as exc:
        err.write(f"error: {exc}\n")
        return EXIT_USAGE
    out = args.out or os.environ.get(OUT_ENV) or DEFAULT_OUT
    try:
        Path(out).mkdir(parents=True, exist_ok=True)
        probe = Path(out) / ".write-test"
        probe.write_text("")
        probe.unlink()
    except OSError as exc:
        err.write(f"error: output directory {out!r} is not writable: {exc}\n")
        return EXIT_USAGE
    code, _ = run_scenario(scenario, out, args.format, args.jobs, args.tol_abs, args.tol_rel,
                           log=lambda m: err.write(m + "\n"))
    return code


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
