"""Equilibrium branches over a swept parameter and the (b, beta) region map."""

from __future__ import annotations

import json
import math
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.optimize import brentq

from .equilibria import (
    Equilibrium,
    all_equilibria,
    equilibrium_cubic,
    estar_y,
    fold_parameters,
    immune_window,
)
from .export import csv_text
from .model import ModelParams, jacobian
from .polyalg import cubic_discriminant
from .stability import (
    StabilityReport,
    characteristic_polynomial,
    classify,
    eigenvalues,
    hopf_burst_3d,
    routh_hurwitz,
)

__all__ = [
    "KINDS",
    "BranchPoint",
    "CriticalPoint",
    "BifurcationDiagram",
    "RegionMap2D",
    "REGION_LABELS",
    "sweep_branches",
    "locate_critical",
    "indicator",
    "region_label",
    "region_map",
]

KINDS = ("transcritical", "hopf", "fold", "window_edge", "immune_bound")
REGION_LABELS = ("EK_only", "Estar_only", "Eim_only", "bistable", "Estar_above_fold", "cycle", "other")
IM_TOL = 1e-6


@dataclass(frozen=True)
class BranchPoint:
    param: float
    equilibrium: Equilibrium
    report: StabilityReport


@dataclass(frozen=True)
class CriticalPoint:
    kind: str
    value: float
    branch: str


@dataclass
class BifurcationDiagram:
    swept_param: str
    grid: np.ndarray
    branches: dict[str, list[BranchPoint]]
    critical_points: list[CriticalPoint]
    domain_curves: dict[str, list[tuple[float, float]]] = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def critical_values(self, kind: str) -> list[float]:
        return [c.value for c in self.critical_points if c.kind == kind]

    def rows(self) -> list[list]:
        out = []
        for name in sorted(self.branches):
            for bp in self.branches[name]:
                out.append([bp.param, name, *map(float, bp.equilibrium.point), bp.report.classification,
                            bp.report.leading_real_part])
        return out

    def header(self) -> list[str]:
        n = 4
        for pts in self.branches.values():
            if pts:
                n = len(pts[0].equilibrium.point)
                break
        return [self.swept_param, "branch", *["x", "y", "v", "z"][:n], "stability", "leading_re"]

    def to_csv(self) -> str:
        return _csv(self.header(), self.rows())

    def critical_csv(self) -> str:
        return _csv(["kind", self.swept_param, "branch"],
                    [[c.kind, c.value, c.branch] for c in self.critical_points])

    def to_dict(self) -> dict:
        return {
            "swept_param": self.swept_param,
            "grid": [float(g) for g in self.grid],
            "branches": {
                name: [{"param": float(bp.param), "point": [float(a) for a in bp.equilibrium.point],
                        "stability": bp.report.to_dict()} for bp in pts]
                for name, pts in sorted(self.branches.items())
            },
            "critical_points": [{"kind": c.kind, "value": float(c.value), "branch": c.branch}
                                for c in self.critical_points],
            "domain_curves": {k: [[float(a), float(b)] for a, b in v] for k, v in self.domain_curves.items()},
            "warnings": list(self.warnings),
        }


@dataclass
class RegionMap2D:
    b_grid: np.ndarray
    beta_grid: np.ndarray
    labels: np.ndarray
    boundary_curves: dict[str, list[tuple[float, float]]]

    def label_at(self, b: float, beta: float) -> str:
        i = int(np.argmin(np.abs(self.beta_grid - beta)))
        j = int(np.argmin(np.abs(self.b_grid - b)))
        return str(self.labels[i, j])

    def to_csv(self) -> str:
        rows = []
        for i, beta in enumerate(self.beta_grid):
            for j, b in enumerate(self.b_grid):
                rows.append([float(b), float(beta), str(self.labels[i, j])])
        return _csv(["b", "beta", "label"], rows)

    def curves_csv(self) -> str:
        rows = [[name, float(b), float(beta)] for name in sorted(self.boundary_curves)
                for b, beta in self.boundary_curves[name]]
        return _csv(["curve", "b", "beta"], rows)

    def to_dict(self) -> dict:
        return {
            "b_grid": [float(b) for b in self.b_grid],
            "beta_grid": [float(b) for b in self.beta_grid],
            "labels": [[str(c) for c in row] for row in self.labels],
            "boundary_curves": {k: [[float(a), float(b)] for a, b in v]
                                for k, v in sorted(self.boundary_curves.items())},
        }


def _csv(header: Sequence[str], rows: Sequence[Sequence]) -> str:
    return csv_text(header, rows)


# -- per-grid evaluation -------------------------------------------------------


def _evaluate(args) -> list[tuple[Equilibrium, StabilityReport]]:
    p, dim = args
    return [(e, classify(p, e)) for e in all_equilibria(p, dim=dim)]


def _map(fn: Callable, items: list, jobs: int) -> list:
    if jobs > 1 and len(items) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as ex:
            return list(ex.map(fn, items, chunksize=max(1, len(items) // (4 * jobs))))
    return [fn(it) for it in items]


# -- indicators ----------------------------------------------------------------


def _branch_point(p: ModelParams, name: str, dim: int) -> np.ndarray | None:
    for e in all_equilibria(p, dim=dim, include_infeasible=True):
        if e.name == name:
            return e.point
    return None


def _pair_real(p: ModelParams, name: str, dim: int) -> float:
    pt = _branch_point(p, name, dim)
    if pt is None:
        return math.nan
    pairs = [z for z in eigenvalues(jacobian(p, pt)) if z.imag > IM_TOL]
    if not pairs:
        return math.nan
    return max(z.real for z in pairs)


def _y_b(p: ModelParams) -> float:
    if p.beta_y == 0:
        return math.inf
    return p.c * p.gamma * (p.b - 1) / (p.beta_y * p.beta_z)


def indicator(p: ModelParams, kind: str, param_name: str = "b", branch: str = "Estar", dim: int = 4):
    """Scalar function of the parameter whose sign change marks ``kind``."""
    def at(val):
        return p._unchecked_with(**{param_name: val})

    if kind == "transcritical":
        return lambda val: at(val).R0 - 1.0
    if kind == "window_edge":
        return lambda val: estar_y(at(val)) - at(val).y_e
    if kind == "fold":
        return lambda val: cubic_discriminant(equilibrium_cubic(at(val)))
    if kind == "hopf":
        return lambda val: _pair_real(at(val), branch, dim)
    if kind == "immune_bound":
        # epsilon = 1: y* meets y_b, the infected level above which interior z < 0
        return lambda val: estar_y(at(val)) - _y_b(at(val))
    raise ValueError(f"unknown kind {kind!r}; expected one of {KINDS}")


def locate_critical(
    p: ModelParams,
    kind: str,
    bracket: tuple[float, float],
    param_name: str = "b",
    branch: str = "Estar",
    dim: int = 4,
    rtol: float = 1e-10,
) -> float:
    """Refine a critical parameter value inside ``bracket`` (1e-8 relative or better)."""
    g = indicator(p, kind, param_name, branch, dim)
    lo, hi = map(float, bracket)
    glo, ghi = g(lo), g(hi)
    if not (np.isfinite(glo) and np.isfinite(ghi)) or glo * ghi > 0:
        trace = [(float(t), float(g(t))) for t in np.linspace(lo, hi, 5)]
        raise ValueError(f"{kind} indicator does not change sign on [{lo}, {hi}]; scan: {trace}")
    root = brentq(g, lo, hi, xtol=1e-14 * max(1.0, abs(lo)), rtol=rtol)
    if kind == "hopf":
        pt = _branch_point(p._unchecked_with(**{param_name: root}), branch, dim)
        ev = eigenvalues(jacobian(p._unchecked_with(**{param_name: root}), pt))
        if not any(z.imag > IM_TOL for z in ev):
            raise ValueError(f"degenerate crossing at {root}: no pair with |Im| > {IM_TOL}")
    return root


# -- sweeps --------------------------------------------------------------------


def _link(branches: dict[str, list[BranchPoint]], open_ids: dict[str, str], name: str,
          bp: BranchPoint, notes: list[str]) -> None:
    """Append ``bp`` to the open branch for ``name`` unless it jumps."""
    bid = open_ids.get(name)
    if bid is not None:
        pts = branches[bid]
        last = pts[-1].equilibrium.point
        jump = float(np.linalg.norm(bp.equilibrium.point - last))
        if len(pts) >= 2:
            secant = float(np.linalg.norm(last - pts[-2].equilibrium.point))
            limit = 10 * secant + 1e-9 * max(1.0, float(np.max(np.abs(last))))
            if jump > limit:
                k = 2
                while f"{name}#{k}" in branches:
                    k += 1
                new = f"{name}#{k}"
                msg = f"branch {bid} split at {bp.param:.12g}: jump {jump:.3g} > {limit:.3g}"
                warnings.warn(msg, RuntimeWarning)
                notes.append(msg)
                branches[new] = [bp]
                open_ids[name] = new
                return
        pts.append(bp)
        return
    bid = name
    k = 2
    while bid in branches:
        bid = f"{name}#{k}"
        k += 1
    branches[bid] = [bp]
    open_ids[name] = bid


def sweep_branches(
    p: ModelParams,
    param_name: str,
    grid: Sequence[float],
    dim: int = 4,
    jobs: int = 1,
) -> BifurcationDiagram:
    """Equilibria and their stability over ``grid`` with critical points."""
    grid = np.asarray(grid, dtype=float)
    if grid.size < 2 or np.any(np.diff(grid) <= 0):
        raise ValueError("grid must be strictly increasing with at least two points")
    params = [p.with_(**{param_name: float(g)}) for g in grid]
    evaluated = _map(_evaluate, [(q, dim) for q in params], jobs)

    branches: dict[str, list[BranchPoint]] = {}
    notes: list[str] = []
    open_ids: dict[str, str] = {}
    for g, eqs in zip(grid, evaluated):
        present = set()
        for e, rep in eqs:
            present.add(e.name)
            _link(branches, open_ids, e.name, BranchPoint(float(g), e, rep), notes)
        for name in list(open_ids):
            if name not in present:
                del open_ids[name]

    crit = _critical_points(p, param_name, grid, branches, dim)
    curves = _domain_curves(p, param_name, grid, evaluated)
    return BifurcationDiagram(param_name, grid, branches, crit, curves, notes)


def _scan_sign(fn, grid) -> list[tuple[float, float]]:
    vals = [fn(g) for g in grid]
    out = []
    for i in range(len(grid) - 1):
        a, b_ = vals[i], vals[i + 1]
        if np.isfinite(a) and np.isfinite(b_) and a * b_ < 0:
            out.append((grid[i], grid[i + 1]))
    return out


def _critical_points(p, name, grid, branches, dim) -> list[CriticalPoint]:
    crit: list[CriticalPoint] = []
    for lo, hi in _scan_sign(indicator(p, "transcritical", name), grid):
        crit.append(CriticalPoint("transcritical", locate_critical(p, "transcritical", (lo, hi), name), "Estar"))
    if dim == 4 and p.epsilon == 0 and p.c > 0:
        g = indicator(p, "window_edge", name)
        for lo, hi in _scan_sign(g, grid):
            crit.append(CriticalPoint("window_edge", locate_critical(p, "window_edge", (lo, hi), name), "Estar"))
    if dim == 4 and p.epsilon == 1 and p.beta_y > 0 and name == "b":
        for lo, hi in _scan_sign(indicator(p, "immune_bound", name), grid):
            crit.append(CriticalPoint("immune_bound", locate_critical(p, "immune_bound", (lo, hi), name), "Estar"))
    if dim == 4 and (p.epsilon == 1 or p.beta_y > 0 or p.beta_v > 0):
        try:
            g = indicator(p, "fold", name)
            for lo, hi in _scan_sign(g, grid):
                crit.append(CriticalPoint("fold", locate_critical(p, "fold", (lo, hi), name), "interior"))
        except ValueError:
            pass
    for bid, pts in sorted(branches.items()):
        base = bid.split("#")[0]
        for a, c in zip(pts[:-1], pts[1:]):
            ra = _pair_of(a.report)
            rc = _pair_of(c.report)
            if ra is None or rc is None or ra * rc >= 0:
                continue
            try:
                val = locate_critical(p, "hopf", (a.param, c.param), name, base, dim)
            except ValueError:
                continue
            crit.append(CriticalPoint("hopf", val, base))
    crit.sort(key=lambda c: (c.value, c.kind, c.branch))
    return crit


def _pair_of(rep: StabilityReport) -> float | None:
    pairs = [z.real for z in rep.eigenvalues if z.imag > IM_TOL]
    return max(pairs) if pairs else None


def _domain_curves(p, name, grid, evaluated) -> dict[str, list[tuple[float, float]]]:
    """Feasibility boundaries along the sweep, e.g. where an interior v crosses zero."""
    out: dict[str, list[tuple[float, float]]] = {}
    if p.epsilon == 0 and name == "b":
        pts = []
        for g, eqs in zip(grid, evaluated):
            for e, _ in eqs:
                if e.tag == "interior":
                    pts.append((float(g), float(e.point[2])))
        if pts:
            out["interior_v"] = pts
    if p.epsilon == 1 and p.beta_y > 0 and name == "b":
        out["y_b"] = [(float(g), _y_b(p.with_(b=float(g)))) for g in grid]
    return out


# -- region map ----------------------------------------------------------------


def region_label(p: ModelParams) -> str:
    """Stable-attractor signature of one (b, beta) cell (epsilon = 0)."""
    # the Hurwitz verdict decides stability without computing eigenvalues
    stable = [e for e in all_equilibria(p, dim=4)
              if routh_hurwitz(characteristic_polynomial(jacobian(p, e.point))).passed]
    tags = sorted(e.tag for e in stable)
    if not stable:
        return "cycle"
    if tags == ["EK"]:
        return "EK_only"
    if tags == ["Estar"]:
        disc = cubic_discriminant(equilibrium_cubic(p))
        return "Estar_only" if disc >= 0 else "Estar_above_fold"
    if tags == ["interior"]:
        return "Eim_only"
    if tags == ["Estar", "interior"]:
        return "bistable"
    return "other"


def _label_row(args) -> list[str]:
    p, bs = args
    return [region_label(p.with_(b=float(b))) for b in bs]


def region_map(
    p: ModelParams,
    b_range: tuple[float, float],
    beta_range: tuple[float, float],
    resolution: tuple[int, int] | int = (200, 200),
    jobs: int = 1,
    curve_points: int = 200,
) -> RegionMap2D:
    """Label a (b, beta) grid by attractor signature; rows are beta, columns b."""
    if p.epsilon != 0:
        raise ValueError("region map is defined for epsilon = 0")
    nb, nbeta = (resolution, resolution) if isinstance(resolution, int) else resolution
    if nb < 2 or nbeta < 2:
        raise ValueError("resolution must be at least 2 per axis")
    bs = np.linspace(*b_range, nb)
    betas = np.linspace(*beta_range, nbeta)
    rows = _map(_label_row, [(p.with_(beta=float(be)), bs) for be in betas], jobs)
    labels = np.array(rows, dtype=object)
    curves = _boundary_curves(p, b_range, np.linspace(*beta_range, curve_points))
    return RegionMap2D(bs, betas, labels, curves)


def _boundary_curves(p, b_range, betas) -> dict[str, list[tuple[float, float]]]:
    r0, w1, w2, fold, hopf = [], [], [], [], []
    lo, hi = b_range
    for be in betas:
        q = p.with_(beta=float(be))
        b0 = q.b0
        if lo <= b0 <= hi:
            r0.append((b0, float(be)))
        win = immune_window(q)
        if win is not None:
            if lo <= win[0] <= hi:
                w1.append((win[0], float(be)))
            if lo <= win[1] <= hi:
                w2.append((win[1], float(be)))
        for r in fold_parameters(q, (max(lo, 1.0), hi), samples=200).roots:
            fold.append((r, float(be)))
        bh = hopf_burst_3d(q)
        if lo <= bh <= hi:
            hopf.append((bh, float(be)))
    return {"R0=1": r0, "window_lower": w1, "window_upper": w2, "fold": fold, "hopf": hopf}
