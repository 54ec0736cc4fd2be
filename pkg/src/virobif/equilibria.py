"""Equilibria of the full model and of its immune-free reduction.

Boundary points have closed forms.  Interior points (z > 0) reduce to a
cubic: in the infected level ``y`` when epsilon = 1 and in the virus level
``v`` when epsilon = 0 (where y is pinned to ``y_e = c/beta_z``).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .model import ModelParams, in_domain, rescale, vector_field
from .polyalg import RealPolynomial, complex_roots, cubic_discriminant, real_root_info

__all__ = [
    "Equilibrium",
    "basic_reproduction_number",
    "critical_burst",
    "boundary_equilibria",
    "interior_equilibria_eps0",
    "interior_equilibria_eps1",
    "interior_equilibria",
    "all_equilibria",
    "equilibrium_cubic",
    "immune_window",
    "estar_y",
    "fold_parameters",
    "FoldScan",
    "equilibria_to_json",
]

TAGS = ("E0", "EK", "Estar", "EN", "interior")
FEAS_TOL = 1e-12


@dataclass(frozen=True)
class Equilibrium:
    point: np.ndarray
    tag: str
    sub_tag: str | None = None
    feasible: bool = True
    residual: float = 0.0
    note: str = ""

    @property
    def name(self) -> str:
        return self.sub_tag or self.tag

    def to_dict(self) -> dict:
        return {
            "tag": self.tag,
            "sub_tag": self.sub_tag,
            "point": [float(a) for a in self.point],
            "feasible": bool(self.feasible),
            "residual": float(self.residual),
            "note": self.note,
        }


def _make(p: ModelParams, point, tag, sub_tag=None, feasible=None, note="") -> Equilibrium:
    point = np.asarray(point, dtype=float)
    res = float(np.max(np.abs(vector_field(p, point))))
    if feasible is None:
        feasible = in_domain(p, point, tol=1e-9)
    return Equilibrium(point, tag, sub_tag, bool(feasible), res, note)


def basic_reproduction_number(p: ModelParams) -> float:
    return p.R0


def critical_burst(p: ModelParams) -> float:
    """Burst size at which R0 = 1."""
    return p.b0


def estar_y(p: ModelParams) -> float:
    """Infected level of the virus-only equilibrium (negative when R0 < 1)."""
    b, R0 = p.b, p.R0
    if b <= 1:
        return math.nan
    return (p.delta / (p.beta * (b - 1))) * b * p.lam * (R0 - 1) / (
        p.lam * (b - R0) + (b - 1) * p.gamma * R0
    )


def boundary_equilibria(p: ModelParams, dim: int = 4) -> list[Equilibrium]:
    """E0, EK, E* and (4D only) the always-infeasible E_N witness."""
    zeros = [0.0] * dim
    out = [_make(p, zeros, "E0")]
    ek = [p.K] + [0.0] * (dim - 1)
    out.append(_make(p, ek, "EK"))
    if p.b > 1:
        x = p.delta / (p.beta * (p.b - 1))
        y = estar_y(p)
        v = p.gamma * (p.b - 1) * y / p.delta if p.delta > 0 else math.nan
        if p.delta == 0:
            # x* = 0 and y*, v* decouple; not an isolated point of interest
            pass
        else:
            pt = [x, y, v] + ([0.0] if dim == 4 else [])
            feasible = p.R0 >= 1 and in_domain(p, pt, tol=1e-9)
            out.append(_make(p, pt, "Estar", feasible=feasible))
    if dim == 4 and p.beta_y > 0:
        z = -p.gamma / p.beta_y
        if p.epsilon == 0:
            y = p.y_e
        else:
            y = p.c * z / p.beta_z
        den = p.delta + p.beta_v * z
        if den != 0:
            v = p.b * p.gamma * y / den
            out.append(_make(p, [0.0, y, v, z], "EN", feasible=False,
                             note="negative immune level; outside the domain"))
    return out


def equilibrium_cubic(p: ModelParams) -> RealPolynomial:
    """Cubic whose roots carry the interior equilibria.

    epsilon = 0: monic P(v) in the K = gamma = 1 rescaled model.
    epsilon = 1: Q(y), built by expanding its defining product.
    """
    if p.epsilon == 0:
        q = rescale(p).params
        ye = q.y_e
        h = RealPolynomial([1 - ye, -q.beta / q.lam]) if q.lam > 0 else None
        if h is None:
            raise ValueError("epsilon=0 interior cubic needs lambda > 0")
        g = RealPolynomial([ye * q.beta_y, q.beta_v])
        f = RealPolynomial([ye * (q.b - 1), -q.delta])
        vpoly = RealPolynomial([0.0, 1.0])
        poly = (vpoly * h * g) * q.beta - (g + f * q.beta_y) * ye
        return poly.monic()
    f, g, h = _eps1_parts(p)
    one = RealPolynomial([1.0, -1.0 / p.K])
    ypoly = RealPolynomial([0.0, 1.0])
    return (f * g * one) * p.lam - (h * g * g) * (p.lam / (p.beta * p.K)) - (ypoly * f * f) * p.beta


def _eps1_parts(p: ModelParams):
    if p.c == 0:
        raise ValueError("epsilon=1 interior equilibria need c > 0")
    f = RealPolynomial([p.c * p.gamma * (p.b - 1), -p.beta_y * p.beta_z])
    g = RealPolynomial([p.delta * p.c, p.beta_v * p.beta_z])
    h = RealPolynomial([p.gamma, p.beta_z * p.beta_y / p.c])
    return f, g, h


def _sub_tags(roots: list[float], poly: RealPolynomial) -> list[str]:
    """Names for the real roots of an interior cubic, ascending.

    Three real roots are E_minus < E_im < E_plus.  A single real root is the
    upper branch when the complex pair lies below it, otherwise the lower.
    """
    if len(roots) >= 3:
        return ["E_minus", "E_im", "E_plus"][: len(roots)]
    if len(roots) == 1:
        zs = complex_roots(poly)
        pair = [z for z in zs if abs(z.imag) > 0]
        if not pair:
            return ["E_plus"]
        return ["E_plus" if pair[0].real < roots[0] else "E_minus"]
    if len(roots) == 2:
        return ["E_minus", "E_plus"]
    return []


def interior_equilibria_eps0(p: ModelParams, include_infeasible: bool = False) -> list[Equilibrium]:
    if p.epsilon != 0:
        raise ValueError("interior_equilibria_eps0 needs epsilon = 0")
    rs = rescale(p)
    q = rs.params
    ye = q.y_e
    if ye > 1 or q.lam == 0:
        return []
    if q.beta_y == 0 and q.beta_v == 0:
        # z drops out of the x, y, v equations: no isolated interior points
        return []
    poly = equilibrium_cubic(p)
    info = real_root_info(poly)
    vals = [r.value for r in info for _ in range(1 if not r.clustered else r.multiplicity)]
    tags = _sub_tags(vals, poly) if len(vals) in (1, 3) else [None] * len(vals)
    out = []
    seen = set()
    for v, tag in zip(vals, tags):
        if (v, tag) in seen:
            continue
        seen.add((v, tag))
        x = 1 - ye - q.beta * v / q.lam
        gv = ye * q.beta_y + q.beta_v * v
        if gv == 0:
            continue
        z = (ye * (q.b - 1) - q.delta * v) / gv
        pt = rs.to_original([x, ye, v, z])
        feasible = bool(min(x, v, z) > FEAS_TOL) and in_domain(p, pt, tol=1e-9)
        if feasible or include_infeasible:
            out.append(_make(p, pt, "interior", tag, feasible))
    return out


def interior_equilibria_eps1(p: ModelParams, include_infeasible: bool = False) -> list[Equilibrium]:
    if p.epsilon != 1:
        raise ValueError("interior_equilibria_eps1 needs epsilon = 1")
    f, g, h = _eps1_parts(p)
    poly = equilibrium_cubic(p)
    if poly.is_zero or poly.degree < 1:
        return []
    info = real_root_info(poly)
    vals = [r.value for r in info for _ in range(r.multiplicity if r.clustered else 1)]
    tags = _sub_tags(vals, poly) if len(vals) in (1, 3) else [None] * len(vals)
    y_b = math.inf if p.beta_y == 0 else p.c * p.gamma * (p.b - 1) / (p.beta_y * p.beta_z)
    out = []
    seen = set()
    for y, tag in zip(vals, tags):
        if (y, tag) in seen:
            continue
        seen.add((y, tag))
        fy, gy, hy = f(y), g(y), h(y)
        if fy == 0 or gy == 0:
            continue
        pt = [hy * gy / (p.beta * fy), y, y * fy / gy, y * p.beta_z / p.c]
        feasible = FEAS_TOL < y < y_b and min(pt) > FEAS_TOL and in_domain(p, pt, tol=1e-9)
        if feasible or include_infeasible:
            out.append(_make(p, pt, "interior", tag, feasible))
    return out


def interior_equilibria(p: ModelParams, include_infeasible: bool = False) -> list[Equilibrium]:
    if p.epsilon == 0:
        return interior_equilibria_eps0(p, include_infeasible)
    return interior_equilibria_eps1(p, include_infeasible)


def all_equilibria(p: ModelParams, dim: int = 4, include_infeasible: bool = False) -> list[Equilibrium]:
    out = [e for e in boundary_equilibria(p, dim) if include_infeasible or e.feasible]
    if dim == 4:
        out += interior_equilibria(p, include_infeasible)
    return out


def immune_window(p: ModelParams) -> tuple[float, float] | None:
    """Burst sizes (b1, b2) between which y*(b) > y_e (epsilon = 0).

    Computed in the K = gamma = 1 scaling; returns None when the window is
    empty (negative radicand).
    """
    q = rescale(p).params
    beta, c, delta, lam, bz = q.beta, q.c, q.delta, q.lam, q.beta_z
    rad = lam * (c - bz) ** 2 - 4 * c * bz
    if rad < 0 or c == 0:
        return None
    root = delta * math.sqrt(lam) * math.sqrt(rad)
    base = 2 * beta * c - c * delta * lam + delta * lam * bz
    return ((base - root) / (2 * beta * c), (base + root) / (2 * beta * c))


@dataclass
class FoldScan:
    roots: list[float]
    grid: np.ndarray = field(repr=False)
    values: np.ndarray = field(repr=False)


def _disc_at(p: ModelParams, name: str, val: float) -> float:
    return cubic_discriminant(equilibrium_cubic(p._unchecked_with(**{name: val})))


def fold_parameters(
    p: ModelParams,
    b_range: tuple[float, float] = (1.0, 200.0),
    samples: int = 2000,
    name: str = "b",
) -> FoldScan:
    """Parameter values where the interior cubic has a double root."""
    grid = np.linspace(b_range[0], b_range[1], samples)
    vals = np.array([_disc_at(p, name, b) for b in grid])
    roots = []
    for i in range(samples - 1):
        lo, hi = vals[i], vals[i + 1]
        if lo == 0:
            roots.append(float(grid[i]))
        elif lo * hi < 0:
            roots.append(brentq(lambda b: _disc_at(p, name, b), grid[i], grid[i + 1], xtol=1e-13, rtol=1e-15))
    if vals[-1] == 0:
        roots.append(float(grid[-1]))
    return FoldScan(roots, grid, vals)


def equilibria_to_json(eqs: Sequence[Equilibrium]) -> str:
    return json.dumps([e.to_dict() for e in eqs], indent=2)
