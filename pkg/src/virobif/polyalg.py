"""Real-coefficient polynomials of low degree.

Coefficients are stored in ascending order, ``c[0] + c[1] x + ... + c[n] x**n``.
Real roots of degree <= 4 come from closed forms (quadratic formula,
trigonometric/Cardano cubic, Ferrari quartic via the resolvent cubic) and are
then polished by Newton steps on the original coefficients.  Higher degrees
are isolated on intervals where the polynomial is monotone, which needs no
eigenvalue solver.
"""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass
from math import comb
from typing import Iterable, Sequence

import numpy as np

__all__ = [
    "RealPolynomial",
    "RealRoot",
    "taylor_shift",
    "sign_changes",
    "real_roots",
    "real_root_info",
    "complex_roots",
    "cubic_discriminant",
    "residual_ok",
]

CLUSTER_SEP = 1e-7
ROOT_TOL = 1e-10
POLISH_REACH = 1e-3
EPS = float(np.finfo(float).eps)
TINY = float(np.finfo(float).tiny)


@dataclass(frozen=True)
class RealPolynomial:
    coeffs: tuple[float, ...]

    def __init__(self, coeffs: Iterable[float]):
        c = [float(a) for a in coeffs]
        if not all(math.isfinite(a) for a in c):
            raise ValueError(f"non-finite coefficient in {c}")
        while len(c) > 1 and c[-1] == 0.0:
            c.pop()
        if not c:
            c = [0.0]
        object.__setattr__(self, "coeffs", tuple(c))

    @classmethod
    def from_roots(cls, roots: Sequence[float], lead: float = 1.0) -> "RealPolynomial":
        c = np.array([lead])
        for r in roots:
            c = np.convolve(c, [-r, 1.0])
        return cls(c)

    @property
    def degree(self) -> int:
        if len(self.coeffs) == 1 and self.coeffs[0] == 0.0:
            return -1
        return len(self.coeffs) - 1

    @property
    def is_zero(self) -> bool:
        return self.degree < 0

    @property
    def scale(self) -> float:
        return max(abs(a) for a in self.coeffs)

    def __call__(self, x):
        return self.eval(x)

    def eval(self, x):
        """Horner evaluation; works for floats, complex numbers and arrays."""
        acc = 0.0 * x
        for a in reversed(self.coeffs):
            acc = acc * x + a
        return acc

    def derivative(self) -> "RealPolynomial":
        # memoised: root isolation differentiates the same polynomial often
        d = self.__dict__.get("_derivative")
        if d is None:
            if len(self.coeffs) == 1:
                d = RealPolynomial([0.0])
            else:
                d = RealPolynomial([k * a for k, a in enumerate(self.coeffs)][1:])
            self.__dict__["_derivative"] = d
        return d

    def monic(self) -> "RealPolynomial":
        if self.is_zero:
            raise ValueError("zero polynomial has no monic form")
        lead = self.coeffs[-1]
        return RealPolynomial([a / lead for a in self.coeffs])

    def __add__(self, other: "RealPolynomial") -> "RealPolynomial":
        n = max(len(self.coeffs), len(other.coeffs))
        a = np.zeros(n)
        a[: len(self.coeffs)] += self.coeffs
        a[: len(other.coeffs)] += other.coeffs
        return RealPolynomial(a)

    def __neg__(self) -> "RealPolynomial":
        return RealPolynomial([-a for a in self.coeffs])

    def __sub__(self, other: "RealPolynomial") -> "RealPolynomial":
        return self + (-other)

    def __mul__(self, other) -> "RealPolynomial":
        if isinstance(other, RealPolynomial):
            return RealPolynomial(np.convolve(self.coeffs, other.coeffs))
        return RealPolynomial([a * other for a in self.coeffs])

    __rmul__ = __mul__

    def __repr__(self) -> str:
        return f"RealPolynomial({list(self.coeffs)})"


def taylor_shift(p: RealPolynomial, s: float) -> RealPolynomial:
    """Coefficients of ``p(s + x)`` by binomial expansion."""
    c = p.coeffs
    n = len(c)
    out = [0.0] * n
    for k in range(n):
        out[k] = sum(c[j] * comb(j, k) * s ** (j - k) for j in range(k, n))
    return RealPolynomial(out)


def sign_changes(p: RealPolynomial | Sequence[float]) -> int:
    """Number of sign alternations in the nonzero coefficients (Descartes bound)."""
    coeffs = p.coeffs if isinstance(p, RealPolynomial) else p
    signs = [a > 0 for a in coeffs if a != 0]
    return sum(1 for s, t in zip(signs, signs[1:]) if s != t)


def cubic_discriminant(p: RealPolynomial | Sequence[float]) -> float:
    """Discriminant of ``a x^3 + b x^2 + c x + d``; positive iff three distinct real roots."""
    coeffs = p.coeffs if isinstance(p, RealPolynomial) else tuple(p)
    if len(coeffs) != 4 or coeffs[3] == 0:
        raise ValueError(f"cubic_discriminant needs a degree-3 polynomial, got {coeffs}")
    d, c, b, a = coeffs
    return 18 * a * b * c * d - 4 * b**3 * d + b**2 * c**2 - 4 * a * c**3 - 27 * a**2 * d**2


# -- closed forms --------------------------------------------------------------


def _quadratic(c0: complex, c1: complex, c2: complex) -> list[complex]:
    disc = c1 * c1 - 4 * c2 * c0
    sq = cmath.sqrt(disc)
    # avoid cancellation: pick the sign that adds magnitudes
    if (c1.conjugate() * sq).real < 0:
        sq = -sq
    q = -0.5 * (c1 + sq)
    if q == 0:
        return [0j, 0j]
    return [q / c2, c0 / q]


def _cubic(c: Sequence[float]) -> list[complex]:
    d, cc, b, a = c
    b, cc, d = b / a, cc / a, d / a
    # depressed: t^3 + P t + R with x = t - b/3
    P = cc - b * b / 3
    R = 2 * b**3 / 27 - b * cc / 3 + d
    shift = -b / 3
    if P == 0 and R == 0:
        return [complex(shift)] * 3
    disc = -(4 * P**3 + 27 * R**2)
    if disc > 0:
        m = 2 * math.sqrt(-P / 3)
        arg = 3 * R / (P * m)
        theta = math.acos(max(-1.0, min(1.0, arg))) / 3
        return [complex(m * math.cos(theta - 2 * math.pi * k / 3) + shift) for k in range(3)]
    # one real root (Cardano, real cube roots)
    sq = math.sqrt(max(R * R / 4 + P**3 / 27, 0.0))
    u = np.cbrt(-R / 2 + sq if R <= 0 else -R / 2 - sq)
    w = -P / (3 * u) if u != 0 else np.cbrt(-R)
    t1 = u + w
    # remaining pair from t^2 + t1 t + (t1^2 + P)
    rest = _quadratic(complex(t1 * t1 + P), complex(t1), 1 + 0j)
    return [complex(t1 + shift)] + [r + shift for r in rest]


def _quartic(c: Sequence[float]) -> list[complex]:
    e, d, cc, b, a = c
    b, cc, d, e = b / a, cc / a, d / a, e / a
    # depressed: t^4 + P t^2 + Q t + R with x = t - b/4
    shift = -b / 4
    P = cc - 3 * b * b / 8
    Q = d - b * cc / 2 + b**3 / 8
    R = e - b * d / 4 + b * b * cc / 16 - 3 * b**4 / 256
    if abs(Q) <= 1e-14 * max(1.0, abs(P) ** 1.5, abs(R) ** 0.75):
        # biquadratic
        out = []
        for s in _quadratic(complex(R), complex(P), 1 + 0j):
            r = cmath.sqrt(s)
            out += [r + shift, -r + shift]
        return out
    # resolvent cubic in m: 8 m^3 + 8 P m^2 + (2 P^2 - 8 R) m - Q^2 = 0
    res = _cubic([-Q * Q, 2 * P * P - 8 * R, 8 * P, 8.0])
    m = max((r.real for r in res if abs(r.imag) <= 1e-9 * max(1.0, abs(r))), default=res[0].real)
    m = _newton_real([-Q * Q, 2 * P * P - 8 * R, 8 * P, 8.0], m)
    if m <= 0:
        m = max(m, 1e-300)
    s = math.sqrt(2 * m)
    out = []
    for sign in (1, -1):
        # t^2 -/+ s t + (P/2 + m +/- Q/(2 s))
        out += [r + shift for r in _quadratic(complex(P / 2 + m + sign * Q / (2 * s)), complex(-sign * s), 1 + 0j)]
    return out


def _newton_real(c: RealPolynomial | Sequence[float], x: float, iters: int = 8) -> float:
    p = c if isinstance(c, RealPolynomial) else RealPolynomial(c)
    dp = p.derivative()
    fx = p.eval(x)
    best, best_f = x, abs(fx)
    for _ in range(iters):
        g = dp.eval(x)
        if g == 0 or fx == 0:
            break
        step = fx / g
        # polishing is local; a long jump means a flat (multiple) root
        if abs(step) > POLISH_REACH * max(1.0, abs(x)):
            break
        x = x - step
        fx = p.eval(x)
        f = abs(fx)
        if not math.isfinite(f):
            break
        if f < best_f:
            best, best_f = x, f
        if abs(step) <= 2 * EPS * abs(x):
            break
    return best


def residual_ok(p: RealPolynomial, r: float, tol: float = ROOT_TOL) -> bool:
    """|p(r)| within ``tol`` of the size of its terms, sum |c_k| max(1, |r|)^k."""
    ar = max(1.0, abs(r))
    size = f = 0.0
    for a in reversed(p.coeffs):
        size = size * ar + abs(a)
        f = f * r + a
    return abs(f) <= tol * max(size, TINY)


def _same_cluster(p: RealPolynomial, a: complex, b: complex) -> bool:
    """Roots within the cluster radius, or with p at noise level between them.

    A root of multiplicity k is smeared by rounding into a ring of radius
    about eps**(1/k); the midpoint test merges such rings.
    """
    if abs(a - b) <= CLUSTER_SEP * max(1.0, abs(a)):
        return True
    return abs(a - b) <= 1e-3 * max(1.0, abs(a)) and residual_ok(p, (a + b) / 2)


def _polish_complex(p: RealPolynomial, z: complex, iters: int = 8) -> complex:
    dp = p.derivative()
    pz = p.eval(z)
    best, best_f = z, abs(pz)
    for _ in range(iters):
        g = dp.eval(z)
        if g == 0 or pz == 0:
            break
        step = pz / g
        if abs(step) > POLISH_REACH * max(1.0, abs(z)):
            break
        z = z - step
        pz = p.eval(z)
        fz = abs(pz)
        if not math.isfinite(fz):
            break
        if fz < best_f:
            best, best_f = z, fz
        if abs(step) <= 2 * EPS * abs(z):
            break
    return best


def complex_roots(p: RealPolynomial) -> list[complex]:
    """All roots (with multiplicity) sorted by (real, imag); closed form up to degree 4."""
    if p.is_zero:
        raise ValueError("zero polynomial has no isolated roots")
    c = p.coeffs
    n = p.degree
    if n == 0:
        return []
    if n == 1:
        raw = [complex(-c[0] / c[1])]
    elif n == 2:
        raw = _quadratic(complex(c[0]), complex(c[1]), complex(c[2]))
    elif n == 3:
        raw = _cubic(c)
    elif n == 4:
        raw = _quartic(c)
    else:
        raw = list(np.roots(c[::-1]).astype(complex))
    out = []
    for z in raw:
        z = _polish_complex(p, z)
        # conjugate symmetry of real polynomials
        if abs(z.imag) <= 1e-12 * max(1.0, abs(z)):
            z = complex(z.real, 0.0)
        out.append(z)
    return sorted(out, key=lambda z: (z.real, z.imag))


# -- real roots ----------------------------------------------------------------


@dataclass(frozen=True)
class RealRoot:
    value: float
    multiplicity: int = 1
    clustered: bool = False


def _root_bound(p: RealPolynomial) -> float:
    """Fujiwara's bound on |root|, usually far tighter than Cauchy's."""
    c = p.coeffs
    n = len(c) - 1
    lead = abs(c[-1])
    terms = [(abs(c[n - k]) / lead) ** (1.0 / k) for k in range(1, n)]
    terms.append((abs(c[0]) / (2 * lead)) ** (1.0 / n))
    return 2.0 * max(terms) * (1 + 1e-12) + TINY


def _solve_monotone(p: RealPolynomial, lo: float, hi: float, flo: float, fhi: float, max_iter: int = 200) -> float:
    """Root of p on [lo, hi], where p is monotone with a sign change.

    Newton steps on p and p' from one Horner pass, falling back to bisection
    whenever a step leaves the current bracket.  Stops when the step or the
    bracket reaches the rounding level of x.
    """
    rc = p.coeffs[::-1]
    neg_lo = flo < 0
    x = 0.5 * (lo + hi)
    for _ in range(max_iter):
        f = d = 0.0
        for a in rc:
            d = d * x + f
            f = f * x + a
        if f == 0:
            return x
        if (f < 0) == neg_lo:
            lo = x
        else:
            hi = x
        xn = x - f / d if d != 0 else lo
        if not lo < xn < hi:
            xn = 0.5 * (lo + hi)
        tol = 4 * EPS * (x if x > 0 else -x)
        if -tol <= xn - x <= tol or hi - lo <= tol:
            return xn
        x = xn
    return x


def _monotone_isolate(p: RealPolynomial) -> list[float]:
    """Real roots via critical points of p (recursive, eigenvalue-free)."""
    n = p.degree
    if n == 1:
        return [-p.coeffs[0] / p.coeffs[1]]
    if n == 2:
        c0, c1, c2 = p.coeffs
        disc = c1 * c1 - 4 * c2 * c0
        if disc < 0:
            vertex = -c1 / (2 * c2)
            return [vertex] if residual_ok(p, vertex, tol=16 * n * EPS) else []
        q = -0.5 * (c1 + math.copysign(math.sqrt(disc), c1))
        return sorted([q / c2, c0 / q]) if q != 0 else [0.0]
    bound = _root_bound(p)
    crit = [r for r in _monotone_isolate(p.derivative()) if -bound < r < bound] if n > 1 else []
    knots = [-bound] + sorted(crit) + [bound]
    roots = []
    for lo, hi in zip(knots, knots[1:]):
        flo, fhi = p.eval(lo), p.eval(hi)
        if flo == 0:
            roots.append(lo)
        elif flo * fhi < 0:
            roots.append(_solve_monotone(p, lo, hi, flo, fhi))
    if p.eval(knots[-1]) == 0:
        roots.append(knots[-1])
    # tangential roots at critical points
    for r in crit:
        if residual_ok(p, r, tol=16 * n * EPS):
            roots.append(r)
    return sorted(roots)


def _verified(p: RealPolynomial, r: float) -> bool:
    """Sign change across ``r`` or a tangential (even multiplicity) zero."""
    h = CLUSTER_SEP * max(1.0, abs(r))
    if p.eval(r - h) * p.eval(r + h) <= 0:
        return True
    dp = p.derivative()
    slope_scale = dp.scale * max(1.0, abs(r)) ** max(dp.degree, 0)
    return residual_ok(p, r) and abs(dp.eval(r)) <= 1e-6 * slope_scale


def _candidate_real_roots(p: RealPolynomial) -> tuple[list[float], list[complex]]:
    iso = _monotone_isolate(p)
    if p.degree > 4:
        return iso, []
    zs = complex_roots(p)
    out = list(iso)
    # closed forms resolve multiple roots that isolation may only graze
    for z in zs:
        if abs(z.imag) > 1e-7 * max(1.0, abs(z)):
            continue
        sep = CLUSTER_SEP * max(1.0, abs(z.real))
        if any(abs(z.real - q) <= sep for q in iso):
            continue
        r = _newton_real(p, z.real)
        near_iso = any(abs(r - q) <= CLUSTER_SEP * max(1.0, abs(r)) for q in iso)
        if not near_iso and _verified(p, r):
            out.append(r)
    return out, zs


def real_root_info(p: RealPolynomial, interval: tuple[float, float] | None = None) -> list[RealRoot]:
    """Real roots with multiplicity and cluster flags, sorted ascending.

    Roots closer than ``1e-7 * max(1, |r|)``, or separated only by a
    stretch where p is at rounding level, are merged and reported once with
    their combined multiplicity and ``clustered=True``.
    """
    if p.is_zero:
        raise ValueError("zero polynomial has no isolated roots")
    if p.degree < 1:
        return []
    cands, zs = _candidate_real_roots(p)
    cands = sorted(cands)
    groups: list[list[float]] = []
    for r in cands:
        if groups and _same_cluster(p, groups[-1][-1], r):
            groups[-1].append(r)
        else:
            groups.append([r])
    roots = []
    for g in groups:
        val = sum(g) / len(g)
        near = sum(1 for z in zs if _same_cluster(p, val, z))
        mult = min(near if near else len(g), p.degree)
        roots.append(RealRoot(val, mult, mult > 1))
    if interval is not None:
        lo, hi = interval
        roots = [r for r in roots if lo <= r.value <= hi]
    return roots


def real_roots(p: RealPolynomial, interval: tuple[float, float] | None = None) -> list[float]:
    """Distinct real roots in the closed ``interval`` (default: the whole line)."""
    return [r.value for r in real_root_info(p, interval)]
