"""Local stability: eigenvalues, Routh-Hurwitz tests and the closed-form
stability functions of the immune-free model.

Characteristic polynomials follow the convention
``det(s I - M) = s^n + a1 s^(n-1) + ... + an``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from itertools import combinations
from typing import Sequence

import numpy as np
from scipy.optimize import brentq

from .equilibria import Equilibrium, boundary_equilibria, estar_y, immune_window
from .model import ModelParams, jacobian, rescale
from .polyalg import RealPolynomial, complex_roots, real_roots, taylor_shift

__all__ = [
    "HYPERBOLIC_TOL",
    "RHVerdict",
    "StabilityReport",
    "characteristic_polynomial",
    "eigenvalues",
    "routh_hurwitz3",
    "routh_hurwitz4",
    "routh_hurwitz",
    "cubic_coefficients_3d",
    "stability_function_H",
    "phi_polynomial",
    "phi_denominator",
    "shifted_phi",
    "shifted_phi_closed_form",
    "hopf_burst_3d",
    "locate_bH",
    "classify",
    "estar_stable_closed_form",
]

HYPERBOLIC_TOL = 1e-9


# -- eigenvalues ---------------------------------------------------------------


def _det_small(A: np.ndarray) -> float:
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0])
    if n == 2:
        return float(A[0, 0] * A[1, 1] - A[0, 1] * A[1, 0])
    if n == 3:
        return float(A[0, 0] * (A[1, 1] * A[2, 2] - A[1, 2] * A[2, 1])
                     - A[0, 1] * (A[1, 0] * A[2, 2] - A[1, 2] * A[2, 0])
                     + A[0, 2] * (A[1, 0] * A[2, 1] - A[1, 1] * A[2, 0]))
    return float(np.linalg.det(A))


def characteristic_polynomial(M) -> RealPolynomial:
    """det(s I - M) from sums of principal minors, ascending coefficients."""
    M = np.asarray(M, dtype=float)
    n = M.shape[0]
    coeffs = [1.0]
    for k in range(1, n + 1):
        e_k = sum(_det_small(M[np.ix_(idx, idx)]) for idx in combinations(range(n), k))
        coeffs.append((-1) ** k * e_k)
    return RealPolynomial(coeffs[::-1])


def _decouple(M: np.ndarray) -> tuple[list[float], list[int]]:
    """Split off indices whose row or column is zero off the diagonal.

    Each such index contributes its diagonal entry as an exact eigenvalue.
    """
    exact = []
    keep = list(range(M.shape[0]))
    changed = True
    while changed and keep:
        changed = False
        for i in list(keep):
            others = [j for j in keep if j != i]
            if all(M[i, j] == 0 for j in others) or all(M[j, i] == 0 for j in others):
                exact.append(float(M[i, i]))
                keep.remove(i)
                changed = True
    return exact, keep


def _refine(M: np.ndarray, lam: complex) -> complex:
    """Two-sided inverse iteration step; keeps the input if it does not help."""
    n = M.shape[0]
    A = M - lam * np.eye(n)
    rng = np.random.default_rng(n)
    r = rng.normal(size=n) + 0j
    try:
        x = np.linalg.solve(A, r)
        y = np.linalg.solve(A.conj().T, r)
    except np.linalg.LinAlgError:
        return lam
    den = np.vdot(y, x)
    if not (np.all(np.isfinite(x)) and np.all(np.isfinite(y)) and np.isfinite(den)) or abs(den) == 0:
        return lam
    new = np.vdot(y, M @ x) / den
    if not np.isfinite(new):
        return lam
    scale = max(1.0, np.linalg.norm(M, 1))
    def resid(mu):
        return abs(np.linalg.det(M - mu * np.eye(n))) / scale**n
    return complex(new) if resid(new) <= resid(lam) else lam


def eigenvalues(M) -> list[complex]:
    """Eigenvalues of a real matrix with n <= 4 via its characteristic polynomial.

    Exactly decoupled rows/columns are peeled off first, so structural
    eigenvalues (e.g. a zero immune row) come out exact.  Sorted by
    descending real part.
    """
    M = np.asarray(M, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or not 1 <= M.shape[0] <= 4:
        raise ValueError(f"need a square matrix of size 1..4, got {M.shape}")
    exact, keep = _decouple(M)
    vals: list[complex] = [complex(e) for e in exact]
    if keep:
        sub = M[np.ix_(keep, keep)]
        roots = complex_roots(characteristic_polynomial(sub))
        for r in roots:
            r = _refine(sub, r)
            if abs(r.imag) <= 1e-13 * max(1.0, abs(r)):
                r = complex(r.real, 0.0)
            vals.append(r)
    return sorted(vals, key=lambda z: (-z.real, -z.imag))


# -- Routh-Hurwitz -------------------------------------------------------------


@dataclass(frozen=True)
class RHVerdict:
    passed: bool
    margins: dict
    order: int

    def to_dict(self) -> dict:
        return {"passed": self.passed, "order": self.order,
                "margins": {k: float(v) for k, v in self.margins.items()}}


def routh_hurwitz3(a1: float, a2: float, a3: float) -> RHVerdict:
    margins = {"a1": a1, "a3": a3, "a1*a2-a3": a1 * a2 - a3}
    return RHVerdict(all(m > 0 for m in margins.values()), margins, 3)


def routh_hurwitz4(a1: float, a2: float, a3: float, a4: float) -> RHVerdict:
    """Order-4 test written with trace, minor sums M2, M3 and determinant.

    With ``Tr = -a1, M2 = a2, M3 = -a3, Det = a4`` the conditions are
    Tr < 0, M2 > 0, M3 < 0, Det > 0 and Tr (M2 M3 - Tr Det) - M3^2 > 0.
    """
    tr, m2, m3, det = -a1, a2, -a3, a4
    margins = {
        "-Tr": -tr,
        "M2": m2,
        "-M3": -m3,
        "Det": det,
        "Tr(M2*M3-Tr*Det)-M3^2": tr * (m2 * m3 - tr * det) - m3 * m3,
    }
    return RHVerdict(all(m > 0 for m in margins.values()), margins, 4)


def routh_hurwitz(poly: RealPolynomial | Sequence[float]) -> RHVerdict:
    """Dispatch on the degree of a monic characteristic polynomial."""
    c = poly.coeffs if isinstance(poly, RealPolynomial) else tuple(poly)
    c = [a / c[-1] for a in c]
    a = c[::-1][1:]
    if len(a) == 1:
        return RHVerdict(a[0] > 0, {"a1": a[0]}, 1)
    if len(a) == 2:
        return RHVerdict(a[0] > 0 and a[1] > 0, {"a1": a[0], "a2": a[1]}, 2)
    if len(a) == 3:
        return routh_hurwitz3(*a)
    if len(a) == 4:
        return routh_hurwitz4(*a)
    raise ValueError(f"Routh-Hurwitz implemented for orders 1..4, got {len(a)}")


# -- closed forms for the immune-free model -----------------------------------


def _unit(p: ModelParams) -> ModelParams:
    if p.K == 1.0 and p.gamma == 1.0:
        return p
    return rescale(p).params


def cubic_coefficients_3d(p: ModelParams, b: float | None = None) -> tuple[float, float, float]:
    """(a1, a2, a3) of the characteristic cubic at E* of the reduced model.

    Evaluated in the K = gamma = 1 scaling.
    """
    q = _unit(p)
    b = q.b if b is None else b
    if b <= 1:
        raise ValueError(f"need b > 1, got {b}")
    lam, beta, delta = q.lam, q.beta, q.delta
    a1 = (beta * (b + b * delta - 1) + delta * lam) / ((b - 1) * beta)
    a2 = delta * lam * (
        (b - 1) * beta * (beta - 1 + delta + b * (1 - beta + delta)) + ((b - 1) ** 2 * beta + b * delta**2) * lam
    ) / ((b - 1) ** 2 * beta * ((b - 1) * beta + delta * lam))
    a3 = delta * lam * (1 + delta / (beta * (1 - b)))
    return a1, a2, a3


def stability_function_H(p: ModelParams, b: float | None = None) -> float:
    """a1 a2 - a3 at E*; positive iff E* of the reduced model is stable."""
    a1, a2, a3 = cubic_coefficients_3d(p, b)
    return a1 * a2 - a3


def phi_polynomial(p: ModelParams) -> RealPolynomial:
    """Quartic in b sharing the sign of H(b) for b > 1."""
    q = _unit(p)
    lam, beta, delta = q.lam, q.beta, q.delta
    B4 = -beta**3
    B3 = beta**2 * (-beta * (delta - 3) + delta * (delta + 3) + lam + 1)
    B2 = beta * (beta**2 * (2 * delta - 3) - 3 * beta * (2 * delta + lam + 1)
                 + delta * lam * (delta * (delta + 3) + lam + 1))
    B1 = (-beta**3 * (delta - 1) + beta**2 * (-delta**2 + 3 * delta + 3 * lam + 3)
          - beta * delta * lam * (3 * delta + 2 * lam + 2) + delta**3 * lam**2)
    B0 = beta * (lam + 1) * (delta * lam - beta)
    return RealPolynomial([B0, B1, B2, B3, B4])


def phi_denominator(p: ModelParams, b: float) -> float:
    """Positive factor with H(b) * phi_denominator = Phi(b)."""
    q = _unit(p)
    lam, beta, delta = q.lam, q.beta, q.delta
    return (b - 1) ** 3 * beta**2 * ((b - 1) * beta + delta * lam) / (delta * lam)


def shifted_phi(p: ModelParams) -> RealPolynomial:
    """Coefficients of Phi(b0 + x) by numeric Taylor shift."""
    q = _unit(p)
    return taylor_shift(phi_polynomial(q), q.b0)


def shifted_phi_closed_form(p: ModelParams) -> RealPolynomial:
    q = _unit(p)
    lam, beta, delta = q.lam, q.beta, q.delta
    t0 = delta**3 * (lam + 1) * (beta + delta + 1) * (beta + delta + lam + 1) / beta
    t1 = delta**2 * (beta * (2 * delta * lam + 3 * delta + 3 * lam + 3) + (delta + 2) * lam**2
                     + 2 * delta * (delta + 3) * lam + delta * (3 * delta + 5) + 5 * lam + 3)
    t2 = beta * delta * (-beta**2 + delta * (delta + 3) * lam + 3 * delta * (delta + 1) + lam**2 + 4 * lam + 3)
    t3 = beta**2 * (-beta * (delta + 1) + (delta - 1) * delta + lam + 1)
    t4 = -beta**3
    return RealPolynomial([t0, t1, t2, t3, t4])


def hopf_burst_3d(p: ModelParams) -> float:
    """Smallest root of Phi above b0: where E* of the reduced model turns unstable."""
    q = _unit(p)
    above = [r for r in real_roots(phi_polynomial(q)) if r > q.b0]
    if not above:
        return math.inf
    return above[0]


def _estar_rh4_margin(p: ModelParams, b: float) -> float:
    q = p.with_(b=b)
    est = [e for e in boundary_equilibria(q) if e.tag == "Estar"][0]
    a = characteristic_polynomial(jacobian(q, est.point)).coeffs[::-1][1:]
    return routh_hurwitz4(*a).margins["Tr(M2*M3-Tr*Det)-M3^2"]


def locate_bH(
    p: ModelParams,
    bracket: tuple[float, float] | None = None,
    order: int = 3,
    xtol: float = 1e-13,
) -> float:
    """Burst size where E* acquires a pure imaginary pair.

    ``order=3`` brackets a sign change of H(b) (reduced model; also valid
    for the 4D model with epsilon = 0 outside the immune window).
    ``order=4`` uses the last Hurwitz margin of the full 4D Jacobian at E*.
    """
    if order == 3:
        fn = lambda b: stability_function_H(p, b)  # noqa: E731
        if bracket is None:
            guess = hopf_burst_3d(p)
            if not math.isfinite(guess):
                raise ValueError("Phi has no root above b0; no Hopf point for E*")
            bracket = (guess * (1 - 1e-6), guess * (1 + 1e-6))
    elif order == 4:
        fn = lambda b: _estar_rh4_margin(p, b)  # noqa: E731
        if bracket is None:
            raise ValueError("order-4 location needs an explicit bracket")
    else:
        raise ValueError(f"order must be 3 or 4, got {order}")
    lo, hi = bracket
    flo, fhi = fn(lo), fn(hi)
    if flo * fhi > 0:
        raise ValueError(f"no sign change on [{lo}, {hi}]: f = ({flo:g}, {fhi:g})")
    return brentq(fn, lo, hi, xtol=xtol, rtol=4 * np.finfo(float).eps)


# -- classification ------------------------------------------------------------


@dataclass
class StabilityReport:
    eigenvalues: list[complex]
    classification: str
    leading_real_part: float
    rh_verdict: RHVerdict | None = None
    notes: list[str] = field(default_factory=list)

    @property
    def stable(self) -> bool:
        return self.classification == "stable"

    def to_dict(self) -> dict:
        return {
            "eigenvalues": [(float(z.real), float(z.imag)) for z in self.eigenvalues],
            "classification": self.classification,
            "leading_real_part": float(self.leading_real_part),
            "rh_verdict": None if self.rh_verdict is None else self.rh_verdict.to_dict(),
            "notes": list(self.notes),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def classify_eigenvalues(eigs: Sequence[complex], tol: float = HYPERBOLIC_TOL) -> str:
    lead = max(z.real for z in eigs)
    if lead > tol:
        return "unstable"
    if lead < -tol:
        return "stable"
    return "non_hyperbolic"


def classify(p: ModelParams, eq: Equilibrium | Sequence[float], tol: float = HYPERBOLIC_TOL) -> StabilityReport:
    """Eigenvalues plus structural facts for one equilibrium."""
    if isinstance(eq, Equilibrium):
        point, tag = eq.point, eq.tag
    else:
        point, tag = np.asarray(eq, dtype=float), None
    J = jacobian(p, point)
    eigs = eigenvalues(J)
    cls = classify_eigenvalues(eigs, tol)
    rh = routh_hurwitz(characteristic_polynomial(J))
    notes = []
    dim = len(point)
    if tag == "E0":
        notes.append("saddle: growth eigenvalue lambda > 0 with decaying lysis and clearance directions")
    elif tag == "EK":
        if dim == 4 and p.epsilon == 1:
            notes.append("zero eigenvalue from the immune row: non-hyperbolic")
            if p.R0 < 1:
                notes.append("locally stable (non-hyperbolic, Lyapunov-Malkin); (x, y, v) -> (K, 0, 0)")
            cls = "non_hyperbolic" if cls != "unstable" else cls
        notes.append("R0 < 1" if p.R0 < 1 else "R0 > 1" if p.R0 > 1 else "R0 = 1")
    elif tag == "Estar" and dim == 4:
        ye = p.c / p.beta_z
        y = point[1]
        d4 = J[3, 3]
        notes.append(f"immune eigenvalue {d4:.12g}")
        if p.epsilon == 0:
            notes.append("y* > y_e: immune invasion" if y > ye else "y* <= y_e")
    return StabilityReport(eigs, cls, max(z.real for z in eigs), rh, notes)


def estar_stable_closed_form(p: ModelParams) -> bool:
    """E* stable iff b in (b0, b_H) and b outside the immune window (epsilon = 0)."""
    b = p.b
    if not b > p.b0:
        return False
    if b >= hopf_burst_3d(p):
        return False
    if p.epsilon == 0:
        win = immune_window(p)
        if win is not None and win[0] < b < win[1]:
            return False
    else:
        # epsilon = 1: immune eigenvalue beta_z y* > 0 whenever y* > 0
        return estar_y(p) <= 0
    return True
