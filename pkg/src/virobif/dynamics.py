"""Time integration, periodic orbits and their continuation.

Integration uses scipy's embedded Runge-Kutta pairs: RK45 (Dormand-Prince
5(4), dense output) for orbits, DOP853 for shooting where the monodromy
matrix is propagated together with the state.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.integrate import solve_ivp

from .export import csv_text
from .model import ModelParams, domain_bounds, jacobian, second_derivative, vector_field

__all__ = [
    "DEFAULT_ATOL",
    "DEFAULT_RTOL",
    "Orbit",
    "Cycle",
    "CycleBranch",
    "NoRecurrenceError",
    "integrate",
    "poincare_returns",
    "find_limit_cycle",
    "refine_cycle",
    "cycle_from_hopf",
    "continue_cycles",
    "first_lyapunov_coefficient",
    "hopf_vectors",
    "largest_lyapunov_exponent",
    "LyapunovEstimate",
]

DEFAULT_ATOL = 1e-10
DEFAULT_RTOL = 1e-8
SHOOT_ATOL = 1e-13
SHOOT_RTOL = 1e-12
SHOOT_TOL = 1e-9


class NoRecurrenceError(ValueError):
    """The seed orbit does not return to its Poincare section."""


# -- fast right-hand sides -----------------------------------------------------


def _field_fn(p: ModelParams) -> Callable[[float, np.ndarray], np.ndarray]:
    """Unchecked vector field for the integrator (same formulas as ``vector_field``)."""
    lam, K, beta, gamma, b = p.lam, p.K, p.beta, p.gamma, p.b
    delta, by, bv, bz, c, eps = p.delta, p.beta_y, p.beta_v, p.beta_z, p.c, p.epsilon

    def f4(t, s):
        x, y, v, z = s
        inf = beta * x * v
        return np.array([
            lam * x * (1.0 - (x + y) / K) - inf,
            inf - gamma * y - by * y * z,
            b * gamma * y - inf - delta * v - bv * v * z,
            z * (bz * y - (c * z if eps else c)),
        ])

    def f3(t, s):
        x, y, v = s
        inf = beta * x * v
        return np.array([
            lam * x * (1.0 - (x + y) / K) - inf,
            inf - gamma * y,
            b * gamma * y - inf - delta * v,
        ])

    return f3, f4


def _rhs(p: ModelParams, n: int):
    f3, f4 = _field_fn(p)
    return f3 if n == 3 else f4


def _jac_fn(p: ModelParams, n: int):
    """Unchecked Jacobian (same formulas as ``jacobian``)."""
    lam, lk, beta, gamma, b = p.lam, p.lam / p.K, p.beta, p.gamma, p.b
    delta, by, bv, bz, c, eps = p.delta, p.beta_y, p.beta_v, p.beta_z, p.c, p.epsilon
    if n == 3:
        def jac3(s):
            x, y, v = s
            return np.array([
                [lam - lk * (2 * x + y) - beta * v, -lk * x, -beta * x],
                [beta * v, -gamma, beta * x],
                [-beta * v, b * gamma, -beta * x - delta],
            ])
        return jac3

    def jac4(s):
        x, y, v, z = s
        return np.array([
            [lam - lk * (2 * x + y) - beta * v, -lk * x, -beta * x, 0.0],
            [beta * v, -gamma - by * z, beta * x, -by * y],
            [-beta * v, b * gamma, -beta * x - delta - bv * z, -bv * v],
            [0.0, bz * z, 0.0, bz * y - (2.0 * c * z if eps else c)],
        ])
    return jac4


# -- orbits --------------------------------------------------------------------


@dataclass
class Orbit:
    times: np.ndarray
    states: np.ndarray
    stats: dict
    violations: int
    success: bool = True
    message: str = ""

    @property
    def final(self) -> np.ndarray:
        return self.states[-1]

    def to_rows(self) -> list[list[float]]:
        return [[float(t), *map(float, s)] for t, s in zip(self.times, self.states)]

    def header(self) -> list[str]:
        return ["t", "x", "y", "v", "z"][: 1 + self.states.shape[1]]

    def csv_text(self) -> str:
        return csv_text(self.header(), self.to_rows())

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            fh.write(self.csv_text())

    def to_dict(self) -> dict:
        return {
            "columns": self.header(),
            "rows": self.to_rows(),
            "stats": self.stats,
            "violations": self.violations,
            "success": self.success,
            "message": self.message,
        }


def _violations(p: ModelParams, states: np.ndarray, atol: float, rtol: float) -> int:
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        bnd = domain_bounds(p)
    tol = 10 * (atol + rtol * np.max(np.abs(states), axis=0))
    bad = np.any(states < -tol, axis=1)
    bad |= states[:, 0] + states[:, 1] > bnd.xy_cap + tol[0] + tol[1] + rtol * bnd.xy_cap
    bad |= states[:, 2] > bnd.v_cap * (1 + 10 * rtol) + tol[2]
    if states.shape[1] == 4:
        bad |= states[:, 3] > bnd.z_cap * (1 + 10 * rtol) + tol[3]
    return int(np.count_nonzero(bad))


def integrate(
    p: ModelParams,
    init: Sequence[float],
    t_span: tuple[float, float],
    rtol: float = DEFAULT_RTOL,
    atol: float = DEFAULT_ATOL,
    t_eval: Sequence[float] | None = None,
    samples: int | None = None,
    method: str = "RK45",
    max_step: float = np.inf,
) -> Orbit:
    """Integrate the model from ``init`` over ``t_span``.

    Without ``t_eval``/``samples`` the solver's own steps are returned.
    A failed integration (e.g. step size underflow) returns the partial
    orbit with ``success=False``.  With ``t_span[1] < t_span[0]`` the
    flow runs backward and the times decrease.
    """
    y0 = np.asarray(init, dtype=float)
    if y0.size not in (3, 4) or not np.all(np.isfinite(y0)):
        raise ValueError(f"initial state must be 3 or 4 finite numbers, got {init!r}")
    if not (rtol > 0 and atol > 0):
        raise ValueError("tolerances must be positive")
    t0, t1 = map(float, t_span)
    if samples is not None:
        t_eval = np.linspace(t0, t1, samples)
    sol = solve_ivp(
        _rhs(p, y0.size), (t0, t1), y0, method=method, rtol=rtol, atol=atol,
        t_eval=None if t_eval is None else np.asarray(t_eval, dtype=float), max_step=max_step,
    )
    states = sol.y.T.copy()
    times = sol.t.copy()
    if times.size == 0:
        times, states = np.array([t0]), y0[None, :]
    stats = {
        "min": [float(a) for a in states.min(axis=0)],
        "max": [float(a) for a in states.max(axis=0)],
        "nfev": int(sol.nfev),
    }
    return Orbit(times, states, stats, _violations(p, states, atol, rtol), bool(sol.success), sol.message)


# -- flows with variational equations ------------------------------------------


def _augmented(p: ModelParams, n: int, param: str | None):
    f = _rhs(p, n)
    jac = _jac_fn(p, n)
    if param is not None:
        # central difference in the parameter; exact up to rounding when f is affine in it
        val = p.get(param)
        h = 1e-6 * max(1.0, abs(val))
        fu = _rhs(p._unchecked_with(**{param: val + h}), n)
        fd = _rhs(p._unchecked_with(**{param: val - h}), n)

    def rhs(t, w):
        s = w[:n]
        J = jac(s)
        Phi = w[n:n + n * n].reshape(n, n)
        out = [f(t, s), (J @ Phi).ravel(), [np.trace(J)]]
        if param is not None:
            sp = w[n + n * n + 1:]
            out.append(J @ sp + (fu(t, s) - fd(t, s)) / (2 * h))
        return np.concatenate(out)

    return rhs


@dataclass
class _FlowResult:
    end: np.ndarray
    monodromy: np.ndarray
    div_integral: float
    dparam: np.ndarray | None


def _flow(p: ModelParams, u, T: float, param: str | None = None,
          rtol: float = SHOOT_RTOL, atol: float = SHOOT_ATOL) -> _FlowResult:
    u = np.asarray(u, dtype=float)
    n = u.size
    w0 = np.concatenate([u, np.eye(n).ravel(), [0.0]] + ([np.zeros(n)] if param else []))
    sol = solve_ivp(_augmented(p, n, param), (0.0, T), w0, method="DOP853", rtol=rtol, atol=atol)
    if not sol.success:
        raise RuntimeError(f"variational integration failed: {sol.message}")
    w = sol.y[:, -1]
    return _FlowResult(
        w[:n], w[n:n + n * n].reshape(n, n), float(w[n + n * n]),
        w[n + n * n + 1:] if param else None,
    )


# -- limit cycles --------------------------------------------------------------


@dataclass
class Cycle:
    anchor: np.ndarray
    period: float
    params: ModelParams
    samples: np.ndarray = field(repr=False, default=None)
    floquet: list[complex] = field(default_factory=list)
    stability: str = "unknown"
    refined: bool = False
    residual: float = math.inf
    div_integral: float = math.nan
    iterations: int = 0
    nodes: np.ndarray | None = field(repr=False, default=None)

    @property
    def trivial_multiplier(self) -> complex:
        return min(self.floquet, key=lambda m: abs(m - 1))

    @property
    def nontrivial_multipliers(self) -> list[complex]:
        ms = list(self.floquet)
        ms.remove(self.trivial_multiplier)
        return ms

    @property
    def amplitude(self) -> np.ndarray:
        return np.ptp(self.samples, axis=0)

    def to_dict(self) -> dict:
        return {
            "anchor": [float(a) for a in self.anchor],
            "period": float(self.period),
            "floquet": [(float(m.real), float(m.imag)) for m in self.floquet],
            "stability": self.stability,
            "refined": self.refined,
            "residual": float(self.residual),
            "div_integral": float(self.div_integral),
            "min": [float(a) for a in self.samples.min(axis=0)],
            "max": [float(a) for a in self.samples.max(axis=0)],
        }


# tail oscillations below this (relative) are integration noise around a point
SETTLED_AMPLITUDE = 1e-6


def poincare_returns(orbit: Orbit, p: ModelParams, discard: float = 0.5) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Crossing times and points on the section through the max-x point.

    The section is the hyperplane through the point of maximal x in the
    last ``1 - discard`` fraction of the orbit, normal to the flow there.
    Only crossings in the flow direction are kept.
    """
    n0 = int(discard * len(orbit.times))
    t = orbit.times[n0:]
    S = orbit.states[n0:]
    if len(t) < 3:
        raise NoRecurrenceError("no recurrence: orbit too short")
    k = int(np.argmax(S[:, 0]))
    anchor = S[k]
    normal = vector_field(p, anchor)
    scale = max(1.0, float(np.max(np.abs(anchor))))
    if float(np.max(np.ptp(S, axis=0))) <= SETTLED_AMPLITUDE * scale:
        raise NoRecurrenceError("no recurrence: orbit has settled at an equilibrium")
    if np.linalg.norm(normal) <= 1e-10 * scale:
        raise NoRecurrenceError("no recurrence: seed sits at an equilibrium")
    normal = normal / np.linalg.norm(normal)
    g = (S - anchor) @ normal
    times, points = [], []
    for i in range(len(t) - 1):
        if g[i] < 0 <= g[i + 1]:
            a = g[i] / (g[i] - g[i + 1])
            times.append(t[i] + a * (t[i + 1] - t[i]))
            points.append(S[i] + a * (S[i + 1] - S[i]))
    return np.array(times), np.array(points), anchor


def _floquet(M: np.ndarray) -> list[complex]:
    # LAPACK here: monodromy entries span many orders of magnitude and the
    # characteristic-polynomial route is not backward stable
    ms = np.linalg.eigvals(M)
    return sorted((complex(m) for m in ms), key=lambda m: (-abs(m), -m.imag))


@dataclass
class _Shoot:
    G: np.ndarray
    J: np.ndarray
    monodromy: np.ndarray
    div_integral: float


def _shoot(p: ModelParams, X: np.ndarray, m: int, n: int, ref_u, ref_f, param: str | None = None,
           t_scale: float = 1.0) -> _Shoot:
    """Multiple-shooting residual and Jacobian; m = 1 is single shooting.

    ``X = [u_0, ..., u_{m-1}, T]`` (plus the parameter value when ``param``
    is given); the period is stored divided by ``t_scale``.  Equations:
    phi(u_i, T/m) - u_{i+1} (cyclic) and the phase condition
    <ref_f, u_0 - ref_u> = 0.
    """
    N = m * n
    T = X[N] * t_scale
    q = p if param is None else p._unchecked_with(**{param: X[N + 1]})
    us = X[:N].reshape(m, n)
    G = np.zeros(N + 1)
    J = np.zeros((N + 1, N + 1 + (param is not None)))
    M = np.eye(n)
    div = 0.0
    for i in range(m):
        fr = _flow(q, us[i], T / m, param)
        j = (i + 1) % m
        rows = slice(i * n, (i + 1) * n)
        G[rows] = fr.end - us[j]
        J[rows, i * n:(i + 1) * n] += fr.monodromy
        J[rows, j * n:(j + 1) * n] -= np.eye(n)
        J[rows, N] = vector_field(q, fr.end) * (t_scale / m)
        if param is not None:
            J[rows, N + 1] = fr.dparam
        M = fr.monodromy @ M
        div += fr.div_integral
    G[N] = ref_f @ (us[0] - ref_u)
    J[N, :n] = ref_f
    return _Shoot(G, J, M, div)


def _nodes(p: ModelParams, u0, T: float, m: int) -> np.ndarray:
    if m == 1:
        return np.asarray(u0, float)[None, :]
    orb = integrate(p, u0, (0.0, T), rtol=1e-12, atol=1e-14, t_eval=np.arange(m) * (T / m), method="DOP853")
    return orb.states


def _samples(p: ModelParams, nodes: np.ndarray, T: float, total: int) -> np.ndarray:
    m = len(nodes)
    per = max(2, total // m)
    parts = []
    for i, u in enumerate(nodes):
        seg = integrate(p, u, (0.0, T / m), rtol=1e-11, atol=1e-13, samples=per + 1, method="DOP853").states
        parts.append(seg[:-1] if i < m - 1 else seg)
    return np.vstack(parts)


def _finish(p: ModelParams, nodes, T, iters, residual, refined, n_samples=200) -> Cycle:
    nodes = np.atleast_2d(np.asarray(nodes, float))
    m, n = nodes.shape
    X = np.concatenate([nodes.ravel(), [T]])
    sh = _shoot(p, X, m, n, nodes[0], np.zeros(n))
    samples = _samples(p, nodes, T, n_samples)
    cyc = Cycle(nodes[0].copy(), float(T), p, samples, _floquet(sh.monodromy), "unknown", refined,
                residual, sh.div_integral, iters, nodes)
    cyc.stability = "stable" if all(abs(mu) < 1 for mu in cyc.nontrivial_multipliers) else "unstable"
    return cyc


def refine_cycle(p: ModelParams, u0, T0: float, segments: int = 1, max_iter: int = 50, tol: float = SHOOT_TOL):
    """Shooting Newton for (u, T) at fixed parameters.

    ``u0`` is a point (nodes are generated by integration) or an (m, n)
    array of nodes.  Returns (nodes, T, iterations, residual, converged).
    """
    u0 = np.asarray(u0, dtype=float)
    nodes = u0 if u0.ndim == 2 else _nodes(p, u0, T0, segments)
    m, n = nodes.shape
    X = np.concatenate([nodes.ravel(), [float(T0)]])
    best = (X.copy(), math.inf)
    for it in range(1, max_iter + 1):
        ref_u = X[:n].copy()
        sh = _shoot(p, X, m, n, ref_u, vector_field(p, ref_u))
        res = float(np.max(np.abs(sh.G)))
        if res < best[1]:
            best = (X.copy(), res)
        if res <= tol:
            return X[:-1].reshape(m, n), X[-1], it - 1, res, True
        try:
            d = np.linalg.solve(sh.J, -sh.G)
        except np.linalg.LinAlgError:
            break
        # damp steps that move far relative to the state scale
        lim = 0.2 * max(1e-3, float(np.max(np.abs(X[:-1]))))
        step = float(np.max(np.abs(d[:-1])))
        if step > lim:
            d *= lim / step
        X = X + d
        if X[-1] <= 0 or not np.all(np.isfinite(X)):
            break
    X, res = best
    return X[:-1].reshape(m, n), X[-1], max_iter, res, res <= tol


def find_limit_cycle(
    p: ModelParams,
    seed: Orbit | Sequence[float],
    t_transient: float = 2000.0,
    t_window: float = 1000.0,
    max_iter: int = 50,
    segments: int = 1,
    retries: int = 3,
) -> Cycle:
    """Locate a periodic orbit from a seed orbit (or a seed state).

    The period guess comes from Poincare returns; shooting Newton refines
    it.  When Newton fails the seed is integrated further (doubling the
    transient) and the search repeated up to ``retries`` times; after
    that the Poincare estimate is returned with ``refined=False``.
    """
    if isinstance(seed, Orbit):
        start = seed.final
    else:
        start = np.asarray(seed, dtype=float)
        seed = None
    span = t_transient
    for attempt in range(retries + 1):
        if seed is None:
            pre = integrate(p, start, (0.0, span), rtol=1e-10, atol=1e-12)
            start = pre.final
            seed = integrate(p, start, (0.0, t_window), rtol=1e-10, atol=1e-12, max_step=t_window / 2000)
        times, points, _ = poincare_returns(seed, p)
        if len(times) < 2 or np.ptp(seed.states[:, 0]) <= 1e-12:
            raise NoRecurrenceError("no recurrence: fewer than two section returns")
        gaps = np.diff(times)
        T0 = float(np.mean(gaps[-min(3, len(gaps)):]))
        u0 = points[-1]
        nodes, T, it, res, ok = refine_cycle(p, u0, T0, segments=segments, max_iter=max_iter)
        if ok:
            return _finish(p, nodes, T, it, res, True)
        start, seed = seed.final, None
        span *= 2
    return _finish(p, _nodes(p, u0, T0, segments), T0, max_iter, res, False)


# -- Hopf normal form ----------------------------------------------------------


def _null_vector(M: np.ndarray) -> np.ndarray:
    _, _, Vh = np.linalg.svd(M)
    return np.conj(Vh[-1])


def hopf_vectors(A: np.ndarray, tol: float = 1e-6):
    """(omega, q, p) with A q = i omega q, A^T p = -i omega p, |q| = 1, <p, q> = 1."""
    ev = np.linalg.eigvals(A)
    k = int(np.argmax(ev.imag))
    lam = ev[k]
    omega = float(lam.imag)
    if omega <= 0 or abs(lam.real) > tol * max(1.0, omega):
        raise ValueError(f"no pure imaginary pair within tolerance: leading pair {lam}")
    n = A.shape[0]
    q = _null_vector(A - 1j * omega * np.eye(n))
    pv = _null_vector(A.T + 1j * omega * np.eye(n))
    q = q / np.linalg.norm(q)
    pv = pv / np.conj(np.vdot(pv, q))
    return omega, q, pv


def first_lyapunov_coefficient(p: ModelParams, point: Sequence[float], tol: float = 1e-6) -> float:
    """First Lyapunov coefficient at a Hopf point by the projection method.

    ``l1 = Re <p, C(q,q,qb) - 2 B(q, A^-1 B(q,qb)) + B(qb, (2iw - A)^-1 B(q,q))> / (2 w)``
    with ``|q| = 1`` and ``<p, q> = 1``.  C vanishes for this quadratic field.
    """
    x0 = np.asarray(point, dtype=float)
    A = jacobian(p, x0)
    omega, q, pv = hopf_vectors(A, tol)
    n = A.shape[0]
    B = lambda u, w: second_derivative(p, u, w)  # noqa: E731
    qb = np.conj(q)
    h11 = np.linalg.solve(A, B(q, qb))
    h20 = np.linalg.solve(2j * omega * np.eye(n) - A, B(q, q))
    g = -2 * B(q, h11) + B(qb, h20)
    return float(np.real(np.vdot(pv, g)) / (2 * omega))


def _auto_segments(A: np.ndarray, T: float, growth: float = 10.0) -> int:
    lead = max(0.0, float(np.max(np.linalg.eigvals(A).real)))
    return int(min(64, max(1, math.ceil(lead * T / math.log(growth)))))


def cycle_from_hopf(p: ModelParams, point: Sequence[float], amplitude: float = 1e-4, segments: int | None = None):
    """Small-amplitude cycle guess near a Hopf point and the branch direction.

    Returns (nodes, T, tangent): ``nodes`` samples the linearised cycle at
    ``segments`` equally spaced phases and ``tangent`` points along the
    growing amplitude in (nodes, T, param) space.
    """
    x0 = np.asarray(point, dtype=float)
    A = jacobian(p, x0)
    ev = np.linalg.eigvals(A)
    k = int(np.argmax(ev.imag))
    omega = float(ev[k].imag)
    T = 2 * math.pi / omega
    m = segments or _auto_segments(A, T)
    n = A.shape[0]
    q = _null_vector(A - ev[k] * np.eye(n))
    q = q / np.linalg.norm(q)
    q = q * np.exp(-1j * np.angle(q[0]))
    dirs = np.array([np.real(q * np.exp(2j * math.pi * i / m)) for i in range(m)])
    nodes = x0 + amplitude * dirs
    tangent = np.concatenate([dirs.ravel(), [0.0, 0.0]])
    return nodes, T, tangent / np.linalg.norm(tangent)


# -- cycle continuation --------------------------------------------------------


@dataclass
class CycleBranch:
    param_name: str
    params: list[float]
    periods: list[float]
    anchors: list[np.ndarray]
    mins: list[np.ndarray]
    maxs: list[np.ndarray]
    multipliers: list[list[complex]]
    folds: list[float]
    fold_kinds: list[str] = field(default_factory=list)
    message: str = ""

    @property
    def lpcs(self) -> list[float]:
        return [f for f, k in zip(self.folds, self.fold_kinds) if k == "lpc"]

    def to_rows(self) -> list[list]:
        rows = []
        for i, b in enumerate(self.params):
            rows.append([float(b), float(self.periods[i]), *map(float, self.mins[i]), *map(float, self.maxs[i])])
        return rows

    def header(self) -> list[str]:
        n = len(self.mins[0]) if self.mins else 4
        comps = ["x", "y", "v", "z"][:n]
        return [self.param_name, "period"] + [f"min_{c}" for c in comps] + [f"max_{c}" for c in comps]

    def to_dict(self) -> dict:
        return {
            "param": self.param_name,
            "columns": self.header(),
            "rows": self.to_rows(),
            "folds": [float(f) for f in self.folds],
            "fold_kinds": list(self.fold_kinds),
            "message": self.message,
        }


def _tangent(J: np.ndarray, prev: np.ndarray) -> np.ndarray:
    A = np.vstack([J, prev])
    rhs = np.zeros(A.shape[0])
    rhs[-1] = 1.0
    t = np.linalg.solve(A, rhs)
    return t / np.linalg.norm(t)


class _Continuation:
    """Shooting system in (nodes, T / t_scale, param) for pseudo-arclength steps."""

    def __init__(self, p, name, m, n, tol, t_scale):
        self.p, self.name, self.m, self.n, self.tol, self.t_scale = p, name, m, n, tol, t_scale

    def system(self, X, ref_u, ref_f) -> _Shoot:
        return _shoot(self.p, X, self.m, self.n, ref_u, ref_f, self.name, self.t_scale)

    def correct(self, Xp, tan, ref_u, ref_f, max_iter=10):
        X = Xp.copy()
        for _ in range(max_iter):
            sh = self.system(X, ref_u, ref_f)
            if np.max(np.abs(sh.G)) <= self.tol:
                return X, sh, True
            H = np.concatenate([sh.G, [tan @ (X - Xp)]])
            try:
                dX = np.linalg.solve(np.vstack([sh.J, tan]), -H)
            except np.linalg.LinAlgError:
                return X, sh, False
            X = X + dX
            if X[-2] <= 0 or not np.all(np.isfinite(X)):
                return X, sh, False
        sh = self.system(X, ref_u, ref_f)
        return X, sh, bool(np.max(np.abs(sh.G)) <= self.tol)

    def refs(self, X):
        u = X[:self.n].copy()
        return u, vector_field(self.p._unchecked_with(**{self.name: X[-1]}), u)


def continue_cycles(
    p: ModelParams,
    param_name: str,
    start: Cycle | tuple,
    param_range: tuple[float, float],
    ds: float = 1e-3,
    ds_min: float = 1e-8,
    ds_max: float = 0.05,
    max_steps: int = 400,
    tol: float = SHOOT_TOL,
    min_amplitude: float = 1e-6,
    n_samples: int = 100,
    max_halvings: int = 8,
) -> CycleBranch:
    """Pseudo-arclength continuation of the shooting system in (u, T, param).

    ``start`` is a Cycle or a tuple (nodes, T, tangent) from
    ``cycle_from_hopf``.  LPCs are recorded where the parameter component
    of the tangent changes sign and refined by bisection of the step.  A
    branch started at a Hopf point also records the parameter extremum at
    zero amplitude (kind ``"hopf_root"``), estimated from an even quadratic
    fit of the parameter against amplitude over the first branch points.
    When the period diverges while the parameter stalls, the branch stops
    and its parameter supremum is recorded (kind ``"homoclinic_limit"``).
    """
    lo, hi = param_range
    from_hopf = not isinstance(start, Cycle)
    if not from_hopf:
        nodes = start.nodes if start.nodes is not None else start.anchor[None, :]
        T0 = start.period
    else:
        nodes, T0, tan = start
        nodes = np.atleast_2d(np.asarray(nodes, float))
    m, n = nodes.shape
    cont = _Continuation(p, param_name, m, n, tol, T0)
    X = np.concatenate([nodes.ravel(), [1.0, p.get(param_name)]])
    if not from_hopf:
        ref_u, ref_f = cont.refs(X)
        tan = np.zeros(X.size)
        tan[-1] = 1.0
        sh = cont.system(X, ref_u, ref_f)
        tan = _tangent(sh.J, tan)
    else:
        ref_u = nodes[0].copy()
        # the flow at a near-equilibrium node is tiny; use the linear rotation instead
        ref_f = jacobian(p, ref_u) @ tan[:n]
        tan = np.asarray(tan, float)
        X, sh, ok = cont.correct(X, tan, ref_u, ref_f)
        if not ok:
            raise RuntimeError("could not converge onto the cycle branch from the Hopf guess")
        tan = _tangent(sh.J, tan)

    out = CycleBranch(param_name, [], [], [], [], [], [], [])

    def record(Xc, shc):
        q = p._unchecked_with(**{param_name: Xc[-1]})
        T = Xc[m * n] * T0
        smp = _samples(q, Xc[:m * n].reshape(m, n), T, n_samples)
        out.params.append(float(Xc[-1]))
        out.periods.append(float(T))
        out.anchors.append(Xc[:n].copy())
        out.mins.append(smp.min(axis=0))
        out.maxs.append(smp.max(axis=0))
        out.multipliers.append(_floquet(shc.monodromy))
        return smp

    record(X, sh)
    out.message = "max steps reached"
    h = ds
    for _ in range(max_steps):
        ref_u, ref_f = cont.refs(X)
        halvings = 0
        while True:
            Xn, shn, ok = cont.correct(X + h * tan, tan, ref_u, ref_f)
            if ok:
                break
            h /= 2
            halvings += 1
            if halvings > max_halvings or h < ds_min:
                out.message = "step failure after repeated halving"
                _hopf_root(out, from_hopf)
                return out
        tan_n = _tangent(shn.J, tan)
        if tan[-1] * tan_n[-1] < 0:
            out.folds.append(_refine_fold(cont, X, tan, ref_u, ref_f, h))
            out.fold_kinds.append("lpc")
        X, tan = Xn, tan_n
        smp = record(X, shn)
        if not lo <= X[-1] <= hi:
            out.message = "parameter range edge"
            break
        if float(np.max(np.ptp(smp, axis=0))) < min_amplitude:
            out.message = "amplitude collapsed (Hopf end)"
            break
        lim = _homoclinic_limit(out, T0)
        if lim is not None:
            out.folds.append(lim)
            out.fold_kinds.append("homoclinic_limit")
            out.message = "period blow-up: homoclinic approach"
            break
        h = min(ds_max, h * (1.3 if halvings == 0 else 1.0))
    _hopf_root(out, from_hopf)
    return out


def _homoclinic_limit(out: CycleBranch, T0: float, k: int = 6, stall: float = 1e-7) -> float | None:
    """Parameter supremum of a branch whose period diverges.

    Requires the period to exceed 3 T0 and the last ``k`` parameter
    increments to shrink geometrically below ``stall`` (relative); the
    limit is the geometric tail sum of the increments.
    """
    if len(out.params) < k + 1 or out.periods[-1] < 3 * T0:
        return None
    b = np.array(out.params[-(k + 1):])
    d = np.diff(b)
    if np.any(d == 0) or not (np.all(d > 0) or np.all(d < 0)):
        return None
    r = d[1:] / d[:-1]
    if not np.all((r > 0) & (r < 1)):
        return None
    if abs(d[-1]) > stall * max(1.0, abs(b[-1])):
        return None
    return float(b[-1] + d[-1] * r[-1] / (1 - r[-1]))


def _hopf_root(out: CycleBranch, from_hopf: bool, points: int = 6) -> None:
    if not from_hopf or len(out.params) < 3:
        return
    k = min(points, len(out.params))
    amp = np.array([np.max(out.maxs[i] - out.mins[i]) for i in range(k)])
    par = np.array(out.params[:k])
    # b = c0 + c2 A^2: the branch and its phase-shifted mirror meet at A = 0
    c2, c0 = np.polyfit(amp**2, par, 1)
    out.folds.insert(0, float(c0))
    out.fold_kinds.insert(0, "hopf_root")



def _refine_fold(cont: _Continuation, X, tan, ref_u, ref_f, h, rounds=40) -> float:
    """Bisect the arclength step for the zero of the tangent's parameter component."""
    a, b_ = 0.0, h
    sa = tan[-1]
    best = X[-1]
    for _ in range(rounds):
        mid = 0.5 * (a + b_)
        Xm, sh, ok = cont.correct(X + mid * tan, tan, ref_u, ref_f)
        if not ok:
            break
        tm = _tangent(sh.J, tan)
        best = Xm[-1]
        if tm[-1] * sa > 0:
            a = mid
        else:
            b_ = mid
        if b_ - a < 1e-12 * max(1.0, h):
            break
    return float(best)



# -- Lyapunov exponent ---------------------------------------------------------


@dataclass
class LyapunovEstimate:
    value: float
    trace: list[tuple[float, float]]


def largest_lyapunov_exponent(
    p: ModelParams,
    init: Sequence[float],
    horizon: float,
    renorm: float = 1.0,
    transient: float = 0.0,
    rtol: float = 1e-10,
    atol: float = 1e-12,
    seed: int = 0,
) -> LyapunovEstimate:
    """Benettin estimate with a tangent vector renormalised every ``renorm``."""
    s = np.asarray(init, dtype=float)
    n = s.size
    f = _rhs(p, n)
    if transient > 0:
        orb = integrate(p, s, (0.0, transient), rtol=rtol, atol=atol)
        s = orb.final
    rng = np.random.default_rng(seed)
    w = rng.normal(size=n)
    w /= np.linalg.norm(w)

    jac = _jac_fn(p, n)

    def rhs(t, y):
        return np.concatenate([f(t, y[:n]), jac(y[:n]) @ y[n:]])

    total, t = 0.0, 0.0
    trace = []
    steps = int(round(horizon / renorm))
    for k in range(steps):
        sol = solve_ivp(rhs, (0.0, renorm), np.concatenate([s, w]), method="DOP853", rtol=rtol, atol=atol)
        y = sol.y[:, -1]
        s, w = y[:n], y[n:]
        if not np.all(np.isfinite(s)) or _violations(p, s[None, :], atol, rtol):
            raise RuntimeError(f"orbit left the invariant domain at t={t + renorm:g}")
        nw = np.linalg.norm(w)
        total += math.log(nw)
        w /= nw
        t += renorm
        trace.append((t, total / t))
    return LyapunovEstimate(total / t if t > 0 else math.nan, trace)
