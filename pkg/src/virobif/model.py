"""Vector field, Jacobian and invariant domain of the tumor-virus-immune model.

State ordering is ``(x, y, v, z)``: uninfected tumor cells, infected tumor
cells, free virus, immune cells.  A state of length 3 is interpreted as the
immune-free reduction ``(x, y, v)``.

    x' = lam x (1 - (x + y)/K) - beta x v
    y' = beta x v - gamma y - beta_y y z
    v' = b gamma y - beta x v - delta v - beta_v v z
    z' = z (beta_z y - c z**epsilon),   epsilon in {0, 1}
"""

from __future__ import annotations

import json
import math
import warnings
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Mapping

import numpy as np

__all__ = [
    "ModelParams",
    "DomainBounds",
    "ReducedModel",
    "Rescaling",
    "vector_field",
    "jacobian",
    "second_derivative",
    "reduce_3d",
    "rescale",
    "domain_bounds",
    "in_domain",
    "load_params",
    "dump_params",
    "parse_key_values",
]

# serialized key -> dataclass field
_KEYS = {
    "lambda": "lam",
    "K": "K",
    "beta": "beta",
    "gamma": "gamma",
    "b": "b",
    "delta": "delta",
    "beta_y": "beta_y",
    "beta_v": "beta_v",
    "beta_z": "beta_z",
    "c": "c",
    "epsilon": "epsilon",
}
_FIELDS = {v: k for k, v in _KEYS.items()}


@dataclass(frozen=True)
class ModelParams:
    """Rate constants of the unified model.

    ``beta_z`` is stored directly; the immune proliferation ratio
    ``rho = beta_z / beta_y`` is derived on demand.
    """

    lam: float
    K: float = 1.0
    beta: float = 1.0
    gamma: float = 1.0
    b: float = 1.0
    delta: float = 0.0
    beta_y: float = 0.0
    beta_v: float = 0.0
    beta_z: float = 1.0
    c: float = 0.0
    epsilon: int = 0

    def __post_init__(self):
        for f in fields(self):
            val = getattr(self, f.name)
            if not math.isfinite(val):
                raise ValueError(f"parameter {_FIELDS[f.name]} is not finite: {val!r}")
        if self.epsilon not in (0, 1):
            raise ValueError(f"epsilon must be 0 or 1, got {self.epsilon!r}")
        object.__setattr__(self, "epsilon", int(self.epsilon))
        if self.K <= 0 or self.beta <= 0 or self.gamma <= 0 or self.beta_z <= 0:
            raise ValueError("K, beta, gamma and beta_z must be positive")
        if self.b < 1:
            raise ValueError(f"burst size b must be >= 1, got {self.b}")
        for name in ("lam", "delta", "beta_y", "beta_v", "c"):
            if getattr(self, name) < 0:
                raise ValueError(f"parameter {_FIELDS[name]} must be nonnegative")

    @property
    def rho(self) -> float:
        if self.beta_y == 0:
            return math.inf
        return self.beta_z / self.beta_y

    @property
    def R0(self) -> float:
        return self.beta * self.K * self.b / (self.beta * self.K + self.delta)

    @property
    def b0(self) -> float:
        return 1.0 + self.delta / (self.beta * self.K)

    @property
    def y_e(self) -> float:
        """Infected level at which immune growth balances clearance (epsilon=0)."""
        return self.c / self.beta_z

    def with_(self, **changes) -> "ModelParams":
        """Copy with fields replaced; accepts serialized names (``lambda``)."""
        return replace(self, **{_KEYS.get(k, k): v for k, v in changes.items()})

    def _unchecked_with(self, **changes) -> "ModelParams":
        # polynomial continuations in a parameter may leave the admissible range
        new = object.__new__(ModelParams)
        for f in fields(self):
            object.__setattr__(new, f.name, getattr(self, f.name))
        for k, v in changes.items():
            object.__setattr__(new, _KEYS.get(k, k), v)
        return new

    def get(self, name: str) -> float:
        return getattr(self, _KEYS.get(name, name))

    def to_dict(self) -> dict:
        return {_FIELDS[k]: v for k, v in asdict(self).items()}

    @classmethod
    def from_dict(cls, data: Mapping[str, float]) -> "ModelParams":
        unknown = set(data) - set(_KEYS) - set(_FIELDS)
        if unknown:
            raise ValueError(f"unknown parameter keys: {sorted(unknown)}")
        kw = {_KEYS.get(k, k): v for k, v in data.items()}
        if "epsilon" in kw:
            eps = float(kw["epsilon"])
            if eps not in (0.0, 1.0):
                raise ValueError(f"epsilon must be 0 or 1, got {eps}")
            kw["epsilon"] = int(eps)
        return cls(**{k: (v if k == "epsilon" else float(v)) for k, v in kw.items()})


def _as_state(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    if s.ndim != 1 or s.size not in (3, 4):
        raise ValueError(f"state must have 3 or 4 components, got shape {s.shape}")
    if not np.all(np.isfinite(s)):
        raise ValueError(f"non-finite state {s}")
    return s


def vector_field(p: ModelParams, s) -> np.ndarray:
    """Right-hand side at state ``s`` (3 or 4 components)."""
    s = _as_state(s)
    x, y, v = s[0], s[1], s[2]
    infection = p.beta * x * v
    dx = p.lam * x * (1.0 - (x + y) / p.K) - infection
    if s.size == 3:
        dy = infection - p.gamma * y
        dv = p.b * p.gamma * y - infection - p.delta * v
        return np.array([dx, dy, dv])
    z = s[3]
    dy = infection - p.gamma * y - p.beta_y * y * z
    dv = p.b * p.gamma * y - infection - p.delta * v - p.beta_v * v * z
    clearance = p.c if p.epsilon == 0 else p.c * z
    dz = z * (p.beta_z * y - clearance)
    return np.array([dx, dy, dv, dz])


def jacobian(p: ModelParams, s) -> np.ndarray:
    s = _as_state(s)
    x, y, v = s[0], s[1], s[2]
    lk = p.lam / p.K
    if s.size == 3:
        return np.array([
            [p.lam - lk * (2 * x + y) - p.beta * v, -lk * x, -p.beta * x],
            [p.beta * v, -p.gamma, p.beta * x],
            [-p.beta * v, p.b * p.gamma, -p.beta * x - p.delta],
        ])
    z = s[3]
    # epsilon=1: d/dz [z(beta_z y - c z)] = beta_z y - 2 c z
    dzz = p.beta_z * y - (p.c if p.epsilon == 0 else 2.0 * p.c * z)
    return np.array([
        [p.lam - lk * (2 * x + y) - p.beta * v, -lk * x, -p.beta * x, 0.0],
        [p.beta * v, -p.gamma - p.beta_y * z, p.beta * x, -p.beta_y * y],
        [-p.beta * v, p.b * p.gamma, -p.beta * x - p.delta - p.beta_v * z, -p.beta_v * v],
        [0.0, p.beta_z * z, 0.0, dzz],
    ])


def second_derivative(p: ModelParams, u, w) -> np.ndarray:
    """Symmetric bilinear form B(u, w) of the quadratic part of the field.

    Works on complex vectors.  The field is at most quadratic for both
    values of epsilon, so B does not depend on the base point and all
    higher derivatives vanish.
    """
    u = np.asarray(u)
    w = np.asarray(w)
    lk = p.lam / p.K
    x1, y1, v1 = u[0], u[1], u[2]
    x2, y2, v2 = w[0], w[1], w[2]
    xv = x1 * v2 + v1 * x2
    bx = -lk * (2 * x1 * x2 + x1 * y2 + y1 * x2) - p.beta * xv
    if u.size == 3:
        return np.array([bx, p.beta * xv, -p.beta * xv])
    z1, z2 = u[3], w[3]
    yz = y1 * z2 + z1 * y2
    bz = p.beta_z * yz - (2 * p.c * z1 * z2 if p.epsilon == 1 else 0.0)
    return np.array([
        bx,
        p.beta * xv - p.beta_y * yz,
        -p.beta * xv - p.beta_v * (v1 * z2 + z1 * v2),
        bz,
    ])


@dataclass(frozen=True)
class ReducedModel:
    """Immune-free (x, y, v) system; immune kill rates are zeroed."""

    params: ModelParams

    def field(self, s) -> np.ndarray:
        return vector_field(self.params, np.asarray(s, dtype=float)[:3])

    def jacobian(self, s) -> np.ndarray:
        return jacobian(self.params, np.asarray(s, dtype=float)[:3])


def reduce_3d(p: ModelParams) -> ReducedModel:
    return ReducedModel(p.with_(beta_y=0.0, beta_v=0.0))


@dataclass(frozen=True)
class Rescaling:
    """Maps between a model and its K = gamma = 1 form.

    Original state = ``state_scale * rescaled state`` and original time =
    ``time_scale * rescaled time``.
    """

    params: ModelParams
    state_scale: np.ndarray
    time_scale: float

    def to_original(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s * self.state_scale[: s.shape[-1]]

    def to_rescaled(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        return s / self.state_scale[: s.shape[-1]]


def rescale(p: ModelParams) -> Rescaling:
    """Scale x, y, v by K and time by 1/gamma so that K = gamma = 1.

    The immune variable is left unscaled.
    """
    g = p.gamma
    # scaling preserves admissibility, so skip re-validation
    q = p._unchecked_with(
        lam=p.lam / g,
        K=1.0,
        beta=p.beta * p.K / g,
        gamma=1.0,
        delta=p.delta / g,
        beta_y=p.beta_y / g,
        beta_v=p.beta_v / g,
        beta_z=p.beta_z * p.K / g,
        c=p.c / g,
    )
    return Rescaling(q, np.array([p.K, p.K, p.K, 1.0]), 1.0 / g)


@dataclass(frozen=True)
class DomainBounds:
    xy_cap: float
    v_cap: float
    z_cap: float
    unbounded: bool = False


def domain_bounds(p: ModelParams) -> DomainBounds:
    """Caps of the positively invariant box Omega."""
    unbounded = False
    if p.delta == 0:
        v_cap = math.inf
        unbounded = True
    else:
        v_cap = p.b * p.gamma * p.K / p.delta
    if p.epsilon == 0:
        # rho * beta_y == beta_z, so the beta_y = 0 case needs no special form
        sigma = min(p.gamma, p.c)
        if p.delta == 0 or sigma == 0:
            z_cap = math.inf
            unbounded = True
        else:
            z_cap = p.beta_z * p.beta * p.b * p.gamma * p.K ** 2 / (p.delta * sigma)
    else:
        if p.c == 0:
            z_cap = math.inf
            unbounded = True
        else:
            z_cap = p.beta_z * p.K / p.c
    if unbounded:
        warnings.warn("zero clearance rate: invariant domain is unbounded", RuntimeWarning)
    return DomainBounds(p.K, v_cap, z_cap, unbounded)


def in_domain(p: ModelParams, s, tol: float = 0.0) -> bool:
    """True iff ``s`` lies in Omega inflated by ``tol`` (relative to each cap)."""
    s = _as_state(s)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        bnd = domain_bounds(p)
    if np.any(s < -tol):
        return False
    if s[0] + s[1] > bnd.xy_cap * (1 + tol) + tol:
        return False
    if s[2] > bnd.v_cap * (1 + tol) + tol:
        return False
    if s.size == 4 and s[3] > bnd.z_cap * (1 + tol) + tol:
        return False
    return True


def load_params(path: str | Path, base: ModelParams | None = None) -> ModelParams:
    """Read parameters from JSON or from ``name = value`` lines."""
    text = Path(path).read_text()
    if Path(path).suffix.lower() == ".json" or text.lstrip().startswith("{"):
        data = json.loads(text)
    else:
        data = parse_key_values(text)
    if base is not None:
        return base.with_(**data)
    return ModelParams.from_dict(data)


def parse_key_values(text: str) -> dict:
    data = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ValueError(f"line {lineno}: expected 'name = value', got {raw!r}")
        key, val = (t.strip() for t in line.split("=", 1))
        try:
            data[key] = float(val)
        except ValueError:
            raise ValueError(f"line {lineno}: value for {key!r} is not a number: {val!r}") from None
    return data


def dump_params(p: ModelParams, fmt: str = "kv") -> str:
    d = p.to_dict()
    if fmt == "json":
        return json.dumps(d, indent=2)
    return "".join(f"{k} = {v!r}\n" for k, v in d.items())



