"""Acceptance criteria, one test each; every test prints a single PASS/FAIL line."""

import csv
import time
from pathlib import Path

import numpy as np
import pytest
from scipy.optimize import root

from virobif.bifurcation import locate_critical
from virobif.cli import PRESETS, run_scenario
from virobif.dynamics import find_limit_cycle, first_lyapunov_coefficient, integrate
from virobif.equilibria import all_equilibria, fold_parameters, immune_window, estar_y
from virobif.model import ModelParams, domain_bounds, jacobian, vector_field
from virobif.polyalg import RealPolynomial, real_roots
from virobif.stability import (
    classify,
    eigenvalues,
    hopf_burst_3d,
    locate_bH,
    phi_polynomial,
    routh_hurwitz,
    shifted_phi_closed_form,
)

from conftest import ACCEPTANCE_LINES, P3D, P_EPS0, P_EPS1


class Checks:
    def __init__(self, number: int, limit: float | None = None):
        self.number, self.limit = number, limit
        self.failed: list[str] = []
        self.count = 0
        self.start = time.perf_counter()

    def __call__(self, ok, label: str) -> None:
        self.count += 1
        if not ok:
            self.failed.append(label)

    def finish(self) -> None:
        elapsed = time.perf_counter() - self.start
        if self.limit is not None and elapsed > self.limit:
            self.failed.append(f"runtime {elapsed:.1f}s > {self.limit:g}s")
        status = "PASS" if not self.failed else "FAIL"
        line = f"criterion {self.number}: {status} ({self.count} checks, {elapsed:.1f}s)"
        if self.failed:
            line += " failed: " + "; ".join(self.failed)
        print(line)
        ACCEPTANCE_LINES.append(line)
        assert not self.failed, line


def close(a, b, tol) -> bool:
    return bool(np.all(np.abs(np.asarray(a, dtype=complex) - np.asarray(b, dtype=complex)) <= tol))


def spectrum_matches(got, quoted, tol) -> bool:
    """Multiset match of eigenvalues within ``tol``."""
    rest = list(got)
    for q in quoted:
        k = int(np.argmin([abs(q - g) for g in rest]))
        if abs(q - rest[k]) > tol:
            return False
        rest.pop(k)
    return not rest


def named(p):
    return {e.name: e for e in all_equilibria(p)}


# -- 1 -------------------------------------------------------------------------


def test_criterion_1_reduced_model():
    ck = Checks(1, limit=1.0)
    p = ModelParams(b=28.0, **P3D)
    ck(p.b0 == 5.0, "b0 == 5")
    ck(abs(locate_bH(p) - 27.7664) <= 1e-3, "b_H via H(b)")
    ck(abs(hopf_burst_3d(p) - 27.7664) <= 1e-3, "b_H via Phi")
    est = [e for e in all_equilibria(p, dim=3) if e.tag == "Estar"][0]
    ck(close(est.point, [0.148148, 0.0431317, 2.64672], 1e-4), "E* coordinates")
    ev = eigenvalues(jacobian(p, est.point))
    ck(spectrum_matches(ev, [-1.51022, 0.000296187 + 0.298909j, 0.000296187 - 0.298909j], 1e-4),
       "E* eigenvalues")
    ck.finish()


# -- 2 -------------------------------------------------------------------------


def test_criterion_2_shifted_phi_monte_carlo():
    ck = Checks(2, limit=30.0)
    rng = np.random.default_rng(20240501)
    # (0, 5]: reflect the half-open [0, 5) sample
    triples = (5.0 - 5.0 * rng.random((100_000, 3))).tolist()
    pattern, not_one = 0, 0
    for lam, beta, delta in triples:
        p = ModelParams(lam=lam, beta=beta, delta=delta, b=2.0)
        c = shifted_phi_closed_form(p).coeffs
        if c[3] > 0 and c[2] < 0:
            pattern += 1
        if len(real_roots(phi_polynomial(p), (p.b0, np.inf))) != 1:
            not_one += 1
    ck(pattern == 0, f"forbidden sign pattern in {pattern} samples")
    ck(not_one == 0, f"root count above b0 not one in {not_one} samples")
    ck.finish()


# -- 3 -------------------------------------------------------------------------


def test_criterion_3_constant_clearance():
    ck = Checks(3)
    p = ModelParams(b=9.5, **P_EPS0)
    ck(p.y_e == 0.06, "y_e == 0.06")
    ck(abs(p.b0 - 2.81818) <= 1e-5, "b0")
    b1, b2 = immune_window(p)
    ck(abs(b1 - 3.58676) <= 1e-4 and abs(b2 - 8.66779) <= 1e-4, "window edges")
    from scipy.optimize import brentq

    g = lambda b: estar_y(p.with_(b=b)) - p.y_e  # noqa: E731
    n1, n2 = brentq(g, 3.0, 5.0, xtol=1e-14), brentq(g, 6.0, 10.0, xtol=1e-14)
    ck(abs(n1 - b1) <= 1e-6 and abs(n2 - b2) <= 1e-6, "closed form vs numeric crossing")
    folds = fold_parameters(p, (1.0, 25.0)).roots
    ck(len(folds) == 1 and abs(folds[0] - 10.2462) <= 1e-3, "fold b2*")
    ck(abs(locate_bH(p, (18.0, 20.0), order=4) - 19.01210747136) <= 1e-6, "b_H")

    eqs = named(p)
    est, eim = eqs["Estar"], eqs["E_im"]
    ck(classify(p, est).stable and classify(p, eim).stable, "both attractors stable at b=9.5")
    ck(close(est.point, [0.213904, 0.0562055, 2.38873, 0], 1e-4), "E* coordinates")
    ck(close(eim.point, [0.453156, 0.06, 1.59331, 0.67437], 1e-4), "E_im coordinates")
    ck(spectrum_matches(classify(p, est).eigenvalues,
                        [-1.25014, -0.0251954 + 0.21128j, -0.0251954 - 0.21128j, -0.0022767], 1e-4),
       "E* eigenvalues")
    ck(spectrum_matches(classify(p, eim).eigenvalues,
                        [-1.69595, -0.0714416 + 0.218669j, -0.0714416 - 0.218669j, -0.00574855], 1e-4),
       "E_im eigenvalues")
    cyc = find_limit_cycle(p.with_(b=23.0), [0.25, 0.05, 0.5, 0.5])
    ck(cyc.refined and abs(cyc.period - 32.613) <= 0.05, f"cycle period {cyc.period:.5f}")
    ck.finish()


# -- 4 -------------------------------------------------------------------------

QUOTED = {
    27.0: {"E_plus": ([0.746349, 0.198681, 0.001264, 0.198681],
                      [-33.4248, -0.6914, -0.1001 + 0.1725j, -0.1001 - 0.1725j])},
    29.5: {"E_plus": ([0.713936, 0.217452, 0.001577, 0.217452],
                      [-32.0654, -0.6453, -0.1098 + 0.1890j, -0.1098 - 0.1890j]),
           "E_im": ([0.018264, 0.121499, 0.019776, 0.121499],
                    [-1.9185, 0.1893, 0.0221 + 0.0654j, 0.0221 - 0.0654j]),
           "E_minus": ([0.011907, 0.099053, 0.020438, 0.099053],
                       [-1.5443, 0.1167 + 0.1115j, 0.1167 - 0.1115j, -0.0238])},
    42.0: {"E_plus": ([0.494238, 0.308421, 0.004537, 0.308421],
                      [-22.81, -0.1575 + 0.2758j, -0.1575 - 0.2758j, -0.3016]),
           "E_im": ([0.145387, 0.284118, 0.0131148, 0.284118],
                    [-7.8605, -0.1167 + 0.2540j, -0.1167 - 0.2540j, 0.2641]),
           "E_minus": ([0.002285, 0.042969, 0.021948, 0.042969],
                       [-0.8425, 0.0687 + 0.1676j, 0.0687 - 0.1676j, -0.0333])},
    50.0: {"E_minus": ([0.001469, 0.033937, 0.022175, 0.033937],
                       [-0.7580, 0.0557 + 0.1632j, 0.0557 - 0.1632j, -0.0284])},
}
L1_QUOTED = 0.818234


@pytest.fixture(scope="module")
def preset_runs(tmp_path_factory):
    """Every preset run once; reused by criteria 4 and 6."""
    out = tmp_path_factory.mktemp("first")
    codes = {name: run_scenario(s, out)[0] for name, s in PRESETS.items()}
    return out, codes


def _read(path: Path) -> list[list[str]]:
    with open(path) as fh:
        return list(csv.reader(fh))


def test_criterion_4_density_dependent_clearance(preset_runs):
    ck = Checks(4)
    base = ModelParams(b=27.0, **P_EPS1)
    for b, table in QUOTED.items():
        p = base.with_(b=b)
        interior = {e.name: e for e in all_equilibria(p) if e.name.startswith("E_")}
        ck(set(interior) == set(table), f"interior equilibria at b={b:g}: {sorted(interior)}")
        for name, (coords, ev) in table.items():
            if name not in interior:
                continue
            e = interior[name]
            ck(close(e.point, coords, 1e-3), f"{name} coordinates at b={b:g}")
            ck(spectrum_matches(classify(p, e).eigenvalues, ev, 1e-2), f"{name} eigenvalues at b={b:g}")
    folds = fold_parameters(base, (1.0, 60.0)).roots
    ck(len(folds) == 2 and close(folds, [29.361, 45.9232], 1e-2), f"folds {folds}")
    bH = locate_critical(base, "hopf", (29.8, 30.0), branch="E_im")
    ck(abs(bH - 29.903443) <= 1e-3, f"Hopf {bH:.7f}")
    q = base.with_(b=bH)
    l1 = first_lyapunov_coefficient(q, named(q)["E_im"].point)
    ck(l1 > 0, "l1 positive")
    ck(abs(l1 - L1_QUOTED) <= 0.2 * L1_QUOTED, f"l1 = {l1:.6g} not within 20% of {L1_QUOTED}")

    out, codes = preset_runs
    ck(codes["fig-LC-diag"] == 0, "LC-diag preset ran")
    lpc = {r[0]: float(r[1]) for r in _read(out / "fig-LC-diag" / "lpc.csv")[1:]}
    ck(len(lpc) == 2, "two LPC rows")
    ck(abs(lpc.get("homoclinic_limit", np.nan) - 30.854713) <= 0.05, "LPC near 30.8547")
    ck(bH <= lpc.get("hopf_root", np.nan) <= bH + 1e-2, "second fold next to b_H")

    p42 = base.with_(b=42.0)
    a = integrate(p42, [0.9, 0.01, 0.01, 0.01], (0, 3000), samples=6001)
    c = integrate(p42, [0.05, 0.05, 0.0043, 0.1954], (0, 3000), samples=6001)
    tail = a.states[a.times >= 2250]
    ck(np.ptp(tail[:, 0]) > 0.1, "first orbit settles on a large cycle")
    ck(np.max(np.abs(c.final - named(p42)["E_plus"].point)) < 1e-6, "second orbit reaches E_plus")
    ck.finish()


# -- 5 -------------------------------------------------------------------------


def _random_params(rng, eps):
    base = P_EPS0 if eps == 0 else P_EPS1
    d = {k: (v * float(rng.uniform(0.5, 2.0)) if k not in ("K", "epsilon") else v) for k, v in base.items()}
    d["b"] = float(rng.uniform(1.5, 60.0))
    return ModelParams(**d)


def _random_state(rng, p):
    bnd = domain_bounds(p)
    x = float(rng.uniform(0, bnd.xy_cap))
    y = float(rng.uniform(0, bnd.xy_cap - x))
    return [x, y, float(rng.uniform(0, min(bnd.v_cap, 5.0))), float(rng.uniform(0, min(bnd.z_cap, 5.0)))]


def _grid_newton(p):
    """Equilibria found by Newton from a grid of starts (independent oracle)."""
    bnd = domain_bounds(p)
    found = []
    axes = [np.linspace(0, bnd.xy_cap, 4), np.linspace(0, bnd.xy_cap, 4),
            np.geomspace(1e-3, min(bnd.v_cap, 50.0), 4), np.geomspace(1e-3, min(bnd.z_cap, 50.0), 4)]
    def f(s):
        return vector_field(p, s) if np.all(np.isfinite(s)) else np.full(4, 1e300)

    def jac(s):
        return jacobian(p, s) if np.all(np.isfinite(s)) else np.eye(4)

    for s0 in np.array(np.meshgrid(*axes)).reshape(4, -1).T:
        sol = root(f, s0, jac=jac, method="hybr", tol=1e-13)
        s = sol.x
        if not sol.success or np.max(np.abs(vector_field(p, s))) > 1e-10 or np.any(s < -1e-9):
            continue
        if not any(np.max(np.abs(s - f)) < 1e-6 for f in found):
            found.append(s)
    return found


def test_criterion_5_property_suites():
    ck = Checks(5, limit=120.0)
    rng = np.random.default_rng(7)

    violations = 0
    for k in range(100):
        p = _random_params(rng, k % 2)
        orb = integrate(p, _random_state(rng, p), (0.0, 200.0))
        violations += orb.violations + (not orb.success)
    ck(violations == 0, f"{violations} domain violations over 100 orbits")

    worst = 0.0
    for k in range(50):
        p = _random_params(rng, k % 2)
        s = np.array(_random_state(rng, p))
        J = jacobian(p, s)
        h = 1e-6
        fd = np.column_stack([(vector_field(p, s + h * e) - vector_field(p, s - h * e)) / (2 * h)
                              for e in np.eye(4)])
        worst = max(worst, float(np.max(np.abs(fd - J)) / max(1.0, np.max(np.abs(J)))))
    ck(worst <= 1e-6, f"Jacobian vs finite differences {worst:.2e}")

    disagree = 0
    for _ in range(1000):
        c = rng.uniform(-3, 3, 4)
        lead = max(z.real for z in np.roots([1.0, *c]))
        if abs(lead) < 1e-6:
            continue
        disagree += routh_hurwitz(RealPolynomial([c[3], c[2], c[1], c[0], 1.0])).passed != (lead < 0)
    ck(disagree == 0, f"Hurwitz verdict disagrees on {disagree} quartics")

    cycles = [
        find_limit_cycle(ModelParams(b=23.0, **P_EPS0), [0.25, 0.05, 0.5, 0.5]),
        find_limit_cycle(ModelParams(b=28.0, **P3D), [0.149, 0.0431317, 2.64672], t_transient=20000),
        find_limit_cycle(ModelParams(b=42.0, **P_EPS1), [0.9, 0.01, 0.01, 0.01], t_transient=3000),
    ]
    for cyc in cycles:
        ck(cyc.refined, f"cycle refined at b={cyc.params.b:g}")
        ck(abs(cyc.trivial_multiplier - 1) <= 1e-4, f"trivial multiplier at b={cyc.params.b:g}")

    missing = empty = 0
    for k in range(20):
        p = _random_params(rng, k % 2)
        ours = [e.point for e in all_equilibria(p)]
        oracle = _grid_newton(p)
        empty += not oracle
        for s in oracle:
            if not any(np.max(np.abs(s - e)) < 1e-6 * max(1.0, np.max(np.abs(s))) for e in ours):
                missing += 1
    ck(empty == 0, f"oracle found nothing for {empty} parameter sets")
    ck(missing == 0, f"{missing} oracle equilibria missing")
    ck.finish()


# -- 6 -------------------------------------------------------------------------


def _data_files(folder: Path) -> dict[str, bytes]:
    return {f.name: f.read_bytes() for f in sorted(folder.iterdir()) if f.name != "manifest.json"}


def test_criterion_6_determinism(preset_runs, tmp_path):
    ck = Checks(6)
    first, codes = preset_runs
    for name, s in PRESETS.items():
        ck(codes[name] == 0, f"{name} first run")
        code, folder = run_scenario(s, tmp_path)
        ck(code == 0, f"{name} second run")
        a, b = _data_files(first / name), _data_files(Path(folder))
        ck(a and a == b, f"{name} data files differ")
    ck.finish()
