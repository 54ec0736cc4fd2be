import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from virobif.equilibria import (
    all_equilibria,
    boundary_equilibria,
    equilibrium_cubic,
    estar_y,
    fold_parameters,
    immune_window,
    interior_equilibria,
)
from virobif.model import ModelParams, vector_field

from conftest import P_EPS0, P_EPS1


def by_name(eqs):
    return {e.name: e for e in eqs}


def test_trivial_and_virus_only_points(eps0):
    eqs = by_name(boundary_equilibria(eps0))
    assert np.all(eqs["E0"].point == 0)
    assert np.allclose(eqs["EK"].point, [1, 0, 0, 0])
    est = eqs["Estar"].point
    assert est[0] == pytest.approx(eps0.delta / (eps0.beta * (eps0.b - 1)), rel=1e-14)
    assert est[3] == 0.0
    assert eqs["Estar"].residual < 1e-14


def test_immune_only_witness_is_infeasible(eps1):
    en = by_name(boundary_equilibria(eps1))["EN"]
    assert not en.feasible
    assert en.point[3] < 0


def test_estar_infeasible_below_threshold():
    p = ModelParams(b=2.0, **P_EPS0)
    assert p.R0 < 1
    assert estar_y(p) < 0
    assert "Estar" not in by_name(all_equilibria(p))


@pytest.mark.parametrize("b", [4.0, 9.5, 10.0, 15.0])
def test_interior_points_are_equilibria_eps0(b):
    p = ModelParams(b=b, **P_EPS0)
    for e in interior_equilibria(p):
        assert e.feasible
        assert e.point[1] == pytest.approx(p.y_e, rel=1e-12)
        assert np.max(np.abs(vector_field(p, e.point))) < 1e-12


@pytest.mark.parametrize("b", [27.0, 29.5, 42.0, 50.0])
def test_interior_points_are_equilibria_eps1(b):
    p = ModelParams(b=b, **P_EPS1)
    for e in interior_equilibria(p):
        # z tracks y through the immune balance beta_z y = c z
        assert e.point[3] == pytest.approx(p.beta_z * e.point[1] / p.c, rel=1e-12)
        assert np.max(np.abs(vector_field(p, e.point))) < 1e-12


def test_sub_tags_follow_root_order():
    p = ModelParams(b=42.0, **P_EPS1)
    eqs = by_name(interior_equilibria(p))
    assert set(eqs) == {"E_minus", "E_im", "E_plus"}
    assert eqs["E_minus"].point[1] < eqs["E_im"].point[1] < eqs["E_plus"].point[1]


def test_window_edges_match_numeric_crossing(eps0):
    b1, b2 = immune_window(eps0)

    def g(b):
        return estar_y(eps0.with_(b=b)) - eps0.y_e

    assert brentq(g, 3.0, 5.0, xtol=1e-14) == pytest.approx(b1, abs=1e-9)
    assert brentq(g, 6.0, 10.0, xtol=1e-14) == pytest.approx(b2, abs=1e-9)


def test_empty_window_returns_none():
    p = ModelParams(b=5.0, **{**P_EPS0, "c": 0.5})
    assert immune_window(p) is None


def test_fold_parameters_are_double_roots(eps1):
    scan = fold_parameters(eps1, (1.0, 60.0), samples=600)
    assert len(scan.roots) == 2
    for b in scan.roots:
        # at a fold two interior branches merge
        q = eps1.with_(b=b)
        cubic = equilibrium_cubic(q)
        ys = np.sort(np.roots(cubic.coeffs[::-1]).real)
        assert np.min(np.diff(ys)) < 1e-4


@settings(max_examples=30, deadline=None)
@given(st.floats(1.0, 80.0))
def test_eps1_cubic_roots_generate_equilibria(b):
    p = ModelParams(b=b, **P_EPS1)
    for e in interior_equilibria(p, include_infeasible=True):
        assert np.max(np.abs(vector_field(p, e.point))) < 1e-9 * max(1.0, np.abs(e.point).max())
