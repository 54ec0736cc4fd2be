import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virobif.bifurcation import locate_critical
from virobif.dynamics import (
    NoRecurrenceError,
    _jac_fn,
    _rhs,
    find_limit_cycle,
    first_lyapunov_coefficient,
    integrate,
    largest_lyapunov_exponent,
    poincare_returns,
    refine_cycle,
)
from virobif.equilibria import all_equilibria
from virobif.model import ModelParams, jacobian, vector_field

from conftest import P3D, P_EPS0, P_EPS1


@pytest.fixture(scope="module")
def cycle23():
    p = ModelParams(b=23.0, **P_EPS0)
    return find_limit_cycle(p, [0.25, 0.05, 0.5, 0.5])


@pytest.fixture(scope="module")
def hopf_eps1():
    p = ModelParams(b=29.9, **P_EPS1)
    bh = locate_critical(p, "hopf", (29.8, 30.0), branch="E_im")
    q = p.with_(b=bh)
    pt = {e.name: e for e in all_equilibria(q)}["E_im"].point
    return q, pt


def test_virus_free_point_is_fixed(eps1):
    orb = integrate(eps1, [1, 0, 0, 0], (0, 500))
    assert np.max(np.abs(orb.states - [1, 0, 0, 0])) < 1e-10


def test_halving_tolerance_changes_little(eps0):
    init = [0.5, 0.01, 1.2, 0.5]
    a = integrate(eps0, init, (0, 200), rtol=1e-8, atol=1e-10).final
    b = integrate(eps0, init, (0, 200), rtol=5e-9, atol=5e-11).final
    assert np.max(np.abs(a - b)) < 1e-6


def test_time_reversal_returns_to_start(eps0):
    # short window: the backward flow expands errors by the forward contraction
    init = np.array([0.5, 0.01, 1.2, 0.5])
    fwd = integrate(eps0, init, (0, 2), rtol=1e-11, atol=1e-13)
    back = integrate(eps0, fwd.final, (2, 0), rtol=1e-11, atol=1e-13)
    assert back.times[-1] == 0
    assert np.max(np.abs(back.final - init)) < 10 * 1e-11 * np.max(np.abs(init))


@settings(max_examples=20, deadline=None)
@given(st.lists(st.floats(0.0, 1.0), min_size=4, max_size=4), st.sampled_from([9.5, 23.0]))
def test_orbits_stay_in_domain(init, b):
    p = ModelParams(b=b, **P_EPS0)
    init = [min(init[0], 1.0), init[1] * (1 - min(init[0], 1.0)), init[2], init[3]]
    orb = integrate(p, init, (0, 300))
    assert orb.success
    assert orb.violations == 0


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(0.0, 2.0), min_size=4, max_size=4))
def test_fast_closures_match_model(s):
    for p in (ModelParams(b=9.5, **P_EPS0), ModelParams(b=27.0, **P_EPS1)):
        s = np.array(s)
        assert np.allclose(_rhs(p, 4)(0.0, s), vector_field(p, s), rtol=1e-14, atol=1e-14)
        assert np.allclose(_jac_fn(p, 4)(s), jacobian(p, s), rtol=1e-14, atol=1e-14)
    p3 = ModelParams(b=28.0, **P3D)
    assert np.allclose(_rhs(p3, 3)(0.0, s[:3]), vector_field(p3, s[:3]), rtol=1e-14, atol=1e-14)


def test_equilibrium_has_no_recurrence(eps1):
    e = {x.name: x for x in all_equilibria(eps1)}["E_plus"]
    orb = integrate(eps1, e.point, (0, 200))
    with pytest.raises(NoRecurrenceError):
        poincare_returns(orb, eps1)


def test_cycle_at_b23(cycle23):
    assert cycle23.refined
    assert cycle23.period == pytest.approx(32.613036, abs=0.05)
    assert cycle23.stability == "stable"
    assert abs(cycle23.trivial_multiplier - 1) < 1e-4
    # Abel-Liouville: product of multipliers equals exp of the divergence integral
    prod = np.prod(cycle23.floquet)
    assert abs(prod - np.exp(cycle23.div_integral)) < 1e-4


def test_refine_cycle_is_idempotent(cycle23):
    nodes, T, _, residual, converged = refine_cycle(cycle23.params, cycle23.anchor, cycle23.period)
    assert converged
    assert T == pytest.approx(cycle23.period, abs=1e-8)


def test_3d_cycle_at_b28():
    p = ModelParams(b=28.0, **P3D)
    cyc = find_limit_cycle(p, [0.149, 0.0431317, 2.64672], t_transient=20000)
    assert cyc.period == pytest.approx(21.198567, abs=1e-3)
    mods = sorted(abs(m) for m in cyc.floquet)
    assert mods[-1] == pytest.approx(1.0, abs=1e-4)
    assert mods[1] == pytest.approx(0.98758, abs=1e-3)


def test_first_lyapunov_coefficient_eps1(hopf_eps1):
    q, pt = hopf_eps1
    l1 = first_lyapunov_coefficient(q, pt)
    # positive: the Hopf point is subcritical
    assert l1 > 0
    assert l1 == pytest.approx(217.685, rel=1e-3)


def test_first_lyapunov_coefficient_needs_pure_pair(eps1):
    e = {x.name: x for x in all_equilibria(eps1)}["E_plus"]
    with pytest.raises(ValueError, match="pure imaginary"):
        first_lyapunov_coefficient(eps1, e.point)


def test_lle_at_stable_focus(eps1):
    e = {x.name: x for x in all_equilibria(eps1)}["E_plus"]
    est = largest_lyapunov_exponent(eps1, e.point, horizon=500.0)
    assert est.value == pytest.approx(-0.1001, rel=0.1)


@pytest.mark.slow
def test_lle_on_cycle(cycle23):
    est = largest_lyapunov_exponent(cycle23.params, cycle23.anchor, horizon=2000.0)
    assert abs(est.value) < 0.01
