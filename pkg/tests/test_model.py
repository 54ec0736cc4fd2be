import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virobif.model import (
    ModelParams,
    domain_bounds,
    dump_params,
    in_domain,
    jacobian,
    load_params,
    parse_key_values,
    reduce_3d,
    rescale,
    second_derivative,
    vector_field,
)

from conftest import P_EPS0, P_EPS1

pos = st.floats(0.05, 5.0)


@st.composite
def params(draw, epsilon=None):
    eps = draw(st.sampled_from([0, 1])) if epsilon is None else epsilon
    return ModelParams(
        lam=draw(pos), K=draw(pos), beta=draw(pos), gamma=draw(pos), b=draw(st.floats(1.0, 60.0)),
        delta=draw(pos), beta_y=draw(pos), beta_v=draw(pos), beta_z=draw(pos), c=draw(pos), epsilon=eps,
    )


states = st.lists(st.floats(0.0, 3.0), min_size=4, max_size=4)


def test_threshold_quantities(eps0):
    assert eps0.b0 == pytest.approx(1 + 0.2 / 0.11, abs=1e-15)
    assert eps0.y_e == pytest.approx(0.06, abs=1e-15)
    assert eps0.with_(b=eps0.b0).R0 == pytest.approx(1.0, abs=1e-14)


def test_invalid_parameters_rejected():
    with pytest.raises(ValueError, match="burst size"):
        ModelParams(lam=1.0, b=0.5)
    with pytest.raises(ValueError, match="nonnegative"):
        ModelParams(lam=-1.0)
    with pytest.raises(ValueError, match="epsilon"):
        ModelParams(lam=1.0, epsilon=2)
    with pytest.raises(ValueError, match="not finite"):
        ModelParams(lam=math.nan)


def test_field_vanishes_at_trivial_points(eps1):
    assert np.all(vector_field(eps1, [0, 0, 0, 0]) == 0)
    assert np.all(vector_field(eps1, [eps1.K, 0, 0, 0]) == 0)


@settings(max_examples=60, deadline=None)
@given(params(), states)
def test_jacobian_matches_finite_differences(p, s):
    s = np.asarray(s)
    J = jacobian(p, s)
    h = 1e-6
    for j in range(4):
        e = np.zeros(4)
        e[j] = h
        col = (vector_field(p, s + e) - vector_field(p, s - e)) / (2 * h)
        # field is quadratic, so central differences are exact up to rounding
        assert np.allclose(J[:, j], col, atol=1e-6 * max(1.0, np.abs(J).max()))


@settings(max_examples=40, deadline=None)
@given(params(), states, states)
def test_second_derivative_is_exact_for_quadratic_field(p, s, u):
    s, u = np.asarray(s), np.asarray(u)
    # f(s + u) = f(s) + J u + B(u, u) / 2 exactly
    lhs = vector_field(p, s + u)
    rhs = vector_field(p, s) + jacobian(p, s) @ u + 0.5 * second_derivative(p, u, u)
    assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.abs(lhs).max()))


@settings(max_examples=40, deadline=None)
@given(params(), states)
def test_rescaling_conjugates_the_flow(p, s):
    rs = rescale(p)
    s = np.asarray(s)
    lhs = vector_field(p, rs.to_original(s))
    rhs = rs.to_original(vector_field(rs.params, s)) / rs.time_scale
    assert np.allclose(lhs, rhs, atol=1e-9 * max(1.0, np.abs(lhs).max()))


def test_reduced_model_drops_immune_terms(p3d):
    red = reduce_3d(p3d.with_(beta_y=0.3, beta_v=0.2))
    s = [0.2, 0.1, 1.0]
    assert np.allclose(red.field(s), vector_field(p3d, s))


def test_domain_bounds_and_membership(eps1):
    bnd = domain_bounds(eps1)
    assert bnd.v_cap == pytest.approx(eps1.b * eps1.gamma * eps1.K / eps1.delta)
    assert bnd.z_cap == pytest.approx(eps1.beta_z * eps1.K / eps1.c)
    assert in_domain(eps1, [0.5, 0.2, 0.01, 0.1])
    assert not in_domain(eps1, [0.9, 0.2, 0.01, 0.1])
    assert not in_domain(eps1, [-0.1, 0.0, 0.0, 0.0])


def test_zero_clearance_warns():
    with pytest.warns(RuntimeWarning, match="unbounded"):
        domain_bounds(ModelParams(lam=1.0, c=0.0, epsilon=1))


def test_params_roundtrip(tmp_path):
    p = ModelParams(b=42.0, **P_EPS1)
    for fmt, name in (("json", "p.json"), ("kv", "p.cfg")):
        path = tmp_path / name
        path.write_text(dump_params(p, fmt))
        assert load_params(path) == p
    assert json.loads(dump_params(p, "json"))["lambda"] == 1.0


def test_key_value_errors_are_line_precise():
    with pytest.raises(ValueError, match="line 3"):
        parse_key_values("b = 2\n# note\nbeta = fast\n")
    with pytest.raises(ValueError, match="line 1"):
        parse_key_values("oops\n")


def test_unknown_keys_rejected():
    with pytest.raises(ValueError, match="unknown"):
        ModelParams.from_dict({**{"lambda": 1.0}, "kappa": 2.0})


def test_with_accepts_serialized_names():
    p = ModelParams(**P_EPS0, b=3.0)
    assert p.with_(**{"lambda": 0.5}).lam == 0.5
