import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from virobif.polyalg import (
    RealPolynomial,
    complex_roots,
    cubic_discriminant,
    real_root_info,
    real_roots,
    sign_changes,
    taylor_shift,
)

# multiplicity <= 3: a k-fold root is only determined to about eps**(1/k)
# distinct roots at least 0.5 apart keep each cluster well conditioned
roots_st = st.lists(
    st.tuples(st.integers(-40, 40).map(lambda k: k / 2), st.floats(0, 0.2).map(lambda r: round(r, 3)),
              st.integers(1, 3)),
    min_size=1, max_size=3, unique_by=lambda t: t[0],
).map(lambda pairs: [a + d for a, d, k in pairs for _ in range(k)]).filter(lambda rs: len(rs) <= 6)


@settings(max_examples=200, deadline=None)
@given(roots_st)
def test_real_roots_recovered_from_factored_form(rs):
    p = RealPolynomial.from_roots(rs)
    distinct = sorted(set(rs))
    got = real_roots(p)
    # a triple root of a sextic is only determined to about (eps * size)**(1/3)
    tol = 1e-6 if len(distinct) == len(rs) else 5e-3
    for r in got:
        assert min(abs(r - d) for d in distinct) < tol * max(1.0, abs(r))
    assert len(got) == len(distinct)
    if len(distinct) == len(rs):
        assert np.allclose(got, distinct, atol=1e-6)


def test_double_root_has_multiplicity_two():
    info = real_root_info(RealPolynomial.from_roots([1.0, 1.0, -2.0]))
    assert [(round(r.value, 9), r.multiplicity) for r in info] == [(-2.0, 1), (1.0, 2)]
    assert info[1].clustered


def test_complex_pair_has_no_real_root():
    p = RealPolynomial([1.0, 0.0, 1.0])  # x^2 + 1
    assert real_roots(p) == []
    zs = sorted(complex_roots(p), key=lambda z: z.imag)
    assert np.allclose(zs, [-1j, 1j])


@settings(max_examples=100, deadline=None)
@given(st.lists(st.floats(-5, 5), min_size=2, max_size=6), st.floats(-3, 3))
def test_taylor_shift_matches_evaluation(c, s):
    p = RealPolynomial(c)
    q = taylor_shift(p, s)
    for x in (-1.0, 0.0, 0.5, 2.0):
        assert q(x) == pytest.approx(p(s + x), abs=1e-8 * (1 + max(abs(a) for a in c)) * 10 ** len(c))


def test_descartes_bound():
    # (x - 1)(x - 2)(x + 3) = x^3 - 7x + 6
    assert sign_changes([6.0, -7.0, 0.0, 1.0]) == 2


def test_cubic_discriminant_sign():
    assert cubic_discriminant(RealPolynomial.from_roots([1, 2, 3])) > 0
    assert cubic_discriminant(RealPolynomial([1.0, 0.0, 0.0, 1.0])) < 0
    assert cubic_discriminant(RealPolynomial.from_roots([1, 1, 3])) == pytest.approx(0.0, abs=1e-9)
    with pytest.raises(ValueError):
        cubic_discriminant([1.0, 2.0])


def test_interval_filter():
    p = RealPolynomial.from_roots([-1.0, 0.5, 4.0])
    assert np.allclose(real_roots(p, (0.0, 5.0)), [0.5, 4.0])


def test_zero_polynomial_rejected():
    with pytest.raises(ValueError):
        real_roots(RealPolynomial([0.0, 0.0]))
