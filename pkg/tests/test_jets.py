import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvctl import jets
from curvctl.jets import Jet


def test_variable_basic():
    j = jets.variable(0, 2.0, 2, 1)
    assert j.as_dict() == {(0,): 2.0, (1,): 1.0, (2,): 0.0}


def test_variable_square():
    j = jets.variable(0, 3.0, 2, 1)
    assert (j * j).as_dict() == {(0,): 9.0, (1,): 6.0, (2,): 1.0}


def test_variable_third_slot():
    j = jets.variable(2, 0.5, 1, 3)
    d = j.as_dict()
    assert d[(0, 0, 0)] == 0.5
    assert d[(0, 0, 1)] == 1.0
    assert d[(1, 0, 0)] == 0.0 and d[(0, 1, 0)] == 0.0


def test_variable_index_out_of_range():
    with pytest.raises(IndexError):
        jets.variable(2, 0.0, 2, 2)


def test_polynomial_identity():
    x = jets.variable(0, 0.0, 2, 1)
    p = (1.0 + x) * (1.0 - x)
    assert np.allclose(list(p.as_dict().values()), [1.0, 0.0, -1.0])


def test_geometric_series():
    x = jets.variable(0, 0.0, 3, 1)
    r = 1.0 / (1.0 - x)
    assert np.allclose(list(r.as_dict().values()), [1.0, 1.0, 1.0, 1.0])


def test_division_by_zero_constant_term():
    x = jets.variable(0, 0.0, 3, 1)
    with pytest.raises(jets.JetDomainError):
        1.0 / x


@settings(max_examples=50, deadline=None)
@given(st.integers(0, 5), st.data())
def test_mul_div_roundtrip(seed, data):
    degree, nvars = 4, 2
    n = jets.ncoeffs(nvars, degree)
    rng = np.random.default_rng(seed)
    a = Jet(degree, nvars, rng.uniform(-1, 1, n))
    bc = rng.uniform(-1, 1, n)
    bc[0] = data.draw(st.sampled_from([-1.5, -0.5, 0.5, 1.5]))
    b = Jet(degree, nvars, bc)
    back = (a * b) / b
    assert np.max(np.abs(back.coeffs - a.coeffs)) < 1e-14


def test_sin_maclaurin():
    x = jets.variable(0, 0.0, 5, 1)
    s = jets.sin(x)
    expect = [0.0, 1.0, 0.0, -1 / 6, 0.0, 1 / 120]
    assert np.allclose(list(s.as_dict().values()), expect, atol=1e-15)


def test_sqrt_binomial():
    x = jets.variable(0, 0.0, 2, 1)
    r = jets.sqrt(1.0 + x)
    assert np.allclose(list(r.as_dict().values()), [1.0, 0.5, -0.125])


def test_sqrt_domain():
    x = jets.variable(0, -1.0, 2, 1)
    with pytest.raises(jets.JetDomainError):
        jets.sqrt(x)


@settings(max_examples=40, deadline=None)
@given(st.floats(-3.0, 3.0))
def test_trig_identity(base):
    x = jets.variable(0, base, 6, 1)
    one = jets.cos(x) * jets.cos(x) + jets.sin(x) * jets.sin(x)
    expect = np.zeros(7)
    expect[0] = 1.0
    assert np.max(np.abs(one.coeffs - expect)) < 1e-14


def test_extract_partial_cubic():
    x = jets.variable(0, 0.0, 3, 1)
    cube = x * x * x
    assert jets.extract_partial(cube, (3,)) == pytest.approx(6.0)


def test_extract_partial_exp():
    x = jets.variable(0, 0.0, 6, 1)
    e = jets.exp(x)
    for k in range(7):
        assert e.partial((k,)) == pytest.approx(1.0)


def test_extract_partial_mixed():
    x = jets.variable(0, 0.0, 2, 2)
    y = jets.variable(1, 0.0, 2, 2)
    assert (x * y).partial((1, 1)) == pytest.approx(1.0)


def test_extract_partial_order_too_high():
    x = jets.variable(0, 0.0, 2, 1)
    with pytest.raises(ValueError):
        x.partial((3,))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10))
def test_leibniz_rule(seed):
    degree, nvars = 5, 3
    n = jets.ncoeffs(nvars, degree)
    rng = np.random.default_rng(seed)
    a = Jet(degree, nvars, rng.uniform(-1, 1, n))
    b = Jet(degree, nvars, rng.uniform(-1, 1, n))
    for var in range(nvars):
        lhs = jets.derivative(a * b, var)
        rhs = jets.derivative(a, var) * jets.truncate(b, degree - 1) + jets.truncate(
            a, degree - 1
        ) * jets.derivative(b, var)
        assert np.max(np.abs(lhs.coeffs - rhs.coeffs)) < 1e-13


def test_composition_vs_finite_differences():
    # exp(p(x)) with p a fixed cubic; first and second derivative checked
    coeffs = [0.2, 0.7, -0.3, 0.15]

    def p(x):
        return coeffs[0] + coeffs[1] * x + coeffs[2] * x**2 + coeffs[3] * x**3

    x0 = 0.4
    x = jets.variable(0, x0, 4, 1)
    f = jets.exp(p(x))
    h = 1e-4

    def fe(x):
        return math.exp(p(x))

    d1 = (fe(x0 + h) - fe(x0 - h)) / (2 * h)
    d2 = (fe(x0 + h) - 2 * fe(x0) + fe(x0 - h)) / h**2
    assert f.partial((1,)) == pytest.approx(d1, abs=1e-6)
    assert f.partial((2,)) == pytest.approx(d2, abs=1e-4)


def test_truncation_closure():
    x = jets.variable(0, 0.3, 4, 2)
    y = jets.variable(1, -0.2, 4, 2)
    for r in (x + y, x * y, x / (1 + y), jets.sin(x), jets.atan(y)):
        assert r.degree == 4 and r.nvars == 2


def test_mixed_shape_rejected():
    a = jets.variable(0, 0.0, 3, 1)
    b = jets.variable(0, 0.0, 4, 1)
    with pytest.raises(ValueError):
        a + b


def test_degree_zero_matches_scalar():
    x = jets.constant(0.7, 0, 2)
    y = jets.constant(-1.2, 0, 2)
    out = jets.exp(x * y + 2.0 / (1.0 + x * x))
    assert out.value == pytest.approx(math.exp(0.7 * -1.2 + 2.0 / 1.49))


def test_log_exp_inverse():
    x = jets.variable(0, 0.5, 6, 1)
    back = jets.log(jets.exp(x))
    assert np.max(np.abs(back.coeffs - x.coeffs)) < 1e-13


def test_atan_derivatives():
    x0 = 0.8
    x = jets.variable(0, x0, 4, 1)
    f = jets.atan(x)
    assert f.value == pytest.approx(math.atan(x0))
    assert f.partial((1,)) == pytest.approx(1 / (1 + x0**2))
    assert f.partial((2,)) == pytest.approx(-2 * x0 / (1 + x0**2) ** 2)


def test_atan2_matches_atan_and_shifts():
    for (y0, x0) in [(0.3, 1.2), (1.4, 0.1), (-0.7, -0.9), (0.5, -1.3)]:
        y = jets.variable(0, y0, 3, 2)
        x = jets.variable(1, x0, 3, 2)
        f = jets.atan2(y, x)
        assert f.value == pytest.approx(math.atan2(y0, x0))
        h = 1e-5
        dy = (math.atan2(y0 + h, x0) - math.atan2(y0 - h, x0)) / (2 * h)
        dx = (math.atan2(y0, x0 + h) - math.atan2(y0, x0 - h)) / (2 * h)
        assert f.partial((1, 0)) == pytest.approx(dy, abs=1e-8)
        assert f.partial((0, 1)) == pytest.approx(dx, abs=1e-8)


def test_integer_pow_negative_base():
    x = jets.variable(0, -2.0, 3, 1)
    f = x**3
    assert f.value == pytest.approx(-8.0)
    assert f.partial((1,)) == pytest.approx(12.0)


def test_powf_fractional():
    x = jets.variable(0, 4.0, 3, 1)
    f = jets.powf(x, 1.5)
    assert f.value == pytest.approx(8.0)
    assert f.partial((1,)) == pytest.approx(1.5 * 2.0)


def test_antiderivative_inverts_derivative():
    rng = np.random.default_rng(3)
    a = Jet(5, 3, rng.uniform(-1, 1, jets.ncoeffs(3, 5)))
    for var in range(3):
        anti = jets.antiderivative(jets.extend(jets.derivative(a, var), 5), var)
        # matches a with the base-slice (coefficients independent of var) removed
        diff = a.coeffs - anti.coeffs
        t = jets._tables(3, 5)
        for k, idx in enumerate(t["idx"]):
            if idx[var] == 0:
                continue
            if sum(idx) == 5:
                continue  # top order dropped by the round trip through degree 4
            assert abs(diff[k]) < 1e-14


def test_batch_matches_scalar():
    rng = np.random.default_rng(7)
    bases = rng.uniform(-1, 1, 8)
    xb = jets.variable(0, bases, 4, 2)
    yb = jets.variable(1, bases[::-1].copy(), 4, 2)
    fb = jets.sin(xb * yb) / (2.0 + jets.cos(xb))
    for i in range(8):
        x = jets.variable(0, bases[i], 4, 2)
        y = jets.variable(1, bases[7 - i], 4, 2)
        f = jets.sin(x * y) / (2.0 + jets.cos(x))
        assert np.max(np.abs(fb.coeffs[:, i] - f.coeffs)) < 1e-14


def test_restrict_freezes_variable():
    x = jets.variable(0, 0.5, 3, 2)
    y = jets.variable(1, 2.0, 3, 2)
    f = jets.restrict(x * y + y * y, 0)
    # value and y-derivatives survive, x-derivatives vanish
    assert f.value == pytest.approx(0.5 * 2.0 + 4.0)
    assert f.partial((1, 0)) == 0.0
    assert f.partial((0, 1)) == pytest.approx(0.5 + 4.0)
