import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from curvctl import exprs, jets
from curvctl.exprs import Bin, Call, Num, Param, Var, parse, to_source


def test_parse_structure():
    e = parse("cos(u)*q2 + 1")
    assert e == Bin("+", Bin("*", Call("cos", (Var("u"),)), Var("q2")), Num(1.0))


def test_parse_parameters():
    e = parse("a*q1 + b*q2")
    assert exprs.parameters(e) == {"a", "b"}
    assert exprs.variables(e) == {"q1", "q2"}


def test_parse_error_position():
    with pytest.raises(exprs.ParseError) as err:
        parse("1 +")
    assert err.value.pos == 3


def test_reject_non_smooth():
    with pytest.raises(exprs.ParseError, match="not smooth"):
        parse("abs(q1)")
    with pytest.raises(exprs.ParseError):
        parse("min(q1, q2)")


def test_unknown_function_rejected():
    with pytest.raises(exprs.ParseError, match="unknown function"):
        parse("sinh(q1)")


def test_arity_error():
    with pytest.raises(exprs.ParseError, match="argument"):
        parse("atan2(q1)")


def test_precedence():
    assert parse("2+ 3*4^2") == Bin(
        "+", Num(2.0), Bin("*", Num(3.0), Bin("^", Num(4.0), Num(2.0)))
    )
    # unary minus binds looser than ^
    assert parse("-q1^2") == exprs.Neg(Bin("^", Var("q1"), Num(2.0)))
    # ^ is right-associative
    assert parse("2^3^2") == Bin("^", Num(2.0), Bin("^", Num(3.0), Num(2.0)))
    # left associativity
    assert parse("8/4/2") == Bin("/", Bin("/", Num(8.0), Num(4.0)), Num(2.0))


def test_eval_scalar():
    assert exprs.evaluate(parse("q1^2 + u"), {"q1": 3.0, "u": 1.0}) == pytest.approx(10.0)


def test_eval_unbound():
    with pytest.raises(exprs.EvalError, match="unbound"):
        exprs.evaluate(parse("a*q1"), {"q1": 1.0})


def test_eval_jet_sin_at_pi_half():
    u = jets.variable(0, math.pi / 2, 2, 1)
    out = exprs.evaluate(parse("sin(u)"), {"u": u})
    assert np.allclose(list(out.as_dict().values()), [1.0, 0.0, -0.5], atol=1e-15)


def test_jet_partials_vs_finite_differences():
    e = parse("exp(q1*q2)")
    q1v, q2v = 0.3, 0.7
    q1 = jets.variable(0, q1v, 3, 2)
    q2 = jets.variable(1, q2v, 3, 2)
    out = exprs.evaluate(e, {"q1": q1, "q2": q2})

    def f(a, b):
        return math.exp(a * b)

    h = 1e-6
    d1 = (f(q1v + h, q2v) - f(q1v - h, q2v)) / (2 * h)
    d2 = (f(q1v, q2v + h) - f(q1v, q2v - h)) / (2 * h)
    assert out.partial((1, 0)) == pytest.approx(d1, abs=1e-8)
    assert out.partial((0, 1)) == pytest.approx(d2, abs=1e-8)


def test_degree_zero_jet_equals_scalar():
    e = parse("sin(q1) + q2^3/(1 + u^2)")
    env_s = {"q1": 0.4, "q2": -1.1, "u": 0.9}
    env_j = {k: jets.constant(v, 0, 3) for k, v in env_s.items()}
    assert exprs.evaluate(e, env_j).value == pytest.approx(exprs.evaluate(e, env_s))


def test_polynomial_partials_exact():
    # fixed cubic with hand-computed partials
    e = parse("q1^3*q2 - 2*q1*q2^2 + u*q1")
    q1v, q2v, uv = 1.2, -0.5, 0.8
    env = {
        "q1": jets.variable(0, q1v, 3, 3),
        "q2": jets.variable(1, q2v, 3, 3),
        "u": jets.variable(2, uv, 3, 3),
    }
    out = exprs.evaluate(e, env)
    assert out.partial((1, 0, 0)) == pytest.approx(3 * q1v**2 * q2v - 2 * q2v**2 + uv, abs=1e-12)
    assert out.partial((0, 1, 0)) == pytest.approx(q1v**3 - 4 * q1v * q2v, abs=1e-12)
    assert out.partial((1, 1, 0)) == pytest.approx(3 * q1v**2 - 4 * q2v, abs=1e-12)
    assert out.partial((0, 0, 1)) == pytest.approx(q1v, abs=1e-12)


_leaf = st.one_of(
    st.floats(0.0, 4.0).map(lambda v: Num(round(v, 3))),
    st.sampled_from([Var("q1"), Var("q2"), Var("u"), Param("a"), Param("w0")]),
)


def _exprs_strategy():
    return st.recursive(
        _leaf,
        lambda children: st.one_of(
            st.tuples(st.sampled_from("+-*/^"), children, children).map(lambda t: Bin(*t)),
            # the parser folds negated literals, so canonical ASTs never hold Neg(Num)
            children.filter(lambda c: not isinstance(c, Num)).map(exprs.Neg),
            st.tuples(st.sampled_from(["sin", "cos", "exp", "atan"]), children).map(
                lambda t: Call(t[0], (t[1],))
            ),
        ),
        max_leaves=12,
    )


@settings(max_examples=80, deadline=None)
@given(_exprs_strategy())
def test_print_parse_roundtrip(e):
    assert parse(to_source(e)) == e


def test_symbolic_derivative_matches_jets():
    e = parse("sin(q1*u) + q2^2/(2 + cos(u))")
    for var, slot in (("q1", 0), ("q2", 1), ("u", 2)):
        de = exprs.derivative(e, var)
        env_j = {
            "q1": jets.variable(0, 0.3, 2, 3),
            "q2": jets.variable(1, -0.4, 2, 3),
            "u": jets.variable(2, 1.1, 2, 3),
        }
        jet_val = exprs.evaluate(e, env_j).partial(tuple(1 if i == slot else 0 for i in range(3)))
        sym_val = exprs.evaluate(de, {"q1": 0.3, "q2": -0.4, "u": 1.1})
        assert jet_val == pytest.approx(sym_val, abs=1e-12)


def test_substitute():
    e = parse("q1 + sin(u)")
    out = exprs.substitute(e, {"q1": parse("q1 + 0.2*q2"), "u": parse("u + 0.3*sin(u)")})
    got = exprs.evaluate(out, {"q1": 1.0, "q2": 2.0, "u": 0.5})
    want = (1.0 + 0.2 * 2.0) + math.sin(0.5 + 0.3 * math.sin(0.5))
    assert got == pytest.approx(want)


def test_bind_params():
    e = exprs.bind_params(parse("a*q1 + b"), {"a": 2.0, "b": -1.0})
    assert exprs.parameters(e) == set()
    assert exprs.evaluate(e, {"q1": 3.0}) == pytest.approx(5.0)


def test_integer_power_negative_base_ok():
    assert exprs.evaluate(parse("q1^3"), {"q1": -2.0}) == pytest.approx(-8.0)


def test_fractional_power_needs_positive_base():
    with pytest.raises(exprs.EvalError):
        exprs.evaluate(parse("q1^0.5"), {"q1": -2.0})
