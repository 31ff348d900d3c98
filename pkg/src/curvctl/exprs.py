"""Small smooth expression language over q1, q2, u and named parameters.

Dynamics and cost integrands are written as text ("cos(u)*q2 + 1"), parsed
once into an immutable AST, and evaluated over plain floats or over
:class:`~curvctl.jets.Jet` values; jet evaluation yields every partial
derivative of the expression at the base point in one pass.

Only infinitely differentiable primitives are accepted. abs, min, max and
friends are rejected at parse time because everything downstream (covector
solves, curvature, conjugate-point theory) assumes smoothness.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from . import jets
from .jets import Jet

__all__ = [
    "Expr",
    "Num",
    "Var",
    "Param",
    "Neg",
    "Bin",
    "Call",
    "ParseError",
    "EvalError",
    "parse",
    "to_source",
    "evaluate",
    "derivative",
    "substitute",
    "bind_params",
    "parameters",
    "variables",
]

VARIABLES = ("q1", "q2", "u")
FUNCTIONS = {"sin": 1, "cos": 1, "tan": 1, "exp": 1, "log": 1, "sqrt": 1, "atan": 1, "atan2": 2}
NON_SMOOTH = {"abs", "min", "max", "sign", "floor", "ceil", "mod", "heaviside", "step"}


class ParseError(ValueError):
    def __init__(self, message: str, pos: int):
        super().__init__(f"{message} at offset {pos}")
        self.pos = pos


class EvalError(ValueError):
    pass


class Expr:
    __slots__ = ()


@dataclass(frozen=True, slots=True)
class Num(Expr):
    value: float


@dataclass(frozen=True, slots=True)
class Var(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Param(Expr):
    name: str


@dataclass(frozen=True, slots=True)
class Neg(Expr):
    arg: Expr


@dataclass(frozen=True, slots=True)
class Bin(Expr):
    op: str  # one of + - * / ^
    left: Expr
    right: Expr


@dataclass(frozen=True, slots=True)
class Call(Expr):
    fn: str
    args: tuple


_TOKEN = re.compile(
    r"\s*(?:(?P<num>(?:\d+\.?\d*|\.\d+)(?:[eE][+-]?\d+)?)"
    r"|(?P<ident>[A-Za-z_][A-Za-z_0-9]*)"
    r"|(?P<sym>[-+*/^(),]))"
)


def _tokenize(source: str):
    tokens = []
    pos = 0
    while pos < len(source):
        m = _TOKEN.match(source, pos)
        if m is None or m.lastgroup is None:
            stripped = source[pos:].lstrip()
            if not stripped:
                break
            raise ParseError(f"unexpected character {stripped[0]!r}", len(source) - len(stripped))
        kind = m.lastgroup
        tokens.append((kind, m.group(kind), m.start(kind)))
        pos = m.end()
    tokens.append(("end", "", len(source)))
    return tokens


class _Parser:
    def __init__(self, source: str):
        self.tokens = _tokenize(source)
        self.i = 0

    def peek(self):
        return self.tokens[self.i]

    def next(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def expect_sym(self, sym: str):
        kind, text, pos = self.peek()
        if kind != "sym" or text != sym:
            raise ParseError(f"expected {sym!r}", pos)
        return self.next()

    def parse(self) -> Expr:
        e = self.expr()
        kind, text, pos = self.peek()
        if kind != "end":
            raise ParseError(f"unexpected token {text!r}", pos)
        return e

    def expr(self) -> Expr:
        left = self.term()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "+-":
                self.next()
                left = Bin(text, left, self.term())
            else:
                return left

    def term(self) -> Expr:
        left = self.unary()
        while True:
            kind, text, _ = self.peek()
            if kind == "sym" and text in "*/":
                self.next()
                left = Bin(text, left, self.unary())
            else:
                return left

    def unary(self) -> Expr:
        kind, text, _ = self.peek()
        if kind == "sym" and text == "-":
            self.next()
            inner = self.unary()
            # fold literal negation so machine-built negative constants round-trip
            if isinstance(inner, Num):
                return Num(-inner.value)
            return Neg(inner)
        return self.power()

    def power(self) -> Expr:
        base = self.atom()
        kind, text, _ = self.peek()
        if kind == "sym" and text == "^":
            self.next()
            return Bin("^", base, self.unary())
        return base

    def atom(self) -> Expr:
        kind, text, pos = self.next()
        if kind == "num":
            return Num(float(text))
        if kind == "ident":
            nk, nt, _ = self.peek()
            if nk == "sym" and nt == "(":
                if text in NON_SMOOTH:
                    raise ParseError(f"function {text!r} is not smooth and is rejected", pos)
                if text not in FUNCTIONS:
                    raise ParseError(f"unknown function {text!r}", pos)
                self.next()
                args = [self.expr()]
                while True:
                    k2, t2, p2 = self.peek()
                    if k2 == "sym" and t2 == ",":
                        self.next()
                        args.append(self.expr())
                    elif k2 == "sym" and t2 == ")":
                        self.next()
                        break
                    else:
                        raise ParseError("expected ',' or ')'", p2)
                if len(args) != FUNCTIONS[text]:
                    raise ParseError(
                        f"function {text!r} takes {FUNCTIONS[text]} argument(s), got {len(args)}", pos
                    )
                return Call(text, tuple(args))
            if text in VARIABLES:
                return Var(text)
            if text in NON_SMOOTH:
                raise ParseError(f"identifier {text!r} names a non-smooth primitive", pos)
            return Param(text)
        if kind == "sym" and text == "(":
            e = self.expr()
            self.expect_sym(")")
            return e
        raise ParseError(f"unexpected token {text!r}" if text else "unexpected end of input", pos)


def parse(source: str) -> Expr:
    """Parse an expression; unknown bare identifiers become named parameters."""
    return _Parser(source).parse()


_PRECEDENCE = {"+": 1, "-": 1, "*": 2, "/": 2, "neg": 3, "^": 4}


def _prec(e: Expr) -> int:
    if isinstance(e, Bin):
        return _PRECEDENCE[e.op]
    if isinstance(e, Neg):
        return _PRECEDENCE["neg"]
    return 9


def to_source(e: Expr) -> str:
    """Render an AST; parse(to_source(e)) reproduces e."""
    if isinstance(e, Num):
        return repr(e.value)
    if isinstance(e, (Var, Param)):
        return e.name
    if isinstance(e, Neg):
        inner = to_source(e.arg)
        if _prec(e.arg) <= _PRECEDENCE["neg"]:
            inner = f"({inner})"
        return f"-{inner}"
    if isinstance(e, Bin):
        lhs, rhs = to_source(e.left), to_source(e.right)
        p = _PRECEDENCE[e.op]
        if _prec(e.left) < p or (e.op == "^" and _prec(e.left) <= p):
            lhs = f"({lhs})"
        # left-associative ops need parens around an equal-precedence right child
        if _prec(e.right) < p or (e.op in "+-*/" and _prec(e.right) == p):
            rhs = f"({rhs})"
        return f"{lhs} {e.op} {rhs}" if e.op in "+-" else f"{lhs}{e.op}{rhs}"
    if isinstance(e, Call):
        return f"{e.fn}({', '.join(to_source(a) for a in e.args)})"
    raise TypeError(f"not an expression: {e!r}")


_JET_FUNCS = {
    "sin": jets.sin,
    "cos": jets.cos,
    "tan": jets.tan,
    "exp": jets.exp,
    "log": jets.log,
    "sqrt": jets.sqrt,
    "atan": jets.atan,
    "atan2": jets.atan2,
}

_MATH_FUNCS = {
    "sin": math.sin,
    "cos": math.cos,
    "tan": math.tan,
    "exp": math.exp,
    "log": math.log,
    "sqrt": math.sqrt,
    "atan": math.atan,
    "atan2": math.atan2,
}


def _pow(a, b):
    if isinstance(b, Jet):
        return a**b if isinstance(a, Jet) else jets.exp(b * jets.log(jets.constant(a, b.degree, b.nvars)))
    bf = float(b)
    if bf.is_integer():
        return a ** int(bf)
    if isinstance(a, Jet):
        return jets.powf(a, bf)
    if a <= 0:
        raise EvalError(f"non-integer power of non-positive base {a}")
    return a**bf


def evaluate(e: Expr, env: dict):
    """Evaluate over the scalar ring of the bindings (floats or Jets)."""
    if isinstance(e, Num):
        return e.value
    if isinstance(e, (Var, Param)):
        try:
            return env[e.name]
        except KeyError:
            raise EvalError(f"unbound identifier {e.name!r}") from None
    if isinstance(e, Neg):
        return -evaluate(e.arg, env)
    if isinstance(e, Bin):
        a = evaluate(e.left, env)
        b = evaluate(e.right, env)
        if e.op == "+":
            return a + b
        if e.op == "-":
            return a - b
        if e.op == "*":
            return a * b
        if e.op == "/":
            return a / b
        return _pow(a, b)
    if isinstance(e, Call):
        args = [evaluate(a, env) for a in e.args]
        if any(isinstance(a, Jet) for a in args):
            return _JET_FUNCS[e.fn](*args)
        try:
            return _MATH_FUNCS[e.fn](*args)
        except ValueError as err:
            raise EvalError(f"{e.fn}: {err}") from None
    raise TypeError(f"not an expression: {e!r}")


# -- symbolic helpers ----------------------------------------------------------
#
# Light constant folding only: keeps derivative/substitution output compact
# without attempting real simplification.


def _num(e):
    return e.value if isinstance(e, Num) else None


def _add(a, b):
    if _num(a) == 0.0:
        return b
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value + b.value)
    return Bin("+", a, b)


def _sub(a, b):
    if _num(b) == 0.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value - b.value)
    if _num(a) == 0.0:
        return Neg(b)
    return Bin("-", a, b)


def _mul(a, b):
    if _num(a) == 0.0 or _num(b) == 0.0:
        return Num(0.0)
    if _num(a) == 1.0:
        return b
    if _num(b) == 1.0:
        return a
    if isinstance(a, Num) and isinstance(b, Num):
        return Num(a.value * b.value)
    return Bin("*", a, b)


def _div(a, b):
    if _num(a) == 0.0:
        return Num(0.0)
    if _num(b) == 1.0:
        return a
    return Bin("/", a, b)


def _powe(a, b):
    if _num(b) == 1.0:
        return a
    if _num(b) == 0.0:
        return Num(1.0)
    return Bin("^", a, b)


def derivative(e: Expr, var: str) -> Expr:
    """Symbolic partial derivative with respect to a variable or parameter."""
    if isinstance(e, Num) or isinstance(e, (Var, Param)) and e.name != var:
        return Num(0.0)
    if isinstance(e, (Var, Param)):
        return Num(1.0)
    if isinstance(e, Neg):
        return _sub(Num(0.0), derivative(e.arg, var))
    if isinstance(e, Bin):
        da, db = derivative(e.left, var), derivative(e.right, var)
        a, b = e.left, e.right
        if e.op == "+":
            return _add(da, db)
        if e.op == "-":
            return _sub(da, db)
        if e.op == "*":
            return _add(_mul(da, b), _mul(a, db))
        if e.op == "/":
            return _div(_sub(_mul(da, b), _mul(a, db)), _powe(b, Num(2.0)))
        # power rule; general form needs log of the base
        if isinstance(b, Num) and float(b.value).is_integer():
            return _mul(_mul(b, _powe(a, Num(b.value - 1))), da)
        return _mul(e, _add(_mul(db, Call("log", (a,))), _div(_mul(b, da), a)))
    if isinstance(e, Call):
        (x, *rest) = e.args
        dx = derivative(x, var)
        if e.fn == "sin":
            return _mul(Call("cos", (x,)), dx)
        if e.fn == "cos":
            return _sub(Num(0.0), _mul(Call("sin", (x,)), dx))
        if e.fn == "tan":
            return _mul(_add(Num(1.0), _powe(Call("tan", (x,)), Num(2.0))), dx)
        if e.fn == "exp":
            return _mul(e, dx)
        if e.fn == "log":
            return _div(dx, x)
        if e.fn == "sqrt":
            return _div(dx, _mul(Num(2.0), e))
        if e.fn == "atan":
            return _div(dx, _add(Num(1.0), _powe(x, Num(2.0))))
        if e.fn == "atan2":
            y, xx = e.args
            dy, dxx = derivative(y, var), derivative(xx, var)
            den = _add(_powe(xx, Num(2.0)), _powe(y, Num(2.0)))
            return _div(_sub(_mul(dy, xx), _mul(dxx, y)), den)
    raise TypeError(f"not an expression: {e!r}")


def substitute(e: Expr, mapping: dict) -> Expr:
    """Replace variables/parameters (by name) with expressions."""
    if isinstance(e, Num):
        return e
    if isinstance(e, (Var, Param)):
        return mapping.get(e.name, e)
    if isinstance(e, Neg):
        return Neg(substitute(e.arg, mapping))
    if isinstance(e, Bin):
        return Bin(e.op, substitute(e.left, mapping), substitute(e.right, mapping))
    if isinstance(e, Call):
        return Call(e.fn, tuple(substitute(a, mapping) for a in e.args))
    raise TypeError(f"not an expression: {e!r}")


def bind_params(e: Expr, values: dict) -> Expr:
    """Substitute numeric parameter values so evaluation binds only q1, q2, u."""
    return substitute(e, {name: Num(float(v)) for name, v in values.items()})


def parameters(e: Expr) -> set:
    if isinstance(e, Param):
        return {e.name}
    if isinstance(e, Neg):
        return parameters(e.arg)
    if isinstance(e, Bin):
        return parameters(e.left) | parameters(e.right)
    if isinstance(e, Call):
        out = set()
        for a in e.args:
            out |= parameters(a)
        return out
    return set()


def variables(e: Expr) -> set:
    if isinstance(e, Var):
        return {e.name}
    if isinstance(e, Neg):
        return variables(e.arg)
    if isinstance(e, Bin):
        return variables(e.left) | variables(e.right)
    if isinstance(e, Call):
        out = set()
        for a in e.args:
            out |= variables(a)
        return out
    return set()
