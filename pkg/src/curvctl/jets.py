"""Truncated Taylor-jet arithmetic in one to three variables.

A :class:`Jet` stores the Taylor coefficients (partial derivatives divided by
multi-index factorials) of a smooth function at a base point, truncated at a
fixed total degree. Arithmetic and analytic composition are exact up to the
truncation order, so every derivative consumed downstream (covector solves,
vertical coefficients, nested Lie brackets) comes out at roundoff accuracy
instead of finite-difference accuracy.

Coefficients are numpy arrays of shape ``(ncoeff, *batch)``; a trailing batch
shape lets grids of evaluation points share one vectorized pipeline. Jets are
immutable values and every operation is pure.
"""

from __future__ import annotations

import math
from functools import lru_cache

import numpy as np

__all__ = [
    "Jet",
    "JetDomainError",
    "variable",
    "constant",
    "derivative",
    "antiderivative",
    "truncate",
    "extend",
    "restrict",
    "extract_partial",
    "ncoeffs",
    "sin",
    "cos",
    "tan",
    "exp",
    "log",
    "sqrt",
    "atan",
    "atan2",
    "powf",
]


class JetDomainError(ArithmeticError):
    """Composition or division outside the operation's domain."""


def ncoeffs(nvars: int, degree: int) -> int:
    return math.comb(nvars + degree, degree)


@lru_cache(maxsize=None)
def _indices(nvars: int, degree: int) -> tuple[tuple[int, ...], ...]:
    """Multi-indices of total order <= degree in graded-lexicographic order.

    Graded ordering makes truncation to a lower degree a plain prefix slice.
    """
    out = []
    for total in range(degree + 1):
        if nvars == 1:
            out.append((total,))
        elif nvars == 2:
            out.extend((i, total - i) for i in range(total, -1, -1))
        else:
            for i in range(total, -1, -1):
                out.extend((i, j, total - i - j) for j in range(total - i, -1, -1))
    return tuple(out)


@lru_cache(maxsize=None)
def _tables(nvars: int, degree: int):
    idx = _indices(nvars, degree)
    pos = {a: k for k, a in enumerate(idx)}
    n = len(idx)
    orders = np.array([sum(a) for a in idx])

    tri_i, tri_j, tri_k = [], [], []
    for i, a in enumerate(idx):
        for j, b in enumerate(idx):
            if orders[i] + orders[j] <= degree:
                c = tuple(x + y for x, y in zip(a, b))
                tri_i.append(i)
                tri_j.append(j)
                tri_k.append(pos[c])
    order = np.argsort(np.array(tri_k), kind="stable")
    tri_i = np.array(tri_i)[order]
    tri_j = np.array(tri_j)[order]
    tri_k = np.array(tri_k)[order]
    # every k occurs ((0,..,0) pairs with anything), so group g holds k == g
    starts = np.searchsorted(tri_k, np.arange(n))

    diff = []
    anti = []
    for v in range(nvars):
        src, dst, fac = [], [], []
        for i, a in enumerate(idx):
            if a[v] > 0:
                lower = list(a)
                lower[v] -= 1
                src.append(i)
                dst.append(pos[tuple(lower)])
                fac.append(float(a[v]))
        diff.append((np.array(src, dtype=int), np.array(dst, dtype=int), np.array(fac)))
        src, dst, fac = [], [], []
        for i, a in enumerate(idx):
            if orders[i] < degree:
                upper = list(a)
                upper[v] += 1
                src.append(i)
                dst.append(pos[tuple(upper)])
                fac.append(1.0 / (a[v] + 1))
        anti.append((np.array(src, dtype=int), np.array(dst, dtype=int), np.array(fac)))

    factorials = np.array([math.prod(math.factorial(k) for k in a) for a in idx], dtype=float)
    # degree boundaries for the triangular division sweep
    deg_slices = [slice(np.searchsorted(orders, g), np.searchsorted(orders, g + 1)) for g in range(degree + 1)]
    return {
        "idx": idx,
        "pos": pos,
        "n": n,
        "orders": orders,
        "mul": (tri_i, tri_j, starts),
        "diff": diff,
        "anti": anti,
        "factorials": factorials,
        "deg_slices": deg_slices,
    }


def _align(a: np.ndarray, b: np.ndarray):
    """Broadcast two coefficient arrays over their batch axes (axis 0 is fixed)."""
    if a.shape == b.shape:
        return a, b
    la, lb = a.ndim - 1, b.ndim - 1
    width = max(la, lb)
    if la < width:
        a = a.reshape(a.shape[:1] + (1,) * (width - la) + a.shape[1:])
    if lb < width:
        b = b.reshape(b.shape[:1] + (1,) * (width - lb) + b.shape[1:])
    return a, b


class Jet:
    """Truncated Taylor polynomial in ``nvars`` variables at a base point."""

    __slots__ = ("degree", "nvars", "coeffs")

    def __init__(self, degree: int, nvars: int, coeffs: np.ndarray):
        if nvars not in (1, 2, 3):
            raise ValueError("nvars must be 1, 2 or 3")
        if degree < 0:
            raise ValueError("degree must be >= 0")
        coeffs = np.asarray(coeffs, dtype=float)
        if coeffs.shape[0] != ncoeffs(nvars, degree):
            raise ValueError(
                f"expected {ncoeffs(nvars, degree)} coefficients for degree {degree}, nvars {nvars}, "
                f"got {coeffs.shape[0]}"
            )
        self.degree = degree
        self.nvars = nvars
        self.coeffs = coeffs

    # -- construction -------------------------------------------------------

    @staticmethod
    def constant(value, degree: int, nvars: int, batch: tuple = ()) -> "Jet":
        value = np.asarray(value, dtype=float)
        shape = (ncoeffs(nvars, degree),) + np.broadcast_shapes(value.shape, batch)
        c = np.zeros(shape)
        c[0] = value
        return Jet(degree, nvars, c)

    @staticmethod
    def variable(index: int, base_value, degree: int, nvars: int) -> "Jet":
        if not 0 <= index < nvars:
            raise IndexError(f"variable index {index} out of range for nvars {nvars}")
        j = Jet.constant(base_value, degree, nvars)
        if degree >= 1:
            first = tuple(1 if v == index else 0 for v in range(nvars))
            j.coeffs[_tables(nvars, degree)["pos"][first]] = 1.0
        return j

    # -- basic queries -------------------------------------------------------

    @property
    def value(self):
        """Constant term (the function value at the base point)."""
        return self.coeffs[0]

    @property
    def batch(self) -> tuple:
        return self.coeffs.shape[1:]

    def partial(self, multi_index) -> np.ndarray:
        """True partial derivative for the given multi-index."""
        multi_index = tuple(int(k) for k in multi_index)
        if len(multi_index) != self.nvars:
            raise ValueError("multi-index length must equal nvars")
        if sum(multi_index) > self.degree:
            raise ValueError(f"order {sum(multi_index)} exceeds jet degree {self.degree}")
        t = _tables(self.nvars, self.degree)
        k = t["pos"][multi_index]
        return self.coeffs[k] * t["factorials"][k]

    def as_dict(self) -> dict:
        """Scalar-batch coefficients keyed by multi-index (test helper)."""
        t = _tables(self.nvars, self.degree)
        return {a: float(self.coeffs[k]) for k, a in enumerate(t["idx"])}

    def __call__(self, offsets) -> np.ndarray:
        """Evaluate the truncated polynomial at the given offsets from base."""
        offsets = np.asarray(offsets, dtype=float)
        t = _tables(self.nvars, self.degree)
        total = np.zeros(np.broadcast_shapes(self.batch, offsets.shape[:-1] or ()))
        for k, a in enumerate(t["idx"]):
            mono = 1.0
            for v, p in enumerate(a):
                if p:
                    mono = mono * offsets[..., v] ** p
            total = total + self.coeffs[k] * mono
        return total

    def __repr__(self):
        if self.batch == ():
            items = ", ".join(f"{a}: {c:.6g}" for a, c in self.as_dict().items() if c != 0.0)
            return f"Jet(degree={self.degree}, nvars={self.nvars}, {{{items or '0'}}})"
        return f"Jet(degree={self.degree}, nvars={self.nvars}, batch={self.batch})"

    # -- arithmetic ----------------------------------------------------------

    def _promote(self, other):
        if isinstance(other, Jet):
            if (other.degree, other.nvars) != (self.degree, self.nvars):
                raise ValueError(
                    f"jet shape mismatch: degree/nvars ({other.degree},{other.nvars}) "
                    f"vs ({self.degree},{self.nvars})"
                )
            return other
        if isinstance(other, (int, float, np.floating, np.integer, np.ndarray)):
            return Jet.constant(other, self.degree, self.nvars)
        return None

    def __add__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        a, b = _align(self.coeffs, o.coeffs)
        return Jet(self.degree, self.nvars, a + b)

    __radd__ = __add__

    def __sub__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        a, b = _align(self.coeffs, o.coeffs)
        return Jet(self.degree, self.nvars, a - b)

    def __rsub__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        a, b = _align(o.coeffs, self.coeffs)
        return Jet(self.degree, self.nvars, a - b)

    def __neg__(self):
        return Jet(self.degree, self.nvars, -self.coeffs)

    def __mul__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        if not isinstance(other, Jet):
            a, b = _align(self.coeffs, np.asarray(other, dtype=float)[None])
            return Jet(self.degree, self.nvars, a * b)
        return Jet(self.degree, self.nvars, _mul_coeffs(self, o))

    def __rmul__(self, other):
        return self.__mul__(other)

    def __truediv__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        if not isinstance(other, Jet):
            a, b = _align(self.coeffs, np.asarray(other, dtype=float)[None])
            return Jet(self.degree, self.nvars, a / b)
        return _div(self, o)

    def __rtruediv__(self, other):
        o = self._promote(other)
        if o is None:
            return NotImplemented
        return _div(o, self)

    def __pow__(self, exponent):
        if isinstance(exponent, (int, np.integer)):
            return _int_pow(self, int(exponent))
        if isinstance(exponent, (float, np.floating)):
            if float(exponent).is_integer():
                return _int_pow(self, int(exponent))
            return powf(self, float(exponent))
        if isinstance(exponent, Jet):
            return exp(exponent * log(self))
        return NotImplemented


def _mul_coeffs(a: Jet, b: Jet) -> np.ndarray:
    tri_i, tri_j, starts = _tables(a.nvars, a.degree)["mul"]
    ca, cb = _align(a.coeffs, b.coeffs)
    prod = ca[tri_i] * cb[tri_j]
    return np.add.reduceat(prod, starts, axis=0)


def _div(a: Jet, b: Jet) -> Jet:
    if np.any(b.value == 0.0):
        raise JetDomainError("division by a jet with zero constant term")
    t = _tables(a.nvars, a.degree)
    ca, cb = _align(a.coeffs, b.coeffs)
    shape = np.broadcast_shapes(ca.shape, cb.shape)
    c = np.zeros(shape)
    c[0] = ca[0] / cb[0]
    q = Jet(a.degree, a.nvars, c)
    for g in range(1, a.degree + 1):
        r = ca - _mul_coeffs(Jet(a.degree, a.nvars, cb), q)
        sl = t["deg_slices"][g]
        c[sl] = c[sl] + r[sl] / cb[0]
    return q


def _int_pow(a: Jet, n: int) -> Jet:
    if n < 0:
        return _div(Jet.constant(1.0, a.degree, a.nvars), _int_pow(a, -n))
    result = Jet.constant(1.0, a.degree, a.nvars, batch=a.batch)
    base = a
    while n:
        if n & 1:
            result = result * base
        base = base * base if n > 1 else base
        n >>= 1
    return result


# -- structural operations ----------------------------------------------------


def variable(index: int, base_value, degree: int, nvars: int) -> Jet:
    return Jet.variable(index, base_value, degree, nvars)


def constant(value, degree: int, nvars: int) -> Jet:
    return Jet.constant(value, degree, nvars)


def derivative(a: Jet, var: int) -> Jet:
    """Partial derivative along one variable; degree drops by one."""
    if a.degree == 0:
        raise ValueError("cannot differentiate a degree-0 jet")
    src, dst, fac = _tables(a.nvars, a.degree)["diff"][var]
    out = np.zeros((ncoeffs(a.nvars, a.degree - 1),) + a.batch)
    moved = a.coeffs[src] * fac.reshape((-1,) + (1,) * len(a.batch))
    np.add.at(out, dst, moved)
    return Jet(a.degree - 1, a.nvars, out)


def antiderivative(a: Jet, var: int) -> Jet:
    """Antiderivative along one variable vanishing at the base point.

    Output has the same degree; source coefficients of top order are dropped
    (they would land beyond the truncation order).
    """
    src, dst, fac = _tables(a.nvars, a.degree)["anti"][var]
    out = np.zeros_like(a.coeffs)
    moved = a.coeffs[src] * fac.reshape((-1,) + (1,) * len(a.batch))
    np.add.at(out, dst, moved)
    return Jet(a.degree, a.nvars, out)


def truncate(a: Jet, degree: int) -> Jet:
    if degree > a.degree:
        raise ValueError("truncate cannot raise the degree; use extend")
    if degree == a.degree:
        return a
    return Jet(degree, a.nvars, a.coeffs[: ncoeffs(a.nvars, degree)].copy())


def extend(a: Jet, degree: int) -> Jet:
    if degree < a.degree:
        raise ValueError("extend cannot lower the degree; use truncate")
    if degree == a.degree:
        return a
    out = np.zeros((ncoeffs(a.nvars, degree),) + a.batch)
    out[: a.coeffs.shape[0]] = a.coeffs
    return Jet(degree, a.nvars, out)


def restrict(a: Jet, var: int) -> Jet:
    """Freeze one variable at its base value (drop all coefficients using it)."""
    t = _tables(a.nvars, a.degree)
    keep = np.array([idx[var] == 0 for idx in t["idx"]])
    out = a.coeffs.copy()
    out[~keep] = 0.0
    return Jet(a.degree, a.nvars, out)


def extract_partial(a: Jet, multi_index):
    return a.partial(multi_index)


# -- analytic composition ------------------------------------------------------


def _compose(series: np.ndarray, a: Jet) -> Jet:
    """Horner evaluation of sum_k series[k] * (a - a0)^k, truncated."""
    tilde = Jet(a.degree, a.nvars, a.coeffs.copy())
    tilde.coeffs[0] = 0.0
    result = Jet.constant(series[a.degree], a.degree, a.nvars, batch=a.batch)
    for k in range(a.degree - 1, -1, -1):
        result = result * tilde + series[k]
    return result


def _series_stack(terms) -> np.ndarray:
    return np.stack([np.asarray(t, dtype=float) for t in terms])


def sin(a):
    if not isinstance(a, Jet):
        return np.sin(a)
    x0 = a.value
    terms = [np.sin(x0 + k * np.pi / 2) / math.factorial(k) for k in range(a.degree + 1)]
    return _compose(_series_stack(terms), a)


def cos(a):
    if not isinstance(a, Jet):
        return np.cos(a)
    x0 = a.value
    terms = [np.cos(x0 + k * np.pi / 2) / math.factorial(k) for k in range(a.degree + 1)]
    return _compose(_series_stack(terms), a)


def tan(a):
    if not isinstance(a, Jet):
        return np.tan(a)
    c = cos(a)
    if np.any(c.value == 0.0):
        raise JetDomainError("tan at a zero of cos")
    return sin(a) / c


def exp(a):
    if not isinstance(a, Jet):
        return np.exp(a)
    e0 = np.exp(a.value)
    terms = [e0 / math.factorial(k) for k in range(a.degree + 1)]
    return _compose(_series_stack(terms), a)


def log(a):
    if not isinstance(a, Jet):
        return np.log(a)
    x0 = a.value
    if np.any(x0 <= 0.0):
        raise JetDomainError("log of a jet with non-positive constant term")
    terms = [np.log(x0)]
    for k in range(1, a.degree + 1):
        terms.append((-1.0) ** (k + 1) / (k * x0**k))
    return _compose(_series_stack(terms), a)


def sqrt(a):
    if not isinstance(a, Jet):
        return np.sqrt(a)
    x0 = a.value
    if np.any(x0 <= 0.0):
        raise JetDomainError("sqrt of a jet with non-positive constant term")
    return powf(a, 0.5)


def powf(a, r: float):
    """General real power; positive base required unless r is an integer."""
    if not isinstance(a, Jet):
        return np.power(a, r)
    if float(r).is_integer():
        return _int_pow(a, int(r))
    x0 = a.value
    if np.any(x0 <= 0.0):
        raise JetDomainError("non-integer power of a jet with non-positive constant term")
    terms = []
    coef = np.ones_like(np.asarray(x0, dtype=float))
    for k in range(a.degree + 1):
        terms.append(coef * x0 ** (r - k))
        coef = coef * (r - k) / (k + 1)
    return _compose(_series_stack(terms), a)


def atan(a):
    if not isinstance(a, Jet):
        return np.arctan(a)
    x0 = np.asarray(a.value, dtype=float)
    # Taylor series of atan about x0 from the series of 1/(1+x^2), integrated
    t = Jet.variable(0, x0, a.degree, 1) if a.degree >= 1 else Jet.constant(x0, 0, 1)
    den = 1.0 + t * t
    g = Jet.constant(1.0, a.degree, 1, batch=t.batch) / den
    terms = [np.arctan(x0)]
    for k in range(1, a.degree + 1):
        terms.append(g.coeffs[k - 1] / k)
    return _compose(_series_stack(terms), a)


def atan2(y, x):
    if not isinstance(y, Jet) and not isinstance(x, Jet):
        return np.arctan2(y, x)
    if not isinstance(y, Jet):
        y = Jet.constant(y, x.degree, x.nvars)
    if not isinstance(x, Jet):
        x = Jet.constant(x, y.degree, y.nvars)
    y0, x0 = np.asarray(y.value), np.asarray(x.value)
    if np.any((y0 == 0.0) & (x0 == 0.0)):
        raise JetDomainError("atan2 undefined at the origin")
    use_x = np.abs(x0) >= np.abs(y0)
    # doctor the unused branch's denominator so the global division is safe
    xs = x.coeffs.copy()
    xs[0] = np.where(use_x, xs[0], 1.0)
    ys = y.coeffs.copy()
    ys[0] = np.where(use_x, 1.0, ys[0])
    branch_x = atan(y / Jet(x.degree, x.nvars, xs))
    branch_x = branch_x + (np.arctan2(y0, np.where(use_x, x0, 1.0)) - branch_x.value)
    branch_y = atan(x / Jet(y.degree, y.nvars, ys)) * (-1.0)
    branch_y = branch_y + (np.arctan2(np.where(use_x, 1.0, y0), x0) - branch_y.value)
    a, b = _align(branch_x.coeffs, branch_y.coeffs)
    merged = np.where(np.asarray(use_x, dtype=bool), a, b)
    return Jet(x.degree, x.nvars, merged)
