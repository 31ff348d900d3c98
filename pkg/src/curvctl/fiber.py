"""Fiberwise construction of the constrained level surface of the Hamiltonian.

For a regular problem, each (q, u) determines a unique covector lambda through
the level-set and stationarity conditions, so (q1, q2, u) is a global chart on
the level surface. Everything here is computed in that chart with jet
arithmetic: the linear covector solve performed over jets yields every
u- and q-derivative of lambda for free, from which follow

  * the vertical coefficients A, B of s_uu = A s + B s_u on the fiber,
  * the natural-parameter density theta' = sqrt(-A) and the vertical field,
  * the invariant b (coefficient in s_thth = -s + b s_th),
  * the control drift udot closing the Hamiltonian field (f1, f2, udot),
  * the function c of the theta-chart, via quadrature of the fiber density.

``FiberTower`` carries the whole jet pipeline for a batch of points; the
public operations are thin views onto it.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import jets
from .jets import Jet
from .system import ConsistencyError, ControlProblem, REG_BAND, RegularityError

__all__ = [
    "FiberTower",
    "FiberPoint",
    "FrameFields",
    "build_tower",
    "fiber_point",
    "solve_covector",
    "vertical_coefficients",
    "natural_density",
    "invariant_b",
    "control_derivative",
    "frame_fields",
    "function_c",
    "theta_chart",
    "ThetaChart",
]

MIN_TOWER_DEGREE = 4
UDOT_RESIDUAL_TOL = 1e-8


def _doctor(jet: Jet, bad: np.ndarray, value: float = 1.0) -> Jet:
    """Overwrite the constant term at flagged points so division stays finite."""
    if not np.any(bad):
        return jet
    c = jet.coeffs.copy()
    c[0] = np.where(bad, value, c[0])
    return Jet(jet.degree, jet.nvars, c)


def _t(jet: Jet, degree: int) -> Jet:
    return jets.truncate(jet, degree)


class FiberTower:
    """Jet pipeline for a batch of chart points (q1, q2, u).

    Degrees decay along the pipeline: with input degree d the covector is a
    jet of degree d-1, the vertical coefficients d-3, udot d-2 and b d-4.
    """

    __slots__ = (
        "problem", "degree", "shape", "q1", "q2", "u",
        "f1", "f2", "phi", "lam1", "lam2",
        "A", "B", "theta_prime", "v3", "b", "udot",
        "valid", "failures", "drift", "udot_residual",
    )

    def scalar(self) -> bool:
        return self.shape == ()

    def _finalize(self, arr: np.ndarray):
        out = np.where(self.valid, arr, np.nan).reshape(self.shape)
        return float(out) if self.scalar() else out

    # value views (NaN at invalid points)
    @property
    def kappa_inputs_ok(self):
        return self.valid.reshape(self.shape)

    def values(self, name: str):
        return self._finalize(getattr(self, name).value)


def build_tower(
    problem: ControlProblem,
    q1,
    q2,
    u,
    degree: int = 6,
    keep_going: bool = False,
) -> FiberTower:
    if degree < MIN_TOWER_DEGREE:
        raise ValueError(f"tower degree must be >= {MIN_TOWER_DEGREE}")
    q1a, q2a, ua = np.broadcast_arrays(
        np.asarray(q1, dtype=float), np.asarray(q2, dtype=float), np.asarray(u, dtype=float)
    )
    shape = q1a.shape
    q1f, q2f, uf = q1a.ravel(), q2a.ravel(), ua.ravel()

    tw = FiberTower.__new__(FiberTower)
    tw.problem = problem
    tw.degree = degree
    tw.shape = shape
    tw.q1, tw.q2, tw.u = q1f, q2f, uf
    tw.valid = np.ones(q1f.shape, dtype=bool)
    tw.failures = []

    def flag(bad, message):
        bad = bad & tw.valid
        if np.any(bad):
            for i in np.nonzero(bad)[0][:8]:
                tw.failures.append((int(i), message))
            tw.valid &= ~bad

    d = degree
    Q1 = jets.variable(0, q1f, d, 3)
    Q2 = jets.variable(1, q2f, d, 3)
    U = jets.variable(2, uf, d, 3)
    f1, f2 = problem.dynamics(Q1, Q2, U)
    phi = problem.cost(Q1, Q2, U)
    batch = q1f.shape
    f1 = f1 if isinstance(f1, Jet) else Jet.constant(f1, d, 3, batch)
    f2 = f2 if isinstance(f2, Jet) else Jet.constant(f2, d, 3, batch)
    phi = phi if isinstance(phi, Jet) else Jet.constant(phi, d, 3, batch)
    tw.f1, tw.f2, tw.phi = f1, f2, phi

    # covector from level set + stationarity (2x2 solve in jet arithmetic)
    k = d - 1
    f1u, f2u = jets.derivative(f1, 2), jets.derivative(f2, 2)
    F1, F2, PHI = _t(f1, k), _t(f2, k), _t(phi, k)
    det = F1 * f2u - F2 * f1u

    det1v = det.value
    fv = np.hypot(f1.value, f2.value)
    fuv = np.hypot(f1u.value, f2u.value)
    flag(np.abs(det1v) <= REG_BAND * (fv * fuv + 1.0), "f and f_u collinear")
    fuu1 = f1.partial((0, 0, 2))
    fuu2 = f2.partial((0, 0, 2))
    det2v = f1u.value * fuu2 - f2u.value * fuu1
    flag(
        det2v <= REG_BAND * (fuv * np.hypot(fuu1, fuu2) + 1.0),
        "indicatrix not strictly convex (f_u wedge f_uu <= 0)",
    )
    det = _doctor(det, ~tw.valid)

    rhs1 = PHI + problem.energy
    rhs2 = jets.derivative(phi, 2)
    lam1 = (rhs1 * f2u - rhs2 * F2) / det
    lam2 = (F1 * rhs2 - f1u * rhs1) / det
    tw.lam1, tw.lam2 = lam1, lam2
    tw.drift = (lam1.value * f1.value + lam2.value * f2.value - phi.value) - problem.energy

    # vertical coefficients on the fiber curve
    m = d - 3
    l1u, l2u = jets.derivative(lam1, 2), jets.derivative(lam2, 2)
    l1uu, l2uu = jets.derivative(l1u, 2), jets.derivative(l2u, 2)
    L1, L2 = _t(lam1, m), _t(lam2, m)
    L1u, L2u = _t(l1u, m), _t(l2u, m)
    den = L1 * L2u - L2 * L1u
    lamv = np.hypot(L1.value, L2.value)
    lamuv = np.hypot(L1u.value, L2u.value)
    flag(np.abs(den.value) <= REG_BAND * (lamv * lamuv + 1.0), "fiber basis (lambda, lambda_u) degenerate")
    den = _doctor(den, ~tw.valid)
    A = (l1uu * L2u - l2uu * L1u) / den
    B = (L1 * l2uu - L2 * l1uu) / den
    flag(A.value >= 0.0, "fiber not strictly convex around the origin (A >= 0)")
    A = _doctor(A, ~tw.valid, value=-1.0)
    tw.A, tw.B = A, B
    tw.theta_prime = jets.sqrt(-A)
    tw.v3 = 1.0 / tw.theta_prime

    # invariant b, from s_uu = A s + B s_u carried through theta' = sqrt(-A)
    n = d - 4
    Au = jets.derivative(A, 2)
    tw.b = (_t(B, n) - Au / (2.0 * _t(A, n))) / _t(tw.theta_prime, n)

    # control drift closing the Hamiltonian field: overdetermined adjoint solve
    kk = d - 2
    L1k, L2k = _t(lam1, kk), _t(lam2, kk)
    F1k, F2k, = _t(f1, kk), _t(f2, kk)
    lam_q = [[_t(jets.derivative(lam, j), kk) for j in (0, 1)] for lam in (lam1, lam2)]
    f_q = [[_t(jets.derivative(f, j), kk) for j in (0, 1)] for f in (f1, f2)]
    phi_q = [_t(jets.derivative(phi, j), kk) for j in (0, 1)]
    lam_u = [_t(l1u, kk), _t(l2u, kk)]

    lhs = [lam_q[i][0] * F1k + lam_q[i][1] * F2k for i in range(2)]
    rhs = [-(L1k * f_q[0][i] + L2k * f_q[1][i] - phi_q[i]) for i in range(2)]

    sel = np.abs(lam_u[0].value) >= np.abs(lam_u[1].value)
    den0 = _doctor(lam_u[0], ~sel | (lam_u[0].value == 0.0))
    den1 = _doctor(lam_u[1], sel | (lam_u[1].value == 0.0))
    cand0 = (rhs[0] - lhs[0]) / den0
    cand1 = (rhs[1] - lhs[1]) / den1
    tw.udot = Jet(kk, 3, np.where(sel, cand0.coeffs, cand1.coeffs))

    other = np.where(sel, 1, 0)
    lam_u_other = np.where(sel, lam_u[1].value, lam_u[0].value)
    lhs_other = np.where(sel, lhs[1].value, lhs[0].value)
    rhs_other = np.where(sel, rhs[1].value, rhs[0].value)
    res = np.abs(lam_u_other * tw.udot.value + lhs_other - rhs_other)
    scale = 1.0 + np.abs(lam_u_other * tw.udot.value) + np.abs(lhs_other) + np.abs(rhs_other)
    tw.udot_residual = np.where(tw.valid, res / scale, 0.0)
    bad_res = tw.valid & (tw.udot_residual > UDOT_RESIDUAL_TOL)
    if np.any(bad_res):
        if keep_going:
            flag(bad_res, "adjoint consistency residual above tolerance")
        else:
            i = int(np.nonzero(bad_res)[0][0])
            raise ConsistencyError(
                f"adjoint system inconsistent at (q1={q1f[i]:.6g}, q2={q2f[i]:.6g}, u={uf[i]:.6g}): "
                f"relative residual {tw.udot_residual[i]:.3e}"
            )

    if not keep_going and not np.all(tw.valid):
        i, message = tw.failures[0]
        raise RegularityError(
            f"regularity failure at (q1={q1f[i]:.6g}, q2={q2f[i]:.6g}, u={uf[i]:.6g}): {message}"
        )
    return tw


# -- pointwise views ------------------------------------------------------------


@dataclass(frozen=True)
class FiberPoint:
    q: tuple
    u: float
    lam: tuple
    A: float
    B: float
    theta_prime: float
    b: float
    drift: float


def fiber_point(problem: ControlProblem, q, u, degree: int = 6) -> FiberPoint:
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return FiberPoint(
        q=(float(q[0]), float(q[1])),
        u=float(u),
        lam=(float(tw.lam1.value), float(tw.lam2.value)),
        A=float(tw.A.value),
        B=float(tw.B.value),
        theta_prime=float(tw.theta_prime.value),
        b=float(tw.b.value),
        drift=float(tw.drift),
    )


def solve_covector(problem: ControlProblem, q, u, degree: int = 4):
    """Covector of the maximized-Hamiltonian level at (q, u)."""
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return tw.values("lam1"), tw.values("lam2")


def vertical_coefficients(problem: ControlProblem, q, u, degree: int = 4):
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return tw.values("A"), tw.values("B")


def natural_density(problem: ControlProblem, q, u, degree: int = 4):
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return tw.values("theta_prime")


def invariant_b(problem: ControlProblem, q, u, degree: int = 4):
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return tw.values("b")


def control_derivative(problem: ControlProblem, q, u, degree: int = 4):
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    return tw.values("udot")


@dataclass(frozen=True)
class FrameFields:
    """Hamiltonian and vertical fields as jets in the (q1, q2, u) chart."""

    H: tuple  # three jets
    V: tuple  # three jets (only the u-slot is nonzero)
    degree: int

    def h_values(self):
        return tuple(np.asarray(j.value) for j in self.H)

    def v_value(self):
        return np.asarray(self.V[2].value)


def frame_fields(problem: ControlProblem, q, u, degree: int = 2, tower: FiberTower | None = None) -> FrameFields:
    """The moving-frame generators at jet degree ``degree``."""
    tw = tower if tower is not None else build_tower(
        problem, q[0], q[1], u, degree=max(MIN_TOWER_DEGREE, degree + 3)
    )
    k = degree
    if tw.degree - 3 < k:
        raise ValueError(f"tower degree {tw.degree} too small for frame fields at degree {k}")
    zero = Jet.constant(np.zeros_like(tw.q1), k, 3)
    H = (_t(tw.f1, k), _t(tw.f2, k), _t(tw.udot, k))
    V = (zero, zero, _t(tw.v3, k))
    return FrameFields(H=H, V=V, degree=k)


# -- theta chart -----------------------------------------------------------------


@dataclass(frozen=True)
class ThetaChart:
    """Jets of the natural fiber coordinate and the function c at the base points.

    ``c`` satisfies d_q s = c s wedge s' at fixed theta; ``Tq1``/``Tq2`` are the
    q-gradients of theta at fixed u, used for chart changes.
    """

    c: Jet
    Tq1: Jet
    Tq2: Jet
    theta_prime: Jet
    theta: Jet
    anchor: float
    nodes: int


class QuadratureError(ArithmeticError):
    pass


def _anchor_quadrature(problem, tw, anchor, nodes, chunk=4096):
    """Jet in q of theta(q, u_base) = integral of theta'(q, .) from the anchor."""
    d = tw.degree
    x, w = np.polynomial.legendre.leggauss(nodes)
    B = tw.q1.shape[0]
    half = 0.5 * (tw.u - anchor)
    mid = 0.5 * (tw.u + anchor)
    out = np.zeros((jets.ncoeffs(3, d - 3), B))
    for start in range(0, B, max(1, chunk // nodes)):
        sl = slice(start, min(B, start + max(1, chunk // nodes)))
        nb = sl.stop - sl.start
        taus = (mid[sl, None] + half[sl, None] * x[None, :]).ravel()
        q1r = np.repeat(tw.q1[sl], nodes)
        q2r = np.repeat(tw.q2[sl], nodes)
        sub = build_tower(problem, q1r, q2r, taus, degree=d)
        tp = jets.restrict(sub.theta_prime, 2)
        weights = (half[sl, None] * w[None, :]).ravel()
        contrib = tp.coeffs * weights
        out[:, sl] = contrib.reshape(out.shape[0], nb, nodes).sum(axis=2)
    return out


def theta_chart(problem: ControlProblem, tw: FiberTower, anchor: float = 0.0,
                start_nodes: int = 32, max_nodes: int = 256) -> ThetaChart:
    """Build the fixed-anchor theta coordinate and the function c over a tower."""
    d = tw.degree
    if d < 6:
        raise ValueError("theta chart needs a tower of degree >= 6")
    # u-part: antiderivative of theta' from the base point of each tower element
    T_local = jets.antiderivative(tw.theta_prime, 2)
    # q-part: quadrature from the anchor to the base u, doubled until stable
    nodes = start_nodes
    g = _anchor_quadrature(problem, tw, anchor, nodes)
    while True:
        nodes *= 2
        if nodes > max_nodes:
            raise QuadratureError(f"fiber quadrature did not stabilize below {max_nodes} nodes")
        g2 = _anchor_quadrature(problem, tw, anchor, nodes)
        if np.max(np.abs(g2 - g)) < 1e-10 * (1.0 + np.max(np.abs(g2))):
            g = g2
            break
        g = g2
    T = T_local + Jet(d - 3, 3, g)

    m = d - 4
    Tq1 = jets.derivative(T, 0)
    Tq2 = jets.derivative(T, 1)
    tp = tw.theta_prime

    def dq_at_fixed_theta(G: Jet, i: int) -> Jet:
        k = min(G.degree - 1, m)
        Ti = (Tq1, Tq2)[i]
        return _t(jets.derivative(G, i), k) - _t(jets.derivative(G, 2), k) * _t(Ti, k) / _t(tp, k)

    lam_th1 = _t(jets.derivative(tw.lam1, 2), m) / _t(tp, m)
    lam_th2 = _t(jets.derivative(tw.lam2, 2), m) / _t(tp, m)
    den = _t(tw.lam1, m) * lam_th2 - _t(tw.lam2, m) * lam_th1
    den = _doctor(den, ~tw.valid | (den.value == 0.0))
    num = dq_at_fixed_theta(tw.lam2, 0) - dq_at_fixed_theta(tw.lam1, 1)
    c = num / _t(den, num.degree)
    return ThetaChart(c=c, Tq1=Tq1, Tq2=Tq2, theta_prime=tp, theta=T, anchor=anchor, nodes=nodes)


def dtheta(G: Jet, chart: ThetaChart) -> Jet:
    """theta-derivative at fixed q of a scalar jet in the (q, u) chart."""
    k = G.degree - 1
    return jets.derivative(G, 2) / _t(chart.theta_prime, k)


def dq_fixed_theta(G: Jet, i: int, chart: ThetaChart) -> Jet:
    Ti = (chart.Tq1, chart.Tq2)[i]
    k = min(G.degree - 1, Ti.degree)
    return _t(jets.derivative(G, i), k) - _t(jets.derivative(G, 2), k) * _t(Ti, k) / _t(
        chart.theta_prime, k
    )


def function_c(problem: ControlProblem, q, u, anchor: float = 0.0, degree: int = 6):
    """Value of c (coefficient of d_q s against s wedge s') at (q, u)."""
    tw = build_tower(problem, q[0], q[1], u, degree=degree)
    chart = theta_chart(problem, tw, anchor=anchor)
    out = np.where(tw.valid, chart.c.value, np.nan).reshape(tw.shape)
    return float(out) if tw.scalar() else out
