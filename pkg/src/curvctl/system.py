"""Planar control problems with scalar input, and feedback transformations.

A problem is dynamics f(q, u) in the plane, a cost integrand, a control
domain and an energy level. The geometry downstream requires the indicatrix
u -> f(q, u) to be an immersed strictly convex curve: f and f_u independent,
and f_u, f_uu positively oriented. ``check_regularity`` evaluates both
determinants through jets and reports violations as data, not exceptions.

Feedback transformations combine a state diffeomorphism with a state-dependent
reparametrization of the control. Inverse maps are supplied by the caller as
expressions so that transformed problems stay exact compositions with no
hidden root finding.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from . import exprs, jets
from .exprs import Expr

__all__ = [
    "ControlDomain",
    "CIRCLE",
    "ControlProblem",
    "RegularityReport",
    "RegularityError",
    "ConsistencyError",
    "FeedbackTransform",
    "make_problem",
    "check_regularity",
    "transform_problem",
    "correspond_point",
    "correspond_point_inverse",
]

TWO_PI = 2.0 * math.pi


class RegularityError(ArithmeticError):
    """The indicatrix degenerates at a queried point."""


class ConsistencyError(ArithmeticError):
    """An internally overdetermined system disagreed beyond tolerance."""


@dataclass(frozen=True)
class ControlDomain:
    kind: str  # "circle" or "interval"
    lo: float = 0.0
    hi: float = TWO_PI

    def __post_init__(self):
        if self.kind not in ("circle", "interval"):
            raise ValueError(f"unknown control domain kind {self.kind!r}")
        if self.kind == "interval" and not self.lo < self.hi:
            raise ValueError("interval domain needs lo < hi")

    @property
    def wraps(self) -> bool:
        return self.kind == "circle"


CIRCLE = ControlDomain("circle")


@dataclass(frozen=True)
class ControlProblem:
    """Immutable problem: parameters are resolved at construction time."""

    f1: Expr
    f2: Expr
    phi: Expr
    domain: ControlDomain = CIRCLE
    energy: float = 0.0
    family: str = "custom"
    meta: dict = field(default_factory=dict, compare=False)

    def dynamics(self, q1, q2, u):
        env = {"q1": q1, "q2": q2, "u": u}
        return exprs.evaluate(self.f1, env), exprs.evaluate(self.f2, env)

    def cost(self, q1, q2, u):
        return exprs.evaluate(self.phi, {"q1": q1, "q2": q2, "u": u})


def make_problem(
    f1: str | Expr,
    f2: str | Expr,
    phi: str | Expr = "1",
    params: dict | None = None,
    domain: ControlDomain = CIRCLE,
    energy: float = 0.0,
    family: str = "custom",
    meta: dict | None = None,
) -> ControlProblem:
    """Build a problem from expression sources, binding named parameters."""
    def prep(e):
        ast = exprs.parse(e) if isinstance(e, str) else e
        ast = exprs.bind_params(ast, params or {})
        leftover = exprs.parameters(ast)
        if leftover:
            raise ValueError(f"unbound parameters: {sorted(leftover)}")
        return ast

    return ControlProblem(
        prep(f1), prep(f2), prep(phi), domain=domain, energy=energy,
        family=family, meta=dict(meta or {}),
    )


@dataclass(frozen=True)
class RegularityReport:
    ok: bool
    det_f_fu: float
    det_fu_fuu: float
    threshold: float
    messages: tuple = ()


def _dets_at(problem, q1, q2, u):
    """Both regularity determinants, vectorized over the inputs."""
    q1 = np.asarray(q1, dtype=float)
    q2 = np.asarray(q2, dtype=float)
    u = np.asarray(u, dtype=float)
    U = jets.variable(2, u, 2, 3)
    Q1 = jets.constant(q1, 2, 3)
    Q2 = jets.constant(q2, 2, 3)
    f1, f2 = problem.dynamics(Q1, Q2, U)
    f1 = f1 if isinstance(f1, jets.Jet) else jets.constant(f1, 2, 3)
    f2 = f2 if isinstance(f2, jets.Jet) else jets.constant(f2, 2, 3)
    v1, v2 = f1.value, f2.value
    d1, d2 = f1.partial((0, 0, 1)), f2.partial((0, 0, 1))
    s1, s2 = f1.partial((0, 0, 2)), f2.partial((0, 0, 2))
    det1 = v1 * d2 - v2 * d1
    det2 = d1 * s2 - d2 * s1
    scale1 = np.hypot(v1, v2) * np.hypot(d1, d2) + 1.0
    scale2 = np.hypot(d1, d2) * np.hypot(s1, s2) + 1.0
    return det1, det2, scale1, scale2


REG_BAND = 1e-9


def check_regularity(problem: ControlProblem, point) -> RegularityReport:
    """Evaluate the indicatrix conditions at (q, u); violations are data."""
    (q1, q2), u = point
    det1, det2, scale1, scale2 = _dets_at(problem, q1, q2, u)
    messages = []
    if abs(det1) <= REG_BAND * scale1:
        messages.append("f and f_u are collinear (indicatrix not immersed)")
    if det2 <= REG_BAND * scale2:
        messages.append("f_u and f_uu wedge non-positive (indicatrix not strictly convex)")
    return RegularityReport(
        ok=not messages,
        det_f_fu=float(det1),
        det_fu_fuu=float(det2),
        threshold=REG_BAND,
        messages=tuple(messages),
    )


@dataclass(frozen=True)
class FeedbackTransform:
    """State diffeomorphism plus fiberwise control reparametrization.

    ``phi`` maps states forward, ``psi(q, u)`` maps controls forward;
    ``phi_inv`` and ``psi_inv`` are their caller-supplied inverses, with
    ``psi_inv`` written in the *transformed* variables (q~, u~). Whichever
    direction an operation needs must have been supplied.
    """

    phi: tuple  # (Expr, Expr) in (q1, q2)
    psi: Expr | None = None
    phi_inv: tuple | None = None  # (Expr, Expr) in transformed (q1, q2)
    psi_inv: Expr | None = None  # Expr in transformed (q1, q2, u)

    @staticmethod
    def from_sources(phi, psi=None, phi_inv=None, psi_inv=None, params=None) -> "FeedbackTransform":
        def p(e):
            if e is None:
                return None
            ast = exprs.parse(e) if isinstance(e, str) else e
            return exprs.bind_params(ast, params or {})

        return FeedbackTransform(
            phi=(p(phi[0]), p(phi[1])),
            psi=p(psi),
            phi_inv=None if phi_inv is None else (p(phi_inv[0]), p(phi_inv[1])),
            psi_inv=p(psi_inv),
        )


def correspond_point(t: FeedbackTransform, point):
    """Forward image (q~, u~) of a point under the transformation."""
    (q1, q2), u = point
    if t.psi is None:
        raise ValueError("forward control map psi was not supplied")
    env = {"q1": q1, "q2": q2, "u": u}
    return (
        (exprs.evaluate(t.phi[0], env), exprs.evaluate(t.phi[1], env)),
        exprs.evaluate(t.psi, env),
    )


def correspond_point_inverse(t: FeedbackTransform, point):
    """Preimage of a point in the transformed chart."""
    (q1, q2), u = point
    if t.phi_inv is None or t.psi_inv is None:
        raise ValueError("inverse maps were not supplied")
    env = {"q1": q1, "q2": q2, "u": u}
    return (
        (exprs.evaluate(t.phi_inv[0], env), exprs.evaluate(t.phi_inv[1], env)),
        exprs.evaluate(t.psi_inv, env),
    )


def transform_problem(problem: ControlProblem, t: FeedbackTransform) -> ControlProblem:
    """Push the problem forward: f~ = Dphi(q) f(q,u) at (q,u) = inverse image.

    Realized by expression substitution, so the result is again an exact
    :class:`ControlProblem`. The cost composes unchanged and the energy level
    is preserved.
    """
    if t.phi_inv is None or t.psi_inv is None:
        raise ValueError("transform_problem requires phi_inv and psi_inv expressions")
    # back-substitution maps written in the transformed variables
    back = {
        "q1": t.phi_inv[0],
        "q2": t.phi_inv[1],
        "u": t.psi_inv,
    }
    back_state = {"q1": t.phi_inv[0], "q2": t.phi_inv[1]}

    dphi = [[exprs.derivative(t.phi[i], v) for v in ("q1", "q2")] for i in range(2)]
    new_f = []
    for i in range(2):
        terms = None
        for j, fj in enumerate((problem.f1, problem.f2)):
            piece = exprs.Bin(
                "*",
                exprs.substitute(dphi[i][j], back_state),
                exprs.substitute(fj, back),
            )
            terms = piece if terms is None else exprs.Bin("+", terms, piece)
        new_f.append(terms)
    new_phi = exprs.substitute(problem.phi, back)
    return ControlProblem(
        new_f[0],
        new_f[1],
        new_phi,
        domain=problem.domain,
        energy=problem.energy,
        family=problem.family + "+feedback",
        meta=dict(problem.meta),
    )
