"""One- and two-forms with germ coefficients on the truncated phase space.

A one-form is ``W(v) dv`` acting on tangent vectors through the real pairing
``xi -> sum_j Re W_j(v) conj(xi_j)``; a two-form is ``(A dv ^ dv)(xi, eta) =
<A(v) xi, eta>`` for an antisymmetric operator-valued germ A.  The module
provides the canonical form, pullbacks, primitives, the exterior derivative
(computed in real coordinates and repackaged), interior products, and the
terminating Neumann inverse used by the homotopy method.
"""

from __future__ import annotations

import numpy as np

from .germs import (GermMatrix, ScalarGerm, TruncatedGerm, differential)
from .truncation import Truncation

__all__ = [
    "OneFormGerm",
    "TwoFormGerm",
    "omega0",
    "pullback_omega0",
    "pullback",
    "primitive",
    "exterior_derivative",
    "interior_product",
    "neumann_inverse",
    "closedness_residual",
]


class OneFormGerm:
    """One-form W(v) dv with a vector germ coefficient."""

    __slots__ = ("coeff",)

    def __init__(self, coeff: TruncatedGerm):
        self.coeff = coeff

    @property
    def trunc(self) -> Truncation:
        return self.coeff.trunc

    def __add__(self, other):
        return OneFormGerm(self.coeff + other.coeff)

    def __sub__(self, other):
        return OneFormGerm(self.coeff - other.coeff)

    def evaluate(self, v, xi) -> float:
        w = self.coeff.evaluate(v)
        xi = np.asarray(xi, dtype=complex)
        return float(np.sum(w * xi.conj()).real)

    def __repr__(self):
        return f"<OneFormGerm {self.coeff!r}>"


class TwoFormGerm:
    """Two-form A(v) dv ^ dv with an operator-valued germ coefficient."""

    __slots__ = ("op",)

    def __init__(self, op: GermMatrix):
        self.op = op

    @property
    def trunc(self) -> Truncation:
        return self.op.trunc

    def __add__(self, other):
        return TwoFormGerm(self.op + other.op)

    def __sub__(self, other):
        return TwoFormGerm(self.op - other.op)

    def evaluate(self, v, xi, eta) -> float:
        axi = self.op.apply_values(v, xi)
        eta = np.asarray(eta, dtype=complex)
        return float(np.sum(axi * eta.conj()).real)

    def antisymmetry_residual(self, rng, samples: int = 4,
                              scale: float = 0.2) -> float:
        """Largest |w(xi, eta) + w(eta, xi)| over random base points."""
        J = self.trunc.modes
        worst = 0.0
        for _ in range(samples):
            v = scale * (rng.standard_normal(J) + 1j * rng.standard_normal(J))
            xi = rng.standard_normal(J) + 1j * rng.standard_normal(J)
            eta = rng.standard_normal(J) + 1j * rng.standard_normal(J)
            worst = max(worst, abs(self.evaluate(v, xi, eta)
                                   + self.evaluate(v, eta, xi)))
        return worst

    def __repr__(self):
        return f"<TwoFormGerm {self.op!r}>"


def omega0(trunc: Truncation) -> TwoFormGerm:
    """The canonical constant form (multiplication by i)."""
    return TwoFormGerm(GermMatrix.multiplication_by_i(trunc))


def pullback_omega0(G: TruncatedGerm) -> TwoFormGerm:
    """Pullback of the canonical form along G = id + G0.

    The operator coefficient is ``i + dG0* i dG + i dG0``, assembled from
    differentials and their adjoints; it reduces to multiplication by i when
    G is the identity or any linear symplectic map.
    """
    tr = G.trunc
    const_i = GermMatrix.multiplication_by_i(tr)
    G0 = G - TruncatedGerm.identity(tr)
    D0 = differential(G0)
    D = GermMatrix.identity_op(tr) + D0
    op = const_i + D0.adjoint() @ (const_i @ D) + const_i @ D0
    return TwoFormGerm(op)


def pullback(form: TwoFormGerm, Phi: TruncatedGerm) -> TwoFormGerm:
    """General pullback: coefficient dPhi(v)* A(Phi(v)) dPhi(v)."""
    D = differential(Phi)
    return TwoFormGerm(D.adjoint() @ form.op.compose_point(Phi) @ D)


def primitive(form_delta: TwoFormGerm) -> OneFormGerm:
    """Radial primitive of an exact two-form whose coefficient vanishes at 0.

    Each homogeneous degree-d part of A(v) v picks the exact factor
    1/(d+1); the exterior derivative of the result reproduces the input.
    """
    P0, Q0 = form_delta.op.constant_part()
    if max(np.abs(P0).max(), np.abs(Q0).max()) > 1e-12:
        raise ValueError("primitive needs a coefficient vanishing at v = 0")
    tr = form_delta.trunc
    radial = form_delta.op.apply_germ(TruncatedGerm.identity(tr))
    comps = []
    for comp in radial.components:
        acc = ScalarGerm.zero(tr)
        for d in range(1, tr.degree + 1):
            part = comp.homogeneous(d)
            if not part.is_zero():
                acc = acc + part.scale(1.0 / (d + 1))
        comps.append(acc)
    return OneFormGerm(TruncatedGerm(tr, comps))


def _real_jacobian_blocks(W: TruncatedGerm):
    """Real-coordinate Jacobian blocks of the coefficient functions.

    Returns the 2x2 block grid [[A, B], [C, D]] of scalar germs, where the
    one-form has real coefficients (Re W_j, Im W_j) in the coordinates
    (v_j^+, v_j^-) and each block holds the corresponding derivatives.
    """
    tr = W.trunc
    J = tr.modes
    wp = [g.real_part() for g in W.components]
    wm = [g.conj().scale(-1) + g for g in W.components]       # 2i Im W_j
    wm = [g.scale(-0.5j) for g in wm]                          # Im W_j
    A = [[wp[r].real_derivative(c + 1, minus=False) for c in range(J)]
         for r in range(J)]
    B = [[wp[r].real_derivative(c + 1, minus=True) for c in range(J)]
         for r in range(J)]
    C = [[wm[r].real_derivative(c + 1, minus=False) for c in range(J)]
         for r in range(J)]
    D = [[wm[r].real_derivative(c + 1, minus=True) for c in range(J)]
         for r in range(J)]
    return A, B, C, D


def exterior_derivative(alpha: OneFormGerm) -> TwoFormGerm:
    """Exterior derivative of W(v) dv.

    Computed as the antisymmetrized Jacobian in the real coordinates
    v_j^+/v_j^-, then repackaged into the complex operator pair.
    """
    W = alpha.coeff
    tr = W.trunc
    J = tr.modes
    A, B, C, D = _real_jacobian_blocks(W)
    # S = Jac - Jac^T in the (plus-block, minus-block) real coordinates
    SA = [[A[r][c] - A[c][r] for c in range(J)] for r in range(J)]
    SB = [[B[r][c] - C[c][r] for c in range(J)] for r in range(J)]
    SC = [[C[r][c] - B[c][r] for c in range(J)] for r in range(J)]
    SD = [[D[r][c] - D[c][r] for c in range(J)] for r in range(J)]
    P = [[(SA[r][c] + SD[r][c]).scale(0.5)
          + (SC[r][c] - SB[r][c]).scale(0.5j) for c in range(J)]
         for r in range(J)]
    Q = [[(SA[r][c] - SD[r][c]).scale(0.5)
          + (SB[r][c] + SC[r][c]).scale(0.5j) for c in range(J)]
         for r in range(J)]
    return TwoFormGerm(GermMatrix(tr, P, Q))


def interior_product(V: TruncatedGerm, form: TwoFormGerm) -> OneFormGerm:
    """Contraction V -| form: the one-form with coefficient A(v) V(v)."""
    return OneFormGerm(form.op.apply_germ(V))


def neumann_inverse(op: GermMatrix) -> GermMatrix:
    """Minus the inverse of an operator germ ``i + (terms vanishing at 0)``.

    The inverse is expanded as a terminating Neumann series: every factor of
    the vanishing part raises the germ degree, so under degree truncation
    the series is a finite sum and the result is exact to degree N (and
    polynomial in tau when the input carries tau factors).  The sign is
    normalized so that ``result @ op == -identity``.
    """
    tr = op.trunc
    const_i = GermMatrix.multiplication_by_i(tr)
    P0, Q0 = op.constant_part()
    if (np.abs(P0 - 1j * np.eye(tr.modes)).max() > 1e-12
            or np.abs(Q0).max() > 1e-12):
        raise ValueError("constant part must be multiplication by i "
                         "(vanishing part must have no degree-0 terms)")
    ups = op - const_i
    minus_x = -ups.scale(-1j)
    series = GermMatrix.identity_op(tr)
    term = GermMatrix.identity_op(tr)
    for _ in range(tr.degree + 1):
        term = term @ minus_x
        if term.max_abs() == 0.0:
            break
        series = series + term
    return series.input_scale(1j)


def closedness_residual(form: TwoFormGerm) -> float:
    """Largest coefficient of the cyclic derivative sums of the form.

    Zero (to rounding) exactly when the two-form is closed; evaluated in the
    real coordinates without materializing a three-form type.
    """
    tr = form.trunc
    J = tr.modes
    P, Q = form.op.P, form.op.Q
    # real entries S[a][b] for a, b in the stacked (plus, minus) coordinates
    S = [[None] * (2 * J) for _ in range(2 * J)]
    for r in range(J):
        for c in range(J):
            p, q = P[r][c], Q[r][c]
            pr, pi = p.real_part(), (p - p.conj()).scale(-0.5j)
            qr, qi = q.real_part(), (q - q.conj()).scale(-0.5j)
            S[r][c] = pr + qr
            S[r + J][c + J] = pr - qr
            S[r + J][c] = pi + qi
            S[r][c + J] = qi - pi
    def dre(g, a):
        return g.real_derivative(a % J + 1, minus=a >= J)
    worst = 0.0
    for a in range(2 * J):
        for b in range(a + 1, 2 * J):
            for c in range(b + 1, 2 * J):
                cyc = dre(S[b][c], a) + dre(S[c][a], b) + dre(S[a][b], c)
                worst = max(worst, cyc.max_abs())
    return worst
