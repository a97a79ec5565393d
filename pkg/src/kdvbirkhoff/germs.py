"""Truncated polynomial germ calculus on the complex sequence phase space.

A germ is a polynomial map of ``v = (v_1, ..., v_J)`` and its conjugates,
vanishing at the origin, with all monomials above total degree ``N``
discarded.  The module provides the scalar / vector / operator-valued germ
types together with the operations the normal-form pipeline runs on:
composition, inversion, differentials and their adjoints, majorants, torus
angle averaging, gradients, Poisson brackets and polynomial homotopy flows.

Coefficients are either plain complex numbers or :class:`TauPoly`
polynomials in the homotopy time; all algebra is written so the two mix
transparently, which keeps homotopy flows exact (no numerical time
stepping anywhere).
"""

from __future__ import annotations

import math
from typing import Iterable

import numpy as np

from .truncation import SLOT_BITS, SLOT_MASK, Truncation

__all__ = [
    "TauPoly",
    "ScalarGerm",
    "TruncatedGerm",
    "GermMatrix",
    "FlowMap",
    "compose",
    "invert",
    "differential",
    "adjoint_differential",
    "gradient",
    "pairing_germ",
    "poisson_bracket",
    "flow",
    "check_germ",
]


# --------------------------------------------------------------------------
# coefficients: complex scalars or polynomials in the homotopy time tau
# --------------------------------------------------------------------------

class TauPoly:
    """Polynomial in the homotopy parameter with complex coefficients.

    Used as a germ-coefficient type so that tau-dependent vector fields and
    their flows stay exact polynomials in tau.
    """

    __slots__ = ("c",)

    def __init__(self, coeffs: Iterable[complex] = ()):
        c = [complex(x) for x in coeffs]
        while c and c[-1] == 0:
            c.pop()
        self.c = tuple(c)

    @classmethod
    def tau(cls, power: int = 1, scale: complex = 1.0) -> "TauPoly":
        return cls((0,) * power + (scale,))

    def __add__(self, other):
        if isinstance(other, TauPoly):
            n = max(len(self.c), len(other.c))
            a = self.c + (0,) * (n - len(self.c))
            b = other.c + (0,) * (n - len(other.c))
            return TauPoly(x + y for x, y in zip(a, b))
        if isinstance(other, (int, float, complex)):
            if not self.c:
                return TauPoly((other,))
            return TauPoly((self.c[0] + other,) + self.c[1:])
        return NotImplemented

    __radd__ = __add__

    def __neg__(self):
        return TauPoly(-x for x in self.c)

    def __sub__(self, other):
        return self.__add__(-other if isinstance(other, TauPoly) else -other)

    def __rsub__(self, other):
        return (-self).__add__(other)

    def __mul__(self, other):
        if isinstance(other, TauPoly):
            if not self.c or not other.c:
                return TauPoly()
            out = [0j] * (len(self.c) + len(other.c) - 1)
            for i, a in enumerate(self.c):
                if a == 0:
                    continue
                for j, b in enumerate(other.c):
                    out[i + j] += a * b
            return TauPoly(out)
        if isinstance(other, (int, float, complex)):
            return TauPoly(x * other for x in self.c)
        return NotImplemented

    __rmul__ = __mul__

    def conjugate(self) -> "TauPoly":
        # tau itself is real, only the coefficients conjugate
        return TauPoly(x.conjugate() for x in self.c)

    def max_abs(self) -> float:
        return max((abs(x) for x in self.c), default=0.0)

    def at(self, tau: float) -> complex:
        val = 0j
        for x in reversed(self.c):
            val = val * tau + x
        return val

    def integral(self) -> "TauPoly":
        """Definite integral from 0 to tau, as a polynomial in tau."""
        return TauPoly((0,) + tuple(x / (k + 1) for k, x in enumerate(self.c)))

    @property
    def tau_degree(self) -> int:
        return len(self.c) - 1

    def __repr__(self):
        return f"TauPoly({list(self.c)!r})"


def _mag(c) -> float:
    return c.max_abs() if isinstance(c, TauPoly) else abs(c)


def _conj_coeff(c):
    return c.conjugate()


def _coeff_at_tau(c, tau):
    return c.at(tau) if isinstance(c, TauPoly) else c


def _coeff_integral(c):
    return c.integral() if isinstance(c, TauPoly) else TauPoly((0, c))


# --------------------------------------------------------------------------
# raw term-dict helpers (keys are (degree, packed-exponents) pairs)
# --------------------------------------------------------------------------

def _dict_add(a: dict, b: dict, sign=1) -> dict:
    out = dict(a)
    for k, c in b.items():
        prev = out.get(k)
        out[k] = (sign * c) if prev is None else prev + sign * c
    return out


def _dict_mul(a: dict, b: dict, maxdeg: int) -> dict:
    if not a or not b:
        return {}
    if len(a) > len(b):
        a, b = b, a
    buckets: dict[int, list] = {}
    for (d, k), c in b.items():
        buckets.setdefault(d, []).append((k, c))
    out: dict = {}
    for (da, ka), ca in a.items():
        room = maxdeg - da
        if room < 0:
            continue
        for db, items in buckets.items():
            if db > room:
                continue
            d = da + db
            for kb, cb in items:
                key = (d, ka + kb)
                prev = out.get(key)
                out[key] = ca * cb if prev is None else prev + ca * cb
    return out


class ScalarGerm:
    """Scalar polynomial germ: finite sum of ``c * v^alpha * conj(v)^beta``.

    Immutable by convention; every operation returns a new germ with the
    same :class:`~kdvbirkhoff.truncation.Truncation` and purged
    coefficients.
    """

    __slots__ = ("trunc", "terms")

    def __init__(self, trunc: Truncation, terms: dict | None = None):
        self.trunc = trunc
        clean = {}
        if terms:
            N, eps = trunc.degree, trunc.purge
            for key, c in terms.items():
                if key[0] <= N and _mag(c) > eps:
                    clean[key] = c
        self.terms = clean

    # ------------------------------------------------------------ factories
    @classmethod
    def zero(cls, trunc: Truncation) -> "ScalarGerm":
        return cls(trunc)

    @classmethod
    def constant(cls, trunc: Truncation, c) -> "ScalarGerm":
        return cls(trunc, {(0, 0): c})

    @classmethod
    def variable(cls, trunc: Truncation, j: int, conjugated: bool = False,
                 coeff=1.0) -> "ScalarGerm":
        return cls(trunc, {trunc.var_key(j, conjugated): coeff})

    @classmethod
    def monomial(cls, trunc: Truncation, alpha, beta, coeff) -> "ScalarGerm":
        return cls(trunc, {trunc.pack(alpha, beta): coeff})

    # ----------------------------------------------------------- basic info
    def is_zero(self) -> bool:
        return not self.terms

    @property
    def nterms(self) -> int:
        return len(self.terms)

    def min_degree(self) -> int:
        """Smallest stored degree; trunc.degree + 1 when the germ is zero."""
        return min((d for d, _ in self.terms), default=self.trunc.degree + 1)

    def max_abs(self, max_degree: int | None = None,
                min_degree: int = 0) -> float:
        best = 0.0
        for (d, _), c in self.terms.items():
            if d < min_degree or (max_degree is not None and d > max_degree):
                continue
            m = _mag(c)
            if m > best:
                best = m
        return best

    def coefficient(self, alpha, beta):
        return self.terms.get(self.trunc.pack(alpha, beta), 0j)

    def items(self):
        """Canonically ordered (alpha, beta, coeff) triples."""
        tr = self.trunc
        for (d, k) in sorted(self.terms, key=lambda dk: tr.sort_key(*dk)):
            a, b = tr.unpack(k)
            yield a, b, self.terms[(d, k)]

    def has_tau(self) -> bool:
        return any(isinstance(c, TauPoly) for c in self.terms.values())

    # ------------------------------------------------------------ arithmetic
    def _new(self, terms) -> "ScalarGerm":
        return ScalarGerm(self.trunc, terms)

    def __add__(self, other: "ScalarGerm") -> "ScalarGerm":
        return self._new(_dict_add(self.terms, other.terms))

    def __sub__(self, other: "ScalarGerm") -> "ScalarGerm":
        return self._new(_dict_add(self.terms, other.terms, sign=-1))

    def __neg__(self) -> "ScalarGerm":
        return self._new({k: -c for k, c in self.terms.items()})

    def scale(self, c) -> "ScalarGerm":
        return self._new({k: c * x for k, x in self.terms.items()})

    def __mul__(self, other):
        if isinstance(other, ScalarGerm):
            return self._new(_dict_mul(self.terms, other.terms,
                                       self.trunc.degree))
        return self.scale(other)

    __rmul__ = __mul__

    def conj(self) -> "ScalarGerm":
        """Germ of the complex-conjugate function."""
        tr = self.trunc
        return self._new({(d, tr.swap_blocks(k)): _conj_coeff(c)
                          for (d, k), c in self.terms.items()})

    def real_part(self) -> "ScalarGerm":
        return (self + self.conj()).scale(0.5)

    def hermitian_symmetrize(self) -> "ScalarGerm":
        """Enforce real-valuedness: coeff(a,b) <- mean with conj(coeff(b,a))."""
        return self.real_part()

    # ----------------------------------------------------------- derivatives
    def wirtinger(self, j: int, conjugated: bool = False) -> "ScalarGerm":
        tr = self.trunc
        shift = SLOT_BITS * tr._slot(j, conjugated)
        out = {}
        for (d, k), c in self.terms.items():
            e = (k >> shift) & SLOT_MASK
            if e:
                key = (d - 1, k - (1 << shift))
                prev = out.get(key)
                out[key] = e * c if prev is None else prev + e * c
        return self._new(out)

    def real_derivative(self, j: int, minus: bool = False) -> "ScalarGerm":
        """d/dv_j^+ (or d/dv_j^- when ``minus``) in real coordinates."""
        dv = self.wirtinger(j, False)
        dvb = self.wirtinger(j, True)
        if minus:
            return (dv - dvb).scale(1j)
        return dv + dvb

    # -------------------------------------------------------- angle algebra
    def angle_filter(self, j: int, twist: int = 0) -> "ScalarGerm":
        tr = self.trunc
        return self._new({(d, k): c for (d, k), c in self.terms.items()
                          if tr.charge(k, j) == twist})

    def angle_filter_all(self, twists) -> "ScalarGerm":
        tr = self.trunc
        twists = tuple(twists)
        return self._new({(d, k): c for (d, k), c in self.terms.items()
                          if tr.charges(k) == twists})

    def angle_average(self, j: int) -> "ScalarGerm":
        """Average over the rotation of mode j (keeps zero-charge terms)."""
        return self.angle_filter(j, 0)

    def angle_average_all(self) -> "ScalarGerm":
        return self.angle_filter_all((0,) * self.trunc.modes)

    def angle_derivative(self, j: int) -> "ScalarGerm":
        """Derivative along the rotation angle of mode j."""
        tr = self.trunc
        out = {}
        for (d, k), c in self.terms.items():
            ch = tr.charge(k, j)
            if ch:
                out[(d, k)] = (1j * ch) * c
        return self._new(out)

    def weighted_angle_average(self, j: int) -> "ScalarGerm":
        """The t-weighted angle average solving the cohomological equation.

        Multiplies a monomial of charge k at mode j by pi when k == 0 and by
        1/(i k) otherwise.
        """
        tr = self.trunc
        out = {}
        for (d, k), c in self.terms.items():
            ch = tr.charge(k, j)
            out[(d, k)] = (math.pi * c) if ch == 0 else c * (1.0 / (1j * ch))
        return self._new(out)

    # ------------------------------------------------------------ structure
    def homogeneous(self, degree: int) -> "ScalarGerm":
        return self._new({k: c for k, c in self.terms.items()
                          if k[0] == degree})

    def truncate_degree(self, max_degree: int) -> "ScalarGerm":
        return self._new({k: c for k, c in self.terms.items()
                          if k[0] <= max_degree})

    def embedded(self, trunc: Truncation) -> "ScalarGerm":
        """Copy into a ring with the same modes but another degree cutoff."""
        if trunc.modes != self.trunc.modes:
            raise ValueError("embedding requires the same mode count")
        return ScalarGerm(trunc, dict(self.terms))

    def majorant(self) -> "ScalarGerm":
        """Coefficient-modulus germ: |c| on the merged exponents |v|^(a+b)."""
        tr = self.trunc
        out = {}
        for (d, k), c in self.terms.items():
            key = (d, tr.merge_conjugates(k))
            prev = out.get(key)
            m = _mag(c)
            out[key] = m if prev is None else prev + m
        return self._new(out)

    # ------------------------------------------------------------ evaluation
    def evaluate(self, v):
        v = np.asarray(v, dtype=complex)
        if v.shape != (self.trunc.modes,):
            raise ValueError("point must have one entry per mode")
        vv = np.concatenate([v, v.conj()])
        total = 0j
        for (d, k), c in self.terms.items():
            val = 1.0 + 0j
            s, kk = 0, k
            while kk:
                e = kk & SLOT_MASK
                if e:
                    val *= vv[s] ** e
                kk >>= SLOT_BITS
                s += 1
            total = total + c * val
        return total

    def compose(self, inner: "TruncatedGerm") -> "ScalarGerm":
        return _Composer(inner).scalar(self)

    # ------------------------------------------------------------------ tau
    def at_tau(self, tau: float) -> "ScalarGerm":
        return self._new({k: _coeff_at_tau(c, tau)
                          for k, c in self.terms.items()})

    def tau_integral(self) -> "ScalarGerm":
        return self._new({k: _coeff_integral(c)
                          for k, c in self.terms.items()})

    def times_tau(self, power: int = 1) -> "ScalarGerm":
        t = TauPoly.tau(power)
        return self._new({k: t * c for k, c in self.terms.items()})

    def __repr__(self):
        tr = self.trunc
        parts = [f"({c})*{tr.monomial_str(d, k)}"
                 for (d, k), c in sorted(self.terms.items(),
                                         key=lambda kv: tr.sort_key(*kv[0]))]
        body = " + ".join(parts[:8]) if parts else "0"
        more = f" + ... [{len(parts)} terms]" if len(parts) > 8 else ""
        return f"<ScalarGerm {body}{more}>"


class TruncatedGerm:
    """Vector-valued polynomial germ, one scalar component per output mode."""

    __slots__ = ("trunc", "components")

    def __init__(self, trunc: Truncation, components):
        components = tuple(components)
        if len(components) != trunc.modes:
            raise ValueError("need one component per mode")
        self.trunc = trunc
        self.components = components

    # ------------------------------------------------------------ factories
    @classmethod
    def zero(cls, trunc: Truncation) -> "TruncatedGerm":
        return cls(trunc, [ScalarGerm.zero(trunc)] * trunc.modes)

    @classmethod
    def identity(cls, trunc: Truncation) -> "TruncatedGerm":
        return cls(trunc, [ScalarGerm.variable(trunc, j)
                           for j in range(1, trunc.modes + 1)])

    @classmethod
    def from_linear(cls, trunc: Truncation, A, B=None) -> "TruncatedGerm":
        """Linear germ v -> A v + B conj(v) from complex matrices."""
        A = np.asarray(A, dtype=complex)
        comps = []
        for r in range(trunc.modes):
            terms = {}
            for c in range(trunc.modes):
                if A[r, c] != 0:
                    terms[trunc.var_key(c + 1, False)] = A[r, c]
                if B is not None and B[r, c] != 0:
                    terms[trunc.var_key(c + 1, True)] = complex(B[r, c])
            comps.append(ScalarGerm(trunc, terms))
        return cls(trunc, comps)

    # ----------------------------------------------------------- basic info
    def component(self, j: int) -> ScalarGerm:
        return self.components[j - 1]

    def is_zero(self) -> bool:
        return all(c.is_zero() for c in self.components)

    def min_degree(self) -> int:
        return min(c.min_degree() for c in self.components)

    def max_abs(self, max_degree=None, min_degree=0) -> float:
        return max(c.max_abs(max_degree, min_degree) for c in self.components)

    def linear_operator(self):
        """(A, B) with the degree-1 part acting as xi -> A xi + B conj(xi)."""
        J = self.trunc.modes
        A = np.zeros((J, J), dtype=complex)
        B = np.zeros((J, J), dtype=complex)
        for r, comp in enumerate(self.components):
            lin = comp.homogeneous(1)
            for a, b, c in lin.items():
                cval = c.at(0.0) if isinstance(c, TauPoly) else c
                for j, e in enumerate(a):
                    if e:
                        A[r, j] = cval
                for j, e in enumerate(b):
                    if e:
                        B[r, j] = cval
        return A, B

    def is_near_identity(self, tol: float = 1e-12) -> bool:
        A, B = self.linear_operator()
        J = self.trunc.modes
        return (np.abs(A - np.eye(J)).max() <= tol
                and np.abs(B).max() <= tol)

    def has_tau(self) -> bool:
        return any(c.has_tau() for c in self.components)

    # ------------------------------------------------------------ arithmetic
    def _map(self, fn) -> "TruncatedGerm":
        return TruncatedGerm(self.trunc, [fn(c) for c in self.components])

    def __add__(self, other: "TruncatedGerm") -> "TruncatedGerm":
        return TruncatedGerm(self.trunc,
                             [a + b for a, b in zip(self.components,
                                                    other.components)])

    def __sub__(self, other: "TruncatedGerm") -> "TruncatedGerm":
        return TruncatedGerm(self.trunc,
                             [a - b for a, b in zip(self.components,
                                                    other.components)])

    def __neg__(self) -> "TruncatedGerm":
        return self._map(lambda c: -c)

    def scale(self, c) -> "TruncatedGerm":
        return self._map(lambda g: g.scale(c))

    def conj(self) -> "TruncatedGerm":
        return self._map(lambda g: g.conj())

    def homogeneous(self, degree: int) -> "TruncatedGerm":
        return self._map(lambda g: g.homogeneous(degree))

    def truncate_degree(self, max_degree: int) -> "TruncatedGerm":
        return self._map(lambda g: g.truncate_degree(max_degree))

    def embedded(self, trunc: Truncation) -> "TruncatedGerm":
        return TruncatedGerm(trunc, [c.embedded(trunc)
                                     for c in self.components])

    def majorant(self) -> "TruncatedGerm":
        return self._map(lambda g: g.majorant())

    # -------------------------------------------------------- angle algebra
    def angle_average(self, j: int) -> "TruncatedGerm":
        """One-angle average with the covariant (form / vector-field) rule.

        Component k keeps monomials whose charge at mode j equals 1 when
        k == j and 0 otherwise.
        """
        comps = [g.angle_filter(j, 1 if (k + 1) == j else 0)
                 for k, g in enumerate(self.components)]
        return TruncatedGerm(self.trunc, comps)

    def angle_average_all(self) -> "TruncatedGerm":
        J = self.trunc.modes
        comps = []
        for k, g in enumerate(self.components):
            twist = [0] * J
            twist[k] = 1
            comps.append(g.angle_filter_all(twist))
        return TruncatedGerm(self.trunc, comps)

    # ------------------------------------------------------------ evaluation
    def evaluate(self, v) -> np.ndarray:
        vals = [c.evaluate(v) for c in self.components]
        if any(isinstance(x, TauPoly) for x in vals):
            raise ValueError("germ has tau-dependent coefficients; "
                             "fix tau with at_tau() first")
        return np.array(vals, dtype=complex)

    # ------------------------------------------------------------------ tau
    def at_tau(self, tau: float) -> "TruncatedGerm":
        return self._map(lambda g: g.at_tau(tau))

    def tau_integral(self) -> "TruncatedGerm":
        return self._map(lambda g: g.tau_integral())

    def times_tau(self, power: int = 1) -> "TruncatedGerm":
        return self._map(lambda g: g.times_tau(power))

    def __repr__(self):
        nt = sum(c.nterms for c in self.components)
        return (f"<TruncatedGerm J={self.trunc.modes} N={self.trunc.degree} "
                f"terms={nt} min_deg={self.min_degree()}>")


# --------------------------------------------------------------------------
# composition / inversion
# --------------------------------------------------------------------------

class _Composer:
    """Caches powers of the inner germ's components during a composition."""

    def __init__(self, inner: TruncatedGerm):
        for comp in inner.components:
            if (0, 0) in comp.terms:
                raise ValueError("inner germ must vanish at the origin")
        self.inner = inner
        self.tr = inner.trunc
        self._pow: dict = {}

    def _power(self, j: int, conjugated: bool, e: int) -> dict:
        key = (j, conjugated, e)
        cached = self._pow.get(key)
        if cached is not None:
            return cached
        if e == 1:
            comp = self.inner.components[j - 1]
            out = comp.conj().terms if conjugated else comp.terms
        else:
            out = _dict_mul(self._power(j, conjugated, e - 1),
                            self._power(j, conjugated, 1), self.tr.degree)
        self._pow[key] = out
        return out

    def scalar(self, g: ScalarGerm) -> ScalarGerm:
        tr = self.tr
        acc: dict = {}
        for (d, k), c in g.terms.items():
            if d == 0:
                key = (0, 0)
                acc[key] = acc.get(key, 0j) + c
                continue
            prod = None
            s, kk = 0, k
            while kk:
                e = kk & SLOT_MASK
                if e:
                    conjugated = s >= tr.modes
                    j = (s - tr.modes if conjugated else s) + 1
                    factor = self._power(j, conjugated, e)
                    prod = factor if prod is None else _dict_mul(
                        prod, factor, tr.degree)
                kk >>= SLOT_BITS
                s += 1
            for key, val in prod.items():
                prev = acc.get(key)
                acc[key] = c * val if prev is None else prev + c * val
        return ScalarGerm(tr, acc)


def compose(outer, inner: TruncatedGerm):
    """Composition ``outer(inner(v))`` with coefficients exact to degree N."""
    comp = _Composer(inner)
    if isinstance(outer, ScalarGerm):
        return comp.scalar(outer)
    return TruncatedGerm(inner.trunc, [comp.scalar(g)
                                       for g in outer.components])


def invert(F: TruncatedGerm, tol: float = 1e-12) -> TruncatedGerm:
    """Inverse of a germ with identity linear part, exact to degree N.

    Solves degree by degree: if the current candidate G matches through
    degree d-1, the degree-d defect of F(G(v)) - v is subtracted from G.
    This reproduces the homogeneous recursion G2 = F2, G3 = F3 - 2 F2(v, G2), ...
    with the inverse stored as v - G2 - G3 - ...
    """
    if not F.is_near_identity(tol):
        raise ValueError("invert requires a germ with identity linear part")
    tr = F.trunc
    G = TruncatedGerm.identity(tr)
    for d in range(2, tr.degree + 1):
        defect = compose(F, G).homogeneous(d)
        if not defect.is_zero():
            G = G - defect
    return G


def check_germ(F: TruncatedGerm) -> TruncatedGerm:
    """All-signs-positive majorant bound for the inverse of id + (F - id).

    Built by the same degree recursion as :func:`invert` but accumulating
    magnitudes, so the majorant of invert(F) - id is dominated by
    check_germ(F) - id coefficientwise.
    """
    tr = F.trunc
    F0maj = (F - TruncatedGerm.identity(tr)).majorant()
    G = TruncatedGerm.identity(tr)
    for d in range(2, tr.degree + 1):
        G = G + compose(F0maj, G).homogeneous(d)
    return G


# --------------------------------------------------------------------------
# operator-valued germs
# --------------------------------------------------------------------------

class GermMatrix:
    """Operator-valued germ ``v -> (xi -> P(v) xi + Q(v) conj(xi))``.

    P and Q are J x J grids of scalar germs; the pair represents a real-linear
    operator on the truncated sequence space for every base point v.
    """

    __slots__ = ("trunc", "P", "Q")

    def __init__(self, trunc: Truncation, P, Q):
        self.trunc = trunc
        self.P = tuple(tuple(row) for row in P)
        self.Q = tuple(tuple(row) for row in Q)

    # ------------------------------------------------------------ factories
    @classmethod
    def zero(cls, trunc: Truncation) -> "GermMatrix":
        z = ScalarGerm.zero(trunc)
        J = trunc.modes
        row = [z] * J
        return cls(trunc, [row] * J, [row] * J)

    @classmethod
    def scalar_multiple(cls, trunc: Truncation, c) -> "GermMatrix":
        """Constant operator of multiplication by the complex scalar c."""
        z = ScalarGerm.zero(trunc)
        J = trunc.modes
        P = [[ScalarGerm.constant(trunc, c) if r == s else z
              for s in range(J)] for r in range(J)]
        Q = [[z] * J for _ in range(J)]
        return cls(trunc, P, Q)

    @classmethod
    def multiplication_by_i(cls, trunc: Truncation) -> "GermMatrix":
        return cls.scalar_multiple(trunc, 1j)

    @classmethod
    def identity_op(cls, trunc: Truncation) -> "GermMatrix":
        return cls.scalar_multiple(trunc, 1.0)

    # ------------------------------------------------------------ arithmetic
    def _zip(self, other, fn) -> "GermMatrix":
        P = [[fn(a, b) for a, b in zip(ra, rb)]
             for ra, rb in zip(self.P, other.P)]
        Q = [[fn(a, b) for a, b in zip(ra, rb)]
             for ra, rb in zip(self.Q, other.Q)]
        return GermMatrix(self.trunc, P, Q)

    def _map(self, fn) -> "GermMatrix":
        P = [[fn(g) for g in row] for row in self.P]
        Q = [[fn(g) for g in row] for row in self.Q]
        return GermMatrix(self.trunc, P, Q)

    def __add__(self, other):
        return self._zip(other, lambda a, b: a + b)

    def __sub__(self, other):
        return self._zip(other, lambda a, b: a - b)

    def __neg__(self):
        return self._map(lambda g: -g)

    def scale(self, c) -> "GermMatrix":
        """Scale the operator output: A -> (xi -> c * A(xi))."""
        return self._map(lambda g: g.scale(c))

    def input_scale(self, c) -> "GermMatrix":
        """Pre-compose with multiplication by c: A -> (xi -> A(c xi))."""
        cc = _conj_coeff(c)
        P = [[g.scale(c) for g in row] for row in self.P]
        Q = [[g.scale(cc) for g in row] for row in self.Q]
        return GermMatrix(self.trunc, P, Q)

    def times_tau(self, power: int = 1) -> "GermMatrix":
        return self._map(lambda g: g.times_tau(power))

    def at_tau(self, tau: float) -> "GermMatrix":
        return self._map(lambda g: g.at_tau(tau))

    def __matmul__(self, other: "GermMatrix") -> "GermMatrix":
        J = self.trunc.modes
        z = ScalarGerm.zero(self.trunc)
        oPc = [[g.conj() for g in row] for row in other.P]
        oQc = [[g.conj() for g in row] for row in other.Q]
        P = [[z] * J for _ in range(J)]
        Q = [[z] * J for _ in range(J)]
        for r in range(J):
            for c in range(J):
                p = z
                q = z
                for k in range(J):
                    if not self.P[r][k].is_zero():
                        if not other.P[k][c].is_zero():
                            p = p + self.P[r][k] * other.P[k][c]
                        if not other.Q[k][c].is_zero():
                            q = q + self.P[r][k] * other.Q[k][c]
                    if not self.Q[r][k].is_zero():
                        if not oQc[k][c].is_zero():
                            p = p + self.Q[r][k] * oQc[k][c]
                        if not oPc[k][c].is_zero():
                            q = q + self.Q[r][k] * oPc[k][c]
                P[r][c] = p
                Q[r][c] = q
        return GermMatrix(self.trunc, P, Q)

    # ------------------------------------------------------------- adjoints
    def adjoint(self) -> "GermMatrix":
        """Pointwise adjoint for the real pairing Re <a, conj(b)>."""
        J = self.trunc.modes
        P = [[self.P[c][r].conj() for c in range(J)] for r in range(J)]
        Q = [[self.Q[c][r] for c in range(J)] for r in range(J)]
        return GermMatrix(self.trunc, P, Q)

    def bilinear_transpose(self) -> "GermMatrix":
        """Transpose for the bilinear form sum(a_j b_j); complex-linear only."""
        if not self.is_complex_linear():
            raise ValueError("bilinear transpose needs a complex-linear "
                             "operator germ (no conjugate part)")
        J = self.trunc.modes
        P = [[self.P[c][r] for c in range(J)] for r in range(J)]
        return GermMatrix(self.trunc, P, [[ScalarGerm.zero(self.trunc)] * J
                                          for _ in range(J)])

    def is_complex_linear(self) -> bool:
        return all(g.is_zero() for row in self.Q for g in row)

    # ------------------------------------------------------------- actions
    def apply_germ(self, V: TruncatedGerm) -> TruncatedGerm:
        J = self.trunc.modes
        Vc = [g.conj() for g in V.components]
        comps = []
        for r in range(J):
            acc = ScalarGerm.zero(self.trunc)
            for c in range(J):
                if not (self.P[r][c].is_zero() or V.components[c].is_zero()):
                    acc = acc + self.P[r][c] * V.components[c]
                if not (self.Q[r][c].is_zero() or Vc[c].is_zero()):
                    acc = acc + self.Q[r][c] * Vc[c]
            comps.append(acc)
        return TruncatedGerm(self.trunc, comps)

    def evaluate_operator(self, v):
        """Complex matrices (Pm, Qm) of the operator at the point v."""
        J = self.trunc.modes
        Pm = np.array([[self.P[r][c].evaluate(v) for c in range(J)]
                       for r in range(J)], dtype=complex)
        Qm = np.array([[self.Q[r][c].evaluate(v) for c in range(J)]
                       for r in range(J)], dtype=complex)
        return Pm, Qm

    def apply_values(self, v, xi) -> np.ndarray:
        Pm, Qm = self.evaluate_operator(v)
        xi = np.asarray(xi, dtype=complex)
        return Pm @ xi + Qm @ xi.conj()

    def compose_point(self, inner: TruncatedGerm) -> "GermMatrix":
        """Substitute the base point: v -> A(inner(v)) (entries composed)."""
        comp = _Composer(inner)
        P = [[comp.scalar(g) for g in row] for row in self.P]
        Q = [[comp.scalar(g) for g in row] for row in self.Q]
        return GermMatrix(self.trunc, P, Q)

    # -------------------------------------------------------- angle algebra
    def angle_average_all(self) -> "GermMatrix":
        """Full torus average of the conjugated operator germ.

        Entry (r, c) of P keeps monomials with charge vector e_r - e_c; entry
        (r, c) of Q keeps charge vector e_r + e_c.
        """
        J = self.trunc.modes
        P = []
        Q = []
        for r in range(J):
            prow = []
            qrow = []
            for c in range(J):
                tp = [0] * J
                tp[r] += 1
                tp[c] -= 1
                prow.append(self.P[r][c].angle_filter_all(tp))
                tq = [0] * J
                tq[r] += 1
                tq[c] += 1
                qrow.append(self.Q[r][c].angle_filter_all(tq))
            P.append(prow)
            Q.append(qrow)
        return GermMatrix(self.trunc, P, Q)

    # ------------------------------------------------------------- misc
    def constant_part(self):
        """(P0, Q0) complex matrices of the degree-0 entries."""
        J = self.trunc.modes
        P0 = np.array([[self.P[r][c].terms.get((0, 0), 0j)
                        for c in range(J)] for r in range(J)], dtype=complex)
        Q0 = np.array([[self.Q[r][c].terms.get((0, 0), 0j)
                        for c in range(J)] for r in range(J)], dtype=complex)
        return P0, Q0

    def max_abs(self, max_degree=None, min_degree=0) -> float:
        vals = [g.max_abs(max_degree, min_degree)
                for row in self.P for g in row]
        vals += [g.max_abs(max_degree, min_degree)
                 for row in self.Q for g in row]
        return max(vals)

    def min_entry_degree(self) -> int:
        degs = [g.min_degree() for row in self.P for g in row]
        degs += [g.min_degree() for row in self.Q for g in row]
        return min(degs)

    def majorant_matrix(self) -> "GermMatrix":
        """Entrywise majorants combined so that |A(v) xi| <= M(|v|) |xi|."""
        J = self.trunc.modes
        z = ScalarGerm.zero(self.trunc)
        P = [[self.P[r][c].majorant() + self.Q[r][c].majorant()
              for c in range(J)] for r in range(J)]
        return GermMatrix(self.trunc, P, [[z] * J for _ in range(J)])

    def has_tau(self) -> bool:
        return any(g.has_tau() for row in self.P for g in row) or \
            any(g.has_tau() for row in self.Q for g in row)

    def __repr__(self):
        return (f"<GermMatrix J={self.trunc.modes} "
                f"max|c|={self.max_abs():.3e}>")


# --------------------------------------------------------------------------
# differentials, gradients, brackets
# --------------------------------------------------------------------------

def differential(F: TruncatedGerm) -> GermMatrix:
    """Differential dF(v) as an operator-valued germ (bilinear in (v; xi))."""
    J = F.trunc.modes
    P = [[F.components[r].wirtinger(c + 1, False) for c in range(J)]
         for r in range(J)]
    Q = [[F.components[r].wirtinger(c + 1, True) for c in range(J)]
         for r in range(J)]
    return GermMatrix(F.trunc, P, Q)


def adjoint_differential(F: TruncatedGerm, mode: str = "*") -> GermMatrix:
    """Adjoint of dF(v): '*' for the real pairing, 't' for the bilinear one."""
    D = differential(F)
    if mode == "*":
        return D.adjoint()
    if mode == "t":
        return D.bilinear_transpose()
    raise ValueError("mode must be '*' or 't'")


def gradient(f: ScalarGerm) -> TruncatedGerm:
    """Gradient for the real pairing: component j is 2 d f / d conj(v_j).

    The input is symmetrized first so it represents a real-valued function.
    """
    fr = f.hermitian_symmetrize()
    tr = f.trunc
    comps = [fr.wirtinger(j, True).scale(2.0)
             for j in range(1, tr.modes + 1)]
    return TruncatedGerm(tr, comps)


def pairing_germ(a: TruncatedGerm, b: TruncatedGerm) -> ScalarGerm:
    """Germ of the real pairing sum_j Re a_j(v) conj(b_j(v))."""
    acc = ScalarGerm.zero(a.trunc)
    for ga, gb in zip(a.components, b.components):
        if ga.is_zero() or gb.is_zero():
            continue
        acc = acc + (ga * gb.conj() + ga.conj() * gb).scale(0.5)
    return acc


def poisson_bracket(f: ScalarGerm, g: ScalarGerm) -> ScalarGerm:
    """Canonical bracket <i grad f, grad g>, truncated at degree N."""
    return pairing_germ(gradient(f).scale(1j), gradient(g))


def chi_field(trunc: Truncation, j: int) -> TruncatedGerm:
    """Rotation vector field of mode j: (0, ..., i v_j, ..., 0)."""
    comps = [ScalarGerm.variable(trunc, k, coeff=1j) if k == j
             else ScalarGerm.zero(trunc)
             for k in range(1, trunc.modes + 1)]
    return TruncatedGerm(trunc, comps)


def action_germ(trunc: Truncation, j: int) -> ScalarGerm:
    """The action of mode j: |v_j|^2 / 2."""
    a = [0] * trunc.modes
    b = [0] * trunc.modes
    a[j - 1] = 1
    b[j - 1] = 1
    return ScalarGerm.monomial(trunc, a, b, 0.5)


# --------------------------------------------------------------------------
# homotopy flows
# --------------------------------------------------------------------------

class FlowMap:
    """Time-tau flow of a polynomial vector field, exact in tau."""

    def __init__(self, tau_germ: TruncatedGerm):
        self.tau_germ = tau_germ

    def at(self, tau: float) -> TruncatedGerm:
        return self.tau_germ.at_tau(tau)

    def time_one(self) -> TruncatedGerm:
        return self.at(1.0)


def flow(V: TruncatedGerm) -> FlowMap:
    """Flow map of ``dv/dtau = V^tau(v)`` built by exact Picard iteration.

    V must vanish to second order; its coefficients may be TauPoly values.
    Each iteration extends the correct degree range by one, so degree-N
    exactness is reached after N-1 passes; all tau integrals are exact.
    """
    if V.min_degree() < 2:
        raise ValueError("flow field must vanish to second order")
    tr = V.trunc
    ident = TruncatedGerm.identity(tr)
    u = ident
    for _ in range(max(1, tr.degree - 1)):
        u = ident + compose(V, u).tau_integral()
    return FlowMap(u)
