"""Spectral construction of Birkhoff coordinates from the Hill operator.

The Lax operator ``L_u = -d^2/dx^2 - u(x)`` of KdV acts on the doubled
period ``[0, 4pi]`` and is discretized in the orthonormal half-mode basis
``exp(i k x / 2) / sqrt(4 pi)``, ``|k| <= K``.  From its eigenvalues and
two-dimensional spectral subspaces the module builds gap lengths, spectral
projections (with a resolvent-contour cross check), the isometric
transformation operators onto the perturbed subspaces, the gap coordinates
``z_j`` and the near-identity map ``Psi`` on weighted positive sequences,
together with the closed-form quadratic and cubic Taylor kernels of ``z``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import scipy.linalg

from .germs import ScalarGerm, TruncatedGerm
from .phase_space import (SYMMETRIC, GridFunction, ModeSequence,
                          diag_weight, fourier_analyze, reality_embed)
from .truncation import Truncation

SQRT_PI = math.sqrt(math.pi)

__all__ = [
    "HillOperator",
    "SpectralData",
    "z_map",
    "psi_map",
    "kernel_Z2",
    "eval_Z2",
    "kernel_Z3",
    "kernel_Z3_correction",
    "eval_Z3",
    "psi2",
    "kdv_germ",
    "extend_germ_numeric",
    "gap_gradient",
    "nu_poisson_bracket",
    "z2_kernel_norm",
    "z3_kernel_norm",
    "z3_reindexed_norm",
]


@dataclass(frozen=True)
class SpectralData:
    """Sorted eigenvalues, eigenvectors, and gap lengths of a discretized
    Hill operator.  For complex potentials the ordering is by real part and
    flagged provisional through ``hermitian = False``."""

    lambdas: np.ndarray
    vectors: np.ndarray
    gaps: np.ndarray            # gaps[j-1] = lambda_{2j} - lambda_{2j-1}
    hermitian: bool
    degenerate_pairs: tuple

    def gap(self, j: int) -> complex:
        return self.gaps[j - 1]


class HillOperator:
    """Half-mode Fourier-Galerkin matrix of ``-d^2/dx^2 - u`` on [0, 4pi].

    Parameters
    ----------
    u : GridFunction or symmetric ModeSequence
        Zero-mean potential of period 2pi (complex allowed).
    K : int
        Half-mode cutoff; the basis is exp(i k x / 2), |k| <= K.
    """

    def __init__(self, u, K: int):
        if isinstance(u, GridFunction):
            w = fourier_analyze(u, u.size // 4)
        elif isinstance(u, ModeSequence) and u.index_set == SYMMETRIC:
            w = u
        else:
            raise TypeError("potential must be a GridFunction or a "
                            "symmetric ModeSequence")
        active = [int(j) for j in w.modes if abs(w.entry(int(j))) > 0.0]
        max_mode = max((abs(j) for j in active), default=0)
        if K < 2 * max_mode + 2:
            raise ValueError(f"half-mode cutoff K={K} too small for the "
                             f"potential bandwidth {max_mode} (aliasing)")
        self.K = int(K)
        self.w = w
        n = 2 * self.K + 1
        k = np.arange(-self.K, self.K + 1)
        A = np.diag((k.astype(float) / 2.0) ** 2).astype(complex)
        for j in active:
            uhat = w.entry(j) / (2.0 * SQRT_PI)
            A -= uhat * np.eye(n, k=-2 * j)
        self.k = k
        self.matrix = A
        self.is_real = bool(np.abs(A - A.conj().T).max() <= 1e-12)
        self._spectral: SpectralData | None = None
        self._proj: dict = {}
        self._transf: dict = {}

    # ------------------------------------------------------------ spectrum
    def eigen(self) -> SpectralData:
        if self._spectral is not None:
            return self._spectral
        if self.is_real:
            lam, vec = np.linalg.eigh(self.matrix)
        else:
            lam, vec = scipy.linalg.eig(self.matrix)
            order = np.argsort(lam.real)
            lam, vec = lam[order], vec[:, order]
        npairs = (len(lam) - 1) // 2
        gaps = np.array([lam[2 * j] - lam[2 * j - 1]
                         for j in range(1, npairs + 1)])
        degenerate = tuple(j for j in range(1, npairs + 1)
                           if abs(gaps[j - 1]) < 1e-12)
        if self.is_real:
            lam, gaps = lam.real, gaps.real
        self._spectral = SpectralData(lam, vec, gaps, self.is_real,
                                      degenerate)
        return self._spectral

    # --------------------------------------------------------- projections
    def projection_unperturbed(self, j: int) -> np.ndarray:
        P = np.zeros_like(self.matrix)
        i_plus = self.K + j
        i_minus = self.K - j
        P[i_plus, i_plus] = 1.0
        P[i_minus, i_minus] = 1.0
        return P

    def projection(self, j: int) -> np.ndarray:
        """Rank-two spectral projection onto the j-th eigenvalue pair.

        Real potentials use the orthogonal eigenprojections; complex ones
        fall back to the resolvent contour.
        """
        if j in self._proj:
            return self._proj[j]
        if self.is_real:
            sd = self.eigen()
            y1 = sd.vectors[:, 2 * j - 1]
            y2 = sd.vectors[:, 2 * j]
            P = np.outer(y1, y1.conj()) + np.outer(y2, y2.conj())
        else:
            P = self.projection_contour(j)
        self._proj[j] = P
        return P

    def projection_contour(self, j: int, nodes: int = 64,
                           delta0: float = 0.125) -> np.ndarray:
        """Trapezoid quadrature of the resolvent on |lambda - j^2/4| = delta0*j.

        Exponentially accurate in the node count for the analytic integrand;
        rejects the configuration when an eigenvalue sits near the contour.
        """
        center = j * j / 4.0
        radius = delta0 * j
        lam = self.eigen().lambdas
        dist = np.abs(np.abs(lam - center) - radius).min()
        if dist < 1e-8:
            raise ValueError(f"eigenvalue within {dist:.2e} of the contour "
                             f"for pair {j}; projection ill-defined")
        n = self.matrix.shape[0]
        theta = 2.0 * np.pi * np.arange(nodes) / nodes
        P = np.zeros((n, n), dtype=complex)
        eye = np.eye(n, dtype=complex)
        for t in theta:
            lam_t = center + radius * np.exp(1j * t)
            R = np.linalg.solve(self.matrix - lam_t * eye, eye)
            P += np.exp(1j * t) * R
        return -(radius / nodes) * P

    # ----------------------------------------------- transformation operator
    def transformation_operator(self, j: int) -> np.ndarray:
        """Isometry (1 - (P_j - P_j0)^2)^(-1/2) P_j onto the perturbed pair
        subspace.  The Hermitian case uses an exact rank-4 eigendecomposition
        of the deviation; complex potentials use a dense matrix square root.
        """
        if j in self._transf:
            return self._transf[j]
        P = self.projection(j)
        P0 = self.projection_unperturbed(j)
        D = P - P0
        n = D.shape[0]
        if self.is_real:
            sd = self.eigen()
            basis = np.column_stack([sd.vectors[:, 2 * j - 1],
                                     sd.vectors[:, 2 * j],
                                     np.eye(n)[:, self.K + j],
                                     np.eye(n)[:, self.K - j]])
            Qb, _ = np.linalg.qr(basis)
            S4 = Qb.conj().T @ (D @ (D @ Qb))
            wv, V4 = np.linalg.eigh(0.5 * (S4 + S4.conj().T))
            if wv.max() >= 1.0:
                raise ValueError(f"deviation spectral radius "
                                 f"{wv.max():.3f} >= 1 for pair {j}")
            corr = Qb @ (V4 * ((1.0 - wv) ** -0.5 - 1.0)) @ (V4.conj().T
                                                             @ Qb.conj().T)
            U = P + corr @ P
        else:
            S = D @ D
            nrm = np.linalg.norm(S, 2)
            if nrm >= 1.0:
                raise ValueError(f"deviation squared norm {nrm:.3f} >= 1 "
                                 f"for pair {j}")
            root = scipy.linalg.sqrtm(np.eye(n) - S)
            U = np.linalg.solve(root, P)
        self._transf[j] = U
        return U

    # ------------------------------------------------------ gap coordinates
    def f_vector(self, j: int) -> np.ndarray:
        """Coefficients of f_j = U_|j| f_j0 with f_j0 = e^{-ijx/2}/sqrt(2 pi)."""
        if j == 0:
            raise ValueError("mode 0 is excluded")
        f0 = np.zeros(self.matrix.shape[0], dtype=complex)
        f0[self.K - j] = math.sqrt(2.0)
        return self.transformation_operator(abs(j)) @ f0

    def z(self, j: int) -> complex:
        """Gap coordinate: -sqrt(pi) * integral of ((L_u - j^2/4) f_j) f_j."""
        f = self.f_vector(j)
        g = self.matrix @ f - (j * j / 4.0) * f
        # bilinear pairing sum_k a_k b_{-k} == integral of a(x) b(x) dx
        return complex(-SQRT_PI * np.sum(g * f[::-1]))


def z_map(u, j: int, K: int) -> complex:
    return HillOperator(u, K).z(j)


def psi_map(v: ModeSequence, jmax: int | None = None,
            K: int | None = None) -> ModeSequence:
    """Near-identity map on positive sequences built from the gap
    coordinates: component j is ``z_j(u) / sqrt(j)`` for the real potential
    with weighted modes ``w = |j|^(1/2) v`` extended by conjugation."""
    if jmax is None:
        jmax = v.cutoff
    if K is None:
        K = 8 * max(v.cutoff, jmax)
    w = diag_weight(reality_embed(v), 0.5)
    H = HillOperator(w, K)
    out = np.array([H.z(j) / math.sqrt(j) for j in range(1, jmax + 1)])
    return ModeSequence(out, "positive", jmax)


# --------------------------------------------------------------------------
# closed-form Taylor kernels of the gap coordinates
# --------------------------------------------------------------------------

def kernel_Z2(j: int, k: int) -> float:
    """Coefficient of w_k w_{j-k} in the quadratic part of z_j."""
    if k == 0 or k == j or j - k == 0:
        return 0.0
    return 1.0 / (2.0 * SQRT_PI * k * (k - j))


def eval_Z2(w: ModeSequence, j: int) -> complex:
    J = w.cutoff
    total = 0j
    for k in range(-J, J + 1):
        m = j - k
        if k == 0 or k == j or m == 0 or abs(m) > J:
            continue
        total += kernel_Z2(j, k) * w.entry(k) * w.entry(m)
    return total


def kernel_Z3(j: int, i1: int, i2: int) -> float:
    """Main-sum coefficient of w_{i1} w_{i2} w_{j-i1-i2} in the cubic part."""
    s = i1 + i2
    if i1 == 0 or i2 == 0 or i1 == j or s == 0 or s == j:
        return 0.0
    return 1.0 / (4.0 * math.pi * i1 * (i1 - j) * s * (s - j))


def kernel_Z3_correction(j: int, l: int) -> float:
    """Coefficient of w_j w_l w_{-l} in the diagonal correction sum."""
    if l == 0 or l == j:
        return 0.0
    return -1.0 / (4.0 * math.pi * l * l * (l - j) ** 2)


def eval_Z3(w: ModeSequence, j: int) -> complex:
    J = w.cutoff
    total = 0j
    for i1 in range(-J, J + 1):
        if i1 == 0:
            continue
        for i2 in range(-J, J + 1):
            if i2 == 0:
                continue
            i3 = j - i1 - i2
            if i3 == 0 or abs(i3) > J:
                continue
            c = kernel_Z3(j, i1, i2)
            if c:
                total += c * w.entry(i1) * w.entry(i2) * w.entry(i3)
    if abs(j) <= J and j != 0:
        wj = w.entry(j)
        for l in range(-J, J + 1):
            if l == 0 or abs(-l) > J:
                continue
            c = kernel_Z3_correction(j, l)
            if c:
                total += c * wj * w.entry(l) * w.entry(-l)
    return total


def psi2(v: ModeSequence) -> ModeSequence:
    """Quadratic part of the map on positive sequences, in closed form."""
    J = v.cutoff
    vp = reality_embed(v)
    out = np.zeros(J, dtype=complex)
    for j in range(1, J + 1):
        acc = 0j
        for k in range(-J, J + 1):
            m = j - k
            if k == 0 or k == j or m == 0 or abs(m) > J or abs(k) > J:
                continue
            num = math.sqrt(abs(k)) * math.sqrt(abs(m))
            acc += num / (k * (k - j)) * vp.entry(k) * vp.entry(m)
        out[j - 1] = acc / (2.0 * math.sqrt(math.pi * j))
    return ModeSequence(out, "positive", J)


# --------------------------------------------------------------------------
# the truncated germ of the map (input for the normal-form pipeline)
# --------------------------------------------------------------------------

def _signed_monomial(trunc: Truncation, modes):
    """Exponent pair of a product of extended coordinates v'_m (negative
    indices mean conjugates)."""
    a = [0] * trunc.modes
    b = [0] * trunc.modes
    for m in modes:
        if m > 0:
            a[m - 1] += 1
        else:
            b[-m - 1] += 1
    return a, b


def kdv_germ(trunc: Truncation) -> TruncatedGerm:
    """Degree-<=3 truncation of the gap-coordinate map as a germ.

    The quadratic and cubic parts come from the closed-form kernels
    conjugated by the |j|^(1/2) weight and restricted to the real class;
    all kernel indices are truncated to the ambient mode window.  Use
    :func:`extend_germ_numeric` for an approximate degree-4 extension.
    """
    if trunc.degree < 2 or trunc.degree > 3:
        raise ValueError("closed-form germ covers degrees 2 and 3 only")
    J = trunc.modes
    comps = []
    for j in range(1, J + 1):
        terms = {}
        terms[trunc.var_key(j)] = 1.0 + 0j

        def add(modes, coeff):
            if abs(coeff) == 0.0:
                return
            a, b = _signed_monomial(trunc, modes)
            key = trunc.pack(a, b)
            terms[key] = terms.get(key, 0j) + coeff

        for k in range(-J, J + 1):
            m = j - k
            if k == 0 or k == j or m == 0 or abs(m) > J or abs(k) > J:
                continue
            num = math.sqrt(abs(k) * abs(m) / j)
            add((k, m), num / (2.0 * SQRT_PI * k * (k - j)))

        if trunc.degree >= 3:
            for i1 in range(-J, J + 1):
                if i1 == 0:
                    continue
                for i2 in range(-J, J + 1):
                    if i2 == 0:
                        continue
                    i3 = j - i1 - i2
                    if i3 == 0 or abs(i3) > J:
                        continue
                    c = kernel_Z3(j, i1, i2)
                    if c:
                        wgt = math.sqrt(abs(i1) * abs(i2) * abs(i3) / j)
                        add((i1, i2, i3), c * wgt)
            for l in range(-J, J + 1):
                if l == 0:
                    continue
                c = kernel_Z3_correction(j, l)
                if c:
                    add((j, l, -l), c * abs(l))

        comps.append(ScalarGerm(trunc, terms))
    return TruncatedGerm(trunc, comps)


def extend_germ_numeric(germ: TruncatedGerm, target: Truncation,
                        rng, K: int | None = None,
                        scale: float = 0.03,
                        oversample: float = 2.0) -> TruncatedGerm:
    """Approximate degree-4 extension of the closed-form germ.

    Samples the spectral map at scaled random points, removes the known
    degree-<=3 part, applies one Richardson step to suppress the degree-5
    remainder and solves a least-squares system for the degree-4 monomial
    coefficients.  Flagged approximate: relative kernel accuracy is only
    O(scale^2); intended for small mode counts.
    """
    tr = germ.trunc
    if target.modes != tr.modes or target.degree != 4:
        raise ValueError("extension targets degree 4 at the same mode count")
    J = tr.modes
    if K is None:
        K = 8 * J + 32
    keys = []
    seen = set()
    probe = ScalarGerm.zero(target)
    # enumerate degree-4 monomial keys once
    def gen(slots_left, start, a, b):
        if slots_left == 0:
            dk = target.pack(a, b)
            if dk not in seen:
                seen.add(dk)
                keys.append(dk)
            return
        for s in range(start, 2 * J):
            if s < J:
                a[s] += 1
            else:
                b[s - J] += 1
            gen(slots_left - 1, s, a, b)
            if s < J:
                a[s] -= 1
            else:
                b[s - J] -= 1
    gen(4, 0, [0] * J, [0] * J)
    nsamp = int(oversample * len(keys))
    V = np.zeros((nsamp, len(keys)), dtype=complex)
    R = np.zeros((nsamp, J), dtype=complex)
    for s in range(nsamp):
        v = rng.standard_normal(J) + 1j * rng.standard_normal(J)
        v /= np.abs(v).max()
        def rem(sc):
            pt = ModeSequence(sc * v, "positive", J)
            full = psi_map(pt, K=K).entries
            model = germ.evaluate(sc * v)
            return (full - model) / sc ** 4
        e1 = rem(scale)
        e2 = rem(scale / 2.0)
        R[s] = 2.0 * e2 - e1          # kills the degree-5 remainder term
        vv = np.concatenate([v, v.conj()])
        for c, (d, key) in enumerate(keys):
            val = 1.0 + 0j
            kk, sl = key, 0
            while kk:
                e = kk & 0xF
                if e:
                    val *= vv[sl] ** e
                kk >>= 4
                sl += 1
            V[s, c] = val
    coef, *_ = np.linalg.lstsq(V, R, rcond=None)
    comps = []
    for r in range(J):
        terms = dict(germ.components[r].embedded(target).terms)
        for c, dk in enumerate(keys):
            val = coef[c, r]
            if abs(val) > 1e-10:
                terms[dk] = terms.get(dk, 0j) + val
        comps.append(ScalarGerm(target, terms))
    return TruncatedGerm(target, comps)


# --------------------------------------------------------------------------
# gap gradients and the KdV-side Poisson bracket
# --------------------------------------------------------------------------

def _eigenfunction_on_grid(H: HillOperator, vec: np.ndarray,
                           npoints: int) -> np.ndarray:
    """Values of an eigenvector on the doubled-period grid (2*npoints)."""
    t = np.arange(2 * npoints)
    phases = np.exp(1j * math.pi * np.outer(t, H.k) / npoints)
    return phases @ vec / math.sqrt(4.0 * math.pi)


def gap_gradient(u, j: int, K: int, npoints: int | None = None) -> GridFunction:
    """L2 gradient of the squared gap length on the base period.

    Uses the eigenvalue derivative through the squared normalized
    eigenfunctions, folded back to the 2pi period.  Near-degenerate pairs
    (gap below 1e-8) return the zero gradient: the squared gap is a
    nonnegative analytic functional, so its zeros are critical points
    (equivalently, the two-dimensional pair-block analysis gives a gradient
    proportional to the gap itself).
    """
    H = u if isinstance(u, HillOperator) else HillOperator(u, K)
    if not H.is_real:
        raise ValueError("gap gradients are defined for real potentials")
    if npoints is None:
        npoints = 1 << (2 * H.K - 1).bit_length()
    sd = H.eigen()
    gamma = sd.gap(j)
    if gamma < 1e-8:
        return GridFunction(np.zeros(npoints, dtype=complex))
    grads = []
    for idx in (2 * j - 1, 2 * j):
        y = _eigenfunction_on_grid(H, sd.vectors[:, idx], npoints)
        dens = (np.abs(y) ** 2)
        folded = dens[:npoints] + dens[npoints:]
        grads.append(-folded)          # d lambda / du in direction delta-u
    grad = 2.0 * gamma * (grads[1] - grads[0])
    return GridFunction(grad.astype(complex), require_zero_mean=False)


def nu_poisson_bracket(f: GridFunction, g: GridFunction) -> float:
    """Bracket of functionals on the KdV side from their L2 gradients:
    ``-integral over the period of grad F d/dx(grad G)``."""
    if f.size != g.size:
        raise ValueError("gradients must share a grid")
    n = f.size
    freqs = np.fft.fftfreq(n, d=1.0 / n)
    dg = np.fft.ifft(1j * freqs * np.fft.fft(g.samples))
    return float((-2.0 * np.pi / n * np.sum(f.samples * dg)).real)


# --------------------------------------------------------------------------
# kernel norms for the decay fits
# --------------------------------------------------------------------------

def _z3_sym_value(m, a, b, c):
    """Symmetrized cubic kernel of z_m at the lattice point (a, b, c).

    Vectorized over numpy arrays; points off the simplex a+b+c = m give 0.
    """
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    c = np.asarray(c, dtype=float)
    msk_simplex = (a + b + c == m) & (a != 0) & (b != 0) & (c != 0)
    total = np.zeros(np.broadcast(a, b, c).shape, dtype=float)
    for (x, y, z) in ((a, b, c), (a, c, b), (b, a, c),
                      (b, c, a), (c, a, b), (c, b, a)):
        s = x + y
        ok = msk_simplex & (x != m) & (s != 0) & (s != m)
        with np.errstate(divide="ignore", invalid="ignore"):
            val = 1.0 / (4.0 * math.pi * x * (x - m) * s * (s - m))
        total += np.where(ok, val, 0.0)
        okc = msk_simplex & (x == m) & (z == -y) & (y != m)
        with np.errstate(divide="ignore", invalid="ignore"):
            corr = -1.0 / (4.0 * math.pi * y * y * (y - m) ** 2)
        total += np.where(okc, corr, 0.0)
    return total / 6.0


def z2_kernel_norm(j: int, band: int = 4000) -> float:
    """l2 norm over the simplex of the symmetric quadratic kernel of z_j."""
    k = np.arange(-band, band + 1)
    k = k[(k != 0) & (k != j) & (j - k != 0)]
    vals = 1.0 / (2.0 * SQRT_PI * k * (k - j))
    return float(np.sqrt(np.sum(vals ** 2)))


def z3_kernel_norm(j: int, band: int = 220) -> float:
    """l2 norm (window-truncated) of the symmetric cubic kernel of z_j."""
    rng_ = np.arange(-band, band + 1)
    a, b = np.meshgrid(rng_, rng_, indexing="ij")
    c = j - a - b
    vals = _z3_sym_value(j, a, b, c)
    return float(np.sqrt(np.sum(vals ** 2)))


def z3_reindexed_norm(j: int, band_out: int = 120,
                      band_in: int = 220) -> float:
    """l2 norm of the kernel re-indexed across output and first slot.

    Measures the decay of B(i1, i2, i3) = K3^{i1}(j, i2, i3); the support
    constraint pins i3 = i1 - j - i2.
    """
    i2 = np.arange(-band_in, band_in + 1)
    jcol = np.full_like(i2, j)
    total = 0.0
    for m in range(-band_out, band_out + 1):
        if m == 0:
            continue
        i3 = m - j - i2
        vals = _z3_sym_value(m, jcol, i2, i3)
        total += float(np.sum(vals ** 2))
    return math.sqrt(total)
