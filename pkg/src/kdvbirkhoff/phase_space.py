"""Weighted sequence spaces, Fourier correspondence and reality maps.

Sequences live either on the positive modes 1..J or on the symmetric
nonzero modes -J..-1, 1..J.  Potentials on the circle are represented by
grid samples over [0, 2pi) and correspond to symmetric sequences through
``u(x) = (1 / 2 sqrt(pi)) * sum_j w_j exp(i j x)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

POSITIVE = "positive"
SYMMETRIC = "symmetric"

__all__ = [
    "ModeSequence",
    "GridFunction",
    "sobolev_norm",
    "fourier_analyze",
    "fourier_synthesize",
    "weight_forward",
    "weight_backward",
    "diag_weight",
    "reality_project",
    "reality_embed",
]


def _sym_positions(cutoff: int) -> np.ndarray:
    return np.concatenate([np.arange(-cutoff, 0), np.arange(1, cutoff + 1)])


@dataclass(frozen=True)
class ModeSequence:
    """Finite complex sequence over positive or symmetric nonzero modes.

    Entries are stored in a read-only array: positions ``0..J-1`` hold modes
    ``1..J`` for the positive index set, while the symmetric set stores
    ``-J..-1`` followed by ``1..J``.
    """

    entries: np.ndarray
    index_set: str = POSITIVE
    cutoff: int = field(default=0)

    def __post_init__(self):
        if self.index_set not in (POSITIVE, SYMMETRIC):
            raise ValueError("index_set must be 'positive' or 'symmetric'")
        arr = np.array(self.entries, dtype=complex)
        width = self.cutoff if self.index_set == POSITIVE else 2 * self.cutoff
        if self.cutoff < 1 or arr.shape != (width,):
            raise ValueError("entry array does not match the cutoff")
        arr.flags.writeable = False
        object.__setattr__(self, "entries", arr)

    # ------------------------------------------------------------ factories
    @classmethod
    def zeros(cls, cutoff: int, index_set: str = POSITIVE) -> "ModeSequence":
        n = cutoff if index_set == POSITIVE else 2 * cutoff
        return cls(np.zeros(n, dtype=complex), index_set, cutoff)

    @classmethod
    def unit(cls, cutoff: int, j: int, value: complex = 1.0,
             index_set: str = POSITIVE) -> "ModeSequence":
        seq = cls.zeros(cutoff, index_set)
        arr = seq.entries.copy()
        arr[seq._pos(j)] = value
        return cls(arr, index_set, cutoff)

    @classmethod
    def from_dict(cls, cutoff: int, values: dict, index_set: str = POSITIVE):
        seq = cls.zeros(cutoff, index_set)
        arr = seq.entries.copy()
        for j, val in values.items():
            arr[seq._pos(j)] = val
        return cls(arr, index_set, cutoff)

    # -------------------------------------------------------------- access
    def _pos(self, j: int) -> int:
        J = self.cutoff
        if self.index_set == POSITIVE:
            if not 1 <= j <= J:
                raise IndexError(f"mode {j} outside 1..{J}")
            return j - 1
        if j == 0 or abs(j) > J:
            raise IndexError(f"mode {j} outside the symmetric set")
        return j + J if j < 0 else j + J - 1

    def entry(self, j: int) -> complex:
        return complex(self.entries[self._pos(j)])

    @property
    def modes(self) -> np.ndarray:
        if self.index_set == POSITIVE:
            return np.arange(1, self.cutoff + 1)
        return _sym_positions(self.cutoff)

    def is_real(self, tol: float = 1e-12) -> bool:
        """Symmetric-set reality: w_{-j} == conj(w_j) for every j."""
        if self.index_set != SYMMETRIC:
            raise ValueError("reality is defined on the symmetric index set")
        J = self.cutoff
        neg = self.entries[:J][::-1]   # modes -1..-J
        pos = self.entries[J:]         # modes 1..J
        return bool(np.abs(neg - pos.conj()).max() <= tol)

    def norm(self, m: float) -> float:
        return sobolev_norm(self, m)

    def to_dict(self) -> dict:
        return {int(j): complex(self.entries[self._pos(int(j))])
                for j in self.modes}


def sobolev_norm(w: ModeSequence, m: float) -> float:
    """Weighted l2 norm: (sum over modes of |j|^(2m) |w_j|^2)^(1/2)."""
    weights = np.abs(w.modes).astype(float) ** (2.0 * m)
    return float(np.sqrt(np.sum(weights * np.abs(w.entries) ** 2)))


@dataclass(frozen=True)
class GridFunction:
    """Samples of a zero-mean function on a uniform grid over [0, 2pi)."""

    samples: np.ndarray
    require_zero_mean: bool = True
    mean_tol: float = 1e-10

    def __post_init__(self):
        arr = np.array(self.samples, dtype=complex)
        n = arr.shape[0]
        if n < 4 or (n & (n - 1)) != 0:
            raise ValueError("grid size must be a power of two, >= 4")
        if self.require_zero_mean and abs(arr.mean()) > self.mean_tol:
            raise ValueError(f"mean value {arr.mean():.3e} exceeds tolerance")
        arr.flags.writeable = False
        object.__setattr__(self, "samples", arr)

    @property
    def size(self) -> int:
        return self.samples.shape[0]

    @property
    def grid(self) -> np.ndarray:
        n = self.size
        return 2.0 * np.pi * np.arange(n) / n

    def l2_norm(self) -> float:
        """Norm in L2(0, 2pi) by exact trapezoid quadrature on the grid."""
        n = self.size
        return float(np.sqrt(2.0 * np.pi / n * np.sum(np.abs(self.samples) ** 2)))


def fourier_analyze(u: GridFunction, cutoff: int) -> ModeSequence:
    """Expand a grid function over exp(i j x): w_j = 2 sqrt(pi) * uhat_j.

    The grid must resolve all retained modes (size >= 4 * cutoff); a mean
    value beyond the grid function's tolerance is rejected at construction.
    """
    n = u.size
    if n < 4 * cutoff:
        raise ValueError("grid too coarse for the requested cutoff")
    uhat = np.fft.fft(u.samples) / n
    J = cutoff
    w = np.zeros(2 * J, dtype=complex)
    for j in range(1, J + 1):
        w[J + j - 1] = 2.0 * np.sqrt(np.pi) * uhat[j]
        w[J - j] = 2.0 * np.sqrt(np.pi) * uhat[n - j]
    return ModeSequence(w, SYMMETRIC, J)


def fourier_synthesize(w: ModeSequence, grid_size: int | None = None) -> GridFunction:
    """Inverse of :func:`fourier_analyze` (zero mean by construction)."""
    if w.index_set != SYMMETRIC:
        raise ValueError("synthesis needs a symmetric-mode sequence")
    J = w.cutoff
    if grid_size is None:
        grid_size = 4 * J
        while grid_size & (grid_size - 1):
            grid_size += 1
    if grid_size < 4 * J:
        raise ValueError("grid too coarse for the sequence cutoff")
    uhat = np.zeros(grid_size, dtype=complex)
    for j in range(1, J + 1):
        uhat[j] = w.entries[J + j - 1] / (2.0 * np.sqrt(np.pi))
        uhat[grid_size - j] = w.entries[J - j] / (2.0 * np.sqrt(np.pi))
    samples = np.fft.ifft(uhat) * grid_size
    return GridFunction(samples)


def weight_forward(u: ModeSequence) -> ModeSequence:
    """Mode-j scaling by j^(-1/2); an isometry h^m -> h^(m+1/2)."""
    return diag_weight(u, -0.5)


def weight_backward(v: ModeSequence) -> ModeSequence:
    return diag_weight(v, 0.5)


def diag_weight(w: ModeSequence, r: float) -> ModeSequence:
    """Diagonal weight |j|^r on either index set (r = 1/2 is the map used
    to conjugate the gap coordinates into the KdV phase space)."""
    scaled = w.entries * np.abs(w.modes).astype(float) ** r
    return ModeSequence(scaled, w.index_set, w.cutoff)


def reality_project(w: ModeSequence) -> ModeSequence:
    """Keep the positive modes of a symmetric sequence."""
    if w.index_set != SYMMETRIC:
        raise ValueError("projection expects a symmetric sequence")
    return ModeSequence(w.entries[w.cutoff:], POSITIVE, w.cutoff)


def reality_embed(v: ModeSequence) -> ModeSequence:
    """Right inverse of the projection: w_{-j} = conj(w_j)."""
    if v.index_set != POSITIVE:
        raise ValueError("embedding expects a positive sequence")
    J = v.cutoff
    arr = np.concatenate([v.entries[::-1].conj(), v.entries])
    return ModeSequence(arr, SYMMETRIC, J)
