"""Ambient truncation context and packed-monomial utilities.

Every polynomial object in the package lives on modes ``1..J`` and keeps
monomials ``v^alpha * conj(v)^beta`` up to a fixed total degree ``N``.  A
monomial is packed into a single integer with one 4-bit exponent per slot
(the ``alpha`` block first, then the ``beta`` block), so that multiplying
two monomials is a plain integer addition and no carries can occur as long
as total degrees stay <= 15.
"""

from __future__ import annotations

from dataclasses import dataclass

SLOT_BITS = 4
SLOT_MASK = (1 << SLOT_BITS) - 1
MAX_DEGREE = SLOT_MASK


@dataclass(frozen=True)
class Truncation:
    """Shared cutoffs: mode count, total-degree bound, purge threshold.

    Parameters
    ----------
    modes : int
        Number of retained phase-space modes J; coordinates are v_1..v_J.
    degree : int
        Total-degree cutoff N; monomials above it are silently dropped.
    purge : float
        Coefficients with magnitude <= purge are removed after every
        algebraic operation to bound fill-in.
    """

    modes: int
    degree: int
    purge: float = 1e-15

    def __post_init__(self):
        if self.modes < 1:
            raise ValueError("need at least one mode")
        if not 1 <= self.degree <= MAX_DEGREE:
            raise ValueError(f"degree must be in 1..{MAX_DEGREE}")

    # ---------------------------------------------------------------- slots
    @property
    def slots(self) -> int:
        return 2 * self.modes

    def _slot(self, j: int, conjugated: bool) -> int:
        if not 1 <= j <= self.modes:
            raise ValueError(f"mode {j} outside 1..{self.modes}")
        return (self.modes + j - 1) if conjugated else (j - 1)

    def var_key(self, j: int, conjugated: bool = False):
        """Packed key of the degree-1 monomial v_j (or conj(v_j))."""
        return (1, 1 << (SLOT_BITS * self._slot(j, conjugated)))

    # ------------------------------------------------------------- packing
    def pack(self, alpha, beta):
        """Pack exponent sequences (length J each) into a (degree, key) pair."""
        alpha = tuple(alpha)
        beta = tuple(beta)
        if len(alpha) != self.modes or len(beta) != self.modes:
            raise ValueError("exponent vectors must have length == modes")
        key = 0
        deg = 0
        for s, e in enumerate(alpha + beta):
            if e < 0 or e > MAX_DEGREE:
                raise ValueError("exponent out of range")
            key |= e << (SLOT_BITS * s)
            deg += e
        return deg, key

    def unpack(self, key: int):
        """Inverse of :meth:`pack`: return (alpha, beta) exponent tuples."""
        exps = [(key >> (SLOT_BITS * s)) & SLOT_MASK for s in range(self.slots)]
        return tuple(exps[: self.modes]), tuple(exps[self.modes:])

    def exponent(self, key: int, j: int, conjugated: bool = False) -> int:
        return (key >> (SLOT_BITS * self._slot(j, conjugated))) & SLOT_MASK

    def charge(self, key: int, j: int) -> int:
        """Net rotation charge alpha_j - beta_j of a packed monomial."""
        return self.exponent(key, j, False) - self.exponent(key, j, True)

    def charges(self, key: int):
        return tuple(self.charge(key, j) for j in range(1, self.modes + 1))

    def swap_blocks(self, key: int) -> int:
        """Exchange the alpha and beta exponent blocks (complex conjugation)."""
        width = SLOT_BITS * self.modes
        lo = key & ((1 << width) - 1)
        hi = key >> width
        return (lo << width) | hi

    def merge_conjugates(self, key: int) -> int:
        """Move all beta exponents onto alpha: u^a conj(u)^b -> |u|^(a+b)."""
        width = SLOT_BITS * self.modes
        lo = key & ((1 << width) - 1)
        hi = key >> width
        return lo + hi  # per-slot sums stay < 16 for admissible degrees

    def sort_key(self, deg: int, key: int):
        """Graded-lexicographic ordering key used for canonical output."""
        alpha, beta = self.unpack(key)
        return (deg, alpha, beta)

    def monomial_str(self, deg: int, key: int) -> str:
        if deg == 0:
            return "1"
        alpha, beta = self.unpack(key)
        parts = []
        for j, e in enumerate(alpha, start=1):
            if e:
                parts.append(f"v{j}" + (f"^{e}" if e > 1 else ""))
        for j, e in enumerate(beta, start=1):
            if e:
                parts.append(f"~v{j}" + (f"^{e}" if e > 1 else ""))
        return "*".join(parts)
