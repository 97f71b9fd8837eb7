"""Pauli-string encoding of Hermitian matrices and the LCU distribution built from it."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np

from . import _kernels
from .qsim import PauliString


class EncodingError(ValueError):
    """Matrix cannot be encoded (shape, Hermiticity, empty decomposition)."""


@dataclass(frozen=True)
class PauliTerm:
    string: PauliString
    coeff: complex

    def __str__(self):
        return f"{self.coeff:+.6g} * {self.string}"


@dataclass(frozen=True)
class PauliDecomposition:
    """Weighted Pauli strings whose sum reproduces a ``2**n`` Hermitian matrix.

    ``raw_count`` is the number of strings with a nonzero coefficient before
    the drop tolerance was applied.
    """

    n: int
    terms: Tuple[PauliTerm, ...]
    tolerance: float = 0.0
    raw_count: int = 0

    def __len__(self):
        return len(self.terms)

    @property
    def coefficients(self) -> np.ndarray:
        return np.array([t.coeff for t in self.terms])

    @property
    def strings(self) -> List[PauliString]:
        return [t.string for t in self.terms]

    def coeff(self, label: str) -> complex:
        for t in self.terms:
            if t.string.label == label:
                return t.coeff
        return 0.0

    def controlled_gate_estimate(self) -> int:
        """One controlled single-qubit gate per qubit per term, identities included."""
        return len(self.terms) * self.n

    def nonidentity_factor_count(self) -> int:
        return sum(t.string.weight for t in self.terms)


@dataclass(frozen=True)
class LcuDistribution:
    """Normalised LCU weights: ``H = scale * sum_l alpha_l * phase_l * P_l``."""

    m: int
    alpha: np.ndarray
    phases: np.ndarray
    strings: Tuple[PauliString, ...]
    scale: float

    @property
    def num_terms(self) -> int:
        return len(self.strings)

    @property
    def L(self) -> int:
        return 1 << self.m

    @property
    def sqrt_alpha(self) -> np.ndarray:
        return np.sqrt(self.alpha)


def _num_qubits(dim: int) -> int:
    if dim < 2 or dim & (dim - 1):
        raise EncodingError(f"matrix dimension {dim} is not a power of two >= 2")
    return dim.bit_length() - 1


def _canonical_masks(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """X/Z masks of all ``4**n`` strings in label order (I < X < Y < Z, MSB first)."""
    digits = np.arange(4 ** n, dtype=np.int64)
    xm = np.zeros_like(digits)
    zm = np.zeros_like(digits)
    rem = digits.copy()
    for q in range(n):
        d = rem & 3
        rem >>= 2
        xm |= ((d == 1) | (d == 2)).astype(np.int64) << q
        zm |= ((d == 2) | (d == 3)).astype(np.int64) << q
    return xm, zm


def is_hermitian(H: np.ndarray, atol: float = 1e-9) -> bool:
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        return False
    scale = max(1.0, float(np.max(np.abs(H)))) if H.size else 1.0
    return float(np.max(np.abs(H - H.conj().T))) <= atol * scale


def decompose(H: np.ndarray, tolerance: Optional[float] = None) -> PauliDecomposition:
    """Expand ``H`` over all ``4**n`` Pauli strings, ``coeff(P) = tr(P H) / 2**n``.

    Terms with ``|coeff| < tolerance`` are dropped; the default tolerance is
    ``1e-10 * max|H_ij|``. Coefficients of a Hermitian matrix are real and are
    stored as floats.
    """
    H = np.asarray(H)
    if H.ndim != 2 or H.shape[0] != H.shape[1]:
        raise EncodingError(f"expected a square matrix, got shape {H.shape}")
    n = _num_qubits(H.shape[0])
    if not is_hermitian(H):
        raise EncodingError("matrix is not Hermitian")
    Hc = np.ascontiguousarray(H, dtype=np.complex128)
    if tolerance is None:
        tolerance = 1e-10 * float(np.max(np.abs(Hc)))
    table = _kernels.pauli_coefficients(Hc)
    xm, zm = _canonical_masks(n)
    coeffs = table[xm, zm].real
    nonzero = np.flatnonzero(coeffs != 0.0)
    keep = nonzero[np.abs(coeffs[nonzero]) >= tolerance]
    terms = tuple(
        PauliTerm(PauliString.from_masks(n, int(xm[i]), int(zm[i])), float(coeffs[i])) for i in keep
    )
    return PauliDecomposition(n=n, terms=terms, tolerance=float(tolerance), raw_count=int(nonzero.size))


def reconstruct(d: PauliDecomposition) -> np.ndarray:
    """Dense ``sum_l coeff_l * P_l``."""
    dim = 1 << d.n
    out = np.zeros((dim, dim), dtype=np.complex128)
    k = np.arange(dim, dtype=np.int64)
    for t in d.terms:
        s = t.string
        sign = 1.0 - 2.0 * (np.bitwise_count(k & s.zmask) & 1)
        out[k ^ s.xmask, k] += t.coeff * s.mask_phase() * sign
    if not np.any(out.imag):
        return out.real
    return out


def pad_to_power_of_two(M: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, np.ndarray, int]:
    """Embed ``M`` in the leading block of a ``2**n`` matrix with unit padded diagonal.

    Returns ``(M_padded, rhs_padded, original_dim)``. Padded rows are decoupled
    and carry a zero right-hand side, so their solution entries are exactly 0.
    A 1x1 system is padded to 2x2 so it occupies at least one qubit.
    """
    M = np.asarray(M)
    rhs = np.asarray(rhs)
    if M.ndim != 2 or M.shape[0] != M.shape[1]:
        raise EncodingError(f"expected a square matrix, got shape {M.shape}")
    n0 = M.shape[0]
    if rhs.shape != (n0,):
        raise EncodingError(f"rhs shape {rhs.shape} does not match matrix dimension {n0}")
    dim = max(2, 1 << max(0, (n0 - 1).bit_length()))
    if dim == n0:
        return M, rhs, n0
    Mp = np.zeros((dim, dim), dtype=M.dtype)
    Mp[:n0, :n0] = M
    Mp[np.arange(n0, dim), np.arange(n0, dim)] = 1
    rp = np.zeros(dim, dtype=rhs.dtype)
    rp[:n0] = rhs
    return Mp, rp, n0


def to_lcu_distribution(d: PauliDecomposition) -> LcuDistribution:
    """Split coefficients into magnitudes and unit phases.

    ``alpha_l = |c_l| / sum|c|``, zero-padded to ``2**m`` entries with
    ``m = max(1, ceil(log2(#terms)))``. The last real term absorbs the rounding
    so the weights sum to one under ``math.fsum``.
    """
    if not d.terms:
        raise EncodingError("cannot build an LCU from an empty decomposition")
    c = np.array([t.coeff for t in d.terms], dtype=np.complex128)
    mags = np.abs(c)
    scale = float(math.fsum(mags))
    if scale == 0.0:
        raise EncodingError("all decomposition coefficients are zero")
    count = len(d.terms)
    m = max(1, (count - 1).bit_length())
    alpha = np.zeros(1 << m)
    alpha[:count] = mags / scale
    alpha[count - 1] = max(0.0, 1.0 - math.fsum(alpha[: count - 1]))
    # the subtraction rounds too; step the last weight by ulps until the
    # correctly rounded total is exactly one
    for _ in range(8):
        total = math.fsum(alpha)
        if total == 1.0:
            break
        alpha[count - 1] = max(0.0, np.nextafter(alpha[count - 1], np.inf if total < 1.0 else -np.inf))
    phases = np.where(mags > 0, c / np.where(mags > 0, mags, 1.0), 1.0)
    if np.all(np.abs(phases.imag) == 0):
        phases = phases.real
    return LcuDistribution(
        m=m, alpha=alpha, phases=phases, strings=tuple(d.strings), scale=scale
    )


def _trim(value: float, digits: int) -> str:
    text = f"{value:.{digits}f}"
    if "." in text:
        text = text.rstrip("0")
        if text.endswith("."):
            text += "0"
    return text


def format_decomposition(d: PauliDecomposition, digits: int = 4) -> str:
    """Render ``c * P + ...`` sorted by ``|c|`` descending, e.g. ``2.6953 · I − 1.3333 · X``."""
    terms = sorted(d.terms, key=lambda t: (-abs(t.coeff), t.string.label))
    if not terms:
        return "0"
    parts = []
    for i, t in enumerate(terms):
        c = float(np.real(t.coeff))
        mag = _trim(abs(c), digits)
        if i == 0:
            parts.append(f"{'−' if c < 0 else ''}{mag} · {t.string}")
        else:
            parts.append(f"{'−' if c < 0 else '+'} {mag} · {t.string}")
    return " ".join(parts)
