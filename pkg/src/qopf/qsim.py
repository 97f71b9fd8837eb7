"""Dense statevector simulator.

Qubit ``q`` is bit ``q`` of the basis index, so qubit 0 is the least
significant bit. When a register is split into a system part and an ancilla
part, the system occupies the low qubits ``0..n_sys-1`` and the ancilla the
high qubits above it. Pauli labels are written most-significant qubit first,
so ``"ZI"`` is ``Z (x) I`` and acts with ``Z`` on qubit 1.

Gate operations mutate the state in place and return it.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

import numpy as np

from . import _kernels

MAX_QUBITS = 24
_PAULI_CHARS = "IXYZ"
_MASK_CHARS = {(0, 0): "I", (1, 0): "X", (1, 1): "Y", (0, 1): "Z"}


class SimulatorError(ValueError):
    """Invalid register, qubit index or operand shape."""


class StateVector:
    """``2**n`` complex amplitudes of an ``n``-qubit register."""

    __slots__ = ("num_qubits", "amplitudes")

    def __init__(self, amplitudes: np.ndarray):
        amplitudes = np.ascontiguousarray(amplitudes, dtype=np.complex128)
        dim = amplitudes.shape[0]
        if amplitudes.ndim != 1 or dim < 2 or dim & (dim - 1):
            raise SimulatorError(f"amplitude vector length {dim} is not a power of two >= 2")
        n = dim.bit_length() - 1
        if n > MAX_QUBITS:
            raise SimulatorError(f"{n} qubits exceeds the {MAX_QUBITS}-qubit memory guard")
        self.num_qubits = n
        self.amplitudes = amplitudes

    def __repr__(self):
        return f"StateVector(num_qubits={self.num_qubits})"

    def __len__(self):
        return self.amplitudes.shape[0]

    def copy(self) -> "StateVector":
        return StateVector(self.amplitudes.copy())

    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2


@dataclass(frozen=True)
class PauliString:
    """Tensor product of single-qubit Paulis, labelled MSB-first."""

    label: str

    def __post_init__(self):
        if not self.label or any(ch not in _PAULI_CHARS for ch in self.label):
            raise SimulatorError(f"invalid Pauli label {self.label!r}")

    def __len__(self):
        return len(self.label)

    def __str__(self):
        return self.label

    @property
    def axes(self) -> Tuple[str, ...]:
        """Per-qubit axes ordered qubit 0 first."""
        return tuple(reversed(self.label))

    @property
    def xmask(self) -> int:
        n = len(self.label)
        return sum(1 << (n - 1 - i) for i, ch in enumerate(self.label) if ch in "XY")

    @property
    def zmask(self) -> int:
        n = len(self.label)
        return sum(1 << (n - 1 - i) for i, ch in enumerate(self.label) if ch in "YZ")

    @property
    def weight(self) -> int:
        """Number of non-identity factors."""
        return sum(ch != "I" for ch in self.label)

    @classmethod
    def from_masks(cls, n: int, xmask: int, zmask: int) -> "PauliString":
        chars = []
        for q in range(n - 1, -1, -1):
            x = (xmask >> q) & 1
            z = (zmask >> q) & 1
            chars.append(_MASK_CHARS[x, z])
        return cls("".join(chars))

    def mask_phase(self) -> complex:
        """Phase ``i**(#Y)`` that turns the mask action into the Pauli operator."""
        return 1j ** (self.label.count("Y") % 4)

    def matrix(self) -> np.ndarray:
        """Dense ``2**n x 2**n`` operator built by Kronecker products."""
        mats = {
            "I": np.eye(2, dtype=complex),
            "X": np.array([[0, 1], [1, 0]], dtype=complex),
            "Y": np.array([[0, -1j], [1j, 0]], dtype=complex),
            "Z": np.array([[1, 0], [0, -1]], dtype=complex),
        }
        out = np.ones((1, 1), dtype=complex)
        for ch in self.label:
            out = np.kron(out, mats[ch])
        return out


def _check_qubit(state: StateVector, q: int) -> None:
    if not 0 <= q < state.num_qubits:
        raise SimulatorError(f"qubit {q} out of range for {state.num_qubits}-qubit register")


def _check_range(state: StateVector, qubits: Tuple[int, int]) -> Tuple[int, int]:
    start, stop = int(qubits[0]), int(qubits[1])
    if not 0 <= start < stop <= state.num_qubits:
        raise SimulatorError(f"qubit range {qubits} invalid for {state.num_qubits}-qubit register")
    return start, stop


def init_zero(n: int) -> StateVector:
    """Register of ``n`` qubits in ``|0...0>``."""
    if not 1 <= n <= MAX_QUBITS:
        raise SimulatorError(f"qubit count must be in [1, {MAX_QUBITS}], got {n}")
    amps = np.zeros(1 << n, dtype=np.complex128)
    amps[0] = 1.0
    return StateVector(amps)


def load_amplitudes(v: Sequence[complex]) -> StateVector:
    """State whose amplitudes are ``v / ||v||``.

    Stands in for a state-preparation unitary; on a simulator the load is exact.
    """
    v = np.asarray(v, dtype=np.complex128).ravel()
    norm = np.linalg.norm(v)
    if norm == 0.0:
        raise SimulatorError("cannot load the zero vector")
    return StateVector(v / norm)


def apply_ry(state: StateVector, qubit: int, theta: float) -> StateVector:
    _check_qubit(state, qubit)
    _kernels.ry(state.amplitudes, int(qubit), float(theta))
    return state


def apply_cz(state: StateVector, q1: int, q2: int) -> StateVector:
    _check_qubit(state, q1)
    _check_qubit(state, q2)
    if q1 == q2:
        raise SimulatorError("CZ needs two distinct qubits")
    _kernels.cz(state.amplitudes, int(q1), int(q2))
    return state


def apply_pauli_string(
    state: StateVector,
    p: PauliString,
    controlled_on: Optional[Tuple[Tuple[int, int], int]] = None,
    phase: complex = 1.0,
) -> StateVector:
    """Apply ``phase * P`` to the low ``len(p)`` qubits.

    ``controlled_on=((start, stop), l)`` restricts the action to basis states
    whose ancilla qubits ``start..stop-1`` encode the integer ``l``; all other
    amplitudes are left untouched.
    """
    n_sys = len(p)
    ctrl_mask = 0
    ctrl_value = 0
    if controlled_on is None:
        if n_sys != state.num_qubits:
            raise SimulatorError(f"Pauli string of width {n_sys} on {state.num_qubits}-qubit register")
    else:
        (start, stop), l = controlled_on
        start, stop = _check_range(state, (start, stop))
        if n_sys > start:
            raise SimulatorError("Pauli string overlaps the control register")
        if not 0 <= l < (1 << (stop - start)):
            raise SimulatorError(f"control value {l} out of range for {stop - start} ancilla qubits")
        ctrl_mask = ((1 << (stop - start)) - 1) << start
        ctrl_value = int(l) << start
    total_phase = complex(phase) * p.mask_phase()
    state.amplitudes = _kernels.pauli_apply(
        state.amplitudes, p.xmask, p.zmask, total_phase, ctrl_mask, ctrl_value
    )
    return state


def apply_select(
    state: StateVector,
    n_sys: int,
    strings: Sequence[PauliString],
    phases: Sequence[complex],
) -> StateVector:
    """Apply every ancilla-controlled ``phase_l * P_l`` in one sweep.

    The ancilla register is qubits ``n_sys..num_qubits-1``; term ``l`` fires on
    ancilla value ``l``. Equivalent to applying each controlled string in turn,
    since the controls select disjoint subspaces.
    """
    m = state.num_qubits - n_sys
    if m < 1 or len(strings) > (1 << m):
        raise SimulatorError("ancilla register too small for the term count")
    if any(len(s) != n_sys for s in strings):
        raise SimulatorError("Pauli string width differs from system register")
    xm = np.array([s.xmask for s in strings], dtype=np.int64)
    zm = np.array([s.zmask for s in strings], dtype=np.int64)
    ph = np.array([complex(c) * s.mask_phase() for c, s in zip(phases, strings)], dtype=np.complex128)
    state.amplitudes = _kernels.lcu_select(state.amplitudes, n_sys, xm, zm, ph)
    return state


def apply_register_unitary(state: StateVector, U: np.ndarray, qubits: Tuple[int, int]) -> StateVector:
    """Apply a dense unitary to the contiguous qubit range ``[start, stop)``."""
    start, stop = _check_range(state, qubits)
    k = stop - start
    if U.shape != (1 << k, 1 << k):
        raise SimulatorError(f"unitary shape {U.shape} does not match {k} qubits")
    view = state.amplitudes.reshape(1 << (state.num_qubits - stop), 1 << k, 1 << start)
    state.amplitudes = np.einsum("ij,ajb->aib", U, view).reshape(-1)
    return state


class StatePreparation:
    """Unitary ``U`` with ``U|0> = v / ||v||``, realised as a phased Householder reflection.

    ``U = e^{i phi} (I - 2 w w^H / w^H w)`` with ``w = e_0 - e^{-i phi} v``;
    the reflection is Hermitian, so applying the adjoint only flips the phase.
    """

    def __init__(self, v: Sequence[complex]):
        v = np.asarray(v, dtype=np.complex128).ravel()
        norm = np.linalg.norm(v)
        if norm == 0.0:
            raise SimulatorError("cannot prepare the zero vector")
        dim = v.shape[0]
        if dim < 2 or dim & (dim - 1):
            raise SimulatorError(f"state length {dim} is not a power of two")
        self.vector = v / norm
        self.num_qubits = dim.bit_length() - 1
        v0 = self.vector[0]
        self.phase = v0 / abs(v0) if abs(v0) > 0 else 1.0 + 0j
        w = -np.conj(self.phase) * self.vector
        w[0] += 1.0
        wn = np.vdot(w, w).real
        self._w = None if wn < 1e-30 else w / np.sqrt(wn)

    def matrix(self) -> np.ndarray:
        dim = self.vector.shape[0]
        R = np.eye(dim, dtype=np.complex128)
        if self._w is not None:
            R -= 2.0 * np.outer(self._w, np.conj(self._w))
        return self.phase * R

    def apply(self, state: StateVector, qubits: Tuple[int, int], adjoint: bool = False) -> StateVector:
        start, stop = _check_range(state, qubits)
        if stop - start != self.num_qubits:
            raise SimulatorError("register width does not match the prepared state")
        view = state.amplitudes.reshape(1 << (state.num_qubits - stop), 1 << (stop - start), 1 << start)
        if self._w is not None:
            proj = np.einsum("j,ajb->ab", np.conj(self._w), view)
            view = view - 2.0 * np.einsum("j,ab->ajb", self._w, proj)
        ph = np.conj(self.phase) if adjoint else self.phase
        state.amplitudes = (ph * view).reshape(-1)
        return state


def inner_product(a: StateVector, b: StateVector) -> complex:
    """``<a|b> = sum(conj(a_i) * b_i)``."""
    if a.num_qubits != b.num_qubits:
        raise SimulatorError("inner product of registers with different widths")
    return complex(np.vdot(a.amplitudes, b.amplitudes))


def ancilla_ground_probability(state: StateVector, ancilla: Tuple[int, int]) -> float:
    """Probability that every qubit in ``[start, stop)`` reads 0."""
    start, stop = _check_range(state, ancilla)
    view = state.amplitudes.reshape(1 << (state.num_qubits - stop), 1 << (stop - start), 1 << start)
    p = float(np.sum(np.abs(view[:, 0, :]) ** 2))
    return min(max(p, 0.0), 1.0)
