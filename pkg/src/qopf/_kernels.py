"""
Hot statevector and Pauli-transform kernels.

Every kernel exists twice: a Numba ``@njit`` loop version and a vectorised
NumPy version with identical semantics. The Numba path is used when Numba
imports cleanly and the environment variable ``QOPF_DISABLE_NUMBA`` is unset
(or ``0``). Both implementations stay importable as ``numba_impl`` and
``numpy_impl`` so tests and the benchmark can compare them directly.

Basis convention: qubit ``q`` is bit ``q`` of the basis index (qubit 0 is the
least-significant bit). A Pauli string is described by an X mask, a Z mask
and a phase; the operator maps ``|k>`` to
``i**popcount(x & z) * (-1)**popcount(k & z) * |k ^ x>``.
"""

import os
from types import SimpleNamespace

import numpy as np

_DISABLED = os.environ.get("QOPF_DISABLE_NUMBA", "0").lower() not in ("", "0", "false", "no")

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


# --------------------------------------------------------------------------
# NumPy implementations
# --------------------------------------------------------------------------


def _np_ry(amps, qubit, theta):
    c = np.cos(0.5 * theta)
    s = np.sin(0.5 * theta)
    view = amps.reshape(-1, 2, 1 << qubit)
    a0 = view[:, 0, :].copy()
    a1 = view[:, 1, :]
    view[:, 0, :] = c * a0 - s * a1
    view[:, 1, :] = s * a0 + c * a1


def _np_cz(amps, q1, q2):
    idx = np.arange(amps.shape[0])
    both = ((idx >> q1) & (idx >> q2) & 1).astype(bool)
    amps[both] *= -1.0


def _np_parity(values):
    return (np.bitwise_count(values) & 1).astype(np.int8)


def _np_pauli_apply(amps, xmask, zmask, phase, ctrl_mask, ctrl_value):
    idx = np.arange(amps.shape[0], dtype=np.int64)
    sign = 1.0 - 2.0 * _np_parity(idx & zmask)
    out = amps.copy()
    active = (idx & ctrl_mask) == ctrl_value
    src = idx[active]
    out[src ^ xmask] = phase * sign[active] * amps[src]
    return out


def _np_lcu_select(amps, n_sys, xmasks, zmasks, phases):
    out = amps.copy()
    dim_sys = 1 << n_sys
    sys_idx = np.arange(dim_sys, dtype=np.int64)
    for l in range(xmasks.shape[0]):
        block = amps[l * dim_sys:(l + 1) * dim_sys]
        sign = 1.0 - 2.0 * _np_parity(sys_idx & zmasks[l])
        target = out[l * dim_sys:(l + 1) * dim_sys]
        target[sys_idx ^ xmasks[l]] = phases[l] * sign * block
    return out


def _np_walsh_hadamard(mat):
    # in-place fast transform along axis 0
    n = mat.shape[0]
    h = 1
    while h < n:
        view = mat.reshape(n // (2 * h), 2, h, -1)
        a = view[:, 0].copy()
        b = view[:, 1]
        view[:, 0] = a + b
        view[:, 1] = a - b
        h *= 2
    return mat


def _np_pauli_coefficients(H):
    """Return ``C[x, z] = trace(P_{x,z} H) / dim`` for every mask pair."""
    dim = H.shape[0]
    k = np.arange(dim, dtype=np.int64)
    # column x holds H[k, k ^ x]
    gathered = H[k[:, None], k[:, None] ^ k[None, :]].astype(np.complex128)
    _np_walsh_hadamard(gathered)
    coeffs = gathered.T / dim  # rows x, columns z
    ny = np.bitwise_count(k[:, None] & k[None, :]) & 3
    return coeffs * (1j ** ny)


numpy_impl = SimpleNamespace(
    name="numpy",
    ry=_np_ry,
    cz=_np_cz,
    pauli_apply=_np_pauli_apply,
    lcu_select=_np_lcu_select,
    pauli_coefficients=_np_pauli_coefficients,
)


# --------------------------------------------------------------------------
# Numba implementations
# --------------------------------------------------------------------------

if numba is not None:
    _jit = numba.njit(cache=True, nogil=True)

    @_jit
    def _nb_popcount(v):
        c = 0
        while v:
            v &= v - 1
            c += 1
        return c

    @_jit
    def _nb_ry(amps, qubit, theta):
        c = np.cos(0.5 * theta)
        s = np.sin(0.5 * theta)
        step = 1 << qubit
        dim = amps.shape[0]
        for base in range(0, dim, 2 * step):
            for off in range(step):
                i0 = base + off
                i1 = i0 + step
                a0 = amps[i0]
                a1 = amps[i1]
                amps[i0] = c * a0 - s * a1
                amps[i1] = s * a0 + c * a1

    @_jit
    def _nb_cz(amps, q1, q2):
        mask = (1 << q1) | (1 << q2)
        for i in range(amps.shape[0]):
            if i & mask == mask:
                amps[i] = -amps[i]

    @_jit
    def _nb_pauli_apply(amps, xmask, zmask, phase, ctrl_mask, ctrl_value):
        out = amps.copy()
        for i in range(amps.shape[0]):
            if i & ctrl_mask != ctrl_value:
                continue
            v = phase * amps[i]
            if _nb_popcount(i & zmask) & 1:
                v = -v
            out[i ^ xmask] = v
        return out

    @_jit
    def _nb_lcu_select(amps, n_sys, xmasks, zmasks, phases):
        out = amps.copy()
        dim_sys = 1 << n_sys
        for l in range(xmasks.shape[0]):
            off = l * dim_sys
            x = xmasks[l]
            z = zmasks[l]
            ph = phases[l]
            for k in range(dim_sys):
                v = ph * amps[off + k]
                if _nb_popcount(k & z) & 1:
                    v = -v
                out[off + (k ^ x)] = v
        return out

    @_jit
    def _nb_pauli_coefficients(H):
        dim = H.shape[0]
        coeffs = np.empty((dim, dim), dtype=np.complex128)
        col = np.empty(dim, dtype=np.complex128)
        phase_table = np.array([1.0 + 0.0j, 1.0j, -1.0 + 0.0j, -1.0j])
        for x in range(dim):
            for k in range(dim):
                col[k] = H[k, k ^ x]
            h = 1
            while h < dim:
                for base in range(0, dim, 2 * h):
                    for j in range(base, base + h):
                        a = col[j]
                        b = col[j + h]
                        col[j] = a + b
                        col[j + h] = a - b
                h *= 2
            for z in range(dim):
                coeffs[x, z] = col[z] * phase_table[_nb_popcount(x & z) & 3] / dim
        return coeffs

    numba_impl = SimpleNamespace(
        name="numba",
        ry=_nb_ry,
        cz=_nb_cz,
        pauli_apply=_nb_pauli_apply,
        lcu_select=_nb_lcu_select,
        pauli_coefficients=_nb_pauli_coefficients,
    )
else:  # pragma: no cover
    numba_impl = None


USING_NUMBA = numba_impl is not None and not _DISABLED
active = numba_impl if USING_NUMBA else numpy_impl

ry = active.ry
cz = active.cz
pauli_apply = active.pauli_apply
lcu_select = active.lcu_select
pauli_coefficients = active.pauli_coefficients
