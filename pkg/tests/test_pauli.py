import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import pauli_matrix
from qopf.pauli import (
    EncodingError,
    PauliDecomposition,
    PauliTerm,
    decompose,
    format_decomposition,
    pad_to_power_of_two,
    reconstruct,
    to_lcu_distribution,
)
from qopf.qsim import PauliString

EQ19 = np.array([[2.4444, -1.3333], [-1.3333, 2.9462]])


def _hermitian(rng, dim, real=False):
    A = rng.normal(size=(dim, dim))
    if not real:
        A = A + 1j * rng.normal(size=(dim, dim))
    return (A + A.conj().T) / 2


def _decomp(pairs, n=1):
    return PauliDecomposition(n, tuple(PauliTerm(PauliString(s), c) for s, c in pairs))


def test_identity_decomposes_to_single_term():
    d = decompose(np.eye(2))
    assert len(d) == 1 and d.terms[0].string.label == "I" and d.terms[0].coeff == 1.0


def test_two_by_two_example_coefficients():
    d = decompose(EQ19)
    assert len(d) == 3
    assert d.coeff("I") == pytest.approx(2.6953, abs=1e-4)
    assert d.coeff("X") == pytest.approx(-1.3333, abs=1e-4)
    assert d.coeff("Z") == pytest.approx(-0.2509, abs=1e-4)
    assert format_decomposition(d) == "2.6953 · I − 1.3333 · X − 0.2509 · Z"


def test_coefficients_are_normalised_traces():
    rng = np.random.default_rng(0)
    H = _hermitian(rng, 4)
    d = decompose(H, 0.0)
    for t in d.terms:
        expected = np.trace(pauli_matrix(t.string.label) @ H) / 4
        assert t.coeff == pytest.approx(expected.real, abs=1e-12)
    assert len(d) <= 16


def test_random_real_symmetric_round_trip():
    rng = np.random.default_rng(1)
    H = _hermitian(rng, 16, real=True)
    assert np.linalg.norm(reconstruct(decompose(H, 0)) - H) <= 1e-10


@pytest.mark.parametrize("dim", [2, 4, 8, 16, 32])
def test_round_trip_hermitian(dim):
    rng = np.random.default_rng(dim)
    for _ in range(5):
        H = _hermitian(rng, dim)
        assert np.linalg.norm(reconstruct(decompose(H, 0)) - H) <= 1e-10


@settings(max_examples=40, deadline=None)
@given(n=st.integers(1, 3), seed=st.integers(0, 2 ** 31))
def test_decompose_of_reconstruct_is_identity(n, seed):
    rng = np.random.default_rng(seed)
    labels = ["".join(rng.choice(list("IXYZ"), size=n)) for _ in range(5)]
    labels = sorted(set(labels))
    coeffs = rng.normal(size=len(labels))
    d = _decomp(zip(labels, coeffs), n)
    back = decompose(reconstruct(d), 0)
    for lbl, c in zip(labels, coeffs):
        assert back.coeff(lbl) == pytest.approx(c, abs=1e-10)
    assert all(abs(t.coeff) <= 1e-10 for t in back.terms if t.string.label not in labels)


def test_reconstruct_examples():
    assert np.array_equal(reconstruct(_decomp([("I", 1.0)])), np.eye(2))
    assert np.array_equal(reconstruct(_decomp([("ZZ", 1.0)], 2)), np.diag([1.0, -1, -1, 1]))


@settings(max_examples=30, deadline=None)
@given(diag=st.lists(st.floats(-10, 10), min_size=8, max_size=8))
def test_diagonal_matrices_use_only_i_and_z(diag):
    d = decompose(np.diag(diag))
    assert all(set(t.string.label) <= {"I", "Z"} for t in d.terms)


def test_drop_tolerance_respected():
    rng = np.random.default_rng(2)
    H = _hermitian(rng, 8, real=True)
    H += 1e-3 * np.kron(pauli_matrix("X"), np.eye(4))
    full = decompose(H, 0.0)
    tol = 0.05
    cut = decompose(H, tol)
    assert all(abs(t.coeff) >= tol for t in cut.terms)
    dropped = full.raw_count - len(cut)
    assert cut.raw_count == full.raw_count
    assert np.linalg.norm(reconstruct(cut) - H) <= tol * dropped * 8 + 1e-10


def test_decompose_errors():
    with pytest.raises(EncodingError, match="Hermitian"):
        decompose(np.array([[1.0, 2.0], [0.0, 1.0]]))
    with pytest.raises(EncodingError):
        decompose(np.eye(3))


def test_padding_examples():
    M = np.arange(9.0).reshape(3, 3)
    Mp, rp, n0 = pad_to_power_of_two(M, np.ones(3))
    assert Mp.shape == (4, 4) and Mp[3, 3] == 1 and rp[3] == 0 and n0 == 3
    assert np.all(Mp[3, :3] == 0) and np.all(Mp[:3, 3] == 0)
    M4 = np.eye(4)
    out = pad_to_power_of_two(M4, np.ones(4))
    assert out[0] is M4 and out[2] == 4


def test_padded_solve_truncates_to_original():
    rng = np.random.default_rng(3)
    M = rng.normal(size=(5, 5)) + 5 * np.eye(5)
    b = rng.normal(size=5)
    Mp, bp, n0 = pad_to_power_of_two(M, b)
    x = np.linalg.solve(Mp, bp)
    assert np.allclose(x[:n0], np.linalg.solve(M, b), atol=1e-9)
    assert np.all(x[n0:] == 0)


def test_lcu_examples():
    lcu = to_lcu_distribution(_decomp([("I", 3.0), ("X", -1.0)]))
    assert np.allclose(lcu.alpha, [0.75, 0.25]) and np.allclose(lcu.phases, [1, -1])
    assert lcu.m == 1 and lcu.scale == 4.0

    lcu = to_lcu_distribution(decompose(EQ19))
    assert lcu.m == 2 and lcu.L == 4
    assert lcu.scale == pytest.approx(4.2795, abs=1e-4)
    coeffs = {t.string.label: abs(t.coeff) for t in decompose(EQ19).terms}
    expected = sorted([coeffs[k] / lcu.scale for k in ("I", "X", "Z")], reverse=True) + [0.0]
    assert np.allclose(sorted(lcu.alpha, reverse=True), expected, atol=1e-4)
    assert np.allclose(sorted(lcu.alpha, reverse=True), [0.6298, 0.3115, 0.0586, 0.0], atol=1e-4)

    lcu = to_lcu_distribution(_decomp([("Z", 5.0)]))
    assert np.array_equal(lcu.alpha, [1.0, 0.0]) and lcu.m == 1


def test_lcu_rejects_empty():
    with pytest.raises(EncodingError):
        to_lcu_distribution(PauliDecomposition(1, ()))
    with pytest.raises(EncodingError):
        to_lcu_distribution(_decomp([("Z", 0.0)]))


@settings(max_examples=60, deadline=None)
@given(n=st.integers(1, 4), seed=st.integers(0, 2 ** 31))
def test_lcu_normalisation_and_reconstruction(n, seed):
    rng = np.random.default_rng(seed)
    H = _hermitian(rng, 1 << n, real=bool(seed % 2))
    d = decompose(H)
    lcu = to_lcu_distribution(d)
    assert np.all(lcu.alpha >= 0)
    assert math.fsum(lcu.alpha) == 1.0
    assert lcu.L >= lcu.num_terms
    rebuilt = sum(a * ph * s.matrix() for a, ph, s in zip(lcu.alpha, lcu.phases, lcu.strings))
    assert np.allclose(lcu.scale * rebuilt, H, atol=1e-9)


def test_gate_estimate_convention():
    d = decompose(EQ19)
    assert d.controlled_gate_estimate() == 3 * 1
    assert d.nonidentity_factor_count() == 2
