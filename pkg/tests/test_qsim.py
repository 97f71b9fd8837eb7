import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from oracles import dense_ansatz, pauli_matrix
from qopf.qsim import (
    PauliString,
    SimulatorError,
    StatePreparation,
    StateVector,
    ancilla_ground_probability,
    apply_cz,
    apply_pauli_string,
    apply_register_unitary,
    apply_ry,
    apply_select,
    init_zero,
    inner_product,
    load_amplitudes,
)

S2 = 1 / np.sqrt(2)


def _basis(n, k):
    v = np.zeros(1 << n)
    v[k] = 1
    return load_amplitudes(v)


def _random_state(rng, n):
    return load_amplitudes(rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n))


def _op_on(n, q, op):
    m = np.eye(1)
    for k in reversed(range(n)):
        m = np.kron(m, op if k == q else np.eye(2))
    return m


def test_init_zero():
    assert np.array_equal(init_zero(1).amplitudes, [1, 0])
    assert np.array_equal(init_zero(2).amplitudes, [1, 0, 0, 0])
    s = init_zero(10)
    assert len(s) == 1024 and s.norm() == 1.0 and s.num_qubits == 10
    for bad in (0, 25):
        with pytest.raises(SimulatorError):
            init_zero(bad)


def test_ry_examples():
    assert np.allclose(apply_ry(init_zero(1), 0, np.pi).amplitudes, [0, 1])
    s = _random_state(np.random.default_rng(0), 2)
    before = s.amplitudes.copy()
    assert np.allclose(apply_ry(s, 1, 0.0).amplitudes, before)
    assert np.allclose(apply_ry(init_zero(1), 0, np.pi / 2).amplitudes, [S2, S2])
    with pytest.raises(SimulatorError):
        apply_ry(init_zero(2), 2, 0.1)


def test_cz_examples():
    assert np.allclose(apply_cz(_basis(2, 3), 0, 1).amplitudes, -_basis(2, 3).amplitudes)
    assert np.allclose(apply_cz(_basis(2, 2), 0, 1).amplitudes, _basis(2, 2).amplitudes)
    s = _random_state(np.random.default_rng(1), 3)
    before = s.amplitudes.copy()
    apply_cz(apply_cz(s, 0, 2), 0, 2)
    assert np.allclose(s.amplitudes, before)
    with pytest.raises(SimulatorError):
        apply_cz(init_zero(2), 1, 1)
    with pytest.raises(SimulatorError):
        apply_cz(init_zero(2), 0, 5)


def test_pauli_examples():
    assert np.allclose(apply_pauli_string(init_zero(1), PauliString("X")).amplitudes, [0, 1])
    s = apply_pauli_string(_basis(2, 2), PauliString("ZI"))
    assert np.allclose(s.amplitudes, -_basis(2, 2).amplitudes)
    with pytest.raises(SimulatorError):
        apply_pauli_string(init_zero(3), PauliString("XI"))
    with pytest.raises(ValueError):
        PauliString("XQ")


def test_controlled_pauli_matches_dense_construction():
    # two system qubits (low), two ancilla qubits (high); X (x) I fires on ancilla value 1
    rng = np.random.default_rng(2)
    state = _random_state(rng, 4)
    psi = state.amplitudes.copy()
    proj = np.zeros((4, 4))
    proj[1, 1] = 1
    P = pauli_matrix("XI")
    dense = np.kron(proj, P) + np.kron(np.eye(4) - proj, np.eye(4))
    out = apply_pauli_string(state, PauliString("XI"), controlled_on=((2, 4), 1))
    assert np.allclose(out.amplitudes, dense @ psi, atol=1e-12)
    with pytest.raises(SimulatorError):
        apply_pauli_string(_random_state(rng, 4), PauliString("XI"), controlled_on=((2, 4), 4))
    with pytest.raises(SimulatorError):
        apply_pauli_string(_random_state(rng, 4), PauliString("XIZ"), controlled_on=((2, 4), 0))


def test_select_equals_sequential_controlled_strings():
    rng = np.random.default_rng(3)
    strings = [PauliString(s) for s in ("IX", "ZY", "YY")]
    phases = [1.0, -1.0, 1.0]
    a = _random_state(rng, 4)
    b = a.copy()
    apply_select(a, 2, strings, phases)
    for l, (s, ph) in enumerate(zip(strings, phases)):
        apply_pauli_string(b, s, controlled_on=((2, 4), l), phase=ph)
    assert np.allclose(a.amplitudes, b.amplitudes, atol=1e-12)


def test_load_amplitudes_examples():
    assert np.allclose(load_amplitudes([3, 4]).amplitudes, [0.6, 0.8])
    assert np.array_equal(load_amplitudes([1, 0, 0, 0]).amplitudes, init_zero(2).amplitudes)
    alpha = np.array([0.75, 0.25])
    s = load_amplitudes(np.sqrt(alpha))
    assert np.allclose(s.amplitudes, [np.sqrt(0.75), 0.5])
    assert np.allclose(s.probabilities(), alpha)
    with pytest.raises(SimulatorError):
        load_amplitudes([0, 0])
    with pytest.raises(SimulatorError):
        load_amplitudes([1, 2, 3])


def test_inner_product_examples():
    s = _random_state(np.random.default_rng(4), 3)
    assert inner_product(s, s) == pytest.approx(1.0)
    assert inner_product(_basis(1, 0), _basis(1, 1)) == 0
    assert inner_product(load_amplitudes([1, 1]), _basis(1, 0)) == pytest.approx(S2)
    with pytest.raises(SimulatorError):
        inner_product(init_zero(1), init_zero(2))


def test_ancilla_probability_examples():
    assert ancilla_ground_probability(init_zero(3), (2, 3)) == 1.0
    assert ancilla_ground_probability(_basis(2, 2), (1, 2)) == 0.0
    with pytest.raises(SimulatorError):
        ancilla_ground_probability(init_zero(2), (1, 3))


@settings(max_examples=25, deadline=None)
@given(a=st.floats(0.01, 0.99), seed=st.integers(0, 2 ** 31))
def test_identity_lcu_keeps_ancilla_in_ground_state(a, seed):
    rng = np.random.default_rng(seed)
    alpha = np.array([a, 1 - a])
    prep = StatePreparation(np.sqrt(alpha))
    sys_state = _random_state(rng, 2).amplitudes
    state = StateVector(np.kron(np.array([1.0, 0.0]), sys_state))
    prep.apply(state, (2, 3))
    apply_select(state, 2, [PauliString("II"), PauliString("II")], [1.0, 1.0])
    prep.apply(state, (2, 3), adjoint=True)
    assert ancilla_ground_probability(state, (2, 3)) == pytest.approx(1.0, abs=1e-12)


def test_state_preparation_is_unitary_and_prepares():
    rng = np.random.default_rng(5)
    v = rng.normal(size=8) + 1j * rng.normal(size=8)
    prep = StatePreparation(v)
    U = prep.matrix()
    assert np.allclose(U.conj().T @ U, np.eye(8), atol=1e-12)
    assert np.allclose(U[:, 0], v / np.linalg.norm(v))
    s = prep.apply(init_zero(3), (0, 3))
    assert np.allclose(s.amplitudes, v / np.linalg.norm(v))
    prep.apply(s, (0, 3), adjoint=True)
    assert np.allclose(s.amplitudes, init_zero(3).amplitudes, atol=1e-12)


def test_register_unitary_matches_dense():
    rng = np.random.default_rng(6)
    U, _ = np.linalg.qr(rng.normal(size=(4, 4)) + 1j * rng.normal(size=(4, 4)))
    s = _random_state(rng, 4)
    psi = s.amplitudes.copy()
    apply_register_unitary(s, U, (1, 3))
    dense = np.kron(np.eye(2), np.kron(U, np.eye(2)))
    assert np.allclose(s.amplitudes, dense @ psi)


def test_pauli_string_properties():
    p = PauliString("XYZI")
    M = p.matrix()
    assert np.allclose(M, pauli_matrix("XYZI"))
    assert np.allclose(M, M.conj().T)
    assert np.allclose(M @ M, np.eye(16))
    assert p.weight == 3 and len(p) == 4
    assert PauliString.from_masks(4, p.xmask, p.zmask) == p


@settings(max_examples=60, deadline=None)
@given(label=st.text(alphabet="IXYZ", min_size=1, max_size=4), seed=st.integers(0, 2 ** 31))
def test_pauli_string_involution_and_dense_match(label, seed):
    rng = np.random.default_rng(seed)
    n = len(label)
    s = _random_state(rng, n)
    psi = s.amplitudes.copy()
    apply_pauli_string(s, PauliString(label))
    assert np.allclose(s.amplitudes, pauli_matrix(label) @ psi, atol=1e-12)
    apply_pauli_string(s, PauliString(label))
    assert np.allclose(s.amplitudes, psi, atol=1e-12)


@settings(max_examples=40, deadline=None)
@given(n=st.integers(2, 4), seed=st.integers(0, 2 ** 31))
def test_gates_match_dense_matrices(n, seed):
    rng = np.random.default_rng(seed)
    s = _random_state(rng, n)
    psi = s.amplitudes.copy()
    q = int(rng.integers(n))
    theta = float(rng.uniform(-7, 7))
    c, si = np.cos(theta / 2), np.sin(theta / 2)
    apply_ry(s, q, theta)
    psi = _op_on(n, q, np.array([[c, -si], [si, c]])) @ psi
    assert np.allclose(s.amplitudes, psi, atol=1e-12)
    a, b = rng.choice(n, size=2, replace=False)
    apply_cz(s, int(a), int(b))
    P1 = np.diag([0.0, 1.0])
    cz = np.eye(1 << n) - 2 * _op_on(n, int(a), P1) @ _op_on(n, int(b), P1)
    psi = cz @ psi
    assert np.allclose(s.amplitudes, psi, atol=1e-12)


def test_ansatz_matches_dense_oracle():
    from qopf.vqsolver import AnsatzSpec, build_ansatz_state

    rng = np.random.default_rng(7)
    for n, depth in ((1, 0), (2, 1), (3, 2), (4, 3)):
        p = rng.uniform(-np.pi, np.pi, size=n * (depth + 1))
        psi = build_ansatz_state(AnsatzSpec(n, depth), p)
        assert np.allclose(psi.amplitudes, dense_ansatz(n, depth, p), atol=1e-12)


def test_norm_preserved_over_ten_thousand_gates():
    rng = np.random.default_rng(8)
    n = 10
    s = init_zero(n)
    labels = ["".join(rng.choice(list("IXYZ"), size=n)) for _ in range(16)]
    strings = [PauliString(lbl) for lbl in labels]
    for step in range(10_000):
        kind = step % 3
        if kind == 0:
            apply_ry(s, int(rng.integers(n)), float(rng.uniform(-np.pi, np.pi)))
        elif kind == 1:
            a, b = rng.choice(n, size=2, replace=False)
            apply_cz(s, int(a), int(b))
        else:
            apply_pauli_string(s, strings[step % 16])
    assert abs(s.norm() - 1.0) <= 1e-9
