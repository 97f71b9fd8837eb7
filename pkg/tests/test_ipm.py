import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from qopf.caseio import builtin_case
from qopf.ipm import (
    FRACTION_TO_BOUNDARY,
    BackendError,
    DivergenceError,
    IpmConfig,
    LinearBackend,
    MuController,
    SingularMatrixError,
    initial_state,
    ipm_solve,
    kkt_measures,
    mu_controller_step,
    mu_update_classical,
    solve_dense,
    step_length,
)
from qopf.powermodel import bounded_qp, build_opf
from qopf.vqsolver import SolverConfig


def tiny_qp():
    return bounded_qp([[2.0]], [0.0], 1.0, np.inf, name="tiny")


def gauss_eliminate(A, b):
    """Textbook elimination with partial pivoting."""
    A = A.astype(float).copy()
    b = b.astype(float).copy()
    n = len(b)
    for k in range(n):
        p = k + int(np.argmax(np.abs(A[k:, k])))
        A[[k, p]] = A[[p, k]]
        b[[k, p]] = b[[p, k]]
        for i in range(k + 1, n):
            f = A[i, k] / A[k, k]
            A[i, k:] -= f * A[k, k:]
            b[i] -= f * b[k]
    x = np.zeros(n)
    for i in reversed(range(n)):
        x[i] = (b[i] - A[i, i + 1:] @ x[i + 1:]) / A[i, i]
    return x


# -- solve_dense --------------------------------------------------------------


def test_solve_dense_examples():
    b = np.array([3.0, -1.0, 2.0])
    assert np.array_equal(solve_dense(np.eye(3), b), b)
    assert np.allclose(solve_dense(np.diag([2.0, 4.0]), np.array([2.0, 4.0])), [1.0, 1.0])


def test_solve_dense_random_symmetric_against_elimination():
    rng = np.random.default_rng(0)
    A = rng.normal(size=(32, 32))
    A = A + A.T
    b = rng.normal(size=32)
    x = solve_dense(A, b)
    assert np.max(np.abs(A @ x - b)) <= 1e-9 * max(1.0, np.max(np.abs(b)))
    assert np.allclose(x, gauss_eliminate(A, b), atol=1e-8)


def test_solve_dense_singular():
    with pytest.raises(SingularMatrixError):
        solve_dense(np.zeros((2, 2)), np.ones(2))


# -- step_length --------------------------------------------------------------


def test_step_length_examples():
    assert step_length(np.ones(3), np.array([0.0, 1.0, 5.0])) == 1.0
    assert step_length(np.array([1.0]), np.array([-2.0])) == pytest.approx(0.499975)
    assert step_length(np.ones(1), np.zeros(1), np.array([1.0]), np.array([-4.0])) == pytest.approx(
        FRACTION_TO_BOUNDARY / 4
    )


@settings(max_examples=1000, deadline=None)
@given(seed=st.integers(0, 2 ** 32 - 1), m=st.integers(1, 12))
def test_step_length_keeps_slacks_positive(seed, m):
    rng = np.random.default_rng(seed)
    s = rng.uniform(1e-6, 10, size=m)
    ds = rng.normal(scale=10, size=m)
    nu = rng.uniform(1e-6, 10, size=m)
    dnu = rng.normal(scale=10, size=m)
    a = step_length(s, ds, nu, dnu)
    assert 0 < a <= 1
    assert np.all(s + a * ds > 0) and np.all(nu + a * dnu > 0)


# -- mu update -------------------------------------------------------------------


def test_mu_update_examples():
    assert mu_update_classical(np.ones(2), np.ones(2), 0.1) == pytest.approx(0.1)
    assert mu_update_classical(np.array([0.0, 2.0]), np.array([3.0, 0.0])) == 0.0
    assert mu_update_classical(np.zeros(0), np.zeros(0)) == 0.0


def test_mu_decreases_on_tiny_qp():
    _, rep = ipm_solve(tiny_qp(), config=IpmConfig(eps_ipm=1e-9, use_controller=False))
    mus = rep.mu_trace
    assert len(mus) >= 3
    assert all(b < a for a, b in zip(mus, mus[1:]))


# -- controller ------------------------------------------------------------------


def _ctrl(hist, **kw):
    c = MuController(**kw)
    c.history.extend(hist)
    return c


def test_controller_freezes_on_small_reldif():
    c = _ctrl([10, 10, 10], window=3)
    assert mu_controller_step(c, 10.0, 0.01, 0.5) == 0.5
    assert c.frozen and c.last_reason == "relDif below threshold"


def test_controller_freezes_outside_band():
    c = _ctrl([100, 100, 100])
    assert mu_controller_step(c, 130.0, 0.01, 0.5) == 0.5
    assert c.frozen and c.last_reason == "outside band"
    c = _ctrl([100, 100, 100])
    mu_controller_step(c, 79.0, 0.01, 0.5)
    assert c.frozen


def test_controller_classical_branch():
    c = _ctrl([100, 100, 100], eps_conv=1e-3)
    assert mu_controller_step(c, 110.0, 0.01, 0.5) == 0.01
    assert not c.frozen


def test_controller_hand_computed_average():
    # avg = (90 + 100 + 110) / 3 = 100; relDif = |100 - 100.05| / 100 = 5e-4
    c = _ctrl([90, 100, 110], eps_conv=1e-3)
    mu_controller_step(c, 100.05, 0.01, 0.5)
    assert c.frozen
    c = _ctrl([90, 100, 110], eps_conv=1e-4)
    assert mu_controller_step(c, 100.05, 0.01, 0.5) == 0.01


def test_controller_reldif_equal_to_threshold_freezes():
    c = _ctrl([100, 100, 100], eps_conv=0.125)
    mu_controller_step(c, 112.5, 0.01, 0.5)
    assert c.frozen


def test_controller_warm_up_passes_through():
    c = _ctrl([10, 10])
    assert mu_controller_step(c, 10.0, 0.01, 0.5) == 0.01
    assert not c.frozen and list(c.history) == [10, 10, 10]


def test_controller_zero_average_freezes():
    c = _ctrl([-1, 0, 1])
    mu_controller_step(c, 0.5, 0.01, 0.5)
    assert c.frozen and c.last_reason == "zero average"


def test_controller_history_always_recorded():
    c = _ctrl([100, 100, 100])
    mu_controller_step(c, 130.0, 0.01, 0.5)
    mu_controller_step(c, 131.0, 0.01, 0.5)
    assert list(c.history) == [100, 130, 131]


@settings(max_examples=200, deadline=None)
@given(fs=st.lists(st.floats(1.0, 1e4), min_size=4, max_size=30),
       cands=st.lists(st.floats(1e-8, 10.0), min_size=30, max_size=30),
       release=st.lists(st.booleans(), min_size=30, max_size=30))
def test_frozen_mu_constant_and_never_exceeded(fs, cands, release):
    c = MuController()
    mu = 1.0
    for f, cand, rel in zip(fs, cands, release):
        was_frozen = c.frozen
        frozen_value = c.frozen_value
        mu = mu_controller_step(c, f, cand, mu)
        if was_frozen:
            assert mu == frozen_value
        if c.frozen_value is not None:
            assert mu <= c.frozen_value
        if c.frozen and rel:
            c.unfreeze()


def test_controller_rejects_bad_settings():
    with pytest.raises(ValueError):
        MuController(window=0)
    with pytest.raises(ValueError):
        MuController(band=1.5)


# -- outer loop ---------------------------------------------------------------------


def test_tiny_qp_solution():
    state, rep = ipm_solve(tiny_qp(), config=IpmConfig(eps_ipm=1e-9))
    assert rep.converged
    assert abs(state.x[0] - 1.0) <= 1e-6
    gap = float(state.x[1] * state.nu[0])
    assert gap <= 1e-8
    assert rep.final_objective - 1.0 <= 1e-8


def test_default_tolerance_on_tiny_qp():
    state, rep = ipm_solve(tiny_qp())
    assert rep.converged and abs(state.x[0] - 1.0) <= 1e-6


@pytest.mark.parametrize("name", ["case3", "case5"])
def test_classical_runs_converge_and_are_deterministic(name):
    p = build_opf(builtin_case(name), "dc")
    s1, r1 = ipm_solve(p)
    s2, r2 = ipm_solve(p)
    assert r1.converged
    assert r1.to_dict() == r2.to_dict()
    assert np.array_equal(s1.x, s2.x)


@pytest.mark.parametrize("name", ["case3", "case5"])
def test_residual_tail_non_increasing(name):
    _, rep = ipm_solve(build_opf(builtin_case(name), "dc"))
    tail = [r.residual for r in rep.iterations][-5:]
    assert all(b <= a for a, b in zip(tail, tail[1:]))


@pytest.mark.parametrize("name", ["case3", "case5"])
@pytest.mark.parametrize("form", ["dc", "ac"])
def test_kappa_spread_at_least_tenfold(name, form):
    _, rep = ipm_solve(build_opf(builtin_case(name), form))
    kappas = rep.kappa_trace
    assert max(kappas) >= 10 * min(kappas)


def test_slacks_positive_at_every_accepted_iterate():
    p = build_opf(builtin_case("case5"), "dc")
    _, full = ipm_solve(p)
    for k in range(1, len(full.iterations) + 1):
        state, _ = ipm_solve(p, config=IpmConfig(k_max=k))
        assert np.all(p.slacks(state.x) > 0) and np.all(state.nu > 0)


def test_report_trace_lengths_match_iterations():
    _, rep = ipm_solve(build_opf(builtin_case("case3"), "ac"))
    n = len(rep.iterations)
    assert len(rep.objective_trace) == len(rep.mu_trace) == len(rep.kappa_trace) == n
    assert [r.k for r in rep.iterations] == list(range(1, n + 1))


def test_timing_only_when_requested():
    p = build_opf(builtin_case("case3"), "dc")
    assert ipm_solve(p)[1].timing == {}
    timing = ipm_solve(p, config=IpmConfig(record_timing=True))[1].timing
    assert set(timing) == {"assemble", "condition", "linear_solve"}


def test_progress_callback_sees_every_iteration():
    seen = []
    _, rep = ipm_solve(build_opf(builtin_case("case3"), "dc"), progress=seen.append)
    assert seen == rep.iterations


def test_divergence_guard():
    with pytest.raises(DivergenceError) as info:
        ipm_solve(build_opf(builtin_case("case3"), "dc"), config=IpmConfig(f_guard=1.0))
    assert info.value.report is not None and info.value.report.message == "diverged"


class _Broken(LinearBackend):
    def solve(self, M, rhs):
        raise RuntimeError("device offline")


def test_backend_failure_carries_iteration():
    with pytest.raises(BackendError) as info:
        ipm_solve(tiny_qp(), _Broken())
    assert info.value.iteration == 1 and "device offline" in str(info.value)


def test_iteration_cap_reported():
    _, rep = ipm_solve(build_opf(builtin_case("case5"), "dc"), config=IpmConfig(k_max=2))
    assert not rep.converged and rep.message == "iteration cap reached" and len(rep.iterations) == 2


def test_kkt_measures_at_start_are_positive():
    p = build_opf(builtin_case("case3"), "dc")
    m = kkt_measures(p, initial_state(p))
    assert m.worst > 0 and m.feas >= 0 and m.comp > 0


@pytest.mark.parametrize("kind", ["vqls", "cvqls"])
def test_variational_backend_tracks_classical_on_tiny_qp(kind):
    p = tiny_qp()
    cfg = IpmConfig(eps_ipm=1e-9)
    _, ref = ipm_solve(p, config=cfg)
    for k in range(1, len(ref.iterations) + 1):
        exact, _ = ipm_solve(p, config=IpmConfig(eps_ipm=1e-9, k_max=k))
        backend = LinearBackend(kind, solver=SolverConfig(eps_cvqls=1e-14, k_cvqls_max=3000))
        approx, _ = ipm_solve(p, backend, IpmConfig(eps_ipm=1e-9, k_max=k))
        assert np.allclose(approx.x, exact.x, atol=1e-4)


def test_unknown_backend_kind():
    with pytest.raises(ValueError):
        LinearBackend("hhl")


def test_collapsed_step_stops_run_instead_of_leaving_the_domain():
    from qopf.noise import NoiseSpec

    p = build_opf(builtin_case("case3"), "dc")
    state, rep = ipm_solve(p, LinearBackend(noise=NoiseSpec(0, rhs_rel_sigma=1e-3)))
    assert not rep.converged and rep.message == "step length collapsed"
    assert np.all(p.slacks(state.x) > 0)
