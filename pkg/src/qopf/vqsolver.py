"""
Variational linear solver.

A layered Ry/CZ ansatz prepares ``|x(w)>``; the cost

    C(w) = 1 - |<b|H x>|^2 / <x|H^2|x> + lambda * coherence

is read either from the full LCU circuit (``mode="circuit"``) or from a direct
matrix-vector product (``mode="matrix"``). Both give the same number on an
exact simulator. Writing ``N = |<b|H x>|^2`` and ``D = <x|H^2|x>``, the LCU
program returns ``P(ancilla = 0) = D / s^2`` and
``P(ancilla = 0, system = 0 after U_b^dagger) = N / s^2`` where ``s`` is the
LCU one-norm, so ``1 - N / D`` is a ratio of two circuit probabilities.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field, replace
from typing import List, NamedTuple, Optional, Tuple

import numpy as np

from . import pauli, qsim
from .noise import NoiseSpec, sample_probability
from .optimize import OptimizerConfig, OptimizerError, minimize


class SingularDirectionError(ArithmeticError):
    """The variational state lies in the numerical null space of the matrix."""


class NonConvergenceError(RuntimeError):
    """Inner budget exhausted above tolerance; carries the best-so-far result."""

    def __init__(self, message: str, solution: np.ndarray, report: "SolveReport"):
        super().__init__(message)
        self.solution = solution
        self.report = report


@dataclass(frozen=True)
class AnsatzSpec:
    """``depth`` blocks of [Ry on every qubit, CZ chain] followed by a final Ry layer."""

    n: int
    depth: int = 1

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("ansatz needs at least one qubit")
        if self.depth < 0:
            raise ValueError("ansatz depth must be non-negative")

    @property
    def num_params(self) -> int:
        return self.n * (self.depth + 1)


@dataclass
class SolverConfig:
    mode: str = "circuit"
    lambda_k: float = 0.0
    coherence: str = "psuccess"
    eps_cvqls: float = 1e-4
    k_cvqls_max: int = 2000
    optimizer: OptimizerConfig = field(default_factory=OptimizerConfig)
    init: str = "ones"
    depth: int = 1
    noise: Optional[NoiseSpec] = None
    # central-difference step used instead of parameter shift when reads are noisy
    noisy_fd_step: float = 0.05
    raise_on_nonconvergence: bool = True

    def __post_init__(self):
        if self.mode not in ("circuit", "matrix"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.coherence not in ("psuccess", "l1"):
            raise ValueError(f"unknown coherence measure {self.coherence!r}")
        if self.init not in ("ones", "warm"):
            raise ValueError(f"unknown init policy {self.init!r}")
        if self.lambda_k < 0:
            raise ValueError("lambda_k must be non-negative")
        if self.eps_cvqls <= 0:
            raise ValueError("eps_cvqls must be positive")
        if self.k_cvqls_max < 1:
            raise ValueError("k_cvqls_max must be at least 1")


@dataclass
class SolveReport:
    iterations: int
    cost_trace: List[float]
    final_cost: float
    solution: np.ndarray
    params: np.ndarray
    converged: bool
    message: str = ""
    fidelity: Optional[float] = None
    num_qubits: int = 0
    num_terms: int = 0
    wall_clock: float = 0.0


@dataclass
class EncodedSystem:
    """Padded matrix, unit right-hand side and their circuit encodings."""

    n: int
    matrix: np.ndarray
    rhs: np.ndarray
    b: np.ndarray
    decomposition: pauli.PauliDecomposition
    lcu: pauli.LcuDistribution
    prep_alpha: qsim.StatePreparation
    prep_b: qsim.StatePreparation
    original_dim: int

    @property
    def total_qubits(self) -> int:
        return self.n + self.lcu.m


def encode_system(M: np.ndarray, rhs: np.ndarray, tolerance: Optional[float] = None) -> EncodedSystem:
    """Pad to a power of two, decompose into Pauli strings and normalise ``rhs``."""
    Mp, rp, n0 = pauli.pad_to_power_of_two(np.asarray(M), np.asarray(rhs))
    norm = float(np.linalg.norm(rp))
    if norm == 0.0:
        raise ValueError("right-hand side is zero")
    dec = pauli.decompose(Mp, tolerance)
    lcu = pauli.to_lcu_distribution(dec)
    b = rp / norm
    return EncodedSystem(
        n=dec.n,
        matrix=Mp,
        rhs=rp,
        b=b,
        decomposition=dec,
        lcu=lcu,
        prep_alpha=qsim.StatePreparation(lcu.sqrt_alpha),
        prep_b=qsim.StatePreparation(b),
        original_dim=n0,
    )


def _apply_ansatz(state: qsim.StateVector, spec: AnsatzSpec, params: np.ndarray) -> qsim.StateVector:
    # acts on qubits 0..n-1 of a possibly wider register
    n = spec.n
    for layer in range(spec.depth):
        for q in range(n):
            qsim.apply_ry(state, q, params[layer * n + q])
        for q in range(n - 1):
            qsim.apply_cz(state, q, q + 1)
    base = spec.depth * n
    for q in range(n):
        qsim.apply_ry(state, q, params[base + q])
    return state


def build_ansatz_state(spec: AnsatzSpec, params) -> qsim.StateVector:
    """``V(w)|0...0>``; amplitudes are real."""
    params = np.asarray(params, dtype=float)
    if params.shape != (spec.num_params,):
        raise ValueError(f"expected {spec.num_params} parameters, got shape {params.shape}")
    return _apply_ansatz(qsim.init_zero(spec.n), spec, params)


class _Reads(NamedTuple):
    p_anc: float
    p_joint: float
    psi: np.ndarray  # H x / ||H x|| on the system register


def _exact_reads(enc: EncodedSystem, spec: AnsatzSpec, params: np.ndarray, mode: str) -> _Reads:
    scale2 = enc.lcu.scale ** 2
    if mode == "matrix":
        x = build_ansatz_state(spec, params).amplitudes
        y = enc.matrix @ x
        D = float(np.vdot(y, y).real)
        if D <= (1e-12 * enc.lcu.scale) ** 2:
            raise SingularDirectionError("variational state is in the matrix null space")
        N = abs(np.vdot(enc.b, y)) ** 2
        return _Reads(D / scale2, N / scale2, y / np.sqrt(D))
    n, m = enc.n, enc.lcu.m
    state = qsim.init_zero(n + m)
    enc.prep_alpha.apply(state, (n, n + m))
    _apply_ansatz(state, spec, params)
    qsim.apply_select(state, n, enc.lcu.strings, enc.lcu.phases)
    enc.prep_alpha.apply(state, (n, n + m), adjoint=True)
    block = state.amplitudes[: 1 << n].copy()
    p_anc = float(np.vdot(block, block).real)
    if p_anc * scale2 <= (1e-12 * enc.lcu.scale) ** 2:
        raise SingularDirectionError("variational state is in the matrix null space")
    enc.prep_b.apply(state, (0, n), adjoint=True)
    p_joint = float(abs(state.amplitudes[0]) ** 2)
    return _Reads(p_anc, p_joint, block / np.sqrt(p_anc))


def _l1_coherence(psi: np.ndarray) -> float:
    # sum_{i != j} |rho_ij| of a pure state, normalised to [0, 1]
    dim = psi.shape[0]
    return float((np.sum(np.abs(psi)) ** 2 - 1.0) / (dim - 1))


def _cost_from_reads(reads: _Reads, config: SolverConfig) -> float:
    p_anc, p_joint = reads.p_anc, reads.p_joint
    noise = config.noise
    if noise is not None and not noise.exact_reads:
        p_anc = sample_probability(p_anc, noise)
        p_joint = sample_probability(p_joint, noise)
    fid = min(1.0, p_joint / p_anc) if p_anc > 0 else 0.0
    cost = 1.0 - fid
    if config.lambda_k > 0:
        coh = 1.0 - p_anc if config.coherence == "psuccess" else _l1_coherence(reads.psi)
        cost += config.lambda_k * coh
    return float(cost)


def coherent_cost(
    enc: EncodedSystem, spec: AnsatzSpec, params, config: SolverConfig
) -> Tuple[float, qsim.StateVector]:
    """Cost value and the normalised output state ``H x / ||H x||``."""
    params = np.asarray(params, dtype=float)
    reads = _exact_reads(enc, spec, params, config.mode)
    return _cost_from_reads(reads, config), qsim.StateVector(reads.psi)


def _noisy(config: SolverConfig) -> bool:
    return config.noise is not None and not config.noise.exact_reads


def cost_and_gradient(
    enc: EncodedSystem, spec: AnsatzSpec, params, config: SolverConfig
) -> Tuple[float, np.ndarray]:
    """Cost and its gradient.

    Exact reads use the two-term parameter-shift rule on ``N`` and ``D``
    (each angle enters a single Ry gate) combined by the quotient rule:
    ``d(N/D) = (N' D - N D') / D^2``. Noisy reads fall back to central
    differences of the sampled cost with step ``config.noisy_fd_step``.
    """
    params = np.asarray(params, dtype=float)
    if _noisy(config):
        f0 = coherent_cost(enc, spec, params, config)[0]
        h = config.noisy_fd_step
        grad = np.empty_like(params)
        for j in range(params.size):
            e = np.zeros_like(params)
            e[j] = h
            fp = coherent_cost(enc, spec, params + e, config)[0]
            fm = coherent_cost(enc, spec, params - e, config)[0]
            grad[j] = (fp - fm) / (2 * h)
        return f0, grad

    reads = _exact_reads(enc, spec, params, config.mode)
    cost = _cost_from_reads(reads, config)
    N, D = reads.p_joint, reads.p_anc  # both scaled by 1/s^2, which cancels in N/D
    dN = np.empty_like(params)
    dD = np.empty_like(params)
    shift = 0.5 * np.pi
    for j in range(params.size):
        plus = params.copy()
        minus = params.copy()
        plus[j] += shift
        minus[j] -= shift
        rp = _exact_reads(enc, spec, plus, config.mode)
        rm = _exact_reads(enc, spec, minus, config.mode)
        dN[j] = 0.5 * (rp.p_joint - rm.p_joint)
        dD[j] = 0.5 * (rp.p_anc - rm.p_anc)
    grad = -(dN * D - N * dD) / (D * D)
    if config.lambda_k > 0:
        if config.coherence == "psuccess":
            grad += config.lambda_k * (-dD)
        else:
            h = 1e-6
            for j in range(params.size):
                e = np.zeros_like(params)
                e[j] = h
                cp = _l1_coherence(_exact_reads(enc, spec, params + e, config.mode).psi)
                cm = _l1_coherence(_exact_reads(enc, spec, params - e, config.mode).psi)
                grad[j] += config.lambda_k * (cp - cm) / (2 * h)
    return cost, grad


def cost_gradient(enc: EncodedSystem, spec: AnsatzSpec, params, config: SolverConfig) -> np.ndarray:
    return cost_and_gradient(enc, spec, params, config)[1]


def rescale_solution(x_hat, M, rhs) -> np.ndarray:
    """``c * x_hat`` with the least-squares scale ``c = (M x_hat) . rhs / ||M x_hat||^2``."""
    x_hat = np.asarray(x_hat)
    y = np.asarray(M) @ x_hat
    yy = float(np.vdot(y, y).real)
    if yy == 0.0:
        raise SingularDirectionError("M x_hat is zero; the scale is undefined")
    c = np.vdot(y, np.asarray(rhs)) / yy
    if np.isrealobj(x_hat) and np.isrealobj(M) and np.isrealobj(rhs):
        c = c.real
    return c * x_hat


def solve_linear_system(
    M: np.ndarray,
    rhs: np.ndarray,
    config: Optional[SolverConfig] = None,
    init_params: Optional[np.ndarray] = None,
    exact: Optional[np.ndarray] = None,
) -> Tuple[np.ndarray, SolveReport]:
    """Solve ``M x = rhs`` variationally and return the rescaled classical vector.

    ``init_params`` seeds the ansatz when ``config.init == "warm"`` and the
    shapes match; otherwise every angle starts at one. A warm start that scores
    worse than the fixed-value start is discarded, since a previous solution
    orthogonal to the new target sits on a zero-gradient saddle at cost one. ``exact``, if given, is
    used only to report the fidelity ``|<x_hat|x_exact>|^2 / ||x_exact||^2``.
    """
    config = config or SolverConfig()
    start = time.perf_counter()
    enc = encode_system(M, rhs)
    spec = AnsatzSpec(enc.n, config.depth)
    x0 = np.ones(spec.num_params)
    if config.init == "warm" and init_params is not None:
        init_params = np.asarray(init_params, dtype=float)
        if init_params.shape == x0.shape:
            warm_cost = coherent_cost(enc, spec, init_params, config)[0]
            if warm_cost <= coherent_cost(enc, spec, x0, config)[0]:
                x0 = init_params.copy()
    opt_cfg = replace(config.optimizer, cost_tol=config.eps_cvqls, max_iter=config.k_cvqls_max)

    def fun_and_grad(w):
        return cost_and_gradient(enc, spec, w, config)

    def fun(w):
        return coherent_cost(enc, spec, w, config)[0]

    try:
        result = minimize(fun_and_grad, fun, x0, opt_cfg)
        message = result.message
    except OptimizerError as exc:
        if exc.result is None or exc.result.trace == []:
            raise
        result = exc.result
        message = str(exc)

    trace = [float(v) for v in result.trace]
    final_cost = float(result.fun)
    if not trace or trace[-1] != final_cost:
        # record the restored best point so the trace ends on the reported cost
        trace.append(final_cost)
    x_hat = build_ansatz_state(spec, result.x).amplitudes.real
    x_full = rescale_solution(x_hat, enc.matrix, enc.rhs)
    x = x_full[: enc.original_dim]
    fidelity = None
    if exact is not None:
        exact = np.asarray(exact, dtype=float)
        fidelity = float(np.dot(x_hat[: enc.original_dim], exact) ** 2 / np.dot(exact, exact))
    converged = final_cost < config.eps_cvqls
    report = SolveReport(
        iterations=len(trace),
        cost_trace=trace,
        final_cost=final_cost,
        solution=x,
        params=np.asarray(result.x, dtype=float),
        converged=converged,
        message=message,
        fidelity=fidelity,
        num_qubits=enc.total_qubits,
        num_terms=len(enc.decomposition),
        wall_clock=time.perf_counter() - start,
    )
    if final_cost > 10 * config.eps_cvqls and config.raise_on_nonconvergence:
        raise NonConvergenceError(
            f"inner solve stopped at cost {final_cost:.3e} after {report.iterations} iterations",
            x,
            report,
        )
    return x, report
