"""
Primal-dual interior-point loop with pluggable Newton-direction solvers.

Each outer iteration assembles the reduced KKT system at ``(x, lam, mu)``,
asks the backend for ``d`` with ``M d = -[r; c]``, moves
``(x, lam) <- (x, lam) + alpha * d`` with a fraction-to-boundary step and then
updates ``mu``. Slack multipliers ``nu`` are eliminated from the Newton system:
their step ``dnu = mu / s - nu - (nu / s) ds`` is recovered from the slack
step, and the slack block of the Hessian carries the primal-dual scaling
``nu / s``. Each slack appears in exactly one equality row with coefficient
+1, so at a KKT point ``nu`` equals the multiplier of that row.

The barrier weight follows the usual rule ``mu = sigma * s'nu / m``, filtered
through :class:`MuController`, which watches the objective history and holds
``mu`` fixed when the objective settles or jumps out of a band around its
recent average.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Deque, Dict, List, Optional, Tuple

import numpy as np

from .caseio import IterationRecord, RunReport
from .noise import NoiseSpec, perturb_system
from .powermodel import OpfProblem, condition_number, kkt_assemble
from .vqsolver import NonConvergenceError, SolverConfig, solve_linear_system

FRACTION_TO_BOUNDARY = 0.99995


class SingularMatrixError(np.linalg.LinAlgError):
    """Matrix is singular to working precision."""


class DivergenceError(RuntimeError):
    """Iterates left the overflow guard; ``state`` and ``report`` hold the last iterate."""

    def __init__(self, message, state=None, report=None):
        super().__init__(message)
        self.state = state
        self.report = report


class BackendError(RuntimeError):
    """Linear backend failed at a given outer iteration."""

    def __init__(self, message, iteration, state=None, report=None):
        super().__init__(f"iteration {iteration}: {message}")
        self.iteration = iteration
        self.state = state
        self.report = report


@dataclass
class IpmState:
    x: np.ndarray
    lam: np.ndarray
    nu: np.ndarray
    mu: float
    k: int = 0
    objective: float = 0.0

    def copy(self) -> "IpmState":
        return IpmState(self.x.copy(), self.lam.copy(), self.nu.copy(), self.mu, self.k, self.objective)


def initial_state(problem: OpfProblem, mu0: float = 1.0) -> IpmState:
    """Problem start point (bound midpoints, flat states, clipped slacks) with unit multipliers."""
    x = problem.x0.copy()
    lam = np.ones(problem.n_rows)
    nu = np.ones(problem.n_slacks)
    return IpmState(x, lam, nu, float(mu0), 0, problem.objective(x))


# --------------------------------------------------------------------------
# linear algebra
# --------------------------------------------------------------------------


def solve_dense(M: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    """Partial-pivoting LU solve followed by one step of iterative refinement."""
    M = np.asarray(M, dtype=float)
    rhs = np.asarray(rhs, dtype=float)
    if M.ndim != 2 or M.shape[0] != M.shape[1] or rhs.shape != (M.shape[0],):
        raise ValueError(f"incompatible shapes {M.shape} and {rhs.shape}")
    try:
        x = np.linalg.solve(M, rhs)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrixError(f"matrix is singular: {exc}") from None
    if not np.all(np.isfinite(x)):
        raise SingularMatrixError("matrix is singular to working precision")
    x = x + np.linalg.solve(M, rhs - M @ x)
    return x


def step_length(s, ds, nu=None, dnu=None, tau: float = FRACTION_TO_BOUNDARY) -> float:
    """Largest ``alpha <= 1`` keeping ``s + alpha ds`` and ``nu + alpha dnu`` positive,
    scaled back by the fraction-to-boundary factor ``tau``."""
    alpha = 1.0
    for v, dv in ((s, ds), (nu, dnu)):
        if v is None or dv is None:
            continue
        v = np.asarray(v, dtype=float)
        dv = np.asarray(dv, dtype=float)
        neg = dv < 0
        if np.any(neg):
            alpha = min(alpha, tau * float(np.min(-v[neg] / dv[neg])))
    return alpha


def mu_update_classical(s, nu, sigma: float = 0.1) -> float:
    """``sigma * s'nu / m``; zero when there are no slacks."""
    s = np.asarray(s, dtype=float)
    m = s.shape[0]
    if m == 0:
        return 0.0
    return float(sigma * np.dot(s, np.asarray(nu, dtype=float)) / m)


# --------------------------------------------------------------------------
# mu controller
# --------------------------------------------------------------------------


@dataclass
class MuController:
    """Objective-history monitor that can freeze ``mu``.

    With at least ``window`` recorded objectives, ``avg`` is their mean and
    ``relDif = |(avg - f_next) / avg|``. ``mu`` is frozen when
    ``relDif <= eps_conv``, when ``f_next`` leaves ``[(1 - band) avg, (1 + band) avg]``
    or when ``avg == 0``. A freeze holds until :meth:`unfreeze`; afterwards
    ``mu`` never exceeds the frozen value and, unless ``refreeze`` is set, no
    further freeze happens.
    """

    window: int = 3
    eps_conv: float = 1e-3
    band: float = 0.2
    refreeze: bool = False
    history: Deque[float] = field(default_factory=deque)
    frozen: bool = False
    frozen_value: Optional[float] = None
    freeze_count: int = 0
    held: int = 0
    last_reason: str = ""

    def __post_init__(self):
        if self.window < 1:
            raise ValueError("controller window must be at least 1")
        if self.eps_conv < 0 or not 0 <= self.band < 1:
            raise ValueError("eps_conv must be >= 0 and band in [0, 1)")
        self.history = deque(self.history, maxlen=self.window)

    def average(self) -> Optional[float]:
        if len(self.history) < self.window:
            return None
        return float(np.mean(self.history))

    def unfreeze(self) -> None:
        self.frozen = False
        self.held = 0

    def may_freeze(self) -> bool:
        return self.freeze_count == 0 or self.refreeze


def mu_controller_step(ctrl: MuController, f_next: float, mu_candidate: float, mu_current: float) -> float:
    """Return the ``mu`` to use next and record ``f_next`` in the history."""
    avg = ctrl.average()
    ctrl.history.append(float(f_next))
    if ctrl.frozen:
        ctrl.held += 1
        ctrl.last_reason = "held"
        return ctrl.frozen_value
    cap = ctrl.frozen_value if ctrl.frozen_value is not None else np.inf
    if avg is None:
        ctrl.last_reason = "warm-up"
        return min(mu_candidate, cap)
    if avg == 0:
        reason = "zero average"
    else:
        rel = abs((avg - f_next) / avg)
        if rel <= ctrl.eps_conv:
            reason = "relDif below threshold"
        elif f_next < (1 - ctrl.band) * avg or f_next > (1 + ctrl.band) * avg:
            reason = "outside band"
        else:
            reason = ""
    if reason and ctrl.may_freeze():
        ctrl.frozen = True
        ctrl.frozen_value = min(float(mu_current), cap)
        ctrl.freeze_count += 1
        ctrl.held = 0
        ctrl.last_reason = reason
        return ctrl.frozen_value
    ctrl.last_reason = "classical update"
    return min(mu_candidate, cap)


# --------------------------------------------------------------------------
# backends
# --------------------------------------------------------------------------


@dataclass
class LinearBackend:
    """Newton-direction solver.

    ``kind`` is ``classical``, ``vqls`` (variational solver with direct matrix
    action) or ``cvqls`` (variational solver evaluated through the LCU circuit).
    ``noise`` perturbs every system before it is solved. With
    ``accept_inexact`` a variational solve that stops above tolerance still
    returns its best direction.
    """

    kind: str = "classical"
    solver: Optional[SolverConfig] = None
    noise: Optional[NoiseSpec] = None
    warm_start: bool = True
    accept_inexact: bool = True
    last_params: Optional[np.ndarray] = None

    def __post_init__(self):
        if self.kind not in ("classical", "vqls", "cvqls"):
            raise ValueError(f"unknown backend {self.kind!r}")
        if self.kind != "classical":
            base = self.solver or SolverConfig()
            mode = "matrix" if self.kind == "vqls" else "circuit"
            init = "warm" if self.warm_start else "ones"
            self.solver = SolverConfig(**{**base.__dict__, "mode": mode, "init": init,
                                          "raise_on_nonconvergence": True})

    def reset(self) -> None:
        self.last_params = None
        if self.noise is not None:
            self.noise.reset()

    def solve(self, M: np.ndarray, rhs: np.ndarray) -> Tuple[np.ndarray, Dict]:
        if self.noise is not None and self.noise.perturbs_system:
            M, rhs = perturb_system(M, rhs, self.noise)
        if self.kind == "classical":
            return solve_dense(M, rhs), {"iters": 0, "final_cost": None, "trace": []}
        try:
            d, rep = solve_linear_system(M, rhs, self.solver, init_params=self.last_params)
        except NonConvergenceError as exc:
            if not self.accept_inexact:
                raise
            d, rep = exc.solution, exc.report
        if self.warm_start:
            self.last_params = rep.params
        return d, {"iters": rep.iterations, "final_cost": rep.final_cost, "trace": list(rep.cost_trace)}


# --------------------------------------------------------------------------
# outer loop
# --------------------------------------------------------------------------


@dataclass
class IpmConfig:
    eps_ipm: float = 1e-6
    k_max: int = 200
    mu0: float = 1.0
    sigma: float = 0.1
    use_controller: bool = True
    window: int = 3
    eps_conv: float = 1e-3
    band: float = 0.2
    refreeze: bool = False
    # a frozen mu is released once the barrier subproblem is centred to this
    # scaled residual, or after max_hold frozen iterations
    centring_tol: float = 1e-3
    max_hold: int = 5
    record_kappa: bool = True
    record_timing: bool = False
    f_guard: float = 1e12
    x_guard: float = 1e9
    # below this step length the iterate is pinned against a bound and the run stops
    min_step: float = 1e-12


@dataclass
class KktMeasures:
    feas: float
    grad: float
    comp: float
    barrier: float

    @property
    def worst(self) -> float:
        return max(self.feas, self.grad, self.comp)


def kkt_measures(problem: OpfProblem, state: IpmState) -> KktMeasures:
    """Scaled optimality conditions.

    ``feas = ||Ax - b||_inf / (1 + ||x||_inf)``,
    ``grad = ||grad f + A'lam - [0; nu]||_inf / (1 + max(||lam||_inf, ||nu||_inf))``,
    ``comp = s'nu / m / (1 + |f|)``; ``barrier`` measures how far the iterate is
    from the centre of the current ``mu``-subproblem.
    """
    x, lam, nu = state.x, state.lam, state.nu
    g = problem.gradient(x) + problem.A.T @ lam
    sl = problem.slack_slice
    s = problem.slacks(x)
    m = max(problem.n_slacks, 1)
    feas = float(np.max(np.abs(problem.A @ x - problem.b), initial=0.0)) / (1 + np.max(np.abs(x), initial=0.0))
    scale = 1 + max(np.max(np.abs(lam), initial=0.0), np.max(np.abs(nu), initial=0.0))
    gl = g.copy()
    gl[sl] -= nu
    grad = float(np.max(np.abs(gl), initial=0.0)) / scale
    comp = float(np.dot(s, nu)) / m / (1 + abs(state.objective))
    gb = g.copy()
    gb[sl] -= state.mu / s
    barrier = max(float(np.max(np.abs(gb), initial=0.0)) / scale, feas)
    return KktMeasures(feas, grad, comp, barrier)


def ipm_solve(
    problem: OpfProblem,
    backend: Optional[LinearBackend] = None,
    config: Optional[IpmConfig] = None,
    seed: Optional[int] = None,
    progress=None,
) -> Tuple[IpmState, RunReport]:
    """Run the interior-point loop; returns the final state and a full report.

    ``progress``, if given, is called with each :class:`IterationRecord`.
    Raises :class:`DivergenceError` when ``|f| > f_guard`` or
    ``||x||_inf > x_guard`` and :class:`BackendError` when the linear solve fails.
    """
    backend = backend or LinearBackend()
    config = config or IpmConfig()
    state = initial_state(problem, config.mu0)
    ctrl = MuController(config.window, config.eps_conv, config.band, config.refreeze) if config.use_controller else None
    report = RunReport(problem.name, problem.formulation, backend.kind, seed)
    t_assemble = t_solve = t_kappa = 0.0
    nv = problem.n_vars
    sl = problem.slack_slice
    converged = False
    message = "iteration cap reached"

    for k in range(1, config.k_max + 1):
        t0 = time.perf_counter()
        kkt = kkt_assemble(problem, state.x, state.lam, state.mu, nu=state.nu)
        t1 = time.perf_counter()
        kappa = condition_number(kkt.M) if config.record_kappa else float("nan")
        t2 = time.perf_counter()
        try:
            d, inner = backend.solve(kkt.M, kkt.rhs)
        except Exception as exc:
            report.message = f"backend failure: {exc}"
            raise BackendError(str(exc), k, state, report) from exc
        t3 = time.perf_counter()
        t_assemble += t1 - t0
        t_kappa += t2 - t1
        t_solve += t3 - t2

        dx, dlam = d[:nv], d[nv:]
        s = state.x[sl]
        dnu = state.mu / s - state.nu - state.nu / s * dx[sl]
        alpha = step_length(s, dx[sl], state.nu, dnu)
        if alpha < config.min_step:
            message = "step length collapsed"
            break
        state.x = state.x + alpha * dx
        state.lam = state.lam + alpha * dlam
        state.nu = state.nu + alpha * dnu
        state.k = k
        state.objective = problem.objective(state.x)
        if (not np.isfinite(state.objective) or abs(state.objective) > config.f_guard
                or not np.all(np.isfinite(state.x)) or np.max(np.abs(state.x)) > config.x_guard):
            report.message = "diverged"
            raise DivergenceError(f"iterate left the overflow guard at iteration {k}", state, report)

        measures = kkt_measures(problem, state)
        mu_prev = state.mu
        mu_cand = mu_update_classical(state.x[sl], state.nu, config.sigma)
        frozen = False
        if ctrl is not None:
            if ctrl.frozen and (measures.barrier <= config.centring_tol or ctrl.held >= config.max_hold):
                ctrl.unfreeze()
            state.mu = mu_controller_step(ctrl, state.objective, mu_cand, mu_prev)
            frozen = ctrl.frozen
        else:
            state.mu = mu_cand
        record = IterationRecord(
            k=k,
            objective=state.objective,
            mu=state.mu,
            kappa=kappa,
            residual=measures.worst,
            step=alpha,
            mu_frozen=frozen,
            inner_iters=int(inner["iters"]),
            inner_cost=inner["final_cost"],
            inner_trace=inner["trace"],
        )
        report.iterations.append(record)
        if progress is not None:
            progress(record)
        if measures.worst <= config.eps_ipm:
            converged = True
            message = "converged"
            break

    report.converged = converged
    report.message = message
    report.final_objective = state.objective
    if config.record_timing:
        report.timing = {"assemble": t_assemble, "condition": t_kappa, "linear_solve": t_solve}
    return state, report
