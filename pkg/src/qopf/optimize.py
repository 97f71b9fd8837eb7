"""
Classical optimizers for variational parameters.

Three families: adaptive-moment gradient descent (Adam), BFGS quasi-Newton
with a Wolfe line search, and a derivative-free simplex-gradient trust-region
method in the spirit of COBYLA for unconstrained problems. All are
deterministic given ``(fun, x0, cfg)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, List, Optional, Tuple

import numpy as np


class OptimizerError(RuntimeError):
    """Optimizer aborted; ``result`` holds the best point seen so far."""

    def __init__(self, message: str, result: Optional["OptimizeResult"] = None):
        super().__init__(message)
        self.result = result


@dataclass
class OptimizerConfig:
    """Settings for all three optimizer kinds; each reads only its own fields."""

    kind: str = "adam"
    max_iter: int = 1000
    cost_tol: Optional[float] = None
    # adam
    learning_rate: float = 0.05
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    grad_tol: float = 1e-8
    patience: Optional[int] = None
    min_improvement: float = 1e-6
    # quasi-newton
    wolfe_c1: float = 1e-4
    wolfe_c2: float = 0.9
    max_backtracks: int = 50
    fd_step: float = 1e-6
    # derivative-free
    rho_begin: float = 0.5
    rho_end: float = 1e-6

    def __post_init__(self):
        if self.kind not in ("adam", "quasi-newton", "derivative-free"):
            raise ValueError(f"unknown optimizer kind {self.kind!r}")
        if self.learning_rate <= 0:
            raise ValueError("learning rate must be positive")
        if not (0 <= self.beta1 < 1 and 0 <= self.beta2 < 1):
            raise ValueError("moment decays must lie in [0, 1)")
        if not 0 < self.rho_end <= self.rho_begin:
            raise ValueError("trust radii must satisfy 0 < rho_end <= rho_begin")


@dataclass
class OptimizeResult:
    x: np.ndarray
    fun: float
    trace: List[float]
    nit: int
    nfev: int = 0
    converged: bool = False
    message: str = ""
    inv_hessian: Optional[np.ndarray] = None

    @property
    def best_trace(self) -> List[float]:
        return list(np.minimum.accumulate(self.trace)) if self.trace else []


def _finite(*values) -> bool:
    return all(np.all(np.isfinite(v)) for v in values)


def adam_minimize(
    fun: Callable[[np.ndarray], Tuple[float, np.ndarray]],
    x0: np.ndarray,
    cfg: Optional[OptimizerConfig] = None,
) -> OptimizeResult:
    """Bias-corrected Adam on ``fun(x) -> (value, gradient)``.

    Stops when the cost drops below ``cfg.cost_tol``, the gradient norm drops
    below ``cfg.grad_tol``, the best cost has not improved by
    ``cfg.min_improvement`` within ``cfg.patience`` steps (if set), or after
    ``cfg.max_iter`` steps. Returns the best point visited.
    """
    cfg = cfg or OptimizerConfig()
    x = np.array(x0, dtype=float)
    m = np.zeros_like(x)
    v = np.zeros_like(x)
    trace: List[float] = []
    best_x, best_f = x.copy(), np.inf
    last_gain = 0
    message = "iteration cap reached"
    converged = False
    nfev = 0
    for t in range(1, cfg.max_iter + 1):
        f, g = fun(x)
        nfev += 1
        g = np.asarray(g, dtype=float)
        if not _finite(f, g):
            raise OptimizerError(f"non-finite objective or gradient at step {t}",
                                 OptimizeResult(best_x, best_f, trace, t - 1, nfev))
        trace.append(float(f))
        if f < best_f - cfg.min_improvement * max(1.0, abs(best_f)) or not np.isfinite(best_f):
            last_gain = t
        if f < best_f:
            best_x, best_f = x.copy(), float(f)
        if cfg.cost_tol is not None and f <= cfg.cost_tol:
            message, converged = "cost tolerance reached", True
            break
        if np.linalg.norm(g) < cfg.grad_tol:
            message, converged = "gradient norm below tolerance", True
            break
        if cfg.patience is not None and t - last_gain >= cfg.patience:
            message = "stalled"
            break
        m = cfg.beta1 * m + (1 - cfg.beta1) * g
        v = cfg.beta2 * v + (1 - cfg.beta2) * g * g
        m_hat = m / (1 - cfg.beta1 ** t)
        v_hat = v / (1 - cfg.beta2 ** t)
        x = x - cfg.learning_rate * m_hat / (np.sqrt(v_hat) + cfg.eps)
    return OptimizeResult(best_x, best_f, trace, len(trace), nfev, converged, message)


def _fd_gradient(fun, x, step):
    # central differences: forward ones stall BFGS well short of 1e-4 accuracy
    g = np.empty_like(x)
    for i in range(x.size):
        h = step * max(1.0, abs(x[i]))
        xp = x.copy()
        xm = x.copy()
        xp[i] += h
        xm[i] -= h
        g[i] = (fun(xp) - fun(xm)) / (2.0 * h)
    return g


def _wolfe_search(phi, dphi, f0, d0, c1, c2, max_evals):
    """Bracket-and-zoom search for a step meeting the strong Wolfe conditions.

    Returns ``(alpha, f_alpha)``, or ``(None, None)`` if no step with
    sufficient decrease was found within ``max_evals`` evaluations.
    """
    evals = 0
    armijo = None

    def zoom(lo, f_lo, d_lo, hi, f_hi):
        nonlocal evals, armijo
        while evals < max_evals:
            delta = hi - lo
            denom = 2.0 * (f_hi - f_lo - d_lo * delta)
            a = lo - d_lo * delta * delta / denom if denom > 0 else lo + 0.5 * delta
            left, right = min(lo, hi), max(lo, hi)
            if not left + 0.1 * (right - left) <= a <= right - 0.1 * (right - left):
                a = 0.5 * (lo + hi)
            f = phi(a)
            evals += 1
            if not np.isfinite(f) or f > f0 + c1 * a * d0 or f >= f_lo:
                hi, f_hi = a, f
                continue
            armijo = (a, f)
            d = dphi(a)
            if abs(d) <= -c2 * d0:
                return a, f
            if d * (hi - lo) >= 0:
                hi, f_hi = lo, f_lo
            lo, f_lo, d_lo = a, f, d
        return armijo if armijo is not None else (None, None)

    a_prev, f_prev, d_prev = 0.0, f0, d0
    a = 1.0
    while evals < max_evals:
        f = phi(a)
        evals += 1
        if not np.isfinite(f) or f > f0 + c1 * a * d0 or (a_prev > 0 and f >= f_prev):
            return zoom(a_prev, f_prev, d_prev, a, f if np.isfinite(f) else np.inf)
        armijo = (a, f)
        d = dphi(a)
        if abs(d) <= -c2 * d0:
            return a, f
        if d >= 0:
            return zoom(a, f, d, a_prev, f_prev)
        a_prev, f_prev, d_prev = a, f, d
        a *= 2.0
    return armijo if armijo is not None else (None, None)


def quasi_newton_minimize(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    cfg: Optional[OptimizerConfig] = None,
    grad: Optional[Callable[[np.ndarray], np.ndarray]] = None,
) -> OptimizeResult:
    """BFGS with an inverse-Hessian update and a Wolfe line search.

    Without ``grad`` the gradient is a central difference with step
    ``cfg.fd_step * max(1, |x_i|)``. The update is skipped when the curvature
    condition ``s.y > 0`` fails, which keeps the approximation positive definite.
    """
    cfg = cfg or OptimizerConfig(kind="quasi-newton")
    x = np.array(x0, dtype=float)
    nfev = 0

    def f_eval(z):
        nonlocal nfev
        nfev += 1
        return float(fun(z))

    def g_eval(z, fz):
        if grad is not None:
            return np.asarray(grad(z), dtype=float)
        return _fd_gradient(f_eval, z, cfg.fd_step)

    f = f_eval(x)
    g = g_eval(x, f)
    n = x.size
    Hinv = np.eye(n)
    trace = [f]
    converged = False
    message = "iteration cap reached"
    first = True
    for it in range(cfg.max_iter):
        if not _finite(f, g):
            raise OptimizerError("non-finite objective or gradient", OptimizeResult(x, f, trace, it, nfev))
        if np.linalg.norm(g) < cfg.grad_tol or (cfg.cost_tol is not None and f <= cfg.cost_tol):
            converged, message = True, "converged"
            break
        p = -Hinv @ g
        slope = float(g @ p)
        if slope >= 0:
            Hinv = np.eye(n)
            p = -g
            slope = float(g @ p)

        cache = {}

        def phi(a):
            if a not in cache:
                cache[a] = [f_eval(x + a * p), None]
            return cache[a][0]

        def dphi(a):
            entry = cache[a]
            if entry[1] is None:
                entry[1] = g_eval(x + a * p, entry[0])
            return float(entry[1] @ p)

        alpha, f_new = _wolfe_search(phi, dphi, f, slope, cfg.wolfe_c1, cfg.wolfe_c2, cfg.max_backtracks)
        if alpha is not None or abs(slope) <= 1e-14 * max(1.0, abs(f)):
            pass
        elif not np.array_equal(p, -g):
            # stale curvature: retry once along steepest descent
            p = -g
            slope = float(g @ p)
            cache.clear()
            alpha, f_new = _wolfe_search(phi, dphi, f, slope, cfg.wolfe_c1, cfg.wolfe_c2, cfg.max_backtracks)
            if alpha is not None:
                Hinv = np.eye(n)
                first = True
        if alpha is None and abs(slope) <= 1e-14 * max(1.0, abs(f)):
            # predicted decrease is below rounding in f: nothing left to gain
            converged, message = True, "converged to machine precision"
            break
        if alpha is None:
            raise OptimizerError(
                f"line search failed after {cfg.max_backtracks} steps",
                OptimizeResult(x, f, trace, it, nfev, False, "line search failure", Hinv),
            )
        x_new = x + alpha * p
        g_new = cache[alpha][1]
        if g_new is None:
            g_new = g_eval(x_new, f_new)
        s = x_new - x
        y = g_new - g
        sy = float(s @ y)
        if sy > 1e-12 * np.linalg.norm(s) * np.linalg.norm(y):
            if first:
                Hinv = np.eye(n) * (sy / float(y @ y))
                first = False
            rho = 1.0 / sy
            V = np.eye(n) - rho * np.outer(s, y)
            Hinv = V @ Hinv @ V.T + rho * np.outer(s, s)
        improvement = f - f_new
        x, f, g = x_new, f_new, g_new
        trace.append(f)
        if cfg.cost_tol is not None and f <= cfg.cost_tol:
            converged, message = True, "cost tolerance reached"
            break
        if improvement <= 1e-15 * max(1.0, abs(f)) and np.linalg.norm(s) <= 1e-15 * max(1.0, np.linalg.norm(x)):
            converged, message = True, "no further progress"
            break
    return OptimizeResult(x, f, trace, len(trace) - 1, nfev, converged, message, Hinv)


def derivative_free_minimize(
    fun: Callable[[np.ndarray], float],
    x0: np.ndarray,
    cfg: Optional[OptimizerConfig] = None,
) -> OptimizeResult:
    """Linear-surrogate trust-region search over a simplex of ``n + 1`` points.

    Each iteration fits the linear model through the simplex, steps a distance
    ``rho`` downhill from the best vertex and replaces the worst vertex on
    success. On failure the simplex contracts toward the best vertex and
    ``rho`` halves. Stops once ``rho < cfg.rho_end`` or after ``cfg.max_iter``
    iterations. ``trace`` records the best cost after every iteration.
    """
    cfg = cfg or OptimizerConfig(kind="derivative-free")
    x0 = np.array(x0, dtype=float)
    n = x0.size
    rho = cfg.rho_begin
    nfev = 0

    def f_eval(z):
        nonlocal nfev
        nfev += 1
        val = float(fun(z))
        if not np.isfinite(val):
            raise OptimizerError("non-finite objective")
        return val

    def build(center, radius):
        pts = np.vstack([center, center + radius * np.eye(n)])
        return pts, np.array([f_eval(p) for p in pts])

    pts, vals = build(x0, rho)
    trace: List[float] = []
    reinitialised = False
    message = "iteration cap reached"
    converged = False
    for it in range(cfg.max_iter):
        order = np.argsort(vals, kind="stable")
        pts, vals = pts[order], vals[order]
        trace.append(float(vals[0]))
        if cfg.cost_tol is not None and vals[0] <= cfg.cost_tol:
            converged, message = True, "cost tolerance reached"
            break
        if rho < cfg.rho_end:
            converged, message = True, "trust radius below final radius"
            break
        D = pts[1:] - pts[0]
        if np.linalg.matrix_rank(D) < n or np.linalg.cond(D) > 1e12:
            if reinitialised:
                raise OptimizerError("degenerate simplex after re-initialisation",
                                     OptimizeResult(pts[0], vals[0], trace, it, nfev))
            reinitialised = True
            pts, vals = build(pts[0], rho)
            continue
        reinitialised = False
        g = np.linalg.solve(D, vals[1:] - vals[0])
        gn = np.linalg.norm(g)
        success = False
        if gn > 0:
            trial = pts[0] - rho * g / gn
            ft = f_eval(trial)
            if ft < vals[0]:
                pts[-1], vals[-1] = trial, ft
                success = True
        if not success:
            rho *= 0.5
            pts[1:] = pts[0] + 0.5 * (pts[1:] - pts[0])
            vals[1:] = [f_eval(p) for p in pts[1:]]
        else:
            # keep the simplex within a few radii of the best point
            far = np.linalg.norm(pts - pts[np.argmin(vals)], axis=1) > 4.0 * rho
            if np.any(far):
                best = pts[np.argmin(vals)].copy()
                pts, vals = build(best, rho)
    i = int(np.argmin(vals))
    return OptimizeResult(pts[i].copy(), float(vals[i]), trace, len(trace), nfev, converged, message)


def minimize(fun_and_grad, fun, x0, cfg: OptimizerConfig) -> OptimizeResult:
    """Dispatch on ``cfg.kind``; ``fun_and_grad`` feeds Adam, ``fun`` the others."""
    if cfg.kind == "adam":
        return adam_minimize(fun_and_grad, x0, cfg)
    if cfg.kind == "quasi-newton":
        return quasi_newton_minimize(fun, x0, cfg, grad=lambda z: fun_and_grad(z)[1])
    return derivative_free_minimize(fun, x0, cfg)
