"""
OPF problems as slack-form quadratic programs, log-barrier terms and the
reduced KKT Newton system.

Every problem is stored in one generic shape::

    min  1/2 x'Qx + c'x + const
    s.t. A x = b

where ``x = [core variables, slacks]``. Each finite bound on a core variable
adds one slack ``s >= 0`` and one equality row in which the slack carries
coefficient ``+1``:

    lower bound  lo - x_i + s = 0
    upper bound  x_i + s - hi = 0

Powers are in per unit of ``base_mva``; the objective is in $/h.

DC layout:  ``[P_G, theta (reference bus removed), s]`` with rows
``C_g P_G - B_red theta = P_D`` (one row per bus) followed by slack rows.

AC layout:  ``[P_G, Q_G, theta, V, s]`` adding ``C_g Q_G - G V = Q_D``, where
``G`` is the branch-susceptance Laplacian acting on voltage magnitudes.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np

from .caseio import CaseData


class ModelError(ValueError):
    """Problem cannot be built (inconsistent bounds, singular network)."""


class BarrierDomainError(ValueError):
    """A slack is not strictly positive."""


@dataclass
class OpfProblem:
    name: str
    formulation: str
    Q: np.ndarray
    c: np.ndarray
    const: float
    A: np.ndarray
    b: np.ndarray
    n_core: int
    slack_var: np.ndarray  # core variable bounded by each slack
    slack_sign: np.ndarray  # -1 for a lower bound, +1 for an upper bound
    x0: np.ndarray
    layout: Dict[str, slice] = field(default_factory=dict)
    var_names: List[str] = field(default_factory=list)

    @property
    def n_vars(self) -> int:
        return self.Q.shape[0]

    @property
    def n_slacks(self) -> int:
        return self.slack_var.shape[0]

    @property
    def n_rows(self) -> int:
        return self.A.shape[0]

    @property
    def slack_slice(self) -> slice:
        return slice(self.n_core, self.n_vars)

    @property
    def slack_rows(self) -> slice:
        """Rows of ``A`` that define the slacks, in slack order."""
        return slice(self.n_rows - self.n_slacks, self.n_rows)

    @property
    def kkt_dim(self) -> int:
        return self.n_vars + self.n_rows

    def objective(self, x: np.ndarray) -> float:
        return float(0.5 * x @ self.Q @ x + self.c @ x + self.const)

    def gradient(self, x: np.ndarray) -> np.ndarray:
        return self.Q @ x + self.c

    def slacks(self, x: np.ndarray) -> np.ndarray:
        return x[self.slack_slice]

    def slack_values_for(self, core: np.ndarray, clip: float = 0.1) -> np.ndarray:
        """Slacks implied by the bound gaps of ``core``, clipped below at ``clip``."""
        rows = self.A[self.slack_rows, : self.n_core]
        gaps = self.b[self.slack_rows] - rows @ core
        return np.maximum(gaps, clip)


def _assemble(name, formulation, Q_core, c_core, const, A_core, b_core, lower, upper, x0_core,
              layout=None, var_names=None) -> OpfProblem:
    n = Q_core.shape[0]
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if np.any(lower > upper):
        i = int(np.flatnonzero(lower > upper)[0])
        raise ModelError(f"variable {i}: lower bound {lower[i]} exceeds upper bound {upper[i]}")
    bounded = []
    for i in range(n):
        if np.isfinite(lower[i]):
            bounded.append((i, -1, lower[i]))
        if np.isfinite(upper[i]):
            bounded.append((i, +1, upper[i]))
    m_s = len(bounded)
    m_e = A_core.shape[0]
    nv = n + m_s
    Q = np.zeros((nv, nv))
    Q[:n, :n] = Q_core
    c = np.zeros(nv)
    c[:n] = c_core
    A = np.zeros((m_e + m_s, nv))
    A[:m_e, :n] = A_core
    b = np.zeros(m_e + m_s)
    b[:m_e] = b_core
    slack_var = np.array([i for i, _, _ in bounded], dtype=np.int64)
    slack_sign = np.array([s for _, s, _ in bounded], dtype=np.int64)
    for k, (i, sign, bound) in enumerate(bounded):
        row = m_e + k
        A[row, i] = float(sign)
        A[row, n + k] = 1.0
        b[row] = float(sign) * bound
    x0 = np.zeros(nv)
    x0[:n] = x0_core
    layout = dict(layout or {})
    layout["s"] = slice(n, nv)
    names = list(var_names or [f"x{i}" for i in range(n)])
    names += [f"s{k}" for k in range(m_s)]
    prob = OpfProblem(name, formulation, Q, c, float(const), A, b, n, slack_var, slack_sign, x0,
                      layout, names)
    x0[n:] = prob.slack_values_for(x0[:n])
    return prob


def bounded_qp(Q, c, lower, upper, A_eq=None, b_eq=None, x0=None, const=0.0, name="qp") -> OpfProblem:
    """Generic bound-constrained QP in slack form.

    Without ``x0`` each variable starts at its bound midpoint, one unit inside
    a single finite bound, or zero when unbounded.
    """
    Q = np.atleast_2d(np.asarray(Q, dtype=float))
    n = Q.shape[0]
    c = np.asarray(c, dtype=float).reshape(n)
    lower = np.broadcast_to(np.asarray(lower, dtype=float), (n,))
    upper = np.broadcast_to(np.asarray(upper, dtype=float), (n,))
    A_eq = np.zeros((0, n)) if A_eq is None else np.atleast_2d(np.asarray(A_eq, dtype=float))
    b_eq = np.zeros(0) if b_eq is None else np.asarray(b_eq, dtype=float).reshape(-1)
    if x0 is None:
        x0 = np.zeros(n)
        for i in range(n):
            lo, hi = lower[i], upper[i]
            if np.isfinite(lo) and np.isfinite(hi):
                x0[i] = 0.5 * (lo + hi)
            elif np.isfinite(lo):
                x0[i] = lo + 1.0
            elif np.isfinite(hi):
                x0[i] = hi - 1.0
    return _assemble(name, "qp", Q, c, const, A_eq, b_eq, lower, upper, np.asarray(x0, dtype=float))


# --------------------------------------------------------------------------
# network matrices
# --------------------------------------------------------------------------


def susceptance_matrix(case: CaseData) -> np.ndarray:
    """Full DC susceptance Laplacian ``B`` (per unit), one row per bus; rows sum to zero."""
    idx = case.bus_index
    nb = len(case.buses)
    B = np.zeros((nb, nb))
    for br in case.branches:
        if br.reactance == 0:
            raise ModelError(f"branch {br.from_bus}-{br.to_bus} has zero reactance")
        y = 1.0 / br.reactance
        i, j = idx[br.from_bus], idx[br.to_bus]
        if i == j:
            continue
        B[i, i] += y
        B[j, j] += y
        B[i, j] -= y
        B[j, i] -= y
    return B


def _non_ref(case: CaseData) -> np.ndarray:
    return np.array([i for i in range(len(case.buses)) if i != case.ref_bus], dtype=np.int64)


def reduced_susceptance(case: CaseData) -> np.ndarray:
    """``B`` with the reference bus row and column removed (the DC power-flow matrix)."""
    keep = _non_ref(case)
    return susceptance_matrix(case)[np.ix_(keep, keep)]


def power_flow_matrix(case: CaseData, formulation: str = "dc") -> np.ndarray:
    """Linear power-flow matrix: reduced ``B`` for dc; for ac, ``B_red`` and the
    susceptance Laplacian restricted to PQ buses stacked block-diagonally."""
    Bred = reduced_susceptance(case)
    if formulation == "dc":
        return Bred
    if formulation != "ac":
        raise ModelError(f"unknown formulation {formulation!r}")
    pq = np.array([i for i, b in enumerate(case.buses) if b.type == "PQ"], dtype=np.int64)
    Gpq = susceptance_matrix(case)[np.ix_(pq, pq)]
    n1, n2 = Bred.shape[0], Gpq.shape[0]
    out = np.zeros((n1 + n2, n1 + n2))
    out[:n1, :n1] = Bred
    out[n1:, n1:] = Gpq
    return out


def build_opf(case: CaseData, formulation: str = "dc") -> OpfProblem:
    """Slack-form OPF for ``formulation`` ``"dc"`` or ``"ac"`` (compact linear AC)."""
    if formulation not in ("dc", "ac"):
        raise ModelError(f"unknown formulation {formulation!r}")
    base = case.base_mva
    nb, ng = len(case.buses), len(case.generators)
    if ng == 0:
        raise ModelError("case has no in-service generators")
    idx = case.bus_index
    gens = case.generators
    for g in gens:
        if g.p_min > g.p_max or g.q_min > g.q_max:
            raise ModelError(f"generator at bus {g.bus} has inverted limits")
    B = susceptance_matrix(case)
    keep = _non_ref(case)
    Bcols = B[:, keep]
    if keep.size and np.linalg.matrix_rank(B[np.ix_(keep, keep)]) < keep.size:
        raise ModelError("reduced susceptance matrix is singular (network not connected)")
    Cg = np.zeros((nb, ng))
    for k, g in enumerate(gens):
        Cg[idx[g.bus], k] = 1.0
    pd = np.array([b.p_demand for b in case.buses]) / base
    qd = np.array([b.q_demand for b in case.buses]) / base
    c2 = np.array([g.cost[0] for g in gens])
    c1 = np.array([g.cost[1] for g in gens])
    c0 = np.array([g.cost[2] for g in gens])
    pmin = np.array([g.p_min for g in gens]) / base
    pmax = np.array([g.p_max for g in gens]) / base
    nt = keep.size

    names = [f"Pg{k}@{g.bus}" for k, g in enumerate(gens)]
    if formulation == "dc":
        n = ng + nt
        Q = np.zeros((n, n))
        Q[:ng, :ng] = np.diag(2.0 * c2 * base * base)
        c = np.zeros(n)
        c[:ng] = c1 * base
        A = np.hstack([Cg, -Bcols])
        lower = np.concatenate([pmin, np.full(nt, -np.inf)])
        upper = np.concatenate([pmax, np.full(nt, np.inf)])
        x0 = np.concatenate([0.5 * (pmin + pmax), np.zeros(nt)])
        layout = {"pg": slice(0, ng), "theta": slice(ng, ng + nt)}
        names += [f"theta@{case.buses[i].id}" for i in keep]
        return _assemble(case.name, "dc", Q, c, c0.sum(), A, pd, lower, upper, x0, layout, names)

    qmin = np.array([g.q_min for g in gens]) / base
    qmax = np.array([g.q_max for g in gens]) / base
    vmin = np.array([b.v_min for b in case.buses])
    vmax = np.array([b.v_max for b in case.buses])
    n = 2 * ng + nt + nb
    Q = np.zeros((n, n))
    Q[:ng, :ng] = np.diag(2.0 * c2 * base * base)
    c = np.zeros(n)
    c[:ng] = c1 * base
    A = np.zeros((2 * nb, n))
    A[:nb, :ng] = Cg
    A[:nb, 2 * ng:2 * ng + nt] = -Bcols
    A[nb:, ng:2 * ng] = Cg
    A[nb:, 2 * ng + nt:] = -B
    b = np.concatenate([pd, qd])
    lower = np.concatenate([pmin, qmin, np.full(nt, -np.inf), vmin])
    upper = np.concatenate([pmax, qmax, np.full(nt, np.inf), vmax])
    x0 = np.concatenate([0.5 * (pmin + pmax), 0.5 * (qmin + qmax), np.zeros(nt), np.ones(nb)])
    layout = {
        "pg": slice(0, ng),
        "qg": slice(ng, 2 * ng),
        "theta": slice(2 * ng, 2 * ng + nt),
        "vm": slice(2 * ng + nt, n),
    }
    names += [f"Qg{k}@{g.bus}" for k, g in enumerate(gens)]
    names += [f"theta@{case.buses[i].id}" for i in keep]
    names += [f"V@{bus.id}" for bus in case.buses]
    return _assemble(case.name, "ac", Q, c, c0.sum(), A, b, lower, upper, x0, layout, names)


# --------------------------------------------------------------------------
# barrier and KKT
# --------------------------------------------------------------------------


def _checked_slacks(problem: OpfProblem, x: np.ndarray) -> np.ndarray:
    s = problem.slacks(x)
    if np.any(s <= 0) or not np.all(np.isfinite(s)):
        raise BarrierDomainError("barrier requires strictly positive slacks")
    return s


def barrier_value(problem: OpfProblem, x: np.ndarray, mu: float) -> float:
    """``f(x) - mu * sum(ln s)``."""
    x = np.asarray(x, dtype=float)
    s = _checked_slacks(problem, x)
    return problem.objective(x) - mu * float(np.sum(np.log(s)))


def barrier_gradient(problem: OpfProblem, x: np.ndarray, mu: float) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    s = _checked_slacks(problem, x)
    g = problem.gradient(x)
    g[problem.slack_slice] -= mu / s
    return g


@dataclass
class KktSystem:
    H: np.ndarray
    J: np.ndarray
    r: np.ndarray
    c: np.ndarray
    M: np.ndarray
    rhs: np.ndarray

    @property
    def dim(self) -> int:
        return self.M.shape[0]


def kkt_assemble(problem: OpfProblem, x: np.ndarray, lam: np.ndarray, mu: float,
                 nu: Optional[np.ndarray] = None) -> KktSystem:
    """Reduced Newton system ``[[H, J'], [J, 0]] d = -[r; c]`` at ``(x, lam, mu)``.

    ``H = Q + diag(mu / s^2)`` on the slack block, ``r = grad f + J' lam - mu / s``
    on slacks, ``c = A x - b``. Passing slack multipliers ``nu`` replaces the
    barrier curvature ``mu / s^2`` by the primal-dual scaling ``nu / s``; the
    two agree on the central path ``nu = mu / s``.
    """
    x = np.asarray(x, dtype=float)
    lam = np.asarray(lam, dtype=float)
    if x.shape != (problem.n_vars,) or lam.shape != (problem.n_rows,):
        raise ValueError(
            f"iterate shapes {x.shape}, {lam.shape} do not match problem ({problem.n_vars}, {problem.n_rows})"
        )
    s = _checked_slacks(problem, x)
    H = problem.Q.copy()
    sl = problem.slack_slice
    if nu is None:
        H[sl, sl] += np.diag(mu / (s * s))
    else:
        nu = np.asarray(nu, dtype=float)
        if nu.shape != s.shape:
            raise ValueError(f"nu has shape {nu.shape}, expected {s.shape}")
        H[sl, sl] += np.diag(nu / s)
    J = problem.A
    r = barrier_gradient(problem, x, mu) + J.T @ lam
    c = J @ x - problem.b
    nv, m = problem.n_vars, problem.n_rows
    M = np.zeros((nv + m, nv + m))
    M[:nv, :nv] = H
    M[:nv, nv:] = J.T
    M[nv:, :nv] = J
    return KktSystem(H, J, r, c, M, -np.concatenate([r, c]))


def condition_number(matrix: np.ndarray) -> float:
    """``sigma_max / sigma_min`` from a full SVD; ``inf`` once ``sigma_min < 1e-300``."""
    matrix = np.asarray(matrix)
    if matrix.ndim != 2 or matrix.size == 0:
        raise ValueError("condition number needs a non-empty 2-D matrix")
    if matrix.shape[0] != matrix.shape[1]:
        raise ValueError("condition number needs a square matrix")
    sv = np.linalg.svd(matrix, compute_uv=False)
    if sv[-1] < 1e-300:
        return float("inf")
    return float(sv[0] / sv[-1])
