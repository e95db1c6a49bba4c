"""Convex quadratic programming with linear constraints by a primal active-set
method.

Objective convention: minimize 0.5 * v @ Q @ v + c @ v + constant.  The
feasible start comes from a zero-objective LP solve; equality-constrained
subproblems are solved through a null-space basis built from Householder QR,
with the reduced Hessian factored by Cholesky.  When Q is singular the
solver lifts it to Q + 1e-9 I, which keeps the reduced Hessian positive
definite while perturbing the reported KKT residual only at the 1e-9 level.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import linalg
from .lp import Constraint, LinearProgram, Status, solve_lp

LIFT = 1e-9
MULT_TOL = 1e-8
ACTIVE_TOL = 1e-9


class ActiveSetCycleError(RuntimeError):
    """The same working set was revisited without objective progress."""


class QpStatus(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"


@dataclass
class QuadraticProgram:
    """min 0.5 v'Qv + c'v + constant s.t. constraints and bounds."""

    q: np.ndarray
    c: np.ndarray
    constraints: list[Constraint]
    lower: np.ndarray
    upper: np.ndarray
    constant: float = 0.0

    def __post_init__(self):
        self.q = np.asarray(self.q, dtype=float)
        self.c = np.asarray(self.c, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    @property
    def n_vars(self) -> int:
        return self.c.shape[0]

    def validate(self) -> None:
        n = self.n_vars
        if self.q.shape != (n, n):
            raise ValueError(f"Q must be {n}x{n}, got {self.q.shape}")
        scale = max(1.0, np.abs(self.q).max())
        if np.abs(self.q - self.q.T).max() > 1e-10 * scale:
            raise ValueError("Q is not symmetric within 1e-10")
        # PSD up to tolerance: Q + 2e-8*scale*I must admit a Cholesky factor
        try:
            linalg.cholesky_factor(self.q + 2e-8 * scale * np.eye(n))
        except linalg.LinAlgError:
            raise ValueError("Q is not positive semidefinite (within 1e-8)") from None
        LinearProgram(self.c, self.constraints, self.lower, self.upper).validate()

    def objective(self, v: np.ndarray) -> float:
        return float(0.5 * v @ self.q @ v + self.c @ v + self.constant)


@dataclass
class QpSolution:
    status: QpStatus
    values: np.ndarray | None
    objective_value: float | None
    kkt_residual: float = np.nan
    iterations: int = 0


def _gather_rows(prob: QuadraticProgram):
    """Normalize to G v >= g rows; equalities first.  Bounds become rows."""
    n = prob.n_vars
    rows = []
    rhs = []
    n_eq = 0
    for con in prob.constraints:
        a = np.zeros(n)
        for i, v in con.coeffs:
            a[i] += v
        if con.sense == "=":
            rows.insert(n_eq, a)
            rhs.insert(n_eq, con.rhs)
            n_eq += 1
        elif con.sense == ">=":
            rows.append(a)
            rhs.append(con.rhs)
        else:
            rows.append(-a)
            rhs.append(-con.rhs)
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = 1.0
        if np.isfinite(prob.lower[j]):
            rows.append(ej.copy())
            rhs.append(prob.lower[j])
        if np.isfinite(prob.upper[j]):
            rows.append(-ej)
            rhs.append(-prob.upper[j])
    g_mat = np.array(rows) if rows else np.zeros((0, n))
    return g_mat, np.array(rhs), n_eq


def _feasible_start(prob: QuadraticProgram) -> np.ndarray | None:
    feas = LinearProgram(np.zeros(prob.n_vars), prob.constraints, prob.lower, prob.upper)
    sol = solve_lp(feas)
    if sol.status != Status.OPTIMAL:
        return None
    return sol.values.copy()


def _null_space_solve(q_mat, c_vec, a_w, b_w, x0):
    """Exact minimizer of 0.5 v'Qv + c'v on the affine set A_w v = b_w.

    Returns (x, lam) where lam solves the stationarity system on the active
    rows.  One iterative-refinement pass keeps residuals near machine
    precision even when the reduced Hessian is badly scaled.
    """
    n = q_mat.shape[0]
    w = a_w.shape[0]
    if w == 0:
        x = x0 - linalg.cholesky_solve(q_mat, q_mat @ x0 + c_vec)
        return x, np.zeros(0)
    q_full, r_full = linalg.householder_qr(a_w.T)
    r1 = r_full[:w, :w]
    y_basis = q_full[:, :w]
    z_basis = q_full[:, w:]
    # particular solution: A_w = R1' Y', so solve R1' t = b_w and take x = Y t
    t = linalg.solve_lower(r1.T, b_w)
    x = y_basis @ t
    if z_basis.shape[1]:
        h = z_basis.T @ q_mat @ z_basis
        rhs = -z_basis.T @ (q_mat @ x + c_vec)
        v = linalg.cholesky_solve(h, rhs)
        x = x + z_basis @ v
        # one refinement pass
        rhs2 = -z_basis.T @ (q_mat @ x + c_vec)
        x = x + z_basis @ linalg.cholesky_solve(h, rhs2)
    grad = q_mat @ x + c_vec
    lam = linalg.solve_upper(r1, y_basis.T @ grad)
    return x, lam


def _independent_rows(a_rows: np.ndarray) -> bool:
    if a_rows.shape[0] == 0:
        return True
    if a_rows.shape[0] > a_rows.shape[1]:
        return False
    _, r = linalg.householder_qr(a_rows.T)
    diag = np.abs(np.diag(r[:a_rows.shape[0], :a_rows.shape[0]]))
    return bool(diag.min() > 1e-10 * max(1.0, diag.max()))


def solve_qp(prob: QuadraticProgram, max_iter: int | None = None) -> QpSolution:
    """Primal active-set method; see the module docstring for conventions."""
    prob.validate()
    n = prob.n_vars
    g_mat, g_rhs, n_eq = _gather_rows(prob)
    n_rows = g_mat.shape[0]
    if max_iter is None:
        max_iter = 100 * (n + n_rows) + 100
    x = _feasible_start(prob)
    if x is None:
        return QpSolution(QpStatus.INFEASIBLE, None, None)

    q_work = prob.q
    lifted = False

    def ensure_lifted():
        nonlocal q_work, lifted
        if not lifted:
            q_work = prob.q + LIFT * np.eye(n)
            lifted = True

    # initial working set: equalities plus independent active inequalities
    work: list[int] = list(range(n_eq))
    resid = g_mat @ x - g_rhs if n_rows else np.zeros(0)
    for i in range(n_eq, n_rows):
        if resid[i] <= ACTIVE_TOL:
            cand = work + [i]
            if _independent_rows(g_mat[cand]):
                work = cand

    seen_since_progress: set[frozenset] = set()
    last_obj = prob.objective(x)
    iterations = 0
    while True:
        if iterations >= max_iter:
            raise ActiveSetCycleError("active-set iteration cap exceeded")
        iterations += 1
        a_w = g_mat[work] if work else np.zeros((0, n))
        b_w = g_rhs[work] if work else np.zeros(0)
        try:
            x_star, lam = _null_space_solve(q_work, prob.c, a_w, b_w, x)
        except linalg.LinAlgError:
            ensure_lifted()
            x_star, lam = _null_space_solve(q_work, prob.c, a_w, b_w, x)
        p = x_star - x
        if np.max(np.abs(p)) <= 1e-11 * max(1.0, np.max(np.abs(x))):
            # subspace minimizer: check multipliers of active inequalities
            ineq_lams = [(lam[t], work[t]) for t in range(len(work)) if work[t] >= n_eq]
            if not ineq_lams or min(l for l, _ in ineq_lams) >= -MULT_TOL:
                return _finish(prob, q_work, g_mat, g_rhs, n_eq, work, x, iterations)
            worst = min(ineq_lams, key=lambda t: (t[0], t[1]))
            key = frozenset(work)
            obj = prob.objective(x)
            if obj < last_obj - 1e-12 * max(1.0, abs(last_obj)):
                seen_since_progress.clear()
                last_obj = obj
            if key in seen_since_progress:
                raise ActiveSetCycleError("active-set cycle detected")
            seen_since_progress.add(key)
            work = [r for r in work if r != worst[1]]
            continue
        # step toward the subspace minimizer, stopping at a blocking row
        alpha = 1.0
        blocking = -1
        for i in range(n_eq, n_rows):
            if i in work:
                continue
            s = g_mat[i] @ p
            if s >= -1e-12:
                continue
            ai = (g_rhs[i] - g_mat[i] @ x) / s
            if ai < alpha - 1e-14:
                alpha = max(ai, 0.0)
                blocking = i
        x = x + alpha * p
        if blocking >= 0:
            cand = work + [blocking]
            if _independent_rows(g_mat[cand]):
                work = cand
            # dependent blocking rows are ignored; the next subspace solve
            # re-evaluates the geometry from the updated point


def _finish(prob, q_work, g_mat, g_rhs, n_eq, work, x, iterations) -> QpSolution:
    a_w = g_mat[work] if work else np.zeros((0, prob.n_vars))
    b_w = g_rhs[work] if work else np.zeros(0)
    x_fin, lam = _null_space_solve(q_work, prob.c, a_w, b_w, x)
    # KKT residual against the ORIGINAL Q
    stat = prob.q @ x_fin + prob.c
    if len(work):
        stat = stat - a_w.T @ lam
    feas = 0.0
    if g_mat.shape[0]:
        resid = g_mat @ x_fin - g_rhs
        feas = max(0.0, float(-resid[n_eq:].min())) if resid.shape[0] > n_eq else 0.0
        if n_eq:
            feas = max(feas, float(np.max(np.abs(resid[:n_eq]))))
    kkt = max(float(np.max(np.abs(stat))) if stat.size else 0.0, feas)
    return QpSolution(QpStatus.OPTIMAL, x_fin, prob.objective(x_fin), kkt, iterations)
