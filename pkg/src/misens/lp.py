"""Linear programming over bounded variables by the revised simplex method.

Constraints are held in equality form with one slack per row; the working
basis inverse is maintained explicitly and refactorized periodically.  A
cold solve runs a two-phase method with artificial variables; a warm solve
(from a caller-supplied basis, e.g. a branch-and-bound parent) re-optimizes
with the bounded-variable dual simplex when the old basis is primal
infeasible but dual feasible, and falls back to the cold path otherwise, so
correctness never depends on the warm start.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from . import linalg

FEAS_TOL = 1e-7
OPT_TOL = 1e-7
PIVOT_TOL = 1e-9
DEGEN_TOL = 1e-10
REFACTOR_EVERY = 128

# column status codes
BASIC, AT_LO, AT_UP, FREE = 0, 1, 2, 3

SENSES = ("<=", "=", ">=")


class SimplexStalledError(RuntimeError):
    """Iteration cap exceeded."""


class Status(enum.Enum):
    OPTIMAL = "optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"


@dataclass(frozen=True)
class Constraint:
    """Sparse row `sum(coeff * v[idx]) sense rhs`."""

    coeffs: tuple[tuple[int, float], ...]
    sense: str
    rhs: float

    def __post_init__(self):
        if self.sense not in SENSES:
            raise ValueError(f"unknown sense {self.sense!r}")
        object.__setattr__(self, "coeffs", tuple((int(i), float(v)) for i, v in self.coeffs))
        object.__setattr__(self, "rhs", float(self.rhs))

    @classmethod
    def of(cls, coeffs: dict[int, float], sense: str, rhs: float) -> "Constraint":
        return cls(tuple(sorted(coeffs.items())), sense, rhs)


@dataclass
class LinearProgram:
    """min objective @ v subject to constraints and lower <= v <= upper."""

    objective: np.ndarray
    constraints: list[Constraint]
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        self.objective = np.asarray(self.objective, dtype=float)
        self.lower = np.asarray(self.lower, dtype=float)
        self.upper = np.asarray(self.upper, dtype=float)

    @property
    def n_vars(self) -> int:
        return self.objective.shape[0]

    @property
    def n_rows(self) -> int:
        return len(self.constraints)

    def validate(self) -> None:
        n = self.n_vars
        if not np.all(np.isfinite(self.objective)):
            raise ValueError("objective has non-finite coefficients")
        if self.lower.shape != (n,) or self.upper.shape != (n,):
            raise ValueError("bounds length must match the number of variables")
        if np.any(np.isnan(self.lower)) or np.any(np.isnan(self.upper)):
            raise ValueError("bounds may be infinite but not NaN")
        if np.any(self.lower > self.upper):
            j = int(np.nonzero(self.lower > self.upper)[0][0])
            raise ValueError(f"variable {j} has lower bound above upper bound")
        for k, con in enumerate(self.constraints):
            if not np.isfinite(con.rhs):
                raise ValueError(f"constraint {k} has non-finite rhs")
            for i, v in con.coeffs:
                if i < 0 or i >= n:
                    raise ValueError(f"constraint {k} references variable {i} out of range")
                if not np.isfinite(v):
                    raise ValueError(f"constraint {k} has non-finite coefficient")


@dataclass(frozen=True)
class Basis:
    """Warm-start state: basic column per row plus status per column.

    Columns are indexed over structural variables followed by one slack per
    constraint row; status codes are BASIC/AT_LO/AT_UP/FREE.
    """

    basic: tuple[int, ...]
    status: tuple[int, ...]


@dataclass
class HotStart:
    """Warm start plus the parent's basis inverse, skipping refactorization.

    Only valid for a problem with identical rows/columns and (possibly)
    different bounds — exactly the branch-and-bound child case.
    """

    basic: np.ndarray
    vstat: np.ndarray
    binv: np.ndarray


@dataclass
class LpSolution:
    status: Status
    values: np.ndarray | None
    objective_value: float | None
    dual_values: np.ndarray | None
    reduced_costs: np.ndarray | None = None
    basis: Basis | None = None
    iterations: int = 0
    hot: "HotStart | None" = None  # internal re-solve accelerator


def format_lp(prob: LinearProgram) -> str:
    """Fixed-order textual dump (one constraint per line) for external checks."""
    lines = ["min " + " + ".join(f"{c!r}*v{j}" for j, c in enumerate(prob.objective) if c != 0.0)]
    for con in prob.constraints:
        lhs = " + ".join(f"{v!r}*v{i}" for i, v in con.coeffs)
        lines.append(f"{lhs} {con.sense} {con.rhs!r}")
    for j in range(prob.n_vars):
        lines.append(f"{prob.lower[j]!r} <= v{j} <= {prob.upper[j]!r}")
    return "\n".join(lines) + "\n"


@dataclass
class CompiledLp:
    """Equality-form arrays shared across repeated solves with varying bounds."""

    a: np.ndarray          # m x (n_struct + m), structural columns then slack identity
    rhs: np.ndarray
    cost: np.ndarray       # extended, slacks cost 0
    slack_lo: np.ndarray
    slack_hi: np.ndarray
    n_struct: int
    m: int


def compile_lp(prob: LinearProgram) -> CompiledLp:
    prob.validate()
    n, m = prob.n_vars, prob.n_rows
    a = np.zeros((m, n + m))
    rhs = np.empty(m)
    slack_lo = np.empty(m)
    slack_hi = np.empty(m)
    for k, con in enumerate(prob.constraints):
        for i, v in con.coeffs:
            a[k, i] += v
        a[k, n + k] = 1.0
        rhs[k] = con.rhs
        if con.sense == "<=":
            slack_lo[k], slack_hi[k] = 0.0, np.inf
        elif con.sense == ">=":
            slack_lo[k], slack_hi[k] = -np.inf, 0.0
        else:
            slack_lo[k], slack_hi[k] = 0.0, 0.0
    cost = np.concatenate([prob.objective, np.zeros(m)])
    return CompiledLp(a, rhs, cost, slack_lo, slack_hi, n, m)


class _Simplex:
    """One solve over the compiled arrays; not reusable."""

    def __init__(self, comp: CompiledLp, lower, upper, max_iter, bland_after):
        self.comp = comp
        self.m = comp.m
        self.n_struct = comp.n_struct
        self.a = comp.a
        self.lo = np.concatenate([lower, comp.slack_lo])
        self.hi = np.concatenate([upper, comp.slack_hi])
        self.cost = comp.cost
        self.rhs = comp.rhs
        self.n_cols = self.a.shape[1]
        self.max_iter = max_iter
        self.bland_after = bland_after
        self.iterations = 0
        self.degenerate = 0
        self.bland = False
        self.pivots_since_refactor = 0
        self.art_rows: list[int] = []   # row index per artificial column
        # state set up by _cold_start or _warm_start
        self.vstat = np.empty(0, dtype=int)
        self.basic = np.empty(0, dtype=int)
        self.binv = np.empty((0, 0))
        self.beta = np.empty(0)

    # -- state helpers ------------------------------------------------------

    def _nonbasic_value(self, j: int) -> float:
        st = self.vstat[j]
        if st == AT_LO:
            return self.lo[j]
        if st == AT_UP:
            return self.hi[j]
        return 0.0

    def _nonbasic_values(self) -> np.ndarray:
        x = np.zeros(self.n_cols)
        at_lo = self.vstat == AT_LO
        at_up = self.vstat == AT_UP
        x[at_lo] = self.lo[at_lo]
        x[at_up] = self.hi[at_up]
        return x

    def _full_values(self) -> np.ndarray:
        x = self._nonbasic_values()
        x[self.basic] = self.beta
        return x

    def _recompute_beta(self) -> None:
        x_n = self._nonbasic_values()
        x_n[self.basic] = 0.0
        self.beta = self.binv @ (self.rhs - self.a @ x_n)

    def _refactorize(self) -> None:
        self.binv = linalg.invert(self.a[:, self.basic])
        self.pivots_since_refactor = 0
        self._recompute_beta()

    def _beta_residual_ok(self) -> bool:
        """Cheap drift check: does B @ beta reproduce the nonbasic-adjusted rhs?"""
        x_n = self._nonbasic_values()
        x_n[self.basic] = 0.0
        target = self.rhs - self.a @ x_n
        resid = self.a[:, self.basic] @ self.beta - target
        scale = max(1.0, float(np.abs(target).max()) if self.m else 1.0)
        return bool(np.abs(resid).max() <= 1e-8 * scale) if self.m else True

    def _settled(self) -> bool:
        """Accept the current optimum, refactorizing only when drift shows."""
        if self._beta_residual_ok() and self._beta_feasible():
            return True
        self._refactorize()
        return self._beta_feasible()

    def _default_status(self, j: int) -> int:
        if np.isfinite(self.lo[j]):
            return AT_LO
        if np.isfinite(self.hi[j]):
            return AT_UP
        return FREE

    # -- start-up paths -----------------------------------------------------

    def _cold_start(self) -> None:
        self.vstat = np.array([self._default_status(j) for j in range(self.n_cols)], dtype=int)
        x_n = self._nonbasic_values()
        x_n[self.n_struct:] = 0.0
        slack_target = self.rhs - self.a[:, :self.n_struct] @ x_n[:self.n_struct]
        basic = []
        art_cols = []
        extra = []
        for k in range(self.m):
            s = self.n_struct + k
            v = slack_target[k]
            if self.lo[s] - FEAS_TOL <= v <= self.hi[s] + FEAS_TOL:
                basic.append(s)
                self.vstat[s] = BASIC
            else:
                # slack pinned at its nearest bound; artificial absorbs the rest
                pin = np.clip(v, self.lo[s], self.hi[s])
                self.vstat[s] = AT_LO if pin == self.lo[s] else AT_UP
                resid = v - pin
                col = np.zeros(self.m)
                col[k] = 1.0 if resid >= 0 else -1.0
                extra.append(col)
                art_col_index = self.n_cols + len(extra) - 1
                art_cols.append(art_col_index)
                self.art_rows.append(k)
                basic.append(art_col_index)
        if extra:
            self.a = np.hstack([self.a, np.column_stack(extra)])
            self.lo = np.concatenate([self.lo, np.zeros(len(extra))])
            self.hi = np.concatenate([self.hi, np.full(len(extra), np.inf)])
            self.cost = np.concatenate([self.cost, np.zeros(len(extra))])
            self.vstat = np.concatenate([self.vstat, np.full(len(extra), BASIC, dtype=int)])
            self.n_cols = self.a.shape[1]
        self.basic = np.array(basic, dtype=int)
        self._refactorize()

    def _repair_statuses(self) -> None:
        """Fix statuses that reference bounds the caller changed or removed."""
        for j in range(self.n_cols):
            st = self.vstat[j]
            if st == AT_LO and not np.isfinite(self.lo[j]):
                self.vstat[j] = self._default_status(j)
            elif st == AT_UP and not np.isfinite(self.hi[j]):
                self.vstat[j] = self._default_status(j)
            elif st == FREE and (np.isfinite(self.lo[j]) or np.isfinite(self.hi[j])):
                self.vstat[j] = self._default_status(j)

    def _try_warm_start(self, warm: Basis) -> bool:
        n_base = self.n_struct + self.m
        if len(warm.status) != n_base or len(warm.basic) != self.m:
            return False
        basic = np.array(warm.basic, dtype=int)
        if len(set(basic.tolist())) != self.m or basic.min() < 0 or basic.max() >= n_base:
            return False
        self.vstat = np.array(warm.status, dtype=int)
        self._repair_statuses()
        self.vstat[basic] = BASIC
        self.basic = basic
        try:
            self._refactorize()
        except linalg.LinAlgError:
            return False
        return True

    def _try_hot_start(self, hot: HotStart) -> bool:
        n_base = self.n_struct + self.m
        if hot.basic.shape != (self.m,) or hot.vstat.shape[0] != n_base:
            return False
        if hot.basic.size and hot.basic.max() >= n_base:
            return False
        self.basic = hot.basic.copy()
        self.vstat = hot.vstat.copy()
        self.binv = hot.binv.copy()
        self._repair_statuses()
        self.vstat[self.basic] = BASIC
        self._recompute_beta()
        if not self._beta_residual_ok():
            try:
                self._refactorize()
            except linalg.LinAlgError:
                return False
        return True

    # -- pricing ------------------------------------------------------------

    def _duals_and_reduced(self, cost) -> tuple[np.ndarray, np.ndarray]:
        y = self.binv.T @ cost[self.basic]
        d = cost - self.a.T @ y
        return y, d

    def _movable(self, j: int) -> bool:
        return self.hi[j] - self.lo[j] > 1e-12

    def _movable_mask(self) -> np.ndarray:
        return (self.hi - self.lo) > 1e-12

    def _entering(self, d: np.ndarray) -> int | None:
        movable = self._movable_mask()
        score = np.where(self.vstat == AT_LO, -d,
                         np.where(self.vstat == AT_UP, d,
                                  np.where(self.vstat == FREE, np.abs(d), -np.inf)))
        score[~movable] = -np.inf
        score[self.vstat == BASIC] = -np.inf
        if self.bland:
            eligible = np.nonzero(score > OPT_TOL)[0]
            return int(eligible[0]) if eligible.size else None
        j = int(score.argmax())
        return j if score[j] > OPT_TOL else None

    # -- primal simplex -----------------------------------------------------

    def _primal(self, cost: np.ndarray, phase: int) -> Status:
        local_iter = 0
        while True:
            if local_iter >= self.max_iter:
                raise SimplexStalledError(
                    f"stalled: simplex iteration cap {self.max_iter} exceeded")
            local_iter += 1
            self.iterations += 1
            if self.pivots_since_refactor >= REFACTOR_EVERY:
                self._refactorize()
            _, d = self._duals_and_reduced(cost)
            e = self._entering(d)
            if e is None:
                return Status.OPTIMAL
            # direction: +1 when the entering variable increases
            if self.vstat[e] == AT_LO:
                theta = 1.0
            elif self.vstat[e] == AT_UP:
                theta = -1.0
            else:
                theta = 1.0 if d[e] < 0 else -1.0
            w = self.binv @ self.a[:, e]
            g = theta * w
            # ratio test: basics leave at the bound they hit first
            lo_b = self.lo[self.basic]
            hi_b = self.hi[self.basic]
            pos = g > PIVOT_TOL
            neg = g < -PIVOT_TOL
            ratios = np.full(self.m, np.inf)
            with np.errstate(invalid="ignore"):
                ratios[pos] = (self.beta[pos] - lo_b[pos]) / g[pos]
                ratios[neg] = (self.beta[neg] - hi_b[neg]) / g[neg]
            ratios[~np.isfinite(ratios)] = np.inf
            np.maximum(ratios, 0.0, out=ratios)
            t_best = float(ratios.min()) if self.m else np.inf
            leave_slot = -1
            leave_to = AT_LO
            if np.isfinite(t_best):
                cand = np.nonzero(ratios <= t_best + DEGEN_TOL)[0]
                if self.bland:
                    leave_slot = int(cand[np.argmin(self.basic[cand])])
                else:
                    leave_slot = int(cand[np.argmax(np.abs(g[cand]))])
                leave_to = AT_LO if g[leave_slot] > 0 else AT_UP
            t_flip = self.hi[e] - self.lo[e] if self.vstat[e] in (AT_LO, AT_UP) else np.inf
            if t_best == np.inf and not np.isfinite(t_flip):
                return Status.UNBOUNDED
            if t_flip <= t_best:
                # bound flip: no basis change
                self.beta -= g * t_flip
                self.vstat[e] = AT_UP if self.vstat[e] == AT_LO else AT_LO
                if t_flip < DEGEN_TOL:
                    self._count_degenerate()
                continue
            if t_best < DEGEN_TOL:
                self._count_degenerate()
            self._pivot(e, leave_slot, leave_to, theta, w, t_best)

    def _count_degenerate(self) -> None:
        self.degenerate += 1
        if self.degenerate >= self.bland_after:
            self.bland = True

    def _pivot(self, e: int, slot: int, leave_to: int, theta: float, w: np.ndarray,
               t: float) -> None:
        enter_val = self._nonbasic_value(e) + theta * t
        self.beta -= theta * t * w
        leaving = self.basic[slot]
        self.vstat[leaving] = leave_to
        if leaving >= self.n_struct + self.m:
            self.hi[leaving] = 0.0  # an artificial that left never re-enters
        self.basic[slot] = e
        self.vstat[e] = BASIC
        self.beta[slot] = enter_val
        # elementary update of the explicit inverse (one full rank-1 update;
        # zeroing the pivot slot keeps that row untouched)
        piv = w[slot]
        self.binv[slot, :] /= piv
        w_rest = w.copy()
        w_rest[slot] = 0.0
        self.binv -= np.outer(w_rest, self.binv[slot, :])
        self.pivots_since_refactor += 1

    # -- dual simplex (warm re-optimization) --------------------------------

    def _dual(self, cost: np.ndarray) -> Status | None:
        """Restore primal feasibility keeping dual feasibility.

        Returns a Status when conclusive, or None to request a cold restart.
        The attempt is best-effort: it gets a small sub-budget so degenerate
        cycling can never starve the cold path that guarantees correctness.
        """
        local_iter = 0
        budget = min(self.max_iter, 3 * self.m + 50)
        last_dual_obj = -np.inf
        since_progress = 0
        while True:
            if local_iter >= budget:
                return None
            local_iter += 1
            self.iterations += 1
            if self.pivots_since_refactor >= REFACTOR_EVERY:
                self._refactorize()
            lo_b = self.lo[self.basic]
            hi_b = self.hi[self.basic]
            viol = np.maximum(lo_b - self.beta, self.beta - hi_b)
            viol[viol <= FEAS_TOL] = 0.0
            slot = int(viol.argmax())
            if viol[slot] <= 0.0:
                return Status.OPTIMAL  # primal feasible again; caller polishes
            bi = self.basic[slot]
            below = self.beta[slot] < self.lo[bi]
            delta = self.beta[slot] - (self.lo[bi] if below else self.hi[bi])
            rho = self.binv[slot, :]
            alpha = self.a.T @ rho
            y, d = self._duals_and_reduced(cost)
            # the dual objective is the monotone quantity here; stalling in it
            # for many pivots indicates degenerate cycling
            at_lo = (self.vstat == AT_LO) & np.isfinite(self.lo)
            at_up = (self.vstat == AT_UP) & np.isfinite(self.hi)
            dual_obj = float(y @ self.rhs + d[at_lo] @ self.lo[at_lo]
                             + d[at_up] @ self.hi[at_up])
            if dual_obj > last_dual_obj + 1e-12 * max(1.0, abs(last_dual_obj)):
                last_dual_obj = dual_obj
                since_progress = 0
            else:
                since_progress += 1
                if since_progress > 40:
                    return None  # cycling; the cold path decides
            movable = self._movable_mask()
            # stricter pivot quality than the primal: dual updates feed the
            # explicit inverse and a weak pivot wrecks it quickly
            if below:  # leaving at its lower bound, delta < 0
                ok = ((self.vstat == AT_LO) & (alpha < -1e-7)) | \
                     ((self.vstat == AT_UP) & (alpha > 1e-7)) | \
                     ((self.vstat == FREE) & (np.abs(alpha) > 1e-7))
            else:      # leaving at its upper bound, delta > 0
                ok = ((self.vstat == AT_LO) & (alpha > 1e-7)) | \
                     ((self.vstat == AT_UP) & (alpha < -1e-7)) | \
                     ((self.vstat == FREE) & (np.abs(alpha) > 1e-7))
            ok &= movable
            best = None
            if ok.any():
                idx = np.nonzero(ok)[0]
                ratios = np.abs(d[idx] / alpha[idx])
                rmin = float(ratios.min())
                ties = idx[ratios <= rmin + 1e-12]
                best = int(ties[0])
            if best is None:
                # row certificate: check the violated bound is truly unreachable
                nb = (self.vstat != BASIC) & (np.abs(alpha) > PIVOT_TOL)
                idx = np.nonzero(nb)[0]
                prods = np.stack([alpha[idx] * self.lo[idx], alpha[idx] * self.hi[idx]])
                with np.errstate(invalid="ignore"):
                    reach_lo = float(np.nansum(np.min(prods, axis=0)))
                    reach_hi = float(np.nansum(np.max(prods, axis=0)))
                if np.isnan(prods).any():
                    return None  # 0 * inf ambiguity; let the cold path decide
                base = rho @ self.rhs
                attainable_hi = base - reach_lo
                attainable_lo = base - reach_hi
                if below and attainable_hi < self.lo[bi] - FEAS_TOL:
                    return Status.INFEASIBLE
                if not below and attainable_lo > self.hi[bi] + FEAS_TOL:
                    return Status.INFEASIBLE
                return None  # inconclusive; cold restart decides
            w = self.binv @ self.a[:, best]
            t = delta / w[slot]
            theta = 1.0 if t >= 0 else -1.0
            self._pivot(best, slot, AT_LO if below else AT_UP, theta, w, abs(t))

    # -- driver --------------------------------------------------------------

    def solve(self, warm: Basis | None,
              hot: HotStart | None = None) -> tuple[Status, np.ndarray | None]:
        warmed = False
        if hot is not None:
            warmed = self._try_hot_start(hot)
        if not warmed and warm is not None:
            warmed = self._try_warm_start(warm)
        if warmed:
            try:
                feasible = self._beta_feasible()
                if not feasible:
                    _, d = self._duals_and_reduced(self.cost)
                    if self._dual_feasible(d):
                        st = self._dual(self.cost)
                        if st == Status.INFEASIBLE:
                            return Status.INFEASIBLE, None
                        warmed = st is not None
                    else:
                        warmed = False
                if warmed:
                    status = self._primal(self.cost, phase=2)
                    if status == Status.OPTIMAL:
                        if self._settled():
                            return Status.OPTIMAL, self._full_values()
                    # drift or unbounded: resolve from scratch for a clean answer
                    if status == Status.UNBOUNDED:
                        return Status.UNBOUNDED, None
            except linalg.LinAlgError:
                pass  # numerically wrecked warm basis; the cold path decides
        return self._cold_solve()

    def _cold_solve(self) -> tuple[Status, np.ndarray | None]:
        self.art_rows = []
        self._cold_start()
        if self.art_rows:
            phase1 = np.zeros(self.n_cols)
            phase1[-len(self.art_rows):] = 1.0
            status = self._primal(phase1, phase=1)
            assert status == Status.OPTIMAL  # phase 1 is bounded below by 0
            infeas = float(phase1 @ self._full_values())
            if infeas > FEAS_TOL * max(1.0, np.abs(self.rhs).max()):
                return Status.INFEASIBLE, None
            # artificials are done: pin them to zero
            n_art = len(self.art_rows)
            self.lo[-n_art:] = 0.0
            self.hi[-n_art:] = 0.0
        status = self._primal(self.cost, phase=2)
        if status != Status.OPTIMAL:
            return status, None
        if not self._settled():
            # one more pass after refactorization fixes residual drift
            status = self._primal(self.cost, phase=2)
            self._refactorize()
            if status != Status.OPTIMAL or not self._beta_feasible():
                raise SimplexStalledError("stalled: could not restore feasibility")
        return Status.OPTIMAL, self._full_values()

    def _beta_feasible(self) -> bool:
        lo_b = self.lo[self.basic]
        hi_b = self.hi[self.basic]
        return bool(np.all(self.beta >= lo_b - FEAS_TOL) and np.all(self.beta <= hi_b + FEAS_TOL))

    def _dual_feasible(self, d: np.ndarray) -> bool:
        for j in range(self.n_cols):
            st = self.vstat[j]
            if st == BASIC or not self._movable(j):
                continue
            if st == AT_LO and d[j] < -OPT_TOL:
                return False
            if st == AT_UP and d[j] > OPT_TOL:
                return False
            if st == FREE and abs(d[j]) > OPT_TOL:
                return False
        return True

    def export_basis(self) -> Basis:
        n_base = self.n_struct + self.m
        status = list(self.vstat[:n_base])
        basic = []
        for i, bi in enumerate(self.basic):
            if bi >= n_base:
                # artificial stuck in the basis: its column is +/- the slack
                # column of its row, so the slack can stand in for it
                s = self.n_struct + self.art_rows[bi - n_base]
                basic.append(int(s))
                status[s] = BASIC
            else:
                basic.append(int(bi))
        return Basis(tuple(basic), tuple(int(v) for v in status))

    def export_hot(self) -> HotStart | None:
        n_base = self.n_struct + self.m
        if self.basic.size and self.basic.max() >= n_base:
            return None  # an artificial is still basic; Binv will not transfer
        return HotStart(self.basic.copy(), self.vstat[:n_base].copy(), self.binv.copy())

    def duals(self) -> tuple[np.ndarray, np.ndarray]:
        y, d = self._duals_and_reduced(self.cost)
        return y, d[:self.n_struct]


def solve_compiled(comp: CompiledLp, lower, upper, warm: Basis | None = None,
                   max_iter: int | None = None, bland_after: int = 1000,
                   hot: HotStart | None = None, want_hot: bool = False) -> LpSolution:
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    if max_iter is None:
        max_iter = 50 * (comp.n_struct + comp.m)
    s = _Simplex(comp, lower, upper, max_iter, bland_after)
    status, full = s.solve(warm, hot)
    if status != Status.OPTIMAL:
        return LpSolution(status, None, None, None, iterations=s.iterations)
    values = full[:comp.n_struct]
    y, red = s.duals()
    obj = float(comp.cost[:comp.n_struct] @ values)
    return LpSolution(Status.OPTIMAL, values, obj, y, red, s.export_basis(),
                      s.iterations, s.export_hot() if want_hot else None)


def solve_lp(prob: LinearProgram, warm: Basis | None = None,
             max_iter: int | None = None, bland_after: int = 1000) -> LpSolution:
    """Solve min c @ v s.t. constraints, bounds.  See module docstring."""
    comp = compile_lp(prob)
    return solve_compiled(comp, prob.lower, prob.upper, warm, max_iter, bland_after)


def duality_gap(prob: LinearProgram, sol: LpSolution) -> float:
    """|primal - dual| with the bound terms of bounded-variable duality included."""
    if sol.status != Status.OPTIMAL:
        raise ValueError("duality gap is defined for optimal solutions only")
    rhs = np.array([c.rhs for c in prob.constraints])
    dual_obj = float(sol.dual_values @ rhs) if rhs.size else 0.0
    for j in range(prob.n_vars):
        d = sol.reduced_costs[j]
        v = sol.values[j]
        lo, hi = prob.lower[j], prob.upper[j]
        # at-bound contribution: active bound times its multiplier
        if d > 0 and np.isfinite(lo) and v <= lo + 1e-6:
            dual_obj += d * lo
        elif d < 0 and np.isfinite(hi) and v >= hi - 1e-6:
            dual_obj += d * hi
    return abs(sol.objective_value - dual_obj)
