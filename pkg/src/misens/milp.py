"""Branch-and-bound mixed-integer linear programming over binary variables.

Search order is best-bound-first with a depth-first dive every 10 nodes to
find incumbents early; branching picks the binary whose relaxation value is
closest to 0.5 (ties to the lowest index).  Child nodes warm-start from the
parent's simplex basis.  The default mode is fully deterministic: node
order depends only on the instance and the limits, never on wall-clock
time (a time limit, when set, naturally breaks run-to-run reproducibility).

Status meaning: OPTIMAL proves gap <= gap_target; FEASIBLE means the node
cap stopped the search with an incumbent in hand; TIMED_OUT means a limit
stopped the search (always used when no incumbent was found); INFEASIBLE is
a proof that no integer-feasible point exists.
"""

from __future__ import annotations

import enum
import heapq
import logging
import time
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .lp import (
    Basis,
    CompiledLp,
    HotStart,
    LinearProgram,
    Status,
    compile_lp,
    solve_compiled,
)

log = logging.getLogger("misens.milp")

INT_TOL = 1e-6
CUTOFF_TOL = 1e-9
BASIS_STORE_CAP = 50_000  # stop attaching bases when the open list is huge
BINV_CACHE_BYTES = 64_000_000  # budget for cached basis inverses


class MipStatus(enum.Enum):
    OPTIMAL = "optimal"
    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    TIMED_OUT = "timed_out"


@dataclass
class MilpLimits:
    time_limit_s: float | None = None
    gap_target: float = 1e-6
    node_cap: int = 200_000


@dataclass
class MixedIntegerProgram:
    base: LinearProgram
    binary_vars: tuple[int, ...]

    def __post_init__(self):
        self.binary_vars = tuple(int(j) for j in self.binary_vars)

    def validate(self) -> None:
        self.base.validate()
        n = self.base.n_vars
        seen = set()
        for j in self.binary_vars:
            if j < 0 or j >= n:
                raise ValueError(f"binary variable index {j} out of range")
            if j in seen:
                raise ValueError(f"binary variable index {j} repeated")
            seen.add(j)
        # binaries live in [0,1] (intersected with any tighter caller bounds)
        for j in self.binary_vars:
            self.base.lower[j] = max(self.base.lower[j], 0.0)
            self.base.upper[j] = min(self.base.upper[j], 1.0)
            if self.base.lower[j] > self.base.upper[j]:
                raise ValueError(f"binary variable {j} has contradictory bounds")


@dataclass
class MipResult:
    status: MipStatus
    values: np.ndarray | None
    objective_value: float | None
    gap: float
    nodes_explored: int
    best_bound: float

    def summary(self) -> dict:
        return {
            "schema": 1,
            "status": self.status.value,
            "objective_value": self.objective_value,
            "gap": self.gap,
            "nodes_explored": self.nodes_explored,
            "best_bound": self.best_bound,
        }


class _Node:
    __slots__ = ("fixes", "basis", "depth")

    def __init__(self, fixes, basis, depth):
        self.fixes = fixes          # linked chain: (var, value, parent_chain)
        self.basis = basis
        self.depth = depth


def _materialize(lo0, hi0, fixes):
    lo = lo0.copy()
    hi = hi0.copy()
    chain = fixes
    while chain is not None:
        var, val, chain = chain
        lo[var] = val
        hi[var] = val
    return lo, hi


def _check_hint(prob: MixedIntegerProgram, comp: CompiledLp, hint) -> float | None:
    """Objective of a feasible, integral hint; None when the hint is unusable."""
    v = np.asarray(hint, dtype=float)
    if v.shape != (prob.base.n_vars,):
        return None
    if np.any(v < prob.base.lower - 1e-9) or np.any(v > prob.base.upper + 1e-9):
        return None
    bins = v[list(prob.binary_vars)]
    if np.max(np.abs(bins - np.round(bins))) > INT_TOL:
        return None
    act = comp.a[:, :comp.n_struct] @ v
    for k in range(comp.m):
        lo_s, hi_s = comp.slack_lo[k], comp.slack_hi[k]
        slack = comp.rhs[k] - act[k]
        if slack < lo_s - 1e-6 or slack > hi_s + 1e-6:
            return None
    return float(prob.base.objective @ v)


def solve_milp(prob: MixedIntegerProgram, limits: MilpLimits | None = None,
               incumbent_hint=None, log_interval: int = 0) -> MipResult:
    """Solve min c @ v with the given binaries; see the module docstring."""
    limits = limits or MilpLimits()
    prob.validate()
    comp = compile_lp(prob.base)
    binaries = np.array(prob.binary_vars, dtype=int)
    t_start = time.perf_counter()

    inc_val: np.ndarray | None = None
    inc_obj = np.inf
    if incumbent_hint is not None:
        obj = _check_hint(prob, comp, incumbent_hint)
        if obj is not None:
            inc_val = np.asarray(incumbent_hint, dtype=float).copy()
            inc_obj = obj
            log.info("accepted incumbent hint with objective %.9g", obj)
        else:
            log.info("incumbent hint rejected (infeasible or fractional)")

    root_sol = solve_compiled(comp, prob.base.lower, prob.base.upper, want_hot=True)
    if root_sol.status == Status.INFEASIBLE:
        return MipResult(MipStatus.INFEASIBLE, None, None, np.inf, 1, np.inf)
    if root_sol.status == Status.UNBOUNDED:
        raise RuntimeError("unbounded LP relaxation")

    nodes_explored = 1
    seq = 0
    heap: list[tuple[float, int, _Node]] = []
    bound_global = root_sol.objective_value
    timed_out = False
    node_capped = False
    binv_cache: OrderedDict[tuple, np.ndarray] = OrderedDict()

    def push(key, node):
        nonlocal seq
        if len(heap) >= BASIS_STORE_CAP:
            node.basis = None
        heapq.heappush(heap, (key, seq, node))
        seq += 1

    cache_cap = max(8, BINV_CACHE_BYTES // max(1, comp.m * comp.m * 8))

    def remember(sol):
        if sol.hot is None:
            return
        key = tuple(int(v) for v in sol.hot.basic)
        binv_cache[key] = sol.hot.binv
        binv_cache.move_to_end(key)
        while len(binv_cache) > cache_cap:
            binv_cache.popitem(last=False)

    def recall(basis: Basis | None) -> HotStart | None:
        # the inverse depends only on the basic set, never on bounds,
        # so a cached one transfers to any node sharing the basis
        if basis is None:
            return None
        binv = binv_cache.get(basis.basic)
        if binv is None:
            return None
        return HotStart(np.array(basis.basic, dtype=int),
                        np.array(basis.status, dtype=int), binv.copy())

    def frac_branch_var(values) -> int | None:
        v = values[binaries]
        frac = np.abs(v - np.round(v))
        cand = np.nonzero(frac > INT_TOL)[0]
        if cand.size == 0:
            return None
        scores = np.abs(v[cand] - 0.5)
        return int(binaries[cand[int(scores.argmin())]])

    def consider_incumbent(sol):
        nonlocal inc_val, inc_obj
        if sol.objective_value < inc_obj - CUTOFF_TOL:
            inc_val = sol.values.copy()
            inc_obj = sol.objective_value
            log.info("incumbent %.9g at node %d", inc_obj, nodes_explored)

    def limits_hit() -> bool:
        nonlocal timed_out, node_capped
        if limits.time_limit_s is not None and time.perf_counter() - t_start > limits.time_limit_s:
            timed_out = True
            return True
        if nodes_explored >= limits.node_cap:
            node_capped = True
            return True
        return False

    # root handling
    remember(root_sol)
    j = frac_branch_var(root_sol.values)
    if j is None:
        consider_incumbent(root_sol)
        bound_global = inc_obj
    else:
        for val in (0.0, 1.0):
            push(root_sol.objective_value, _Node((j, val, None), root_sol.basis, 1))

    exhausted = not heap  # search proven complete (vs stopped by a limit/gap)
    while heap:
        if limits_hit():
            break
        key, _, node = heapq.heappop(heap)
        bound_global = max(bound_global, key)
        if inc_val is not None:
            if key >= inc_obj - CUTOFF_TOL:
                # best-first: every open node is dominated too
                bound_global = max(bound_global, inc_obj - CUTOFF_TOL)
                exhausted = True
                break
            if (inc_obj - bound_global) / max(1.0, abs(inc_obj)) <= limits.gap_target:
                break  # certified within the requested gap
        dive = nodes_explored % 10 == 0
        current = node
        hot = recall(node.basis)
        while True:  # runs once unless diving
            nodes_explored += 1
            if log_interval and nodes_explored % log_interval == 0:
                log.info("nodes=%d open=%d incumbent=%s bound=%.9g gap=%.3g",
                         nodes_explored, len(heap),
                         f"{inc_obj:.9g}" if inc_val is not None else "-",
                         bound_global,
                         (inc_obj - bound_global) / max(1.0, abs(inc_obj))
                         if inc_val is not None else np.inf)
            lo, hi = _materialize(prob.base.lower, prob.base.upper, current.fixes)
            sol = solve_compiled(comp, lo, hi, warm=current.basis, hot=hot,
                                 want_hot=True)
            remember(sol)
            if sol.status != Status.OPTIMAL:
                break  # infeasible subtree (children only tighten bounds)
            if sol.objective_value >= inc_obj - CUTOFF_TOL:
                break  # dominated
            j = frac_branch_var(sol.values)
            if j is None:
                consider_incumbent(sol)
                break
            if not dive:
                for val in (0.0, 1.0):
                    push(sol.objective_value,
                         _Node((j, val, current.fixes), sol.basis, current.depth + 1))
                break
            nearest = 1.0 if sol.values[j] >= 0.5 else 0.0
            push(sol.objective_value,
                 _Node((j, 1.0 - nearest, current.fixes), sol.basis, current.depth + 1))
            current = _Node((j, nearest, current.fixes), sol.basis, current.depth + 1)
            hot = sol.hot
            if limits_hit():
                break
        if timed_out or node_capped:
            break
    else:
        exhausted = True

    if exhausted:
        bound_global = inc_obj if inc_val is not None else np.inf

    if inc_val is not None:
        gap = max(0.0, (inc_obj - bound_global) / max(1.0, abs(inc_obj)))
        if gap <= limits.gap_target:
            status = MipStatus.OPTIMAL
        elif timed_out:
            status = MipStatus.TIMED_OUT
        else:
            status = MipStatus.FEASIBLE  # node cap with an incumbent in hand
    else:
        gap = np.inf
        status = MipStatus.INFEASIBLE if exhausted else MipStatus.TIMED_OUT

    result = MipResult(status, inc_val, inc_obj if inc_val is not None else None,
                       gap, nodes_explored, bound_global)
    log.info("finished: %s", result.summary())
    return result
