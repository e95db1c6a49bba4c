import itertools

import numpy as np
import pytest

from misens import lp
from misens.lp import Constraint, LinearProgram, Status, solve_lp


def make_lp(c, cons, lo, hi):
    constraints = [Constraint.of(coeffs, sense, rhs) for coeffs, sense, rhs in cons]
    return LinearProgram(np.array(c, dtype=float), constraints,
                         np.array(lo, dtype=float), np.array(hi, dtype=float))


def enumerate_vertices(prob):
    """Brute-force oracle: intersect every n-subset of constraint/bound rows.

    Valid for problems whose bounds make the feasible region bounded.
    Returns (status, objective) with status "optimal" or "infeasible".
    """
    n = prob.n_vars
    rows = []
    eq_rows = []
    for con in prob.constraints:
        a = np.zeros(n)
        for i, v in con.coeffs:
            a[i] += v
        rows.append((a, con.sense, con.rhs))
        if con.sense == "=":
            eq_rows.append(len(rows) - 1)
    for j in range(n):
        ej = np.zeros(n)
        ej[j] = 1.0
        if np.isfinite(prob.lower[j]):
            rows.append((ej, ">=", prob.lower[j]))
        if np.isfinite(prob.upper[j]):
            rows.append((ej, "<=", prob.upper[j]))

    def feasible(x):
        for a, sense, rhs in rows:
            v = a @ x
            if sense == "<=" and v > rhs + 1e-9:
                return False
            if sense == ">=" and v < rhs - 1e-9:
                return False
            if sense == "=" and abs(v - rhs) > 1e-9:
                return False
        return True

    best = None
    free_rows = [k for k in range(len(rows)) if k not in eq_rows]
    if len(eq_rows) > n:
        picks = []
    else:
        picks = itertools.combinations(free_rows, n - len(eq_rows))
    for pick in picks:
        active = list(eq_rows) + list(pick)
        a_mat = np.array([rows[k][0] for k in active])
        b_vec = np.array([rows[k][2] for k in active])
        try:
            x = np.linalg.solve(a_mat, b_vec)
        except np.linalg.LinAlgError:
            continue
        if feasible(x):
            obj = float(prob.objective @ x)
            if best is None or obj < best:
                best = obj
    if best is None:
        return "infeasible", None
    return "optimal", best


def random_lp(rng):
    n = int(rng.integers(1, 7))
    m = int(rng.integers(1, 7))
    c = rng.integers(-3, 4, size=n).astype(float)
    lo = np.zeros(n)
    hi = rng.uniform(0.5, 2.0, size=n)
    cons = []
    for _ in range(m):
        nz = rng.choice(n, size=int(rng.integers(1, n + 1)), replace=False)
        coeffs = {int(j): float(rng.integers(-3, 4)) for j in nz}
        coeffs = {j: v for j, v in coeffs.items() if v != 0.0} or {int(nz[0]): 1.0}
        sense = rng.choice(["<=", ">=", "<=", ">=", "="])
        rhs = float(np.round(rng.uniform(-2, 3), 3))
        cons.append((coeffs, str(sense), rhs))
    return make_lp(c, cons, lo, hi)


class TestBasics:
    def test_min_x_above_three(self):
        prob = make_lp([1.0], [({0: 1.0}, ">=", 3.0)], [0.0], [10.0])
        sol = solve_lp(prob)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(3.0, abs=1e-9)
        assert sol.values[0] == pytest.approx(3.0, abs=1e-9)

    def test_segment_optimum(self):
        prob = make_lp([-1.0, -1.0], [({0: 1.0, 1: 1.0}, "<=", 1.0)],
                       [0.0, 0.0], [np.inf, np.inf])
        sol = solve_lp(prob)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(-1.0, abs=1e-9)

    def test_infeasible_witness(self):
        prob = make_lp([1.0], [({0: 1.0}, ">=", 5.0), ({0: 1.0}, "<=", 1.0)],
                       [0.0], [10.0])
        assert solve_lp(prob).status == Status.INFEASIBLE

    def test_infeasible_via_bounds(self):
        prob = make_lp([0.0, 0.0], [({0: 1.0, 1: 1.0}, "=", 10.0)],
                       [0.0, 0.0], [1.0, 1.0])
        assert solve_lp(prob).status == Status.INFEASIBLE

    def test_unbounded_witness(self):
        prob = make_lp([-1.0], [({0: 1.0}, ">=", 0.0)], [0.0], [np.inf])
        assert solve_lp(prob).status == Status.UNBOUNDED

    def test_free_variable(self):
        prob = make_lp([1.0, 0.0], [({0: 1.0, 1: 1.0}, "=", 2.0)],
                       [-np.inf, -1.0], [np.inf, 1.0])
        sol = solve_lp(prob)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(1.0, abs=1e-9)

    def test_equality_row(self):
        prob = make_lp([1.0, 2.0], [({0: 1.0, 1: 1.0}, "=", 1.0)],
                       [0.0, 0.0], [1.0, 1.0])
        sol = solve_lp(prob)
        assert sol.objective_value == pytest.approx(1.0, abs=1e-9)

    def test_iteration_cap_raises_stalled(self):
        prob = make_lp([-1.0, -1.0], [({0: 1.0, 1: 2.0}, "<=", 4.0),
                                      ({0: 2.0, 1: 1.0}, "<=", 4.0)],
                       [0.0, 0.0], [np.inf, np.inf])
        with pytest.raises(lp.SimplexStalledError, match="stalled"):
            solve_lp(prob, max_iter=1)

    def test_validate_rejects_bad_bounds(self):
        with pytest.raises(ValueError, match="lower bound above upper"):
            solve_lp(make_lp([1.0], [], [2.0], [1.0]))

    def test_validate_rejects_bad_index(self):
        with pytest.raises(ValueError, match="out of range"):
            solve_lp(make_lp([1.0], [({3: 1.0}, "<=", 1.0)], [0.0], [1.0]))

    def test_format_lp_dump(self):
        prob = make_lp([1.0], [({0: 2.0}, "<=", 3.0)], [0.0], [1.0])
        text = lp.format_lp(prob)
        assert "2.0*v0 <= 3.0" in text
        assert text.count("\n") == 3


class TestRandomizedAgainstOracle:
    def test_matches_vertex_enumeration(self):
        rng = np.random.default_rng(2024)
        n_optimal = 0
        for _ in range(200):
            prob = random_lp(rng)
            status, best = enumerate_vertices(prob)
            sol = solve_lp(prob)
            if status == "infeasible":
                assert sol.status == Status.INFEASIBLE
                continue
            assert sol.status == Status.OPTIMAL
            n_optimal += 1
            assert sol.objective_value == pytest.approx(best, abs=1e-6)
            self._check_kkt(prob, sol)
        assert n_optimal >= 50  # the generator must exercise the optimal path

    def _check_kkt(self, prob, sol):
        x = sol.values
        # primal feasibility
        assert np.all(x >= prob.lower - 1e-7)
        assert np.all(x <= prob.upper + 1e-7)
        for con, y in zip(prob.constraints, sol.dual_values):
            a = np.zeros(prob.n_vars)
            for i, v in con.coeffs:
                a[i] += v
            act = a @ x
            if con.sense == "<=":
                assert act <= con.rhs + 1e-7
                assert y <= 1e-7
            elif con.sense == ">=":
                assert act >= con.rhs - 1e-7
                assert y >= -1e-7
            else:
                assert act == pytest.approx(con.rhs, abs=1e-7)
            # complementary slackness
            assert abs(y * (act - con.rhs)) <= 1e-6 * max(1.0, abs(y))
        # strong duality with bound terms
        assert lp.duality_gap(prob, sol) <= 1e-6


class TestWarmStart:
    def test_warm_start_matches_cold_after_bound_tightening(self):
        rng = np.random.default_rng(99)
        checked = 0
        for _ in range(150):
            prob = random_lp(rng)
            sol = solve_lp(prob)
            if sol.status != Status.OPTIMAL:
                continue
            # branch-like tightening: fix one variable to one of its ends
            j = int(rng.integers(prob.n_vars))
            fix = float(rng.choice([prob.lower[j], prob.upper[j]]))
            tight = LinearProgram(prob.objective, prob.constraints,
                                  prob.lower.copy(), prob.upper.copy())
            tight.lower[j] = fix
            tight.upper[j] = fix
            warm_sol = solve_lp(tight, warm=sol.basis)
            cold_sol = solve_lp(tight)
            assert warm_sol.status == cold_sol.status
            if cold_sol.status == Status.OPTIMAL:
                checked += 1
                assert warm_sol.objective_value == pytest.approx(
                    cold_sol.objective_value, abs=1e-8)
        assert checked >= 20

    def test_warm_start_with_garbage_basis_falls_back(self):
        prob = make_lp([1.0], [({0: 1.0}, ">=", 3.0)], [0.0], [10.0])
        bad = lp.Basis((0, 0), (0, 0, 0))
        sol = solve_lp(prob, warm=bad)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(3.0, abs=1e-9)


class TestDegenerateAndScale:
    def test_highly_degenerate_lp(self):
        # many redundant constraints through the same vertex
        cons = [({0: 1.0, 1: 1.0}, "<=", 1.0)]
        cons += [({0: float(k), 1: float(k)}, "<=", float(k)) for k in range(2, 8)]
        prob = make_lp([-1.0, -2.0], cons, [0.0, 0.0], [np.inf, np.inf])
        sol = solve_lp(prob)
        assert sol.status == Status.OPTIMAL
        assert sol.objective_value == pytest.approx(-2.0, abs=1e-8)

    def test_medium_random_lp_feasibility(self):
        rng = np.random.default_rng(5)
        n, m = 40, 30
        c = rng.normal(size=n)
        cons = []
        x_feas = rng.uniform(0.2, 0.8, size=n)
        for k in range(m):
            a = rng.normal(size=n)
            coeffs = {j: float(a[j]) for j in range(n)}
            cons.append((coeffs, "<=", float(a @ x_feas + rng.uniform(0.1, 1.0))))
        prob = make_lp(c, cons, np.zeros(n), np.ones(n))
        sol = solve_lp(prob)
        assert sol.status == Status.OPTIMAL
        assert np.all(sol.values >= -1e-7) and np.all(sol.values <= 1 + 1e-7)
        for con, y in zip(prob.constraints, sol.dual_values):
            a = np.zeros(n)
            for i, v in con.coeffs:
                a[i] += v
            assert a @ sol.values <= con.rhs + 1e-6
        assert lp.duality_gap(prob, sol) <= 1e-6
