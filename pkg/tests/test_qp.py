import numpy as np
import pytest

from misens import linalg
from misens.lp import Constraint
from misens.qp import QpStatus, QuadraticProgram, solve_qp


def make_qp(q, c, cons=(), lo=None, hi=None, constant=0.0):
    c = np.asarray(c, dtype=float)
    n = c.shape[0]
    lo = np.full(n, -np.inf) if lo is None else np.asarray(lo, dtype=float)
    hi = np.full(n, np.inf) if hi is None else np.asarray(hi, dtype=float)
    constraints = [Constraint.of(coeffs, sense, rhs) for coeffs, sense, rhs in cons]
    return QuadraticProgram(np.asarray(q, dtype=float), c, constraints, lo, hi, constant)


class TestBasics:
    def test_unconstrained_norm_square(self):
        prob = make_qp(2.0 * np.eye(3), np.zeros(3))  # 0.5 v'(2I)v = ||v||^2
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert np.max(np.abs(sol.values)) <= 1e-9
        assert sol.objective_value == pytest.approx(0.0, abs=1e-12)

    def test_active_bound(self):
        # min (v-1)^2 = 0.5 v'(2)v - 2v + 1 subject to v >= 2
        prob = make_qp([[2.0]], [-2.0], lo=[2.0], constant=1.0)
        sol = solve_qp(prob)
        assert sol.values[0] == pytest.approx(2.0, abs=1e-9)
        assert sol.objective_value == pytest.approx(1.0, abs=1e-9)

    def test_unconstrained_matches_cholesky(self):
        rng = np.random.default_rng(1)
        for _ in range(10):
            m = rng.normal(size=(5, 5))
            q = m @ m.T + 5 * np.eye(5)
            c = rng.normal(size=5)
            sol = solve_qp(make_qp(q, c))
            oracle = -linalg.cholesky_solve(q, c)
            assert np.max(np.abs(sol.values - oracle)) <= 1e-8

    def test_infeasible(self):
        prob = make_qp(np.eye(1), [0.0],
                       cons=[({0: 1.0}, ">=", 2.0), ({0: 1.0}, "<=", 1.0)])
        assert solve_qp(prob).status == QpStatus.INFEASIBLE

    def test_asymmetric_rejected(self):
        q = np.array([[1.0, 0.5], [0.0, 1.0]])
        with pytest.raises(ValueError, match="symmetric"):
            solve_qp(make_qp(q, np.zeros(2)))

    def test_indefinite_rejected(self):
        with pytest.raises(ValueError, match="semidefinite"):
            solve_qp(make_qp(-np.eye(2), np.zeros(2)))


class TestEqualityConstrainedLeastSquares:
    def _kkt_oracle(self, a, b, g, h):
        # [2A'A  G'; G  0] [v; lam] = [2A'b; h]
        n = a.shape[1]
        m = g.shape[0]
        kkt = np.block([[2.0 * a.T @ a, g.T], [g, np.zeros((m, m))]])
        rhs = np.concatenate([2.0 * a.T @ b, h])
        return linalg.solve_square(kkt, rhs)[:n]

    def test_matches_kkt_system(self):
        rng = np.random.default_rng(7)
        for _ in range(15):
            a = rng.normal(size=(10, 4))
            b = rng.normal(size=10)
            g = rng.normal(size=(2, 4))
            h = rng.normal(size=2)
            oracle = self._kkt_oracle(a, b, g, h)
            # min ||Av - b||^2 = 0.5 v'(2A'A)v - 2b'Av + b'b
            prob = make_qp(2.0 * a.T @ a, -2.0 * a.T @ b,
                           cons=[({j: float(g[i, j]) for j in range(4)}, "=", float(h[i]))
                                 for i in range(2)],
                           constant=float(b @ b))
            sol = solve_qp(prob)
            assert sol.status == QpStatus.OPTIMAL
            assert np.max(np.abs(sol.values - oracle)) <= 1e-7
            assert sol.kkt_residual <= 1e-6


class TestInequalities:
    def test_projection_onto_halfspace(self):
        # min ||v - [2,0]||^2 s.t. v1 + v2 >= 3 -> projection (2.5, 0.5)
        prob = make_qp(2.0 * np.eye(2), [-4.0, 0.0],
                       cons=[({0: 1.0, 1: 1.0}, ">=", 3.0)], constant=4.0)
        sol = solve_qp(prob)
        assert np.allclose(sol.values, [2.5, 0.5], atol=1e-8)

    def test_random_qps_kkt_residual(self):
        rng = np.random.default_rng(11)
        solved = 0
        for _ in range(30):
            n = int(rng.integers(2, 6))
            m_rows = int(rng.integers(1, 5))
            mat = rng.normal(size=(n, n))
            q = mat @ mat.T + 0.5 * np.eye(n)
            c = rng.normal(size=n)
            cons = []
            for _ in range(m_rows):
                a = rng.normal(size=n)
                sense = str(rng.choice([">=", "<="]))
                cons.append(({j: float(a[j]) for j in range(n)}, sense,
                             float(rng.normal())))
            prob = make_qp(q, c, cons, lo=np.full(n, -5.0), hi=np.full(n, 5.0))
            sol = solve_qp(prob)
            if sol.status != QpStatus.OPTIMAL:
                continue  # random rows over the box can be jointly infeasible
            solved += 1
            assert sol.kkt_residual <= 1e-6
        assert solved >= 20

    def test_adding_constraint_never_improves(self):
        rng = np.random.default_rng(13)
        for _ in range(15):
            n = 4
            mat = rng.normal(size=(n, n))
            q = mat @ mat.T + np.eye(n)
            c = rng.normal(size=n)
            cons = []
            prev = solve_qp(make_qp(q, c)).objective_value
            for _ in range(3):
                a = rng.normal(size=n)
                cons.append(({j: float(a[j]) for j in range(n)}, ">=", float(rng.normal())))
                sol = solve_qp(make_qp(q, c, cons))
                if sol.status != QpStatus.OPTIMAL:
                    break
                assert sol.objective_value >= prev - 1e-8
                prev = sol.objective_value

    def test_singular_q_with_linear_term_on_box(self):
        # Q singular in the second coordinate; bounded by the box
        q = np.diag([2.0, 0.0])
        prob = make_qp(q, [0.0, 1.0], lo=[-1.0, -1.0], hi=[1.0, 1.0])
        sol = solve_qp(prob)
        assert sol.status == QpStatus.OPTIMAL
        assert sol.values[0] == pytest.approx(0.0, abs=1e-6)
        assert sol.values[1] == pytest.approx(-1.0, abs=1e-6)

    def test_bound_only_box_projection(self):
        prob = make_qp(2.0 * np.eye(2), [-8.0, 2.0], lo=[0.0, 0.0], hi=[1.0, 1.0])
        sol = solve_qp(prob)  # min ||v - (4, -1)||^2 on the unit box
        assert np.allclose(sol.values, [1.0, 0.0], atol=1e-8)
