import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csvrptw.lp import LpProblem, fractional_knapsack, solve_lp, write_lp_file


class TestSolveLp:
    def test_single(self):
        sol = solve_lp(LpProblem(np.array([1.0]), np.array([[1.0]]), np.array([1.0]), upper=np.array([1.0])))
        assert sol.optimal
        assert sol.z[0] == pytest.approx(1.0)
        assert sol.duals_eq[0] == pytest.approx(1.0)

    def test_two_var_hand(self):
        # min -x - 2y s.t. x + y <= 4, x + 3y <= 6 -> vertex (3, 1), value -5, duals (-0.5, -0.5)
        prob = LpProblem(np.array([-1.0, -2.0]), np.zeros((0, 2)), np.zeros(0),
                         np.array([[1.0, 1.0], [1.0, 3.0]]), np.array([4.0, 6.0]))
        sol = solve_lp(prob)
        assert np.allclose(sol.z, [3.0, 1.0], atol=1e-9)
        assert sol.objective == pytest.approx(-5.0, abs=1e-9)
        assert np.allclose(sol.duals_ub, [-0.5, -0.5], atol=1e-9)

    def test_infeasible(self):
        prob = LpProblem(np.array([1.0]), np.array([[1.0], [1.0]]), np.array([1.0, 2.0]))
        assert solve_lp(prob).status == "infeasible"

    def test_unbounded(self):
        prob = LpProblem(np.array([-1.0, 0.0]), np.array([[0.0, 1.0]]), np.array([1.0]))
        assert solve_lp(prob).status == "unbounded"

    def test_validation(self):
        with pytest.raises(ValueError):
            LpProblem(np.array([np.nan]), np.array([[1.0]]), np.array([1.0]))
        with pytest.raises(ValueError):
            LpProblem(np.array([1.0, 1.0]), np.array([[1.0, 1.0]]), np.array([1.0, 2.0]))

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 100_000))
    def test_duality_and_slackness(self, seed):
        rng = np.random.default_rng(seed)
        m, n = int(rng.integers(1, 5)), int(rng.integers(2, 8))
        A = rng.integers(0, 2, size=(m, n)).astype(float)
        A[:, 0] = 1.0  # a feasible column covering every row
        c = rng.uniform(1, 10, size=n)
        G = np.ones((1, n))
        prob = LpProblem(c, A, np.ones(m), G, np.array([float(n)]))
        sol = solve_lp(prob)
        assert sol.optimal
        dual_obj = prob.b_eq @ sol.duals_eq + prob.b_ub @ sol.duals_ub
        assert abs(sol.objective - dual_obj) <= 1e-6 * (1 + abs(sol.objective))
        assert np.all(sol.reduced >= -1e-7)
        assert np.all(np.abs(sol.reduced * sol.z) <= 1e-7)
        assert np.all(sol.duals_ub <= 1e-9)

    def test_lp_file(self, tmp_path):
        prob = LpProblem(np.array([1.5, -2.0]), np.array([[1.0, 1.0]]), np.array([1.0]), upper=np.array([1.0, np.inf]),
                         names=["a", "b"])
        text = write_lp_file(prob, tmp_path / "m.lp")
        assert "obj: 1.5 a - 2 b" in text
        assert "0 <= a <= 1" in text and "b >= 0" in text
        assert (tmp_path / "m.lp").read_text() == text


class TestKnapsack:
    def test_cap_zero(self):
        assert fractional_knapsack([3.0], [1.0], 0.0)[0] == 0.0

    def test_hand(self):
        value, z = fractional_knapsack([6.0, 5.0], [2.0, 5.0], 6.0)
        assert value == pytest.approx(10.0)
        assert np.allclose(z, [1.0, 0.8])

    def test_negative(self):
        value, z = fractional_knapsack([-1.0, -2.0], [1.0, 1.0], 5.0)
        assert value == 0.0 and not z.any()

    def test_excluded(self):
        value, z = fractional_knapsack([6.0, 5.0], [2.0, 5.0], 6.0, excluded=[0])
        assert value == pytest.approx(5.0) and z[0] == 0

    def test_bad_weights(self):
        with pytest.raises(ValueError):
            fractional_knapsack([1.0], [0.0], 1.0)

    @settings(max_examples=60, deadline=None)
    @given(seed=st.integers(0, 100_000), n=st.integers(1, 12))
    def test_dominates_integer(self, seed, n):
        rng = np.random.default_rng(seed)
        v = rng.uniform(-3, 10, size=n)
        w = rng.uniform(0.5, 5, size=n)
        cap = float(rng.uniform(0, w.sum()))
        value, z = fractional_knapsack(v, w, cap)
        best = 0.0
        for pick in itertools.product([0, 1], repeat=n):
            pick = np.array(pick)
            if w @ pick <= cap:
                best = max(best, v @ pick)
        assert value >= best - 1e-9
        assert np.sum((z > 1e-12) & (z < 1 - 1e-12)) <= 1
        assert w @ z <= cap + 1e-9
        assert value == pytest.approx(v @ z)
