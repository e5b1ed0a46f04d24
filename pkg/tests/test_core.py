import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csvrptw.core import (Instance, InstanceError, InfeasibleSolutionError, PenaltyFn, QUADRATIC, Route,
                          ScenarioSet, Solution, SolomonParseError, arrival_times, check_solution,
                          expected_route_penalty, load_solomon, parse_solomon, route_cost, route_penalty,
                          scenario_arrivals, solution_from_routes, solution_value, write_solomon)

from conftest import make_instance

TOY = """TOY1

VEHICLE
NUMBER     CAPACITY
  2         50

CUSTOMER
CUST NO.  XCOORD.   YCOORD.    DEMAND   READY TIME  DUE DATE   SERVICE   TIME

    0      0.0      0.0         0          0        100          0
    1      3.0      4.0         5          2         30          1
"""


def times_for(inst, entries):
    t = np.zeros((inst.n_nodes, inst.n_nodes))
    for (i, j), v in entries.items():
        t[i, j] = v
    return t


class TestSolomon:
    def test_r101_truncation(self):
        inst = load_solomon("R101", 25)
        assert inst.n_customers == 25
        assert inst.capacity == 200
        assert inst.fleet == 25

    def test_toy(self):
        inst = parse_solomon(TOY)
        assert inst.n_customers == 1
        assert inst.demand[0] == 0
        assert inst.cost[0, 1] == pytest.approx(5.0)
        # service time of the tail is folded into the outgoing arc
        assert inst.nominal[1, 0] == pytest.approx(6.0)
        assert inst.nominal[0, 1] == pytest.approx(5.0)

    def test_window_inverted(self):
        with pytest.raises(InstanceError):
            parse_solomon(TOY.replace("2         30", "40         30"))

    def test_duplicate_id(self):
        text = TOY + "    1      1.0      1.0         5          0         30          0\n"
        with pytest.raises(InstanceError, match="duplicate"):
            parse_solomon(text)

    def test_bad_header_has_line(self):
        with pytest.raises(SolomonParseError) as err:
            parse_solomon(TOY.replace("VEHICLE", "VEHICLES?").replace("NUMBER", "NUM"))
        assert err.value.line == 4

    def test_bad_row_has_line(self):
        with pytest.raises(SolomonParseError, match="line 11"):
            parse_solomon(TOY.replace("3.0      4.0", "3.0"))

    @pytest.mark.parametrize("name", ["R101", "C101", "RC101"])
    def test_roundtrip(self, name):
        inst = load_solomon(name, 25)
        again = parse_solomon(write_solomon(inst))
        assert again.same_as(inst)
        assert Instance.from_json(inst.to_json()).same_as(inst)

    def test_unknown_instance(self):
        with pytest.raises(FileNotFoundError):
            load_solomon("X999")


class TestInstance:
    def test_invariants(self):
        inst = load_solomon("C101", 10)
        assert np.all(np.diag(inst.cost) == 0)
        c = inst.cost
        # triangle inequality on unrounded Euclidean costs
        assert np.all(c[:, None, :] <= c[:, :, None] + c[None, :, :] + 1e-9)

    def test_arc_layout(self, line3):
        v = np.arange(line3.n_arcs, dtype=float)
        m = line3.arc_matrix(v)
        assert np.all(np.diag(m) == 0)
        assert np.array_equal(line3.arc_vector(m), v)
        for a, (i, j) in enumerate(line3.arcs):
            assert line3.arc_index(i, j) == a

    def test_depot_demand(self):
        with pytest.raises(InstanceError):
            make_instance([[0, 0], [1, 1]], demand=[1, 1])


class TestArrivals:
    def test_hand_example(self):
        inst = make_instance([[0, 0], [1, 0], [2, 0]], ready=[0, 5, 10], due=[100, 100, 100])
        t = times_for(inst, {(0, 1): 3, (1, 2): 4})
        a, s = arrival_times((1, 2), t, inst)
        assert np.allclose(a, [3, 9])
        assert np.allclose(s, [5, 10])

    def test_zero(self):
        inst = make_instance([[0, 0], [0, 0]])
        a, s = arrival_times((1,), np.zeros((2, 2)), inst)
        assert a[0] == 0 and s[0] == 0

    def test_no_waiting(self):
        inst = make_instance([[0, 0], [1, 0], [2, 0]])
        t = times_for(inst, {(0, 1): 2.5, (1, 2): 4.25})
        a, _ = arrival_times((1, 2), t, inst)
        assert a[1] == 2.5 + 4.25

    def test_scenario_stack_matches_single(self, square4):
        rng = np.random.default_rng(0)
        times = rng.uniform(1, 20, size=(6, 5, 5))
        stack = scenario_arrivals((4, 1, 2), times, square4)
        for k in range(6):
            assert np.allclose(stack[k], arrival_times((4, 1, 2), times[k], square4)[0])


class TestPenalty:
    def test_single_late(self):
        inst = make_instance([[0, 0], [1, 0]], due=[100, 2])
        t = times_for(inst, {(0, 1): 3})
        assert route_penalty((1,), t, QUADRATIC, inst) == 1.0

    def test_all_early(self, line3):
        t = np.zeros((4, 4))
        assert route_penalty((1, 2, 3), t, QUADRATIC, line3) == 0.0

    def test_two_customers(self):
        inst = make_instance([[0, 0], [1, 0], [2, 0]], ready=[0, 1, 4], due=[100, 2, 8])
        t = times_for(inst, {(0, 1): 3, (1, 2): 6})
        assert np.allclose(arrival_times((1, 2), t, inst)[0], [3, 9])
        assert route_penalty((1, 2), t, QUADRATIC, inst) == 2.0

    def test_kinds(self):
        assert PenaltyFn("linear", 2.0)(np.array([-1.0, 3.0])).tolist() == [0.0, 6.0]
        table = PenaltyFn("custom", table=((0, 0), (1, 1), (2, 5)))
        assert table(np.array([0.5, 1.5, 3.0])).tolist() == [0.5, 3.0, 9.0]
        with pytest.raises(ValueError):
            PenaltyFn("custom", table=((0, 0), (1, 2), (2, 1)))
        assert PenaltyFn.from_dict(table.to_dict()) == table

    @given(st.lists(st.floats(0, 50), min_size=2, max_size=20))
    def test_nondecreasing(self, us):
        us = np.sort(np.asarray(us))
        for pen in (QUADRATIC, PenaltyFn("linear"), PenaltyFn("custom", table=((0, 0), (2, 1), (3, 4)))):
            v = pen(us)
            assert np.all(np.diff(v) >= -1e-12)
            assert pen(0.0) == 0.0


class TestSolution:
    def test_value_no_lateness(self, square4):
        routes = [(1, 2), (3,), (4,)]
        sol = Solution(tuple(Route.build(square4, r) for r in routes))
        total, first, second = solution_value(sol, np.zeros((5, 5)), QUADRATIC, square4)
        assert second == 0.0
        assert total == pytest.approx(sum(route_cost(square4, r) for r in routes))

    def test_one_late(self):
        inst = make_instance([[0, 0], [3, 4]], due=[100, 2])
        sol = Solution((Route.build(inst, (1,)),))
        t = np.array([[0, 5.5], [5.5, 0]])
        total, first, second = solution_value(sol, t, QUADRATIC, inst)
        assert first == pytest.approx(10.0)
        assert second == pytest.approx(3.5**2)

    def test_compositional(self, square4):
        rng = np.random.default_rng(3)
        t = rng.uniform(5, 15, size=(5, 5))
        routes = [(1, 2), (4, 3)]
        sol = Solution(tuple(Route.build(square4, r) for r in routes))
        total, _, _ = solution_value(sol, t, QUADRATIC, square4)
        manual = sum(route_cost(square4, r) + route_penalty(r, t, QUADRATIC, square4) for r in routes)
        assert total == pytest.approx(manual, abs=1e-12)

    def test_infeasible(self, square4):
        with pytest.raises(InfeasibleSolutionError):
            check_solution(Solution((Route.build(square4, (1, 2)),)), square4)
        with pytest.raises(InfeasibleSolutionError):
            check_solution(Solution(tuple(Route.build(square4, (c,)) for c in (1, 2, 3, 4))), square4)
        with pytest.raises(InstanceError):
            Route.build(square4, (1, 1))

    def test_route_capacity(self, square4):
        with pytest.raises(InstanceError):
            Route.build(square4, (2, 4, 1))

    def test_route_cost(self, square4):
        r = Route.build(square4, (1, 2, 3))
        assert r.cost == pytest.approx(10 + 10 + 10 + 10)
        assert r.load == 7

    def test_serialization(self, square4):
        scen = ScenarioSet.single(square4.nominal)
        sol = solution_from_routes(square4, [(3, 2), (1,), (4,)], scen, QUADRATIC, "x")
        again = Solution.from_dict(square4, json.loads(json.dumps(sol.to_dict())))
        assert again.fingerprint() == sol.fingerprint()
        assert again.objective == pytest.approx(sol.objective)


class TestScenarioSet:
    def test_weights(self):
        with pytest.raises(ValueError):
            ScenarioSet(np.zeros((2, 3, 3)), np.array([0.5, 0.6]))
        s = ScenarioSet(np.ones((3, 2, 2)), np.array([0.5, 0.0, 0.5])).drop_zero_weights()
        assert len(s) == 2
        assert abs(s.weights.sum() - 1) < 1e-12

    def test_expected_penalty(self, line3):
        t1 = np.full((4, 4), 3.0)
        t2 = np.full((4, 4), 6.0)
        scen = ScenarioSet(np.stack([t1, t2]), np.array([0.25, 0.75]))
        v = expected_route_penalty((1,), scen, QUADRATIC, line3)
        assert v == pytest.approx(0.25 * 1 + 0.75 * 16)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), delta=st.floats(0.0, 30.0))
def test_translation_covariance(seed, delta):
    rng = np.random.default_rng(seed)
    inst = make_instance(rng.uniform(0, 20, size=(5, 2)), ready=np.r_[0, rng.uniform(0, 30, 4)])
    t = rng.uniform(1, 10, size=(5, 5))
    route = tuple(rng.permutation(4) + 1)
    a0, s0 = arrival_times(route, t, inst)
    t2 = t.copy()
    t2[0, route[0]] += delta
    a1, s1 = arrival_times(route, t2, inst)
    assert a1[0] == pytest.approx(a0[0] + delta)
    assert np.all(s1 >= s0 - 1e-12)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 10_000), bump=st.floats(0.0, 20.0))
def test_penalty_monotone_in_times(seed, bump):
    rng = np.random.default_rng(seed)
    inst = make_instance(rng.uniform(0, 20, size=(5, 2)), ready=np.r_[0, rng.uniform(0, 10, 4)],
                         due=np.r_[100, rng.uniform(10, 40, 4)])
    t = rng.uniform(1, 10, size=(5, 5))
    route = tuple(rng.permutation(4) + 1)
    i, j = rng.integers(0, 5, size=2)
    t2 = t.copy()
    t2[i, j] += bump
    assert route_penalty(route, t2, QUADRATIC, inst) >= route_penalty(route, t, QUADRATIC, inst) - 1e-12
