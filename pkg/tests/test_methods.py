import warnings

import numpy as np
import pytest

from csvrptw.core import QUADRATIC, ScenarioSet, check_solution, route_cost
from csvrptw.datagen import Dataset, GenerativeModel, make_dataset, test_times_at
from csvrptw.learn import MlpHyper, SingularDesignError, init_mlp
from csvrptw.methods import (BENCHMARKS, METHODS, ConfigError, MethodConfig, MethodContext, Prescription,
                             canonical_method, prescribe)
from csvrptw.oracle import brute_force_optimum, random_instance
from csvrptw.penalty_model import PenaltyPredictor, feature_names
from csvrptw.solver import PenaltyModelObjective, ScenarioObjective, SolverLimits, branch_and_price

from conftest import make_instance

LIMITS = SolverLimits(time_limit=120)
SMALL_MLP = MlpHyper(hidden=(8,), epochs=150)


@pytest.fixture(scope="module")
def setting():
    inst = random_instance(5, 2, 21)
    model = GenerativeModel.create("linear", inst, 2, 7)
    data = make_dataset(model, inst, 30, 3, 8)
    x_new = np.r_[1.0, model.sample_features(np.random.default_rng(3), 1)[0]]
    tests = inst.arc_matrix(test_times_at(model, x_new[1:], 20, 9))
    ctx = MethodContext(inst, data, QUADRATIC, MethodConfig(mlp=SMALL_MLP, csaa_count=20), LIMITS)
    return inst, data, x_new, tests, ctx


def test_canonical_names():
    assert canonical_method("csaa") == "CSAA"
    assert canonical_method("pto_knn") == "PTO-kNN"
    assert canonical_method("saa-knn") == "SAA-kNN"
    with pytest.raises(ConfigError):
        canonical_method("SAA++")
    assert len(METHODS) == 10


def test_config_roundtrip():
    cfg = MethodConfig(csaa_count=7, pnn_donors=("SAA",), mlp=MlpHyper(hidden=(3, 2)))
    assert MethodConfig.from_dict(cfg.to_dict()) == cfg


@pytest.mark.parametrize("method", [m for m in METHODS if m != "P-NN"])
def test_scenario_sets_normalized(setting, method):
    inst, data, x_new, tests, ctx = setting
    scen = ctx.scenarios(method, x_new, tests)
    assert abs(scen.weights.sum() - 1.0) <= 1e-12
    assert scen.times.shape[1:] == (inst.n_nodes, inst.n_nodes)
    if method in ("PTO-OLS", "PTO-kNN"):
        assert np.all(inst.arc_vector(scen.times[0]) >= inst.arc_vector(inst.nominal) - 1e-12)


@pytest.mark.parametrize("method", BENCHMARKS)
def test_benchmarks_need_test_times(setting, method):
    _, _, x_new, _, ctx = setting
    with pytest.raises(ConfigError):
        ctx.prescribe(method, x_new)


def test_wrong_feature_length(setting):
    _, _, _, _, ctx = setting
    with pytest.raises(ConfigError):
        ctx.prescribe("SAA", [1.0, 0.5])


@pytest.mark.parametrize("method", ["D-avg", "PTO-OLS", "PTO-kNN", "SAA", "SAA-kNN", "CSAA", "RSAA", "PTO-F", "Full"])
def test_objective_consistency(setting, method):
    inst, data, x_new, tests, ctx = setting
    pres = ctx.prescribe(method, x_new, tests)
    check_solution(pres.solution, inst)
    obj = ctx.objective(method, x_new, tests)
    routes = [r.customers for r in pres.solution.routes]
    again = sum(route_cost(inst, r) for r in routes) + float(obj.route_penalties(inst, routes).sum())
    assert again == pytest.approx(pres.objective, abs=1e-6)
    assert pres.report.status == "optimal"
    assert isinstance(pres, Prescription) and pres.to_json()


def test_saa_knn_full_k_equals_saa(setting):
    inst, data, x_new, _, _ = setting
    ctx = MethodContext(inst, data, QUADRATIC, MethodConfig(knn_k=data.n), LIMITS)
    a = ctx.prescribe("SAA-kNN", x_new)
    b = ctx.prescribe("SAA", x_new)
    assert a.objective == pytest.approx(b.objective, abs=1e-6)


def test_identical_rows_saa_equals_davg(setting):
    inst, data, x_new, _, _ = setting
    T = np.repeat(data.T[:1], data.n, axis=0)
    same = Dataset(data.X, T, data.kind, 0)
    ctx = MethodContext(inst, same, QUADRATIC, MethodConfig(), LIMITS)
    assert ctx.prescribe("SAA", x_new).objective == pytest.approx(ctx.prescribe("D-avg", x_new).objective,
                                                                  abs=1e-6)


def test_single_row_collapse(setting):
    inst, data, _, _, _ = setting
    one = Dataset(np.ones((1, 1)), data.T[:1], data.kind, 0)
    ctx = MethodContext(inst, one, QUADRATIC, MethodConfig(), LIMITS)
    x1 = one.X[0]
    assert ctx.prescribe("SAA", x1).objective == pytest.approx(ctx.prescribe("D-avg", x1).objective, abs=1e-6)
    # residual scenarios need a least-squares fit, which needs more rows than features
    with pytest.raises(SingularDesignError):
        ctx.prescribe("RSAA", x1)


def test_full_matches_oracle_two_customers():
    inst = make_instance([[0, 0], [5, 0], [0, 6]], demand=[0, 1, 1], ready=[0, 0, 0], due=[200, 7, 9],
                         capacity=2, fleet=2)
    model = GenerativeModel.create("linear", inst, 1, 0)
    data = make_dataset(model, inst, 5, 2, 1)
    t1 = inst.nominal.copy()
    t2 = inst.nominal * 1.5
    tests = np.stack([t1, t2])
    pres = prescribe("Full", data, [1.0, 0.5], inst, test_times=tests, limits=LIMITS)
    oracle = brute_force_optimum(inst, ScenarioObjective(ScenarioSet.uniform(tests), QUADRATIC))
    assert pres.objective == pytest.approx(oracle.objective, abs=1e-9)


def test_feature_blind_cached(setting):
    inst, data, x_new, _, ctx = setting
    a = ctx.prescribe("SAA", x_new)
    b = ctx.prescribe("SAA", data.X[3])
    assert a.solution is b.solution
    assert np.allclose(b.x, data.X[3])


class TestPnn:
    def test_hand_h_matches_enumeration(self):
        inst = make_instance([[0, 0], [4, 3], [-3, 4], [2, -5]], demand=[0, 1, 1, 1], ready=[0, 0, 0, 0],
                             due=[300, 9, 14, 8], capacity=2, fleet=2)
        model = GenerativeModel.create("linear", inst, 1, 4)
        data = make_dataset(model, inst, 12, 2, 5)
        ctx = MethodContext(inst, data, QUADRATIC, MethodConfig(), LIMITS)
        from csvrptw.penalty_model import EarlyArrivalModel, FeatureContext

        fctx = FeatureContext(inst, QUADRATIC, ctx.ols, ctx.cov, EarlyArrivalModel())
        h = init_mlp(len(feature_names(2)), (1,), seed=2)
        h.weights[0][:] = 0.0
        h.weights[0][feature_names(2).index("late_pred"), 0] = 1.0
        h.weights[1][:] = 1.5
        pred = PenaltyPredictor(fctx, h, data.X[0])
        obj = PenaltyModelObjective(pred, data.scenario_times(inst))
        rep = branch_and_price(obj, inst, LIMITS)
        assert rep.objective == pytest.approx(brute_force_optimum(inst, obj).objective, abs=1e-6)

    def test_pipeline_runs_and_records(self, setting):
        inst, data, x_new, _, ctx = setting
        pres = ctx.prescribe("P-NN", x_new)
        check_solution(pres.solution, inst)
        union = set()
        for m in ctx.config.pnn_donors:
            union |= ctx.donor_routes[m]
        assert pres.meta["donor_routes"] == len(union) == len(ctx.donor_pool())
        assert pres.meta["training_rows"] > 0
        pipe = ctx.penalty_pipeline()
        obj = ctx.objective("P-NN", x_new)
        routes = [r.customers for r in pres.solution.routes]
        again = sum(route_cost(inst, r) for r in routes) + float(obj.route_penalties(inst, routes).sum())
        assert again == pytest.approx(pres.objective, abs=1e-6)
        assert pipe is ctx.penalty_pipeline()

    def test_zero_targets_fall_back(self):
        inst = make_instance([[0, 0], [4, 3], [-3, 4], [2, -5]], demand=[0, 1, 1, 1], ready=[0, 0, 0, 0],
                             due=[900, 800, 800, 800], capacity=3, fleet=2)
        model = GenerativeModel.create("linear", inst, 1, 4)
        data = make_dataset(model, inst, 12, 2, 5)
        ctx = MethodContext(inst, data, QUADRATIC, MethodConfig(mlp=SMALL_MLP), LIMITS)
        with warnings.catch_warnings(record=True) as caught:
            warnings.simplefilter("always")
            pres = ctx.prescribe("P-NN", data.X[0])
        assert any("all zero" in str(w.message) for w in caught)
        assert pres.meta["zero_predictor"]

        class CostOnly:
            def route_penalties(self, inst, routes):
                return np.zeros(len(routes))

        assert pres.objective == pytest.approx(brute_force_optimum(inst, CostOnly()).objective, abs=1e-6)


def test_context_rejects_mismatched_arcs(setting):
    inst, data, _, _, _ = setting
    with pytest.raises(ConfigError):
        MethodContext(inst.truncated(4), data)
