import csv
import io
import json
import math
import statistics

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from csvrptw.core import Route, Solution, route_cost
from csvrptw.datagen import TestSet
from csvrptw.harness import (CSV_COLUMNS, REPORT_COLUMNS, ExperimentConfig, MissingPrescriptionError, ResultRow,
                             aggregate, cell_seeds, evaluate_test_cost, expected_cost, full_info_gap, instance_type,
                             method_means, read_rows, report_csv, rows_to_csv, run_cell, run_experiment,
                             run_illustrative_example)
from csvrptw.methods import ConfigError

from conftest import make_instance


@pytest.fixture(scope="module")
def tri():
    return make_instance([[0, 0], [3, 4], [6, 0], [0, -5]], demand=[0, 1, 1, 1], ready=[0, 0, 0, 0],
                         due=[300, 6, 12, 100], capacity=2, fleet=2)


def solution(inst, *routes):
    rs = tuple(Route.build(inst, r) for r in routes)
    return Solution(rs, "test", float(sum(r.cost for r in rs)), 0.0)


def blocks_set(inst, blocks):
    blocks = np.asarray(blocks, dtype=float)
    return TestSet(np.ones((blocks.shape[0], 2)), blocks, "linear", 0)


class TestEvaluate:
    def test_single_no_lateness(self, tri):
        sol = solution(tri, (3,), (1, 2))
        late_free = tri.arc_vector(tri.nominal)[None, None] * 0.1
        ev = evaluate_test_cost({0: sol}, blocks_set(tri, late_free), tri)
        assert ev["test_cost"] == pytest.approx(route_cost(tri, (3,)) + route_cost(tri, (1, 2)))
        assert ev["second_stage"] == 0.0

    def test_hand_double_sum(self, tri):
        sol = solution(tri, (1, 2), (3,))
        v = tri.arc_vector(tri.nominal)
        # x0: nominal times and 2x times; x1: 1.5x times
        blocks = [[v, 2 * v], [1.5 * v, 1.5 * v]]
        first = route_cost(tri, (1, 2)) + route_cost(tri, (3,))

        def pen(scale):
            a1 = 5 * scale
            a2 = a1 + 5 * scale
            a3 = 5 * scale
            return max(a1 - 6, 0) ** 2 + max(a2 - 12, 0) ** 2 + max(a3 - 100, 0) ** 2

        expected_second = ((pen(1) + pen(2)) / 2 + pen(1.5)) / 2
        ev = evaluate_test_cost([sol, sol], blocks_set(tri, blocks), tri)
        assert ev["first_stage"] == pytest.approx(first)
        assert ev["second_stage"] == pytest.approx(expected_second)
        assert ev["test_cost"] == pytest.approx(first + expected_second)

    def test_equal_solutions_linearity(self, tri):
        sol = solution(tri, (1,), (2, 3))
        v = tri.arc_vector(tri.nominal)
        rng = np.random.default_rng(0)
        blocks = v[None, None] * rng.uniform(1, 2, size=(2, 4, 1))
        both = evaluate_test_cost([sol, sol], blocks_set(tri, blocks), tri)["test_cost"]
        each = [evaluate_test_cost([sol], blocks_set(tri, blocks[k:k + 1]), tri)["test_cost"] for k in range(2)]
        assert both == pytest.approx(np.mean(each))

    def test_missing(self, tri):
        sol = solution(tri, (1,), (2, 3))
        v = tri.arc_vector(tri.nominal)
        with pytest.raises(MissingPrescriptionError):
            evaluate_test_cost({0: sol}, blocks_set(tri, [[v], [v]]), tri)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 10_000))
    def test_permutation_invariant(self, tri, seed):
        rng = np.random.default_rng(seed)
        sols = [solution(tri, (1, 2), (3,)), solution(tri, (3, 1), (2,)), solution(tri, (2, 1), (3,))]
        v = tri.arc_vector(tri.nominal)
        blocks = v[None, None] * rng.uniform(0.8, 2.5, size=(3, 5, 1))
        base = evaluate_test_cost(sols, blocks_set(tri, blocks), tri)
        px = rng.permutation(3)
        pt = rng.permutation(5)
        perm = evaluate_test_cost([sols[k] for k in px], blocks_set(tri, blocks[px][:, pt]), tri)
        for key in base:
            assert perm[key] == pytest.approx(base[key], rel=1e-12)

    def test_expected_cost_accepts_matrices(self, tri):
        sol = solution(tri, (1, 2), (3,))
        a = expected_cost(sol, tri.arc_vector(tri.nominal), tri)
        b = expected_cost(sol, tri.nominal, tri)
        c = expected_cost(sol, tri.nominal[None], tri)
        assert a == b == c


class TestGap:
    def test_examples(self):
        assert full_info_gap(5.0, 5.0) == 0.0
        assert full_info_gap(11.0, 10.0) == pytest.approx(10.0)

    def test_domain(self):
        with pytest.raises(ValueError):
            full_info_gap(1.0, 0.0)


def fake_rows():
    rows = []
    rng = np.random.default_rng(1)
    for inst in ("R101", "R102", "C101", "RC101"):
        for seed in (0, 1):
            full = float(rng.uniform(100, 200))
            for m in ("D-avg", "SAA", "CSAA", "Full"):
                cost = full if m == "Full" else full * float(rng.uniform(1.0, 1.3))
                rows.append(ResultRow(inst, 15, "linear", seed, m, cost, cost * 0.7, cost * 0.3,
                                      full_info_gap(cost, full), 0.0, 0.0, "optimal", 1.0))
    return rows


class TestReporting:
    def test_csv_roundtrip(self, tmp_path):
        rows = fake_rows()
        text = rows_to_csv(rows)
        assert text.splitlines()[0].split(",") == CSV_COLUMNS
        (tmp_path / "r.csv").write_text(text)
        back = read_rows(tmp_path / "r.csv")
        assert rows_to_csv(back) == text
        assert back[0].test_cost == rows[0].test_cost

    def test_instance_type(self):
        assert instance_type("RC101") == "RC" and instance_type("c205") == "C"

    def test_aggregate_recomputed_independently(self):
        rows = fake_rows()
        text = report_csv(rows)
        groups = {}
        for r in rows:
            key = (str(r.n_customers), r.model, r.instance.rstrip("0123456789"))
            groups.setdefault(key, []).append(r)
        expected = [REPORT_COLUMNS]
        for key in sorted(groups, key=lambda k: (int(k[0]), k[1], k[2])):
            line = list(key)
            for col in REPORT_COLUMNS[3:]:
                if col == "Full (Abs.)":
                    vals = [r.test_cost for r in groups[key] if r.method == "Full"]
                else:
                    vals = [r.gap for r in groups[key] if r.method == col]
                line.append("%.2f" % statistics.fmean(vals) if vals else "nan")
            expected.append(line)
        assert list(csv.reader(io.StringIO(text))) == expected

    def test_columns_mirror_table(self):
        assert REPORT_COLUMNS[3:] == ["D-avg", "PTO-OLS", "PTO-kNN", "SAA", "SAA-kNN", "CSAA", "RSAA", "P-NN",
                                      "PTO-F", "Full (Abs.)"]

    def test_method_means(self):
        means = method_means(fake_rows())
        assert means["Full"] == 0.0 and means["SAA"] > 0

    def test_aggregate_groups(self):
        recs = aggregate(fake_rows())
        assert [r["type"] for r in recs] == ["C", "R", "RC"]
        assert math.isnan(recs[0]["P-NN"])


class TestConfig:
    def test_defaults_valid(self):
        cfg = ExperimentConfig()
        assert cfg.model == "linear" and cfg.methods == ["D-avg", "SAA", "CSAA", "Full"]
        assert ExperimentConfig.from_dict(cfg.to_dict()) == cfg

    @pytest.mark.parametrize("bad", [{"n": 0}, {"n": 5, "p": 5}, {"p": 1}, {"methods": ["nope"]},
                                     {"model": "quadratic"}, {"time_limit": 0}, {"seeds": []}, {"colour": 1}])
    def test_invalid(self, bad):
        with pytest.raises((ConfigError, ValueError)):
            ExperimentConfig.from_dict(bad)

    def test_load(self, tmp_path):
        (tmp_path / "c.json").write_text(json.dumps({"instances": ["R101"], "model": "sigmoid", "seeds": [3]}))
        cfg = ExperimentConfig.load(tmp_path / "c.json")
        assert cfg.model == "sigmoidal" and cfg.seeds == [3]
        (tmp_path / "bad.json").write_text("{")
        with pytest.raises(ConfigError):
            ExperimentConfig.load(tmp_path / "bad.json")

    def test_cell_seeds_distinct(self):
        seen = set()
        for s in range(5):
            seen |= set(cell_seeds(s).values())
        assert len(seen) == 20


SMALL = dict(instances=["R101"], n_customers=5, seeds=[0], n=12, p=3, n_x=2, n_t=6,
             methods=["D-avg", "SAA", "CSAA", "Full"], csaa_count=10, time_limit=60)


class TestRun:
    def test_cell_rows(self):
        cell = run_cell(ExperimentConfig(**SMALL), "R101", 0)
        rows = {r.method: r for r in cell.rows}
        for r in cell.rows:
            assert r.test_cost == pytest.approx(r.first_stage + r.second_stage, abs=1e-6)
            assert r.gap >= -(r.solve_gap + r.full_solve_gap) * 100 - 1e-6
        assert rows["Full"].gap == 0.0
        assert rows["SAA"].gap >= -1e-6

    def test_experiment_writes_outputs(self, tmp_path):
        rows = run_experiment(ExperimentConfig(**SMALL), tmp_path)
        assert len(rows) == 4
        side = json.loads((tmp_path / "results.json").read_text())
        assert side["config"]["n_customers"] == 5 and side["seeds"]["0"] == cell_seeds(0)
        assert (tmp_path / "results.csv").read_text() == rows_to_csv(rows)


@pytest.mark.slow
def test_demo_report():
    res = run_illustrative_example(seed=0, budget=1)
    att = res["attempts"][0]
    assert res["x_values"] == [0.28, 0.83]
    assert att["saa_identical"] and res["saa_always_identical"]
    for k in range(2):
        assert att["methods"]["CSAA"][k]["test_cost"] >= att["methods"]["Full"][k]["test_cost"] - 1e-6
        assert att["methods"]["Full"][k]["test_cost"] == pytest.approx(att["methods"]["Full"][k]["objective"])
    assert all(isinstance(r, list) for r in att["methods"]["SAA"][0]["routes"])
