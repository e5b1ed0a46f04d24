"""Prescriptive methods: map (training data, observed features) to a routing solution.

Each method builds a solver objective from the data and the observed feature
vector and hands it to branch-and-price. Point methods plug one travel-time
matrix into the deterministic-penalty problem, scenario methods use weighted
scenario sets, and P-NN replaces the expected penalty by a learned predictor
trained on routes collected from other methods' runs.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field

import numpy as np

from .core import Instance, PenaltyFn, QUADRATIC, ScenarioSet, Solution
from .datagen import Dataset
from .learn import (CovEstimate, KnnModel, MlpHyper, MlpModel, OlsModel, estimate_cov, fit_mlp, fit_ols,
                    knn_predict, knn_weights, residual_scenarios, sample_conditional_scenarios)
from .penalty_model import (FeatureContext, PenaltyPredictor, build_training_set, degenerate_targets,
                            fit_early_arrival)
from .solver import PenaltyModelObjective, ScenarioObjective, SolveReport, SolverLimits, branch_and_price

METHODS = ("D-avg", "PTO-OLS", "PTO-kNN", "SAA", "SAA-kNN", "CSAA", "RSAA", "P-NN", "PTO-F", "Full")
BENCHMARKS = ("PTO-F", "Full")
FEATURE_BLIND = ("D-avg", "SAA")
_ALIASES = {m.lower().replace("-", "").replace("_", ""): m for m in METHODS}


class ConfigError(ValueError):
    """Unknown method name or a method used without the inputs it needs."""


def canonical_method(name: str) -> str:
    key = str(name).lower().replace("-", "").replace("_", "")
    if key not in _ALIASES:
        raise ConfigError(f"unknown method {name!r}; choose from {', '.join(METHODS)}")
    return _ALIASES[key]


@dataclass
class MethodConfig:
    csaa_count: int = 50
    csaa_seed: int = 0
    knn_k: int | None = None
    rsaa_subtract: bool = False
    pnn_rows: int = 3000
    pnn_donors: tuple[str, ...] = ("D-avg", "SAA")
    logit_lam: float = 0.01
    mlp: MlpHyper = field(default_factory=MlpHyper)

    def to_dict(self) -> dict:
        d = dict(self.__dict__)
        d["pnn_donors"] = list(self.pnn_donors)
        d["mlp"] = {k: (list(v) if isinstance(v, tuple) else v) for k, v in self.mlp.__dict__.items()}
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "MethodConfig":
        d = dict(d)
        if "mlp" in d:
            m = dict(d["mlp"])
            if "hidden" in m:
                m["hidden"] = tuple(m["hidden"])
            if "betas" in m:
                m["betas"] = tuple(m["betas"])
            d["mlp"] = MlpHyper(**m)
        if "pnn_donors" in d:
            d["pnn_donors"] = tuple(canonical_method(m) for m in d["pnn_donors"])
        return cls(**d)


@dataclass(eq=False)
class Prescription:
    method: str
    x: np.ndarray
    solution: Solution
    report: SolveReport
    meta: dict = field(default_factory=dict)

    @property
    def objective(self) -> float:
        return self.report.objective

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "x": [float(v) for v in self.x],
            "solution": self.solution.to_dict(),
            "fingerprint": self.solution.fingerprint(),
            "report": self.report.to_dict(),
            "meta": self.meta,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)


@dataclass
class PenaltyPipeline:
    """The trained pieces of P-NN; independent of the observed feature vector."""

    ctx: FeatureContext
    mlp: MlpModel | None
    n_donor_routes: int
    n_rows: int
    final_loss: float
    train_seconds: float


class MethodContext:
    """Fitted estimators and cached runs for one (instance, dataset) pair."""

    def __init__(self, inst: Instance, data: Dataset, pen: PenaltyFn = QUADRATIC,
                 config: MethodConfig | None = None, limits: SolverLimits | None = None):
        if data.T.shape[1] != inst.n_arcs:
            raise ConfigError(f"dataset has {data.T.shape[1]} arcs, instance has {inst.n_arcs}")
        self.inst = inst
        self.data = data
        self.pen = pen
        self.config = config or MethodConfig()
        self.limits = limits or SolverLimits()
        self.nominal = inst.arc_vector(inst.nominal)
        self._ols: OlsModel | None = None
        self._cov: CovEstimate | None = None
        self._knn: KnnModel | None = None
        self._blind: dict[str, Prescription] = {}
        self._pipeline: PenaltyPipeline | None = None
        self.donor_routes: dict[str, set] = {}

    @property
    def ols(self) -> OlsModel:
        if self._ols is None:
            self._ols = fit_ols(self.data.X, self.data.T)
        return self._ols

    @property
    def cov(self) -> CovEstimate:
        if self._cov is None:
            self._cov = estimate_cov(self.data.X, self.data.T, self.ols)
        return self._cov

    @property
    def knn(self) -> KnnModel:
        if self._knn is None:
            self._knn = KnnModel.fit(self.data.X, self.config.knn_k)
        return self._knn

    def clamp(self, arcs) -> np.ndarray:
        return np.maximum(np.asarray(arcs, dtype=float), self.nominal)

    # ------------------------------------------------------------------
    # objectives
    # ------------------------------------------------------------------

    def scenarios(self, method: str, x_new, test_times=None) -> ScenarioSet:
        """Scenario set handed to the solver by a scenario or point method."""
        inst, data = self.inst, self.data
        x_new = np.asarray(x_new, dtype=float).reshape(-1)
        if method == "D-avg":
            return ScenarioSet.single(inst.arc_matrix(data.T.mean(axis=0)))
        if method == "PTO-OLS":
            return ScenarioSet.single(inst.arc_matrix(self.clamp(self.ols.predict(x_new))))
        if method == "PTO-kNN":
            return ScenarioSet.single(inst.arc_matrix(self.clamp(knn_predict(self.knn, data.X, data.T, x_new))))
        if method == "SAA":
            return ScenarioSet.uniform(data.scenario_times(inst))
        if method == "SAA-kNN":
            w = knn_weights(self.knn, data.X, x_new)
            return ScenarioSet(data.scenario_times(inst), w).drop_zero_weights()
        if method == "CSAA":
            return sample_conditional_scenarios(self.ols, self.cov, x_new, self.config.csaa_count,
                                                self.config.csaa_seed, inst)
        if method == "RSAA":
            return residual_scenarios(self.ols, data.X, data.T, x_new, inst, self.config.rsaa_subtract)
        if method in BENCHMARKS:
            if test_times is None:
                raise ConfigError(f"{method} is a benchmark and needs the test travel times at x")
            tt = np.asarray(test_times, dtype=float)
            if tt.ndim == 2:
                tt = inst.arc_matrix(tt)
            if method == "PTO-F":
                return ScenarioSet.single(tt.mean(axis=0))
            return ScenarioSet.uniform(tt)
        raise ConfigError(f"{method} does not use a scenario set")

    def objective(self, method: str, x_new, test_times=None):
        method = canonical_method(method)
        if method == "P-NN":
            pipe = self.penalty_pipeline()
            pred = PenaltyPredictor(pipe.ctx, pipe.mlp, x_new)
            return PenaltyModelObjective(pred, self.data.scenario_times(self.inst))
        return ScenarioObjective(self.scenarios(method, x_new, test_times), self.pen)

    # ------------------------------------------------------------------
    # P-NN training
    # ------------------------------------------------------------------

    def donor_pool(self) -> list[tuple[int, ...]]:
        """Routes seen by the donor methods' solves, deduplicated and sorted."""
        for m in self.config.pnn_donors:
            if m not in self.donor_routes:
                self.prescribe(m, self.data.X[0])
        routes = set()
        for m in self.config.pnn_donors:
            routes |= self.donor_routes[m]
        return sorted(routes)

    def penalty_pipeline(self) -> PenaltyPipeline:
        if self._pipeline is not None:
            return self._pipeline
        t0 = time.monotonic()
        routes = self.donor_pool()
        if not routes:
            raise ConfigError("P-NN needs at least one donor route")
        inst, data, cfg = self.inst, self.data, self.config
        early = fit_early_arrival(routes, data.X, data.T, inst, self.ols, self.cov, lam=cfg.logit_lam)
        ctx = FeatureContext(inst, self.pen, self.ols, self.cov, early)
        ts = build_training_set(routes, data.X, data.T, ctx, seed=cfg.mlp.seed, max_rows=cfg.pnn_rows)
        mlp, loss = None, 0.0
        if not degenerate_targets(ts):
            mlp = fit_mlp(ts.Y, ts.targets, cfg.mlp)
            loss = float(mlp.history[-1]) if mlp.history else float("nan")
        self._pipeline = PenaltyPipeline(ctx, mlp, len(routes), ts.n, loss, time.monotonic() - t0)
        return self._pipeline

    # ------------------------------------------------------------------
    # solving
    # ------------------------------------------------------------------

    def prescribe(self, method: str, x_new, test_times=None, limits: SolverLimits | None = None) -> Prescription:
        method = canonical_method(method)
        x_new = np.asarray(x_new, dtype=float).reshape(-1)
        if x_new.shape[0] != self.data.p:
            raise ConfigError(f"feature vector has {x_new.shape[0]} entries, data has {self.data.p}")
        if method in FEATURE_BLIND and method in self._blind:
            cached = self._blind[method]
            return Prescription(method, x_new, cached.solution, cached.report, dict(cached.meta))
        objective = self.objective(method, x_new, test_times)
        report = branch_and_price(objective, self.inst, limits or self.limits, method=method)
        meta = {}
        if isinstance(objective, ScenarioObjective):
            meta["scenarios"] = len(objective.scen)
        else:
            pipe = self._pipeline
            meta.update(donor_routes=pipe.n_donor_routes, training_rows=pipe.n_rows,
                        final_loss=pipe.final_loss, zero_predictor=pipe.mlp is None)
        out = Prescription(method, x_new, report.solution, report, meta)
        if method in self.config.pnn_donors:
            self.donor_routes.setdefault(method, set()).update(tuple(r) for r in report.pool_routes)
        if method in FEATURE_BLIND:
            self._blind[method] = out
        return out


def prescribe(method: str, data: Dataset, x_new, inst: Instance, pen: PenaltyFn = QUADRATIC, test_times=None,
              limits: SolverLimits | None = None, config: MethodConfig | None = None) -> Prescription:
    """One-shot prescription; use :class:`MethodContext` to share fitted models across calls."""
    return MethodContext(inst, data, pen, config, limits).prescribe(method, x_new, test_times)


def pnn_pipeline(data: Dataset, x_new, inst: Instance, pen: PenaltyFn = QUADRATIC, donors=("D-avg", "SAA"),
                 hyper: MlpHyper | None = None, limits: SolverLimits | None = None) -> Prescription:
    cfg = MethodConfig(pnn_donors=tuple(canonical_method(m) for m in donors), mlp=hyper or MlpHyper())
    return MethodContext(inst, data, pen, cfg, limits).prescribe("P-NN", x_new)
