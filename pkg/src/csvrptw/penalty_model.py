"""Learned penalty model: feature projection, start-time risk, early-arrival logits.

A route prefix is summarized by a small state (last node, predecessor,
free-flow and predicted service starts, risk, position, latest ready time,
cost so far). :meth:`FeatureContext.step` extends a batch of such states by
one customer and returns the projected predictor rows of the new customers,
so the same code serves training-set assembly, route evaluation and pricing.

Projected predictor layout (``p + 16`` columns):

* ``x_1 .. x_p``
* ``e_i, l_i, l_prev, c_prev_i, var_prev_i, position``
* free-flow arrival, start, lateness, penalty
* predicted arc time, arrival, start, lateness, penalty
* start-time risk
"""

from __future__ import annotations

import csv
import math
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .core import Instance, PenaltyFn, Route, scenario_arrivals
from .learn import CovEstimate, LogitModel, MlpModel, OlsModel, fit_logit_l1

GROUP_B = ["e_i", "l_i", "l_prev", "c_prev_i", "var_prev_i", "position"]
GROUP_C = ["a_free", "s_free", "late_free", "pen_free"]
GROUP_D = ["t_pred_prev_i", "a_pred", "s_pred", "late_pred", "pen_pred"]
GROUP_E = ["risk"]


def feature_names(p: int) -> list[str]:
    return [f"x{k + 1}" for k in range(p)] + GROUP_B + GROUP_C + GROUP_D + GROUP_E


def early_covariate_names(p: int) -> list[str]:
    return [f"x{k + 1}" for k in range(p)] + ["e_i", "a_est", "var_prev_i", "max_e_before", "cost_to_i"]


class EmptyPoolError(ValueError):
    pass


def predicted_times(ols: OlsModel, x, inst: Instance) -> np.ndarray:
    """OLS travel-time prediction at ``x`` as a matrix, clamped below at free flow."""
    arcs = np.maximum(ols.predict(x), inst.arc_vector(inst.nominal))
    return inst.arc_matrix(arcs)


def arc_variances(cov: CovEstimate, inst: Instance) -> np.ndarray:
    return inst.arc_matrix(np.diag(cov.sigma))


# --------------------------------------------------------------------------
# Risk propagation and early-arrival probability
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class RiskState:
    xi: np.ndarray
    prob: np.ndarray


def _cross(cov: CovEstimate, inst: Instance, a: int, b: int, c: int) -> float:
    return float(cov.sigma[inst.arc_index(a, b), inst.arc_index(b, c)])


def propagate_risk(route: Route | Sequence[int], inst: Instance, cov: CovEstimate, early_p) -> RiskState:
    """Start-time risk along a route, damped by early-arrival probabilities.

    The predecessor of the first customer is the depot; the adjacent-arc
    covariance term is absent for the first customer and refers to the
    depot arc for the second.
    """
    seq = route.customers if isinstance(route, Route) else tuple(route)
    p = np.asarray(early_p, dtype=float).reshape(-1)
    if p.shape[0] != len(seq):
        raise ValueError("need one early-arrival probability per customer")
    if np.any(p < 0) or np.any(p > 1):
        raise ValueError("early-arrival probabilities must lie in [0, 1]")
    path = (0,) + seq
    xi = np.empty(len(seq))
    for k in range(len(seq)):
        a, b = path[k], path[k + 1]
        var = float(cov.sigma[inst.arc_index(a, b), inst.arc_index(a, b)])
        if k == 0:
            xi[k] = (1.0 - p[k]) * var
        else:
            xi[k] = (1.0 - p[k]) * (xi[k - 1] + var + 2.0 * _cross(cov, inst, path[k - 1], a, b))
    return RiskState(xi, p.copy())


@dataclass(eq=False)
class EarlyArrivalModel:
    """Per-customer early-arrival probabilities: a logit where data allow, else a smoothed frequency."""

    logits: dict[int, LogitModel] = field(default_factory=dict)
    freq: dict[int, float] = field(default_factory=dict)

    def raw_probability(self, customer: int, W) -> np.ndarray:
        W = np.atleast_2d(W)
        if customer in self.logits:
            return self.logits[customer].predict_proba(W)
        return np.full(W.shape[0], self.freq.get(customer, 0.5))

    def probability(self, customers, W, hard_zero) -> np.ndarray:
        customers = np.asarray(customers).reshape(-1)
        W = np.atleast_2d(W)
        out = np.zeros(customers.shape[0])
        open_ = ~np.asarray(hard_zero, dtype=bool).reshape(-1)
        for c in np.unique(customers[open_]):
            rows = open_ & (customers == c)
            out[rows] = self.raw_probability(int(c), W[rows])
        return out

    def to_dict(self) -> dict:
        return {"logits": {str(k): v.to_dict() for k, v in self.logits.items()},
                "freq": {str(k): v for k, v in self.freq.items()}}


def hard_zero(ready_i, cost_to_i, max_e_before) -> np.ndarray:
    """Cases where an early arrival is impossible.

    ``ready_i == 0``; cost to reach ``i`` already past its ready time (travel
    times never undercut costs); or a preceding customer opens later than ``i``.
    """
    ready_i = np.asarray(ready_i, dtype=float)
    return (ready_i == 0) | (np.asarray(cost_to_i) > ready_i) | (np.asarray(max_e_before) > ready_i)


def estimate_early_arrival(model: EarlyArrivalModel, customer: int, w, ready_i: float, cost_to_i: float,
                           max_e_before: float) -> float:
    """Early-arrival probability of one customer; hard-zero rules take precedence over the model."""
    if hard_zero(ready_i, cost_to_i, max_e_before):
        return 0.0
    return float(model.raw_probability(customer, np.asarray(w, dtype=float))[0])


# --------------------------------------------------------------------------
# Batched prefix states and projection
# --------------------------------------------------------------------------


@dataclass(eq=False)
class PrefixState:
    """Batch of route-prefix summaries; every field has shape ``(B,)``."""

    node: np.ndarray
    prev: np.ndarray
    s_free: np.ndarray
    s_pred: np.ndarray
    risk: np.ndarray
    position: np.ndarray
    max_e: np.ndarray
    cost: np.ndarray

    @classmethod
    def depot(cls, batch: int = 1) -> "PrefixState":
        z = np.zeros(batch)
        zi = np.zeros(batch, dtype=int)
        return cls(zi, zi.copy(), z, z.copy(), z.copy(), zi.copy(), z.copy(), z.copy())

    def take(self, idx) -> "PrefixState":
        return PrefixState(*(getattr(self, f)[idx] for f in self.__dataclass_fields__))


@dataclass(eq=False)
class FeatureContext:
    """Everything the projection needs besides the feature vector and route."""

    inst: Instance
    pen: PenaltyFn
    ols: OlsModel
    cov: CovEstimate
    early: EarlyArrivalModel

    def __post_init__(self):
        inst = self.inst
        self.var = arc_variances(self.cov, inst)
        n1 = inst.n_nodes
        idx = np.full((n1, n1), -1, dtype=int)
        for a, (i, j) in enumerate(inst.arcs):
            idx[i, j] = a
        self.arc_idx = idx

    @property
    def p(self) -> int:
        return self.ols.p

    @property
    def n_features(self) -> int:
        return self.p + 16

    def cross(self, a, b, c) -> np.ndarray:
        """Covariance between arcs (a,b) and (b,c); zero where a == b (no predecessor pair)."""
        ia = self.arc_idx[a, b]
        ib = self.arc_idx[b, c]
        ok = ia >= 0
        out = np.zeros(np.shape(a), dtype=float)
        out[ok] = self.cov.sigma[ia[ok], ib[ok]]
        return out

    def step(self, state: PrefixState, j, X, t_pred) -> tuple[np.ndarray, PrefixState]:
        """Extend each prefix by customer ``j``.

        ``X`` holds the feature rows ``(B, p)`` (or one row broadcast), and
        ``t_pred`` the predicted times ``(B, N+1, N+1)`` or one shared matrix.
        Returns the projected rows ``(B, p + 16)`` and the extended states.
        """
        inst = self.inst
        j = np.asarray(j, dtype=int).reshape(-1)
        B = j.shape[0]
        i = state.node
        X = np.broadcast_to(np.atleast_2d(np.asarray(X, dtype=float)), (B, self.p))
        t_pred = np.asarray(t_pred, dtype=float)
        tp = t_pred[i, j] if t_pred.ndim == 2 else t_pred[np.arange(B), i, j]

        e_j = inst.ready[j]
        l_j = inst.due[j]
        c_ij = inst.cost[i, j]
        var_ij = self.var[i, j]
        pos = state.position + 1

        a_free = state.s_free + inst.nominal[i, j]
        s_free = np.maximum(e_j, a_free)
        late_free = np.maximum(a_free - l_j, 0.0)
        a_pred = state.s_pred + tp
        s_pred = np.maximum(e_j, a_pred)
        late_pred = np.maximum(a_pred - l_j, 0.0)

        cost = state.cost + c_ij
        zero = hard_zero(e_j, cost, state.max_e)
        W = np.column_stack([X, e_j, a_pred, var_ij, state.max_e, cost])
        prob = self.early.probability(j, W, zero)
        first = pos == 1
        carried = np.where(first, 0.0, state.risk + 2.0 * self.cross(state.prev, i, j))
        risk = (1.0 - prob) * (carried + var_ij)

        Y = np.column_stack([
            X,
            e_j, l_j, inst.due[i], c_ij, var_ij, pos,
            a_free, s_free, late_free, self.pen(late_free),
            tp, a_pred, s_pred, late_pred, self.pen(late_pred),
            risk,
        ])
        new = PrefixState(j, i.copy(), s_free, s_pred, risk, pos, np.maximum(state.max_e, e_j), cost)
        return Y, new

    def route_features(self, route: Route | Sequence[int], x, t_pred=None) -> np.ndarray:
        """Projected rows ``(L, p + 16)`` for every customer of a route at one feature vector."""
        seq = route.customers if isinstance(route, Route) else tuple(route)
        x = np.asarray(x, dtype=float).reshape(-1)
        t_pred = predicted_times(self.ols, x, self.inst) if t_pred is None else t_pred
        state = PrefixState.depot(1)
        rows = []
        for v in seq:
            Y, state = self.step(state, [v], x, t_pred)
            rows.append(Y[0])
        return np.array(rows)

    def route_features_batch(self, route: Sequence[int], X, t_pred) -> np.ndarray:
        """Projected rows ``(B, L, p + 16)`` of one route under a batch of feature rows."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        B = X.shape[0]
        state = PrefixState.depot(B)
        out = []
        for v in route:
            Y, state = self.step(state, np.full(B, v), X, t_pred)
            out.append(Y)
        return np.stack(out, axis=1)

    def early_covariates(self, route: Sequence[int], X, t_pred) -> tuple[np.ndarray, np.ndarray]:
        """Early-arrival covariates ``(B, L, p + 5)`` and hard-zero flags ``(B, L)``."""
        X = np.atleast_2d(np.asarray(X, dtype=float))
        inst = self.inst
        B = X.shape[0]
        s = np.zeros(B)
        prev, cost, max_e = 0, 0.0, 0.0
        Ws, zs = [], []
        for v in route:
            tp = t_pred[prev, v] if t_pred.ndim == 2 else t_pred[:, prev, v]
            a = s + tp
            cost += inst.cost[prev, v]
            Ws.append(np.column_stack([X, np.full(B, inst.ready[v]), a, np.full(B, self.var[prev, v]),
                                       np.full(B, max_e), np.full(B, cost)]))
            zs.append(np.full(B, bool(hard_zero(inst.ready[v], cost, max_e))))
            s = np.maximum(inst.ready[v], a)
            max_e = max(max_e, inst.ready[v])
            prev = v
        return np.stack(Ws, axis=1), np.stack(zs, axis=1)


def project(x, route: Route | Sequence[int], customer: int, ctx: FeatureContext, t_pred=None) -> np.ndarray:
    """Projected predictor vector of one customer on a route."""
    seq = route.customers if isinstance(route, Route) else tuple(route)
    if customer not in seq:
        raise ValueError(f"customer {customer} is not on route {seq}")
    k = seq.index(customer)
    return ctx.route_features(seq[: k + 1], x, t_pred)[k]


# --------------------------------------------------------------------------
# Training
# --------------------------------------------------------------------------


def _pred_stack(ols: OlsModel, X, inst: Instance) -> np.ndarray:
    arcs = np.maximum(np.asarray(X, dtype=float) @ ols.coef, inst.arc_vector(inst.nominal)[None, :])
    return inst.arc_matrix(arcs)


def fit_early_arrival(routes: Sequence[Sequence[int]], X, T, inst: Instance, ols: OlsModel, cov: CovEstimate,
                      lam: float = 0.01, min_samples: int = 20, max_rows: int = 3000, seed: int = 0) -> EarlyArrivalModel:
    """Per-customer L1 logits on the routes that visit each customer.

    Labels are ``a(i; t^k) <= e_i`` for every training period ``k``; rows whose
    outcome is fixed by a hard-zero rule carry no information and are skipped.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    times = inst.arc_matrix(T)
    t_pred = _pred_stack(ols, X, inst)
    ctx = FeatureContext(inst, PenaltyFn(), ols, cov, EarlyArrivalModel())
    rows: dict[int, list[np.ndarray]] = {c: [] for c in inst.customers}
    labels: dict[int, list[np.ndarray]] = {c: [] for c in inst.customers}
    for r in routes:
        r = tuple(r)
        W, zero = ctx.early_covariates(r, X, t_pred)
        arr = scenario_arrivals(r, times, inst)
        for k, v in enumerate(r):
            keep = ~zero[:, k]
            if keep.any():
                rows[v].append(W[keep, k])
                labels[v].append((arr[keep, k] <= inst.ready[v]).astype(float))
    rng = np.random.default_rng(seed)
    model = EarlyArrivalModel()
    for c in inst.customers:
        if rows[c]:
            Wc = np.vstack(rows[c])
            yc = np.concatenate(labels[c])
        else:
            Wc, yc = np.zeros((0, X.shape[1] + 5)), np.zeros(0)
        if Wc.shape[0] > max_rows:
            pick = np.sort(rng.choice(Wc.shape[0], max_rows, replace=False))
            Wc, yc = Wc[pick], yc[pick]
        if yc.shape[0] < min_samples or yc.min(initial=0) == yc.max(initial=0):
            model.freq[c] = (yc.sum() + 1.0) / (yc.shape[0] + 2.0)
        else:
            model.logits[c] = fit_logit_l1(Wc, yc, lam)
    return model


@dataclass(eq=False)
class PenaltyTrainingSet:
    Y: np.ndarray
    targets: np.ndarray
    names: list[str]
    n_routes: int
    n_periods: int
    n_raw_rows: int

    @property
    def n(self) -> int:
        return self.Y.shape[0]

    def to_csv(self, path: str | Path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(self.names + ["penalty"])
            for y, t in zip(self.Y, self.targets):
                w.writerow([repr(float(v)) for v in y] + [repr(float(t))])


def build_training_set(routes: Sequence[Sequence[int]], X, T, ctx: FeatureContext, seed: int = 0,
                       zero_ratio: float | None = 3.0, max_rows: int | None = None) -> PenaltyTrainingSet:
    """One row per (route, customer, training period): projected features and realized penalty.

    Zero-penalty rows are subsampled to at most ``zero_ratio`` times the
    positive rows, then the whole set is capped at ``max_rows``.
    """
    routes = [tuple(r) for r in routes]
    if not routes:
        raise EmptyPoolError("no routes to build a penalty training set from")
    inst = ctx.inst
    X = np.atleast_2d(np.asarray(X, dtype=float))
    times = inst.arc_matrix(np.atleast_2d(np.asarray(T, dtype=float)))
    t_pred = _pred_stack(ctx.ols, X, inst)
    Ys, ts = [], []
    for r in routes:
        F = ctx.route_features_batch(r, X, t_pred)  # (n, L, pbar)
        arr = scenario_arrivals(r, times, inst)
        pen = ctx.pen(arr - inst.due[list(r)][None, :])
        Ys.append(F.reshape(-1, F.shape[-1]))
        ts.append(np.atleast_1d(pen).reshape(-1))
    Y = np.vstack(Ys)
    target = np.concatenate(ts)
    n_raw = Y.shape[0]
    rng = np.random.default_rng(seed)
    keep = np.arange(n_raw)
    if zero_ratio is not None:
        pos = np.nonzero(target > 0)[0]
        zer = np.nonzero(target <= 0)[0]
        limit = int(math.ceil(zero_ratio * pos.size))
        if pos.size and zer.size > limit:
            zer = np.sort(rng.choice(zer, limit, replace=False))
        keep = np.sort(np.concatenate([pos, zer]))
    if max_rows is not None and keep.size > max_rows:
        keep = np.sort(rng.choice(keep, max_rows, replace=False))
    return PenaltyTrainingSet(Y[keep], target[keep], feature_names(X.shape[1]), len(routes), X.shape[0], n_raw)


@dataclass(eq=False)
class PenaltyPredictor:
    """Learned route penalty: the sum of network outputs over the route's customers."""

    ctx: FeatureContext
    mlp: MlpModel | None
    x: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float).reshape(-1)
        self.t_pred = predicted_times(self.ctx.ols, self.x, self.ctx.inst)

    def predict_rows(self, Y) -> np.ndarray:
        if self.mlp is None:
            return np.zeros(np.atleast_2d(Y).shape[0])
        return self.mlp.predict(Y)

    def customer_penalties(self, route: Sequence[int]) -> np.ndarray:
        return self.predict_rows(self.ctx.route_features(route, self.x, self.t_pred))

    def route_penalty(self, route: Route | Sequence[int]) -> float:
        seq = route.customers if isinstance(route, Route) else tuple(route)
        return float(self.customer_penalties(seq).sum())


def degenerate_targets(ts: PenaltyTrainingSet) -> bool:
    if not np.any(ts.targets > 0):
        warnings.warn("penalty training targets are all zero; using a zero penalty predictor", RuntimeWarning)
        return True
    return False
