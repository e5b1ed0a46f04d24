"""Pricing: find routes with negative reduced cost by extend-and-bound labeling.

A label is a partial route from the depot; its reduced cost already counts
the return leg, so closing the route costs nothing extra. Labels are expanded
best-first and discarded when their reduced cost plus a completion bound
cannot go below the acceptance cutoff. Two completion bounds are available:
a relaxed shortest-path table over discretized departure times (RCSP) and a
fractional knapsack over the remaining customers' duals.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .core import Instance, PenaltyFn, ScenarioSet, expected_route_penalty, route_cost
from .lp import fractional_knapsack

THRESHOLD = -1e-6


class PricingExhausted(RuntimeError):
    """The live-label cap was hit before the search finished."""


@dataclass(frozen=True, eq=False)
class Duals:
    gamma: np.ndarray  # length N+1, gamma[0] = 0
    mu: float = 0.0

    def __post_init__(self):
        g = np.asarray(self.gamma, dtype=float).reshape(-1).copy()
        g[0] = 0.0
        g.setflags(write=False)
        object.__setattr__(self, "gamma", g)
        object.__setattr__(self, "mu", float(self.mu))

    @classmethod
    def zeros(cls, inst: Instance) -> "Duals":
        return cls(np.zeros(inst.n_nodes), 0.0)


@dataclass
class PricingOptions:
    dt: float | None = None  # None: latest due date / 40
    grid_steps: int = 40
    rcsp: str = "tight"  # "tight", "verbatim" or "off"
    knapsack: bool = True
    label_cap: int = 2_000_000
    max_routes: int = 30
    stop_after: int = 0  # >0: return as soon as this many routes are found
    threshold: float = THRESHOLD


@dataclass
class PricingResult:
    routes: list[tuple[int, ...]]
    reduced_costs: list[float]
    stats: dict = field(default_factory=dict)

    @property
    def best(self) -> float:
        return min(self.reduced_costs) if self.reduced_costs else math.inf


def all_allowed(inst: Instance) -> np.ndarray:
    a = np.ones((inst.n_nodes, inst.n_nodes), dtype=bool)
    np.fill_diagonal(a, False)
    return a


def _pen_args(pen: PenaltyFn):
    if pen.kind == "quadratic":
        return K.PEN_QUADRATIC, pen.scale, np.zeros(1), np.zeros(1), 0.0
    if pen.kind == "linear":
        return K.PEN_LINEAR, pen.scale, np.zeros(1), np.zeros(1), 0.0
    tu = np.array([p[0] for p in pen.table])
    tv = np.array([p[1] for p in pen.table])
    return K.PEN_TABLE, pen.scale, tu, tv, float((tv[-1] - tv[-2]) / (tu[-1] - tu[-2]))


ZERO_PENALTY = PenaltyFn("linear", 0.0)


def min_times(times: np.ndarray) -> np.ndarray:
    """Entrywise minimum over a scenario stack."""
    times = np.asarray(times, dtype=float)
    return times.min(axis=0) if times.ndim == 3 else times


def shortest_min_times(times: np.ndarray) -> np.ndarray:
    """All-pairs shortest paths over the scenario-minimum arc times.

    A lower bound on the time between two nodes along any path, valid even
    when sampled travel times violate the triangle inequality.
    """
    d = min_times(times).copy()
    np.fill_diagonal(d, 0.0)
    for k in range(d.shape[0]):
        d = np.minimum(d, d[:, k : k + 1] + d[k : k + 1, :])
    return d


def reduced_cost(route, duals: Duals, scen: ScenarioSet, pen: PenaltyFn, inst: Instance) -> float:
    """Route cost plus expected penalty minus the duals of its customers and of the fleet row."""
    seq = tuple(route)
    return (route_cost(inst, seq) + expected_route_penalty(seq, scen, pen, inst)
            - float(sum(duals.gamma[v] for v in seq)) - duals.mu)


def _demand_unit(inst: Instance) -> int:
    dem = np.rint(inst.demand[1:]).astype(np.int64)
    return max(int(np.gcd.reduce(dem)), 1) if dem.any() else 1


def _int_demand(inst: Instance) -> tuple[np.ndarray, int]:
    """Integral demands and capacity, both divided by the demands' common divisor."""
    d = _demand_unit(inst)
    dem = np.rint(inst.demand).astype(np.int64)
    return dem // d, int(math.floor(inst.capacity / d + 1e-9))


# --------------------------------------------------------------------------
# Labels (reference implementation of one extension step)
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Label:
    node: int
    cbar: float
    load: float
    starts: np.ndarray  # per-scenario service start at ``node``
    path: tuple[int, ...]

    @property
    def tau(self) -> float:
        return float(self.starts.min())

    @property
    def visited(self) -> frozenset:
        return frozenset(self.path)


def root_label(duals: Duals, scen: ScenarioSet) -> Label:
    return Label(0, -duals.mu, 0.0, np.zeros(len(scen)), ())


def extend_label(label: Label, j: int, scen: ScenarioSet, duals: Duals, pen: PenaltyFn, inst: Instance,
                 allowed: np.ndarray | None = None) -> Label | None:
    """Extend a label along ``(label.node, j)``; ``None`` when the extension is not allowed."""
    i = label.node
    if j == 0 or j in label.path or (allowed is not None and not allowed[i, j]):
        return None
    load = label.load + inst.demand[j]
    if load > inst.capacity + 1e-9:
        return None
    arrive = label.starts + scen.times[:, i, j]
    pen_j = float(scen.weights @ pen(arrive - inst.due[j]))
    c = inst.cost
    cbar = label.cbar - c[i, 0] + c[i, j] + c[j, 0] + pen_j - duals.gamma[j]
    starts = np.maximum(inst.ready[j], arrive)
    return Label(j, float(cbar), float(load), starts, label.path + (j,))


# --------------------------------------------------------------------------
# Completion bounds
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CompletionBounds:
    T1: np.ndarray  # (G, N+1, Q/unit + 1)
    dt: float
    cost_back: np.ndarray  # c_i0
    unit: int = 1  # capacity is tabulated in multiples of the demands' common divisor

    @property
    def n_grid(self) -> int:
        return self.T1.shape[0]

    def grid_index(self, tau: float) -> int:
        return min(int(tau / self.dt), self.n_grid - 1)

    def bound(self, i: int, tau: float, room: float) -> float:
        """Lower bound on the reduced-cost change of any completion from ``i``.

        ``room`` is the remaining capacity in demand units.
        """
        q = min(int(math.floor(room / self.unit + 1e-9)), self.T1.shape[2] - 1)
        return float(self.T1[self.grid_index(tau), i, q] - self.cost_back[i])


def default_dt(inst: Instance, steps: int = 40) -> float:
    lmax = float(inst.due[1:].max())
    return lmax / steps if lmax > 0 else 1.0


def rcsp_supported(inst: Instance) -> bool:
    """The capacity sweep needs every customer to consume at least one unit."""
    return bool(np.all(inst.demand[1:] >= 1))


def build_rcsp_bound(inst: Instance, duals: Duals, pen: PenaltyFn, times, allowed=None, dt: float | None = None,
                     variant: str = "tight", steps: int = 40) -> CompletionBounds:
    """Relaxed shortest-path completion table with 2-cycle elimination.

    ``times`` is a scenario stack (or one matrix); only its entrywise minimum
    is used. ``variant="verbatim"`` looks successors up at the same departure
    time; ``"tight"`` advances the departure time by the fastest arc time.
    """
    if variant not in ("tight", "verbatim"):
        raise ValueError(f"unknown RCSP variant {variant!r}")
    if not rcsp_supported(inst):
        raise ValueError("RCSP bound requires positive integral demands")
    dem, Q = _int_demand(inst)
    dt = default_dt(inst, steps) if dt is None else float(dt)
    lmax = float(inst.due[1:].max())
    G = int(math.floor(lmax / dt + 1e-9)) + 1
    allowed = all_allowed(inst) if allowed is None else np.asarray(allowed, dtype=bool)
    kind, scale, tu, tv, slope = _pen_args(pen)
    T1 = K.rcsp_table(inst.cost, duals.gamma, inst.ready, inst.due, dem, Q, min_times(times), allowed, dt, G,
                      variant == "tight", kind, scale, tu, tv, slope)
    return CompletionBounds(T1, dt, inst.cost[:, 0].copy(), _demand_unit(inst))


def knapsack_bound(label: Label, duals: Duals, lb_times: np.ndarray, pen: PenaltyFn, inst: Instance) -> float:
    """``-`` the fractional knapsack value of the unvisited customers' dual gains.

    An item's value is its dual minus the penalty it would incur if reached
    as early as possible; ``lb_times`` must lower-bound the travel time between
    any two nodes (see :func:`shortest_min_times`).
    """
    i, tau = label.node, label.tau
    visited = label.visited
    vals, wts, idx = [], [], []
    free_gain = 0.0
    for j in inst.customers:
        if j in visited:
            continue
        v = duals.gamma[j] - pen(tau + lb_times[i, j] - inst.due[j])
        if v <= 0:
            continue
        if inst.demand[j] <= 0:
            free_gain += v
        else:
            vals.append(v)
            wts.append(inst.demand[j])
            idx.append(j)
    room = inst.capacity - label.load
    value = 0.0
    if vals:
        value, _ = fractional_knapsack(vals, wts, max(room, 0.0))
    return -(value + free_gain)


# --------------------------------------------------------------------------
# Search
# --------------------------------------------------------------------------


def _check_size(inst: Instance):
    if inst.n_customers > 62:
        raise ValueError("labeling supports at most 62 customers")


def _accept(check: float, label_value: float, route, duals: Duals, threshold: float) -> bool:
    """Compare a label's reduced cost with its re-evaluation; keep the route only if it is truly negative.

    Tolerances scale with the dual magnitudes, which can be huge while
    artificial columns are being priced out.
    """
    scale = max(1.0, abs(check), float(np.abs(duals.gamma[list(route)]).sum()) + abs(duals.mu))
    if abs(check - label_value) > 1e-8 * scale:
        raise AssertionError(f"label reduced cost {label_value} disagrees with re-evaluation {check} for {route}")
    return check < threshold


def price(inst: Instance, duals: Duals, scen: ScenarioSet, pen: PenaltyFn, allowed=None,
          options: PricingOptions | None = None) -> PricingResult:
    """Negative-reduced-cost routes of the scenario-averaged pricing problem.

    The search is exact: with ``stop_after=0`` the returned routes are the
    ``max_routes`` most negative ones, and an empty result proves that none
    exists. Raises :class:`PricingExhausted` when the live-label cap is hit.
    """
    _check_size(inst)
    opts = options or PricingOptions()
    allowed = all_allowed(inst) if allowed is None else np.asarray(allowed, dtype=bool)
    scen = scen.drop_zero_weights()
    dem, Q = _int_demand(inst)
    use_rcsp = opts.rcsp != "off" and rcsp_supported(inst)
    if use_rcsp:
        bounds = build_rcsp_bound(inst, duals, pen, scen.times, allowed, opts.dt, opts.rcsp, opts.grid_steps)
        T1, dt = bounds.T1, bounds.dt
    else:
        T1, dt = np.zeros((1, inst.n_nodes, Q + 1)), 1.0
    lb = shortest_min_times(scen.times)
    kind, scale, tu, tv, slope = _pen_args(pen)
    paths, lengths, red, stats, exhausted = K.label_search(
        inst.cost, np.ascontiguousarray(scen.times), np.ascontiguousarray(scen.weights), inst.ready, inst.due, dem, Q,
        duals.gamma, duals.mu, allowed, kind, scale, tu, tv, slope, T1, dt, use_rcsp, opts.knapsack, lb,
        opts.label_cap, opts.max_routes, opts.threshold, opts.stop_after,
    )
    if exhausted:
        raise PricingExhausted(f"more than {opts.label_cap} live labels")
    found = []
    for k in range(len(red)):
        route = tuple(int(v) for v in paths[k, : lengths[k]])
        check = reduced_cost(route, duals, scen, pen, inst)
        if _accept(check, float(red[k]), route, duals, opts.threshold):
            found.append((check, route))
    found.sort()
    st = dict(zip(("created", "expanded", "pruned_rcsp", "pruned_knapsack", "recorded"), map(int, stats)))
    return PricingResult([r for _, r in found], [c for c, _ in found], st)


def price_penalty_model(inst: Instance, duals: Duals, predictor, train_times: np.ndarray, allowed=None,
                        options: PricingOptions | None = None) -> PricingResult:
    """Pricing with a learned route penalty (sum of per-customer network outputs).

    The earliest service start of a label is the minimum over the training
    periods' propagated starts. The completion bounds ignore penalties, which
    keeps them valid for any nonnegative predictor.
    """
    from .penalty_model import PrefixState

    _check_size(inst)
    opts = options or PricingOptions()
    allowed = all_allowed(inst) if allowed is None else np.asarray(allowed, dtype=bool)
    train_times = np.asarray(train_times, dtype=float)
    if train_times.ndim == 2:
        train_times = inst.arc_matrix(train_times)
    ctx = predictor.ctx
    x = predictor.x
    t_pred = predictor.t_pred
    c = inst.cost
    gamma = duals.gamma
    dem, Q = _int_demand(inst)
    use_rcsp = opts.rcsp != "off" and rcsp_supported(inst)
    bounds = (build_rcsp_bound(inst, duals, ZERO_PENALTY, train_times, allowed, opts.dt, "verbatim", 1)
              if use_rcsp else None)
    stats = {"created": 0, "expanded": 0, "pruned_rcsp": 0, "pruned_knapsack": 0, "recorded": 0}

    # label: (cbar, load, starts, state, path)
    labels: list[tuple] = [(-duals.mu, 0, np.zeros(train_times.shape[0]), PrefixState.depot(1), ())]
    heap: list[tuple[float, int]] = [(-math.inf, 0)]
    found: list[tuple[float, tuple[int, ...]]] = []

    def cutoff() -> float:
        if len(found) < opts.max_routes:
            return opts.threshold
        return min(opts.threshold, max(f[0] for f in found))

    while heap:
        key, idx = heapq.heappop(heap)
        if key >= cutoff():
            continue
        cb, load, starts, state, path = labels[idx]
        labels[idx] = None
        i = path[-1] if path else 0
        js = np.array([j for j in inst.customers
                       if j not in path and allowed[i, j] and load + dem[j] <= Q], dtype=int)
        if js.size == 0:
            continue
        stats["expanded"] += 1
        Y, new_states = ctx.step(state.take(np.zeros(js.size, dtype=int)), js, x, t_pred)
        h = predictor.predict_rows(Y)
        cb_new = cb - c[i, 0] + c[i, js] + c[js, 0] + h - gamma[js]
        arrive = starts[None, :] + train_times[:, i, js].T
        new_starts = np.maximum(inst.ready[js][:, None], arrive)
        for k, j in enumerate(js):
            stats["created"] += 1
            cbj = float(cb_new[k])
            newpath = path + (int(j),)
            lj = int(load + dem[j])
            if allowed[j, 0] and cbj < cutoff():
                found.append((cbj, newpath))
                stats["recorded"] += 1
                if len(found) > opts.max_routes:
                    found.sort()
                    found.pop()
            room = Q - lj
            tau = float(new_starts[k].min())
            bkey = -math.inf  # without a bound nothing is known about completions
            if bounds is not None:
                bkey = cbj + bounds.bound(int(j), tau, room * bounds.unit)
                if bkey >= cutoff():
                    stats["pruned_rcsp"] += 1
                    continue
            if opts.knapsack:
                unvisited = [u for u in inst.customers if u not in newpath and gamma[u] > 0]
                heavy = [u for u in unvisited if dem[u] > 0]
                val = float(sum(gamma[u] for u in unvisited if dem[u] <= 0))
                if heavy:
                    val += fractional_knapsack(gamma[heavy], dem[heavy], room)[0]
                if cbj - val >= cutoff():
                    stats["pruned_knapsack"] += 1
                    continue
                if bounds is None:
                    bkey = cbj - val
            labels.append((cbj, lj, new_starts[k], new_states.take([k]), newpath))
            heapq.heappush(heap, (bkey, len(labels) - 1))
            if len(heap) > opts.label_cap:
                raise PricingExhausted(f"more than {opts.label_cap} live labels")
        if opts.stop_after and len(found) >= opts.stop_after:
            break

    out = []
    for cbj, route in found:
        check = (route_cost(inst, route) + predictor.route_penalty(route)
                 - float(sum(gamma[v] for v in route)) - duals.mu)
        if _accept(check, cbj, route, duals, opts.threshold):
            out.append((check, route))
    out.sort()
    return PricingResult([r for _, r in out], [v for v, _ in out], stats)
