"""Branch-and-price over the set-partitioning formulation.

The restricted master problem covers every customer exactly once with at
most ``fleet`` routes; routes are generated by :mod:`csvrptw.pricing`.
Integrality is enforced by branching on customer-to-customer arcs, which
the pricing handles as forbidden arcs.
"""

from __future__ import annotations

import heapq
import json
import math
import time
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .core import (Instance, PenaltyFn, ScenarioSet, Solution, check_solution, route_cost, scenario_arrivals,
                   Route)
from .lp import LpProblem, solve_lp
from .pricing import (Duals, PricingExhausted, PricingOptions, PricingResult, all_allowed, default_dt, price,
                      price_penalty_model)


class InfeasibleInstanceError(RuntimeError):
    pass


# --------------------------------------------------------------------------
# Objectives
# --------------------------------------------------------------------------


class ScenarioObjective:
    """Route cost plus the scenario-weighted expected lateness penalty."""

    def __init__(self, scen: ScenarioSet, pen: PenaltyFn):
        self.scen = scen.drop_zero_weights()
        self.pen = pen

    def route_penalties(self, inst: Instance, routes: Sequence[Sequence[int]]) -> np.ndarray:
        out = np.empty(len(routes))
        for k, r in enumerate(routes):
            arr = scenario_arrivals(r, self.scen.times, inst)
            out[k] = float(self.scen.weights @ self.pen(arr - inst.due[list(r)][None, :]).sum(axis=1))
        return out

    def price(self, inst, duals, allowed, options) -> PricingResult:
        return price(inst, duals, self.scen, self.pen, allowed, options)


class PenaltyModelObjective:
    """Route cost plus a learned penalty; ``train_times`` supply earliest service starts."""

    def __init__(self, predictor, train_times: np.ndarray):
        self.predictor = predictor
        self.train_times = np.asarray(train_times, dtype=float)

    def route_penalties(self, inst: Instance, routes) -> np.ndarray:
        return np.array([self.predictor.route_penalty(r) for r in routes])

    def price(self, inst, duals, allowed, options) -> PricingResult:
        return price_penalty_model(inst, duals, self.predictor, self.train_times, allowed, options)


# --------------------------------------------------------------------------
# Column pool and tree nodes
# --------------------------------------------------------------------------


class ColumnPool:
    """Deduplicated routes with cached cost, objective penalty and incidence data."""

    def __init__(self, inst: Instance, objective):
        self.inst = inst
        self.objective = objective
        self.routes: list[tuple[int, ...]] = []
        self.index: dict[tuple[int, ...], int] = {}
        self.cost: list[float] = []
        self.penalty: list[float] = []
        n1 = inst.n_nodes
        self._pad = n1 * n1  # flat index of an always-allowed sentinel
        self._arcs = np.full((0, n1 + 1), self._pad, dtype=np.int64)
        self._cover = np.zeros((inst.n_customers, 0))
        self._values = np.zeros(0)

    def __len__(self) -> int:
        return len(self.routes)

    def add(self, routes: Sequence[Sequence[int]]) -> int:
        new = []
        for r in routes:
            r = tuple(int(v) for v in r)
            if r not in self.index and r not in new:
                new.append(r)
        if not new:
            return 0
        pens = self.objective.route_penalties(self.inst, new)
        n1 = self.inst.n_nodes
        arcs = np.full((len(new), n1 + 1), self._pad, dtype=np.int64)
        cover = np.zeros((self.inst.n_customers, len(new)))
        for k, (r, p) in enumerate(zip(new, pens)):
            self.index[r] = len(self.routes)
            self.routes.append(r)
            self.cost.append(route_cost(self.inst, r))
            self.penalty.append(float(p))
            path = np.array((0,) + r + (0,))
            arcs[k, : len(r) + 1] = path[:-1] * n1 + path[1:]
            cover[np.array(r) - 1, k] = 1.0
        self._arcs = np.vstack([self._arcs, arcs])
        self._cover = np.hstack([self._cover, cover])
        self._values = np.asarray(self.cost) + np.asarray(self.penalty)
        return len(new)

    def compatible(self, allowed: np.ndarray) -> np.ndarray:
        flat = np.append(np.asarray(allowed, dtype=bool).ravel(), True)
        return flat[self._arcs].all(axis=1)

    def cover(self, cols: np.ndarray) -> np.ndarray:
        return self._cover[:, cols]

    def values(self, cols: np.ndarray) -> np.ndarray:
        return self._values[cols]

    def value(self, k: int) -> float:
        return self.cost[k] + self.penalty[k]


@dataclass(frozen=True)
class BranchNode:
    forced: frozenset = frozenset()
    forbidden: frozenset = frozenset()
    bound: float = -math.inf
    depth: int = 0
    ident: int = 0
    min_routes: int = 0
    max_routes: int | None = None

    def __post_init__(self):
        if self.forced & self.forbidden:
            raise ValueError("an arc cannot be both forced and forbidden")
        tails = [i for i, _ in self.forced]
        heads = [j for _, j in self.forced]
        if len(set(tails)) != len(tails) or len(set(heads)) != len(heads):
            raise ValueError("inconsistent branching: two forced arcs share a tail or a head")

    def allowed(self, inst: Instance) -> np.ndarray:
        a = all_allowed(inst)
        for i, j in self.forbidden:
            a[i, j] = False
        for i, j in self.forced:
            keep = a[i, j]
            a[i, :] = False
            a[:, j] = False
            a[i, j] = keep
        return a


@dataclass
class SolverLimits:
    time_limit: float = 3600.0
    node_limit: int = 100_000
    label_cap: int = 2_000_000
    max_routes: int = 30
    gap_tol: float = 1e-6
    rcsp: str = "tight"
    knapsack: bool = True
    dt: float | None = None
    partial_pricing: bool = True
    rmp_heuristic: bool = True
    max_cg_iters: int = 100_000

    def pricing_options(self, dt=None) -> PricingOptions:
        return PricingOptions(dt=dt if dt is not None else self.dt, rcsp=self.rcsp, knapsack=self.knapsack,
                              label_cap=self.label_cap, max_routes=self.max_routes,
                              stop_after=self.max_routes if self.partial_pricing else 0)


@dataclass
class SolveReport:
    solution: Solution | None
    objective: float
    lower_bound: float
    gap: float
    status: str  # optimal, limit, infeasible
    nodes: int
    root_lp: float
    wall_time: float
    columns: int
    pricing_calls: int
    pricing_stats: dict = field(default_factory=dict)
    pool_routes: list = field(default_factory=list)
    trace: list = field(default_factory=list)

    def to_dict(self, include_pool: bool = False) -> dict:
        d = {
            "solution": None if self.solution is None else self.solution.to_dict(),
            "objective": self.objective,
            "lower_bound": self.lower_bound,
            "gap": self.gap,
            "status": self.status,
            "nodes": self.nodes,
            "root_lp": self.root_lp,
            "wall_time": self.wall_time,
            "columns": self.columns,
            "pricing_calls": self.pricing_calls,
            "pricing_stats": self.pricing_stats,
        }
        if include_pool:
            d["pool_routes"] = [list(r) for r in self.pool_routes]
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    def write_trace(self, path) -> None:
        with open(path, "w") as fh:
            fh.write("node,depth,bound,lp,status,columns\n")
            for row in self.trace:
                fh.write(",".join(str(v) for v in row) + "\n")


# --------------------------------------------------------------------------
# Heuristic start
# --------------------------------------------------------------------------


def greedy_routes(inst: Instance) -> list[tuple[int, ...]]:
    """Nearest-neighbour route construction respecting capacity."""
    left = set(inst.customers)
    routes = []
    while left:
        route, load, last = [], 0.0, 0
        while True:
            cands = [j for j in left if load + inst.demand[j] <= inst.capacity + 1e-9]
            if not cands:
                break
            j = min(cands, key=lambda v: (inst.cost[last, v], inst.ready[v], v))
            route.append(j)
            load += inst.demand[j]
            left.discard(j)
            last = j
        if not route:
            raise InfeasibleInstanceError("a customer's demand exceeds the vehicle capacity")
        routes.append(tuple(route))
    return routes


# --------------------------------------------------------------------------
# Column generation
# --------------------------------------------------------------------------


@dataclass
class NodeResult:
    value: float
    z: np.ndarray
    cols: np.ndarray
    art: np.ndarray
    duals: Duals | None
    exhausted: bool = False


class _Engine:
    def __init__(self, inst: Instance, objective, pen_fallback_M: float, limits: SolverLimits, start: float):
        self.inst = inst
        self.objective = objective
        self.limits = limits
        self.pool = ColumnPool(inst, objective)
        self.M = pen_fallback_M
        self.start = start
        self.pricing_calls = 0
        self.stats = {"created": 0, "expanded": 0, "pruned_rcsp": 0, "pruned_knapsack": 0, "recorded": 0}

    def timed_out(self) -> bool:
        return time.monotonic() - self.start > self.limits.time_limit

    def solve_rmp(self, allowed: np.ndarray, fleet_range=(0, None)):
        inst = self.inst
        lo, hi = fleet_range
        hi = inst.fleet if hi is None else min(hi, inst.fleet)
        cols = np.nonzero(self.pool.compatible(allowed))[0]
        N = inst.n_customers
        ncol = cols.size + N
        A = np.hstack([self.pool.cover(cols), np.eye(N)])
        fleet = np.zeros((2, ncol))
        fleet[0, : cols.size] = 1.0
        fleet[1, : cols.size] = -1.0
        cost = np.concatenate([self.pool.values(cols), np.full(N, self.M)])
        # z <= 1 is implied by the partitioning rows; an explicit bound would let columns sit at
        # their upper bound with negative reduced cost, which pricing would keep regenerating
        prob = LpProblem(cost, A, np.ones(N), fleet, [float(hi), -float(lo)])
        sol = solve_lp(prob)
        if sol.status == "infeasible":
            return None, cols, None
        if not sol.optimal:
            raise RuntimeError(f"restricted master problem is {sol.status}")
        gamma = np.concatenate([[0.0], sol.duals_eq])
        return sol, cols, Duals(gamma, float(sol.duals_ub[0] - sol.duals_ub[1]))

    def column_generation(self, allowed: np.ndarray, dt=None, fleet_range=(0, None)) -> NodeResult | None:
        inst = self.inst
        opts = self.limits.pricing_options(dt)
        full = PricingOptions(**{**opts.__dict__, "stop_after": 0})
        it = 0
        while True:
            sol, cols, duals = self.solve_rmp(allowed, fleet_range)
            if sol is None:
                return None
            it += 1
            if self.timed_out() or it > self.limits.max_cg_iters:
                return NodeResult(sol.objective, sol.z[: cols.size], cols, sol.z[cols.size:], duals, exhausted=True)
            res = self.objective.price(inst, duals, allowed, opts)
            self.pricing_calls += 1
            self._merge(res.stats)
            if not res.routes and opts.stop_after:
                res = self.objective.price(inst, duals, allowed, full)
                self.pricing_calls += 1
                self._merge(res.stats)
            if not res.routes:
                return NodeResult(sol.objective, sol.z[: cols.size], cols, sol.z[cols.size:], duals)
            added = self.pool.add(res.routes)
            if added == 0 and opts.stop_after:
                res = self.objective.price(inst, duals, allowed, full)
                self.pricing_calls += 1
                self._merge(res.stats)
                added = self.pool.add(res.routes)
            if added == 0:
                # only columns already in the RMP look negative: rounding noise at large dual scales
                return NodeResult(sol.objective, sol.z[: cols.size], cols, sol.z[cols.size:], duals)

    def _merge(self, st: dict):
        for k, v in st.items():
            self.stats[k] = self.stats.get(k, 0) + int(v)

    def arc_flows(self, node: NodeResult) -> dict:
        flows: dict[tuple[int, int], float] = {}
        for zc, c in zip(node.z, node.cols):
            if zc <= 1e-9:
                continue
            r = self.pool.routes[c]
            for a, b in zip(r[:-1], r[1:]):
                flows[(a, b)] = flows.get((a, b), 0.0) + float(zc)
        return flows

    def integer_rmp(self, allowed: np.ndarray, time_limit: float) -> tuple[float, list] | None:
        """Best integer combination of the compatible pool columns (a primal heuristic)."""
        inst = self.inst
        cols = np.nonzero(self.pool.compatible(allowed))[0]
        if cols.size == 0:
            return None
        N = inst.n_customers
        A = np.vstack([self.pool.cover(cols), np.ones((1, cols.size))])
        lo = np.r_[np.ones(N), 0.0]
        hi = np.r_[np.ones(N), float(inst.fleet)]
        cost = self.pool.values(cols)
        res = milp(cost, constraints=LinearConstraint(A, lo, hi), integrality=np.ones(cols.size),
                   bounds=Bounds(0, 1), options={"time_limit": max(time_limit, 0.1), "disp": False})
        if res.x is None:
            return None
        pick = [self.pool.routes[c] for c, v in zip(cols, res.x) if v > 0.5]
        return float(cost[res.x > 0.5].sum()), pick


def _solution(inst: Instance, objective, routes, method: str) -> Solution:
    rs = tuple(Route.build(inst, r) for r in routes)
    first = float(sum(r.cost for r in rs))
    second = float(objective.route_penalties(inst, [r.customers for r in rs]).sum())
    sol = Solution(rs, method, first, second)
    check_solution(sol, inst)
    return sol


def _choose_arc(flows: dict, inst: Instance):
    best = None
    for (i, j), f in flows.items():
        if f < 1e-6 or f > 1 - 1e-6:
            continue
        key = (abs(f - 0.5), -inst.cost[i, j], i, j)
        if best is None or key < best[0]:
            best = (key, (i, j))
    return None if best is None else best[1]


def branch_and_price(objective, inst: Instance, limits: SolverLimits | None = None, method: str = "",
                     seed_routes: Sequence[Sequence[int]] = ()) -> SolveReport:
    """Solve the routing problem under ``objective`` to proven optimality or until a limit is hit."""
    limits = limits or SolverLimits()
    t0 = time.monotonic()
    if np.any(inst.demand > inst.capacity):
        raise InfeasibleInstanceError("a customer's demand exceeds the vehicle capacity")

    singles = [(c,) for c in inst.customers]
    greedy = greedy_routes(inst)
    probe = ColumnPool(inst, objective)
    probe.add(singles + greedy)
    incumbent_val, incumbent = math.inf, None
    if len(greedy) <= inst.fleet:
        incumbent_val = float(sum(probe.value(probe.index[r]) for r in greedy))
        incumbent = list(greedy)
    # cost of serving everything by singletons bounds any single customer's share
    single_total = float(sum(probe.value(probe.index[r]) for r in singles))
    big_m = 1.0 + max(single_total, incumbent_val if math.isfinite(incumbent_val) else 0.0)

    eng = _Engine(inst, objective, big_m, limits, t0)
    eng.pool.add(singles + greedy + [tuple(r) for r in seed_routes])

    counter = 0
    root = BranchNode(ident=0)
    open_nodes: list[tuple[float, int, BranchNode]] = [(-math.inf, 0, root)]
    root_lp = math.nan
    nodes = 0
    status = "optimal"
    trace = []
    unresolved: list[float] = []

    while open_nodes:
        lb_open = open_nodes[0][0]
        if incumbent is not None and (incumbent_val - lb_open) <= limits.gap_tol * max(1.0, abs(incumbent_val)):
            break
        if eng.timed_out() or nodes >= limits.node_limit:
            status = "limit"
            break
        bound, _, node = heapq.heappop(open_nodes)
        if incumbent is not None and bound >= incumbent_val - 1e-9:
            continue
        nodes += 1
        allowed = node.allowed(inst)
        kind, res = _process(eng, node, allowed, limits)
        if kind == "exhausted":
            # pricing could not finish even on the finer grid; the parent bound still holds
            unresolved.append(node.bound)
            trace.append((node.ident, node.depth, node.bound, math.nan, "exhausted", len(eng.pool)))
            continue
        if kind == "infeasible" or res.art.max(initial=0.0) > 1e-7:
            # no routing satisfies this node's branching decisions
            trace.append((node.ident, node.depth, node.bound, math.nan, "infeasible", len(eng.pool)))
            continue
        if res.exhausted:
            status = "limit"
            unresolved.append(node.bound)
            trace.append((node.ident, node.depth, node.bound, res.value, "timeout", len(eng.pool)))
            break
        node_bound = max(node.bound, res.value)
        if node.depth == 0:
            root_lp = res.value
            if limits.rmp_heuristic:
                budget = min(10.0, max(limits.time_limit - (time.monotonic() - t0), 0.1))
                heur = eng.integer_rmp(allowed, budget)
                if heur is not None and heur[0] < incumbent_val - 1e-9:
                    incumbent_val, incumbent = heur
        if incumbent is not None and node_bound >= incumbent_val - 1e-9:
            trace.append((node.ident, node.depth, node.bound, res.value, "pruned", len(eng.pool)))
            continue
        if np.all((res.z < 1e-6) | (res.z > 1 - 1e-6)):
            routes = [eng.pool.routes[c] for c, v in zip(res.cols, res.z) if v > 0.5]
            if res.value < incumbent_val - 1e-9:
                incumbent_val, incumbent = res.value, routes
            trace.append((node.ident, node.depth, node.bound, res.value, "integral", len(eng.pool)))
            continue
        children = _branch(eng, node, res, inst, node_bound)
        if not children:
            unresolved.append(node_bound)
            trace.append((node.ident, node.depth, node.bound, res.value, "unresolved", len(eng.pool)))
            continue
        trace.append((node.ident, node.depth, node.bound, res.value, children[0][0], len(eng.pool)))
        for _, child in children:
            counter += 1
            child = BranchNode(child.forced, child.forbidden, node_bound, node.depth + 1, counter,
                               child.min_routes, child.max_routes)
            heapq.heappush(open_nodes, (node_bound, counter, child))

    bounds = [b for b, _, _ in open_nodes] + unresolved
    if incumbent is None:
        if status == "optimal" and not unresolved:
            raise InfeasibleInstanceError(f"no feasible routing with at most {inst.fleet} vehicles")
        lower = min(bounds) if bounds else -math.inf
        return SolveReport(None, math.inf, lower, math.inf, "limit", nodes, root_lp, time.monotonic() - t0,
                           len(eng.pool), eng.pricing_calls, eng.stats, list(eng.pool.routes), trace)
    lower = min([incumbent_val] + [b for b in bounds if b < incumbent_val])
    if status == "limit" or unresolved:
        status = "limit" if lower < incumbent_val - limits.gap_tol * max(1.0, abs(incumbent_val)) else "optimal"
    gap = max(0.0, (incumbent_val - lower) / max(abs(incumbent_val), 1e-12))
    sol = _solution(inst, objective, incumbent, method)
    return SolveReport(sol, sol.objective, lower, gap, status, nodes, root_lp, time.monotonic() - t0,
                       len(eng.pool), eng.pricing_calls, eng.stats, list(eng.pool.routes), trace)


def _branch(eng: _Engine, node: BranchNode, res: NodeResult, inst: Instance, bound: float):
    """Children of a fractional node: first on the vehicle count, then on a customer arc."""
    used = float(res.z.sum())
    if abs(used - round(used)) > 1e-6:
        lo = int(math.floor(used))
        label = f"vehicles {used:.4f}"
        return [(label, replace(node, max_routes=lo)), (label, replace(node, min_routes=lo + 1))]
    arc = _choose_arc(eng.arc_flows(res), inst)
    if arc is None:
        return []
    label = f"arc {arc[0]}-{arc[1]}"
    return [(label, replace(node, forbidden=node.forbidden | {arc})),
            (label, replace(node, forced=node.forced | {arc}))]


def _process(eng: _Engine, node: BranchNode, allowed: np.ndarray, limits: SolverLimits):
    """Column generation at a node, with the exhaustion retry and big-M strengthening.

    Returns ``(kind, result)`` with kind ``ok``, ``infeasible`` or ``exhausted``.
    """
    fleet = (node.min_routes, node.max_routes)
    try:
        res = eng.column_generation(allowed, fleet_range=fleet)
    except PricingExhausted:
        if node.depth == 0:
            raise
        try:
            res = eng.column_generation(allowed, dt=(limits.dt or default_dt(eng.inst)) / 2, fleet_range=fleet)
        except PricingExhausted:
            return "exhausted", None
    while res is not None and not res.exhausted and res.art.max(initial=0.0) > 1e-7 and eng.M < 1e12:
        eng.M *= 10.0
        res = eng.column_generation(allowed, fleet_range=fleet)
    if res is None:
        return "infeasible", None
    return "ok", res


def column_generation(objective, inst: Instance, node: BranchNode | None = None, limits: SolverLimits | None = None,
                      seed_routes: Sequence[Sequence[int]] = ()):
    """LP relaxation at one node: ``(value, duals, {route: z})``."""
    limits = limits or SolverLimits()
    node = node or BranchNode()
    singles = [(c,) for c in inst.customers]
    probe = ColumnPool(inst, objective)
    probe.add(singles)
    big_m = 1.0 + float(sum(probe.value(k) for k in range(len(probe))))
    eng = _Engine(inst, objective, big_m, limits, time.monotonic())
    eng.pool.add(singles + greedy_routes(inst) + [tuple(r) for r in seed_routes])
    res = eng.column_generation(node.allowed(inst))
    z = {eng.pool.routes[c]: float(v) for c, v in zip(res.cols, res.z) if v > 1e-12}
    return res.value, res.duals, z
