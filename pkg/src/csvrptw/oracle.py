"""Exhaustive reference solvers for small instances.

Used to validate the pricing search and the branch-and-price solver: every
route is enumerated explicitly, then the best partition of the customers into
at most ``fleet`` routes is found by dynamic programming over subsets.
"""

from __future__ import annotations

import itertools
import math

import numpy as np

from .core import Instance, Solution, Route, ScenarioSet, check_solution
from .solver import InfeasibleInstanceError

MAX_ORACLE_CUSTOMERS = 8


class OracleTooLarge(ValueError):
    pass


def random_instance(n_customers: int, fleet: int, seed: int, name: str = "RAND") -> Instance:
    """Small random instance whose windows bind for some but not all routes.

    Capacity admits every customer on some route and the whole demand on
    ``fleet`` vehicles.
    """
    rng = np.random.default_rng(seed)
    coords = rng.uniform(0.0, 40.0, size=(n_customers + 1, 2))
    coords[0] = 20.0
    demand = np.r_[0, rng.integers(1, 11, size=n_customers)].astype(float)
    capacity = float(max(demand.max(), math.ceil(demand.sum() / fleet)) + rng.integers(0, 10))
    while _bins_needed(demand[1:], capacity) > fleet:
        capacity += 1.0
    direct = np.hypot(*(coords[1:] - coords[0]).T)
    ready = np.r_[0.0, np.where(rng.uniform(size=n_customers) < 0.3, rng.uniform(0, 0.8, n_customers) * direct, 0.0)]
    due = np.r_[0.0, direct * rng.uniform(1.2, 4.0, size=n_customers) + 5.0]
    due[0] = float(due.max() * 2)
    service = np.zeros(n_customers + 1)
    return Instance(name, coords, demand, ready, due, service, capacity, fleet)


def _bins_needed(demand, capacity: float) -> int:
    """Vehicles used by first-fit-decreasing packing."""
    loads: list[float] = []
    for d in sorted(demand, reverse=True):
        for k, load in enumerate(loads):
            if load + d <= capacity:
                loads[k] += d
                break
        else:
            loads.append(d)
    return len(loads)


def random_scenarios(inst: Instance, count: int, kind: str, seed: int) -> ScenarioSet:
    """``count`` scenarios drawn at one random feature vector of a generative model, random weights."""
    from .datagen import GenerativeModel

    rng = np.random.default_rng(seed)
    model = GenerativeModel.create(kind, inst, 2, seed)
    x = model.sample_features(rng, 1)[0]
    arcs = model.sample_arcs(x, rng, count)
    w = rng.uniform(0.2, 1.0, size=count)
    return ScenarioSet(inst.arc_matrix(arcs), w / w.sum())


def enumerate_routes(inst: Instance, max_customers: int = MAX_ORACLE_CUSTOMERS):
    """Yield every elementary, capacity-feasible customer sequence."""
    n = inst.n_customers
    if n > max_customers:
        raise OracleTooLarge(f"refusing to enumerate routes of {n} customers (limit {max_customers})")
    custs = list(inst.customers)
    for size in range(1, n + 1):
        for subset in itertools.combinations(custs, size):
            if inst.demand[list(subset)].sum() > inst.capacity + 1e-9:
                continue
            for perm in itertools.permutations(subset):
                yield perm


def min_reduced_cost(inst: Instance, route_value, duals) -> tuple[float, tuple[int, ...] | None]:
    """Smallest ``route_value(r) - sum gamma - mu`` over all elementary routes."""
    best, arg = math.inf, None
    for r in enumerate_routes(inst):
        v = route_value(r) - float(sum(duals.gamma[c] for c in r)) - duals.mu
        if v < best:
            best, arg = v, r
    return best, arg


def brute_force_optimum(inst: Instance, objective, method: str = "oracle") -> Solution:
    """Exact optimum of ``cost + objective penalty`` by exhaustive search.

    ``objective`` provides ``route_penalties(inst, routes)`` (a scenario or
    penalty-model objective from :mod:`csvrptw.solver`).
    """
    n = inst.n_customers
    if n > MAX_ORACLE_CUSTOMERS:
        raise OracleTooLarge(f"brute force is limited to {MAX_ORACLE_CUSTOMERS} customers, got {n}")
    routes = list(enumerate_routes(inst))
    pens = objective.route_penalties(inst, routes)
    full = (1 << n) - 1
    best_val = np.full(full + 1, math.inf)
    best_seq: list[tuple[int, ...] | None] = [None] * (full + 1)
    for r, p in zip(routes, pens):
        mask = 0
        for c in r:
            mask |= 1 << (c - 1)
        v = Route.build(inst, r).cost + float(p)
        if v < best_val[mask]:
            best_val[mask], best_seq[mask] = v, r
    # dp[k][mask]: best cover of ``mask`` by exactly k routes
    K = min(inst.fleet, n)
    dp = np.full((K + 1, full + 1), math.inf)
    choice = np.zeros((K + 1, full + 1), dtype=np.int64)
    dp[0, 0] = 0.0
    for k in range(1, K + 1):
        for mask in range(1, full + 1):
            low = mask & -mask  # the block containing the lowest customer
            sub = mask
            while sub:
                if sub & low and math.isfinite(best_val[sub]):
                    v = best_val[sub] + dp[k - 1, mask ^ sub]
                    if v < dp[k, mask]:
                        dp[k, mask] = v
                        choice[k, mask] = sub
                sub = (sub - 1) & mask
    k_best = int(np.argmin(dp[:, full]))
    if not math.isfinite(dp[k_best, full]):
        raise InfeasibleInstanceError(f"no feasible routing with at most {inst.fleet} vehicles")
    picked, mask, k = [], full, k_best
    while mask:
        sub = int(choice[k, mask])
        picked.append(best_seq[sub])
        mask ^= sub
        k -= 1
    rs = tuple(Route.build(inst, r) for r in picked)
    second = float(objective.route_penalties(inst, [r.customers for r in rs]).sum())
    sol = Solution(rs, method, float(sum(r.cost for r in rs)), second)
    check_solution(sol, inst)
    return sol
