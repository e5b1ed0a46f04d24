"""
Instances, routes and late-arrival costs
========================================

Load a truncated Solomon instance, build routes, and price them under a
travel-time scenario: first-stage cost is distance, second-stage cost is the
penalty on lateness past each customer's due time.
"""

import numpy as np

from csvrptw.core import QUADRATIC, Route, ScenarioSet, arrival_times, load_solomon, solution_from_routes, solution_value

inst = load_solomon("R101", 8)
print(inst.name, "customers:", inst.n_customers, "capacity:", inst.capacity, "fleet:", inst.fleet)

# nominal times are distances with the tail's service time folded in
route = Route.build(inst, (2, 5, 8))
a, s = arrival_times(route, inst.nominal, inst)
print("route", route.customers, "cost", round(route.cost, 2))
print("arrivals", np.round(a, 1), "due", inst.due[list(route.customers)])

# two scenarios: a normal day (70%) and a congested one where every arc takes 40% longer
slow = inst.nominal * 1.4
scen = ScenarioSet(np.stack([inst.nominal, slow]), np.array([0.7, 0.3]))
sol = solution_from_routes(inst, [(2, 5, 8), (1, 3, 4), (6, 7)], scen, QUADRATIC)
for name, t in (("nominal", inst.nominal), ("congested", slow)):
    total, first, second = solution_value(sol, t, QUADRATIC, inst)
    print(f"{name:9s} total={total:9.2f} first={first:7.2f} second={second:9.2f}")

# the scenario-weighted objective is the weighted average of the per-scenario totals
print("expected total:", round(sol.objective, 2))
