"""
Pricing by labeling
===================

Given duals from the master problem, pricing looks for routes with negative
reduced cost. Labels extend one customer at a time; completion bounds prune
labels that cannot reach a negative total. Here the search is checked
against brute-force enumeration and the bounds' pruning counts are shown.
"""

import numpy as np

from csvrptw.core import QUADRATIC, expected_route_penalty, route_cost
from csvrptw.oracle import min_reduced_cost, random_instance, random_scenarios
from csvrptw.pricing import Duals, PricingOptions, build_rcsp_bound, price

inst = random_instance(7, 3, seed=12)
scen = random_scenarios(inst, 5, "sigmoidal", seed=12)
rng = np.random.default_rng(0)
duals = Duals(np.r_[0.0, rng.uniform(0.5, 1.5, inst.n_customers) * 2 * inst.cost[0, 1:]], -3.0)

best, arg = min_reduced_cost(inst, lambda r: route_cost(inst, r) + expected_route_penalty(r, scen, QUADRATIC, inst),
                             duals)
print("enumeration: best route", arg, "reduced cost", round(best, 6))

for label, opts in (("no bounds", PricingOptions(rcsp="off", knapsack=False)),
                    ("knapsack", PricingOptions(rcsp="off")),
                    ("RCSP + knapsack", PricingOptions())):
    res = price(inst, duals, scen, QUADRATIC, options=opts)
    print(f"{label:16s} best {res.best:10.6f}  labels created {res.stats['created']:6d}  "
          f"pruned rcsp {res.stats['pruned_rcsp']:5d} knapsack {res.stats['pruned_knapsack']:5d}")

bounds = build_rcsp_bound(inst, duals, QUADRATIC, scen.times)
print("RCSP table shape (time steps, nodes, capacity):", bounds.T1.shape)
print("bound from customer 1 at time 0 with full capacity:", round(bounds.bound(1, 0.0, inst.capacity), 3))
