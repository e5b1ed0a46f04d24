"""
Branch-and-price
================

Column generation solves the set-partitioning LP; branching on vehicle
counts and arcs closes the integrality gap. On a small instance the result
is compared with exhaustive search.
"""

from csvrptw.core import QUADRATIC
from csvrptw.oracle import brute_force_optimum, random_instance, random_scenarios
from csvrptw.solver import ScenarioObjective, SolverLimits, branch_and_price

inst = random_instance(7, 3, seed=3)
obj = ScenarioObjective(random_scenarios(inst, 5, "exponential", seed=3), QUADRATIC)

rep = branch_and_price(obj, inst, SolverLimits(time_limit=60), method="SAA")
print(f"status {rep.status}, objective {rep.objective:.4f}, root LP {rep.root_lp:.4f}, nodes {rep.nodes}, "
      f"columns {rep.columns}, pricing calls {rep.pricing_calls}")
for r in rep.solution.routes:
    print("  route", r.customers)

oracle = brute_force_optimum(inst, obj)
print(f"brute force objective {oracle.objective:.4f}")

# node-by-node trace: (node, depth, parent bound, LP value, outcome, pool size)
for row in rep.trace[:8]:
    print("  ", row)
