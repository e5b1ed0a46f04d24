"""
Prescriptive methods side by side
=================================

Every method maps (training data, observed features) to a routing plan.
Plans are scored on fresh travel times drawn at the observed features, and
compared with the full-information plan that sees those test times.
"""

from csvrptw.core import load_solomon
from csvrptw.datagen import GenerativeModel, make_dataset, make_testset
from csvrptw.harness import evaluate_test_cost, full_info_gap
from csvrptw.learn import MlpHyper
from csvrptw.methods import METHODS, MethodConfig, MethodContext
from csvrptw.solver import SolverLimits

inst = load_solomon("R101", 8)
model = GenerativeModel.create("linear", inst, p_raw=3, seed=11)
data = make_dataset(model, inst, n=40, p=4, seed=12)
test = make_testset(model, inst, n_x=2, n_t=30, seed=13)
ctx = MethodContext(inst, data, config=MethodConfig(csaa_count=30, mlp=MlpHyper(hidden=(32, 32), epochs=400)),
                    limits=SolverLimits(time_limit=60))

costs = {}
for m in METHODS:
    pres = [ctx.prescribe(m, test.features[k], test.times[k]) for k in range(test.n_x)]
    costs[m] = evaluate_test_cost(pres, test, inst)
full = costs["Full"]["test_cost"]
for m, ev in costs.items():
    print(f"{m:8s} test cost {ev['test_cost']:9.2f} (routing {ev['first_stage']:7.2f} + lateness "
          f"{ev['second_stage']:8.2f})  gap {full_info_gap(ev['test_cost'], full):7.2f}%")
