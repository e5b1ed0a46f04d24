"""
Learning the penalty directly
=============================

Instead of scenarios, a network predicts each customer's expected lateness
penalty from route features. Training routes come from other methods' solves;
targets are the realized penalties on the historical travel times.
"""

import numpy as np

from csvrptw.core import load_solomon
from csvrptw.datagen import GenerativeModel, make_dataset
from csvrptw.learn import MlpHyper
from csvrptw.methods import MethodConfig, MethodContext
from csvrptw.penalty_model import build_training_set
from csvrptw.solver import SolverLimits

inst = load_solomon("C101", 6)
model = GenerativeModel.create("linear", inst, p_raw=2, seed=21)
data = make_dataset(model, inst, n=30, p=3, seed=22)
ctx = MethodContext(inst, data, config=MethodConfig(mlp=MlpHyper(hidden=(32, 32), epochs=500)),
                    limits=SolverLimits(time_limit=60))

pipe = ctx.penalty_pipeline()
print(f"donor routes {pipe.n_donor_routes}, training rows {pipe.n_rows}, final loss {pipe.final_loss:.4f}")

ts = build_training_set(ctx.donor_pool(), data.X, data.T, pipe.ctx, seed=0, max_rows=500)
print("features per row:", len(ts.names), "| share of positive targets:", round(float(np.mean(ts.targets > 0)), 2))
if pipe.mlp is not None:
    pred = pipe.mlp.predict(ts.Y)
    print("train correlation prediction vs target:", round(float(np.corrcoef(pred, ts.targets)[0, 1]), 3))

pres = ctx.prescribe("P-NN", data.X[0])
print("P-NN plan:", [r.customers for r in pres.solution.routes], "objective", round(pres.objective, 2))
