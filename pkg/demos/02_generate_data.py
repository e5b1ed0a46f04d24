"""
Contextual travel-time data
===========================

Travel times depend on observed features through one of three generative
models. A dataset pairs feature rows (with an intercept column) with arc
travel-time vectors; a test set holds many realizations per test feature.
"""

import numpy as np

from csvrptw.core import load_solomon
from csvrptw.datagen import KINDS, GenerativeModel, make_dataset, make_testset

inst = load_solomon("C101", 6)
for kind in KINDS:
    model = GenerativeModel.create(kind, inst, p_raw=3, seed=1)
    data = make_dataset(model, inst, n=40, p=4, seed=2)
    ratio = data.T / inst.arc_vector(inst.nominal)
    print(f"{kind:12s} X{data.X.shape} T{data.T.shape}  travel/nominal: "
          f"min {ratio.min():.2f} mean {ratio.mean():.2f} max {ratio.max():.2f}")

model = GenerativeModel.create("linear", inst, p_raw=3, seed=1)
test = make_testset(model, inst, n_x=3, n_t=20, seed=3)
print("test features:\n", np.round(test.features, 2))
print("per-feature mean travel time on arc 0:", np.round(test.times[:, :, 0].mean(axis=1), 2))
