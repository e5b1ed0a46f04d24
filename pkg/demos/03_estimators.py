"""
Estimators behind the scenario methods
======================================

Least squares gives the conditional mean of travel times, the residual
covariance gives their spread, and both feed the conditional Gaussian
sampler. Nearest neighbours reweight the historical rows instead.
"""

import numpy as np

from csvrptw.core import load_solomon
from csvrptw.datagen import GenerativeModel, make_dataset
from csvrptw.learn import (KnnModel, estimate_cov, fit_ols, knn_weights, residual_scenarios,
                           sample_conditional_scenarios)

inst = load_solomon("RC101", 5)
model = GenerativeModel.create("linear", inst, p_raw=2, seed=4)
data = make_dataset(model, inst, n=60, p=3, seed=5)
x_new = np.array([1.0, 0.0, 1.0])

ols = fit_ols(data.X, data.T)
cov = estimate_cov(data.X, data.T, ols)
print("orthogonality max |X'(T - XB)|:", float(np.abs(data.X.T @ (data.T - data.X @ ols.coef)).max()))
print("residual std on first arcs:", np.round(np.sqrt(np.diag(cov.sigma))[:5], 2))

csaa = sample_conditional_scenarios(ols, cov, x_new, 50, seed=0, inst=inst)
rsaa = residual_scenarios(ols, data.X, data.T, x_new, inst)
# Monte Carlo estimate of the true conditional mean at x_new
true_mean = inst.arc_matrix(model.sample_arcs(x_new[1:], np.random.default_rng(9), 20_000).mean(axis=0))
for name, scen in (("conditional", csaa), ("residual", rsaa)):
    err = np.abs(scen.mean_times() - true_mean)[~np.eye(inst.n_nodes, dtype=bool)].mean()
    print(f"{name:11s} scenarios: {len(scen):3d}, mean abs error vs true conditional mean {err:.2f}")

knn = KnnModel.fit(data.X)
w = knn_weights(knn, data.X, x_new)
print(f"kNN: k={knn.k}, {np.count_nonzero(w)} rows weighted, weights sum {w.sum():.3f}")
