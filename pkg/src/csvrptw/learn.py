"""Statistical kernels for the prescriptive methods.

Multivariate least squares and its residual covariance, conditional Gaussian
and residual scenario generators, k-nearest-neighbour regression and weights,
a two-hidden-layer ReLU network trained with Adam, and an L1-regularized
logistic regression fit by proximal gradient.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from .core import ScenarioSet


class SingularDesignError(np.linalg.LinAlgError):
    pass


class DivergenceError(FloatingPointError):
    pass


# --------------------------------------------------------------------------
# Least squares and covariance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class OlsModel:
    coef: np.ndarray  # (p, m)
    n: int

    @property
    def p(self) -> int:
        return self.coef.shape[0]

    def predict(self, x) -> np.ndarray:
        return np.asarray(x, dtype=float) @ self.coef

    def to_dict(self) -> dict:
        return {"n": self.n, "coef": _mat(self.coef)}

    @classmethod
    def from_dict(cls, d: dict) -> "OlsModel":
        return cls(_unmat(d["coef"]), d["n"])


def _mat(a: np.ndarray) -> dict:
    a = np.asarray(a, dtype=float)
    return {"shape": list(a.shape), "data": a.ravel().tolist()}


def _unmat(d: dict) -> np.ndarray:
    return np.asarray(d["data"], dtype=float).reshape(d["shape"])


def fit_ols(X, T) -> OlsModel:
    """Least-squares coefficients via a pivot-free QR of the design matrix."""
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    n, p = X.shape
    if n <= p:
        raise SingularDesignError(f"need n > p for least squares (n={n}, p={p})")
    q, r = np.linalg.qr(X)
    diag = np.abs(np.diag(r))
    if diag.min() <= 1e-12 * max(diag.max(), 1.0):
        raise SingularDesignError("design matrix is rank deficient")
    coef = np.linalg.solve(r, q.T @ T)
    return OlsModel(coef, n)


@dataclass(frozen=True, eq=False)
class CovEstimate:
    sigma: np.ndarray
    dof: int
    jitter: float = 0.0

    def variance(self) -> np.ndarray:
        return np.diag(self.sigma)

    def to_dict(self) -> dict:
        return {"dof": self.dof, "jitter": self.jitter, "sigma": _mat(self.sigma)}

    @classmethod
    def from_dict(cls, d: dict) -> "CovEstimate":
        return cls(_unmat(d["sigma"]), d["dof"], d.get("jitter", 0.0))


def estimate_cov(X, T, ols: OlsModel, floor: float = 1e-10) -> CovEstimate:
    """``(T'T - B' X'T) / (n - p)``, symmetrized and shifted to a positive eigenvalue floor."""
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    n, p = X.shape
    if n <= p:
        raise ValueError(f"no residual degrees of freedom (n={n}, p={p})")
    sigma = (T.T @ T - ols.coef.T @ (X.T @ T)) / (n - p)
    sigma = 0.5 * (sigma + sigma.T)
    lam_min = float(np.linalg.eigvalsh(sigma)[0]) if sigma.size else 0.0
    delta = max(0.0, floor - lam_min)
    if delta > 0:
        sigma = sigma + delta * np.eye(sigma.shape[0])
    return CovEstimate(sigma, n - p, delta)


def _sqrt_factor(sigma: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(sigma)
    except np.linalg.LinAlgError:
        w, v = np.linalg.eigh(sigma)
        if not np.all(np.isfinite(w)):
            raise np.linalg.LinAlgError("covariance factorization failed") from None
        return v * np.sqrt(np.maximum(w, 0.0))


def sample_conditional_arcs(ols: OlsModel, cov: CovEstimate, x, count: int, seed, floor=None) -> np.ndarray:
    """``count`` draws of N(B'x, Sigma) as arc vectors, clamped below at ``floor``."""
    if count < 1:
        raise ValueError("scenario count must be positive")
    rng = np.random.default_rng(seed)
    mean = ols.predict(x)
    L = _sqrt_factor(cov.sigma)
    draws = mean[None, :] + rng.standard_normal((count, mean.shape[0])) @ L.T
    if floor is not None:
        draws = np.maximum(draws, floor)
    return draws


def sample_conditional_scenarios(ols, cov, x, count, seed, inst) -> ScenarioSet:
    """Uniformly weighted conditional Gaussian scenarios clamped at free-flow times."""
    nominal = inst.arc_vector(inst.nominal)
    arcs = sample_conditional_arcs(ols, cov, x, count, seed, floor=nominal)
    return ScenarioSet.uniform(inst.arc_matrix(arcs))


def residual_arcs(ols: OlsModel, X, T, x_new, subtract: bool = False, floor=None) -> np.ndarray:
    """Prediction at ``x_new`` plus each training residual ``g(x_k) - t_k``.

    ``subtract=True`` uses the conventional ``g(x_new) - eps_k`` instead.
    """
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    eps = X @ ols.coef - T
    pred = ols.predict(x_new)
    arcs = pred[None, :] - eps if subtract else pred[None, :] + eps
    if floor is not None:
        arcs = np.maximum(arcs, floor)
    return arcs


def residual_scenarios(ols, X, T, x_new, inst, subtract: bool = False) -> ScenarioSet:
    nominal = inst.arc_vector(inst.nominal)
    return ScenarioSet.uniform(inst.arc_matrix(residual_arcs(ols, X, T, x_new, subtract, floor=nominal)))


# --------------------------------------------------------------------------
# k nearest neighbours
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class KnnModel:
    X: np.ndarray
    k: int
    center: np.ndarray
    scale: np.ndarray

    @classmethod
    def fit(cls, X, k: int | None = None) -> "KnnModel":
        X = np.asarray(X, dtype=float)
        n = X.shape[0]
        k = math.ceil(math.sqrt(n)) if k is None else int(k)
        if not 1 <= k <= n:
            raise ValueError(f"k must lie in [1, {n}], got {k}")
        center = X.mean(axis=0)
        scale = X.std(axis=0)
        scale = np.where(scale > 0, scale, 1.0)
        return cls(X, k, center, scale)

    def neighbours(self, x_new) -> np.ndarray:
        z = (self.X - self.center) / self.scale
        zq = (np.asarray(x_new, dtype=float) - self.center) / self.scale
        dist = np.sqrt(((z - zq) ** 2).sum(axis=1))
        return np.argsort(dist, kind="stable")[: self.k]

    def to_dict(self) -> dict:
        return {"k": self.k, "X": _mat(self.X), "center": self.center.tolist(), "scale": self.scale.tolist()}


def knn_weights(knn: KnnModel, X, x_new) -> np.ndarray:
    """Weight 1/k on each of the k nearest training rows (ties by row index)."""
    n = np.asarray(X).shape[0]
    w = np.zeros(n)
    w[knn.neighbours(x_new)] = 1.0 / knn.k
    return w


def knn_predict(knn: KnnModel, X, T, x_new) -> np.ndarray:
    return np.asarray(T, dtype=float)[knn.neighbours(x_new)].mean(axis=0)


# --------------------------------------------------------------------------
# Feed-forward network
# --------------------------------------------------------------------------


@dataclass
class MlpHyper:
    hidden: tuple[int, ...] = (100, 100)
    l2: float = 0.1
    lr: float = 1e-3
    epochs: int = 2000
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8


@dataclass(eq=False)
class MlpModel:
    """ReLU network on standardized inputs; targets are learned in units of ``y_scale``.

    ``weights``/``biases`` are the trainable parameters; ``l2`` applies to the
    weight matrices only.
    """

    weights: list[np.ndarray]
    biases: list[np.ndarray]
    x_center: np.ndarray
    x_scale: np.ndarray
    y_scale: float = 1.0
    history: list[float] = field(default_factory=list)

    @property
    def sizes(self) -> list[int]:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def raw(self, Y) -> np.ndarray:
        h = (np.atleast_2d(np.asarray(Y, dtype=float)) - self.x_center) / self.x_scale
        for W, b in zip(self.weights[:-1], self.biases[:-1]):
            h = np.maximum(h @ W + b, 0.0)
        return (h @ self.weights[-1] + self.biases[-1])[:, 0]

    def predict(self, Y) -> np.ndarray:
        return np.maximum(self.raw(Y), 0.0) * self.y_scale

    def to_dict(self) -> dict:
        return {
            "weights": [_mat(w) for w in self.weights],
            "biases": [_mat(b) for b in self.biases],
            "x_center": self.x_center.tolist(),
            "x_scale": self.x_scale.tolist(),
            "y_scale": self.y_scale,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "MlpModel":
        return cls(
            [_unmat(w) for w in d["weights"]],
            [_unmat(b) for b in d["biases"]],
            np.asarray(d["x_center"]),
            np.asarray(d["x_scale"]),
            d["y_scale"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict())


def init_mlp(p_in: int, hidden=(100, 100), seed: int = 0) -> MlpModel:
    rng = np.random.default_rng(seed)
    sizes = [p_in, *hidden, 1]
    weights, biases = [], []
    for a, b in zip(sizes[:-1], sizes[1:]):
        weights.append(rng.normal(0.0, math.sqrt(2.0 / a), size=(a, b)))
        biases.append(np.zeros(b))
    return MlpModel(weights, biases, np.zeros(p_in), np.ones(p_in))


def mlp_loss_and_grads(model: MlpModel, Y, target, l2: float):
    """Mean squared error (in scaled target units) plus ``l2 * sum ||W||^2``, with exact gradients."""
    Z = (np.atleast_2d(np.asarray(Y, dtype=float)) - model.x_center) / model.x_scale
    y = np.asarray(target, dtype=float) / model.y_scale
    n = Z.shape[0]
    acts = [Z]
    pre = []
    h = Z
    for W, b in zip(model.weights[:-1], model.biases[:-1]):
        u = h @ W + b
        pre.append(u)
        h = np.maximum(u, 0.0)
        acts.append(h)
    out = (h @ model.weights[-1] + model.biases[-1])[:, 0]
    resid = out - y
    data_loss = float(np.mean(resid**2))
    reg = float(sum(np.sum(W * W) for W in model.weights))
    loss = data_loss + l2 * reg

    gW = [None] * len(model.weights)
    gb = [None] * len(model.biases)
    delta = (2.0 / n) * resid[:, None]
    for layer in range(len(model.weights) - 1, -1, -1):
        gW[layer] = acts[layer].T @ delta + 2.0 * l2 * model.weights[layer]
        gb[layer] = delta.sum(axis=0)
        if layer > 0:
            delta = (delta @ model.weights[layer].T) * (pre[layer - 1] > 0)
    return loss, gW, gb


def fit_mlp(Y, target, hyper: MlpHyper | None = None) -> MlpModel:
    """Full-batch Adam on the regularized squared error."""
    hyper = hyper or MlpHyper()
    Y = np.atleast_2d(np.asarray(Y, dtype=float))
    target = np.asarray(target, dtype=float)
    if Y.shape[0] < 1 or Y.shape[0] != target.shape[0]:
        raise ValueError("need one target per row and at least one row")
    if np.any(target < 0):
        raise ValueError("penalty targets must be nonnegative")
    model = init_mlp(Y.shape[1], hyper.hidden, hyper.seed)
    model.x_center = Y.mean(axis=0)
    sd = Y.std(axis=0)
    model.x_scale = np.where(sd > 0, sd, 1.0)
    ys = float(np.sqrt(np.mean(target**2)))
    model.y_scale = ys if ys > 0 else 1.0

    params = model.weights + model.biases
    m = [np.zeros_like(a) for a in params]
    v = [np.zeros_like(a) for a in params]
    for step in range(1, hyper.epochs + 1):
        loss, gW, gb = mlp_loss_and_grads(model, Y, target, hyper.l2)
        if not math.isfinite(loss):
            raise DivergenceError(f"loss became {loss} at epoch {step}")
        model.history.append(loss)
        bc1 = 1.0 - hyper.beta1**step
        bc2 = 1.0 - hyper.beta2**step
        for a, g, mk, vk in zip(params, gW + gb, m, v):
            mk *= hyper.beta1
            mk += (1.0 - hyper.beta1) * g
            vk *= hyper.beta2
            vk += (1.0 - hyper.beta2) * g * g
            a -= hyper.lr * (mk / bc1) / (np.sqrt(vk / bc2) + hyper.eps)
    return model


# --------------------------------------------------------------------------
# L1 logistic regression
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class LogitModel:
    """Logistic model on standardized covariates; ``coef`` is in standardized units."""

    intercept: float
    coef: np.ndarray
    center: np.ndarray
    scale: np.ndarray
    lam: float
    objective_trace: tuple[float, ...] = ()

    def decision(self, W) -> np.ndarray:
        Z = (np.atleast_2d(np.asarray(W, dtype=float)) - self.center) / self.scale
        return self.intercept + Z @ self.coef

    def predict_proba(self, W) -> np.ndarray:
        return _sigmoid(self.decision(W))

    def to_dict(self) -> dict:
        return {"intercept": self.intercept, "coef": self.coef.tolist(), "center": self.center.tolist(),
                "scale": self.scale.tolist(), "lam": self.lam}


def _sigmoid(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _log1pexp(z):
    return np.logaddexp(0.0, z)


def logit_objective(intercept: float, coef: np.ndarray, Z: np.ndarray, labels: np.ndarray, lam: float) -> float:
    z = intercept + Z @ coef
    nll = np.mean(_log1pexp(z) - labels * z)
    return float(nll + lam * np.abs(coef).sum())


def fit_logit_l1(W, labels, lam: float, max_iter: int = 5000, tol: float = 1e-10) -> LogitModel:
    """Proximal gradient (ISTA, fixed step 1/L) on mean NLL + ``lam * ||coef||_1``.

    The intercept is not penalized. A fixed step of one over the Lipschitz
    constant makes the objective monotone nonincreasing.
    """
    W = np.atleast_2d(np.asarray(W, dtype=float))
    labels = np.asarray(labels, dtype=float)
    if not np.all((labels == 0) | (labels == 1)):
        raise ValueError("labels must be 0/1")
    n, d = W.shape
    center = W.mean(axis=0)
    sd = W.std(axis=0)
    scale = np.where(sd > 0, sd, 1.0)
    Z = (W - center) / scale
    A = np.hstack([np.ones((n, 1)), Z])
    lip = 0.25 * np.linalg.norm(A, 2) ** 2 / n
    step = 1.0 / max(lip, 1e-12)
    b0, b = 0.0, np.zeros(d)
    obj = logit_objective(b0, b, Z, labels, lam)
    trace = [obj]
    for _ in range(max_iter):
        r = _sigmoid(b0 + Z @ b) - labels
        g0 = r.mean()
        g = Z.T @ r / n
        b0 = b0 - step * g0
        u = b - step * g
        b = np.sign(u) * np.maximum(np.abs(u) - step * lam, 0.0)
        new = logit_objective(b0, b, Z, labels, lam)
        trace.append(new)
        if obj - new < tol * max(1.0, abs(obj)):
            obj = new
            break
        obj = new
    return LogitModel(float(b0), b, center, scale, float(lam), tuple(trace))
