"""Synthetic feature-conditioned travel-time data.

Three generative models map a raw feature vector ``x`` (without the intercept)
to a travel-time matrix. Datasets prepend the intercept column, so a dataset
with ``p`` columns is driven by ``p - 1`` raw features.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .core import Instance

KINDS = ("linear", "exponential", "sigmoidal")
KIND_ALIASES = {"linear": "linear", "lin": "linear", "exp": "exponential", "exponential": "exponential",
                "sigmoid": "sigmoidal", "sigmoidal": "sigmoidal", "sig": "sigmoidal"}

LOGNORMAL_SIGMA = {"exponential": 1.0, "sigmoidal": 1.2}


class DimensionError(ValueError):
    pass


def canonical_kind(kind: str) -> str:
    try:
        return KIND_ALIASES[kind.lower()]
    except KeyError:
        raise ValueError(f"unknown generative model {kind!r}; choose from {sorted(KIND_ALIASES)}") from None


def build_covariance(inst: Instance, seed: int, scale: float = 0.1) -> np.ndarray:
    """Node-local correlated covariance over arcs.

    ``Sigma = D C D`` with ``D = diag(scale * nominal)``. ``C`` comes from a
    sparse factor ``F`` (one column per cluster, each cluster seeded at a node;
    arcs touching the seed node load on it) via ``F F^T + 0.5 I`` normalized to
    unit diagonal.
    """
    rng = np.random.default_rng(seed)
    arcs = inst.arcs
    m = len(arcs)
    r = math.ceil(m / 10)
    n1 = inst.n_nodes
    # cover every node before repeating seeds
    seeds = np.concatenate([rng.permutation(n1) for _ in range(math.ceil(r / n1))])[:r]
    tails = np.array([a[0] for a in arcs])
    heads = np.array([a[1] for a in arcs])
    touches = (tails[:, None] == seeds[None, :]) | (heads[:, None] == seeds[None, :])
    F = np.where(touches, rng.uniform(0.0, 1.0, size=(m, r)), 0.0)
    C = F @ F.T + 0.5 * np.eye(m)
    d = np.sqrt(np.diag(C))
    C = C / np.outer(d, d)
    sd = scale * inst.arc_vector(inst.nominal)
    sigma = C * np.outer(sd, sd)
    return 0.5 * (sigma + sigma.T)


@dataclass(eq=False)
class GenerativeModel:
    """Feature-to-travel-time generator with per-arc coefficient vectors.

    ``coef`` has shape ``(p_raw, n_arcs)``; column ``a`` is the coefficient
    vector of arc ``a`` (row-major off-diagonal order).
    """

    kind: str
    inst: Instance
    coef: np.ndarray
    seed: int
    noise_cov: np.ndarray | None = None
    noise_sigma: float = 0.0
    _chol: np.ndarray | None = field(default=None, repr=False)

    @classmethod
    def create(cls, kind: str, inst: Instance, p_raw: int, seed: int) -> "GenerativeModel":
        kind = canonical_kind(kind)
        if p_raw < 1:
            raise DimensionError("need at least one raw feature")
        rng = np.random.default_rng(seed)
        m = inst.n_arcs
        nominal = inst.arc_vector(inst.nominal)
        if kind == "linear":
            coef = rng.uniform(0.01, 0.20, size=(p_raw, m)) * nominal[None, :]
            cov = build_covariance(inst, seed + 7919)
            return cls(kind, inst, coef, seed, noise_cov=cov)
        low, high = (0.1, 0.3) if kind == "exponential" else (0.3, 0.8)
        coef = rng.uniform(low, high, size=(p_raw, m))
        coef = np.where(rng.uniform(size=(p_raw, m)) < 0.2, -coef, coef)
        return cls(kind, inst, coef, seed, noise_sigma=LOGNORMAL_SIGMA[kind])

    @property
    def p_raw(self) -> int:
        return self.coef.shape[0]

    def sample_features(self, rng: np.random.Generator, count: int) -> np.ndarray:
        if self.kind == "linear":
            return rng.integers(0, 2, size=(count, self.p_raw)).astype(float)
        return rng.uniform(0.0, 1.0, size=(count, self.p_raw))

    def _check_x(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float).reshape(-1)
        if x.shape[0] != self.p_raw:
            raise DimensionError(f"feature vector has {x.shape[0]} entries, model expects {self.p_raw}")
        if self.kind == "linear":
            if not np.all((x == 0) | (x == 1)):
                raise ValueError("linear model features must be binary")
        elif np.any(x < 0) or np.any(x > 1):
            raise ValueError(f"{self.kind} model features must lie in the unit cube")
        return x

    def noise_factor(self) -> np.ndarray:
        if self._chol is None:
            self._chol = np.linalg.cholesky(self.noise_cov)
        return self._chol

    def draw_noise(self, rng: np.random.Generator, count: int) -> np.ndarray:
        """Noise vectors ``(count, n_arcs)``: Gaussian for linear, raw log-normal otherwise."""
        m = self.inst.n_arcs
        if self.kind == "linear":
            return rng.standard_normal((count, m)) @ self.noise_factor().T
        return np.exp(self.noise_sigma * rng.standard_normal((count, m)))

    def congestion(self, x: np.ndarray) -> np.ndarray:
        """Deterministic part of the travel time per arc, before noise."""
        x = self._check_x(x)
        nominal = self.inst.arc_vector(self.inst.nominal)
        z = x @ self.coef
        if self.kind == "linear":
            return nominal + z
        if self.kind == "exponential":
            return nominal + 0.2 * nominal * np.exp(2.0 * z)
        mid = 0.5 * self.coef.sum(axis=0)
        return nominal + nominal * _logistic(32.0 * (mid - z))

    def sample_arcs(self, x: np.ndarray, rng: np.random.Generator, count: int = 1, noise: np.ndarray | None = None) -> np.ndarray:
        """Travel-time arc vectors ``(count, n_arcs)`` at feature vector ``x``."""
        base = self.congestion(x)
        eps = self.draw_noise(rng, count) if noise is None else np.atleast_2d(noise)
        t = base[None, :] + eps
        if self.kind == "linear":
            t = np.maximum(t, self.inst.arc_vector(self.inst.nominal)[None, :])
        return t

    def expected_arcs(self, x: np.ndarray) -> np.ndarray | None:
        """Closed-form conditional mean for the log-normal models (None for truncated linear)."""
        if self.kind == "linear":
            return None
        return self.congestion(x) + math.exp(0.5 * self.noise_sigma**2)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "seed": self.seed, "p_raw": self.p_raw, "instance": self.inst.name}


def _logistic(z):
    return 0.5 * (1.0 + np.tanh(0.5 * np.asarray(z, dtype=float)))


def _sample(model: GenerativeModel, kind: str, x, rng, noise):
    if model.kind != kind:
        raise ValueError(f"model kind is {model.kind}, not {kind}")
    rng = rng if isinstance(rng, np.random.Generator) else np.random.default_rng(rng)
    return model.inst.arc_matrix(model.sample_arcs(x, rng, 1, noise)[0])


def sample_linear(model: GenerativeModel, x, rng=None, noise=None) -> np.ndarray:
    """One travel-time matrix from the linear model, truncated below at nominal."""
    return _sample(model, "linear", x, rng, noise)


def sample_exponential(model: GenerativeModel, x, rng=None, noise=None) -> np.ndarray:
    return _sample(model, "exponential", x, rng, noise)


def sample_sigmoidal(model: GenerativeModel, x, rng=None, noise=None) -> np.ndarray:
    return _sample(model, "sigmoidal", x, rng, noise)


@dataclass(eq=False)
class Dataset:
    X: np.ndarray
    T: np.ndarray
    kind: str
    seed: int

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]

    def scenario_times(self, inst: Instance) -> np.ndarray:
        return inst.arc_matrix(self.T)

    def save(self, directory: str | Path, name: str = "") -> None:
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        prefix = f"{name}_" if name else ""
        np.savetxt(d / f"{prefix}X.csv", self.X, delimiter=",", fmt="%.17g")
        np.savetxt(d / f"{prefix}T.csv", self.T, delimiter=",", fmt="%.17g")
        manifest = {"kind": self.kind, "seed": self.seed, "n": self.n, "p": self.p, "n_arcs": self.T.shape[1]}
        (d / f"{prefix}manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True))

    @classmethod
    def load(cls, directory: str | Path, name: str = "") -> "Dataset":
        d = Path(directory)
        prefix = f"{name}_" if name else ""
        manifest = json.loads((d / f"{prefix}manifest.json").read_text())
        X = np.loadtxt(d / f"{prefix}X.csv", delimiter=",", ndmin=2)
        T = np.loadtxt(d / f"{prefix}T.csv", delimiter=",", ndmin=2)
        return cls(X, T, manifest["kind"], manifest["seed"])


@dataclass(eq=False)
class TestSet:
    """Test features (with intercept) and, per feature, a block of travel-time arc vectors."""

    features: np.ndarray
    times: np.ndarray  # (n_X, n_T, n_arcs)
    kind: str
    seed: int

    __test__ = False  # not a pytest class

    @property
    def n_x(self) -> int:
        return self.features.shape[0]

    @property
    def n_t(self) -> int:
        return self.times.shape[1]


def _draw_design(model: GenerativeModel, rng: np.random.Generator, n: int) -> np.ndarray:
    for _ in range(100):
        X = np.hstack([np.ones((n, 1)), model.sample_features(rng, n)])
        if np.linalg.matrix_rank(X) == X.shape[1]:
            return X
    raise DimensionError("could not draw a full-rank design matrix")


def make_dataset(model: GenerativeModel, inst: Instance, n: int, p: int, seed: int) -> Dataset:
    """Training data: ``n`` feature rows with intercept and conditional travel times."""
    if n <= p:
        raise DimensionError(f"need more observations than features (n={n}, p={p})")
    if model.p_raw != p - 1:
        raise DimensionError(f"model drives {model.p_raw} raw features; p={p} needs {p - 1}")
    if model.inst is not inst and not model.inst.same_as(inst):
        raise ValueError("model was built for a different instance")
    rng = np.random.default_rng(seed)
    X = _draw_design(model, rng, n)
    T = np.vstack([model.sample_arcs(X[k, 1:], rng, 1) for k in range(n)])
    return Dataset(X, T, model.kind, seed)


def make_testset(model: GenerativeModel, inst: Instance, n_x: int, n_t: int, seed: int) -> TestSet:
    if n_x < 1 or n_t < 1:
        raise DimensionError("test-set sizes must be positive")
    if model.inst is not inst and not model.inst.same_as(inst):
        raise ValueError("model was built for a different instance")
    rng = np.random.default_rng(seed)
    raw = model.sample_features(rng, n_x)
    times = np.stack([model.sample_arcs(raw[k], rng, n_t) for k in range(n_x)])
    features = np.hstack([np.ones((n_x, 1)), raw])
    return TestSet(features, times, model.kind, seed)


def test_times_at(model: GenerativeModel, x_raw, n_t: int, seed: int) -> np.ndarray:
    """``n_t`` travel-time arc vectors drawn at a fixed raw feature vector."""
    rng = np.random.default_rng(seed)
    return model.sample_arcs(np.asarray(x_raw, dtype=float), rng, n_t)


test_times_at.__test__ = False
