"""Domain model: instances, routes, penalties, arrival-time propagation.

Node 0 is the depot. Travel-time matrices are dense ``(N+1, N+1)`` arrays;
stacks of scenarios are ``(S, N+1, N+1)``.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np


class InstanceError(ValueError):
    """Raised when instance data violates a structural invariant."""


class SolomonParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class InfeasibleSolutionError(ValueError):
    pass


# --------------------------------------------------------------------------
# Instance
# --------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Instance:
    """A routing graph with demands, soft time windows, capacity and fleet.

    ``cost`` holds unrounded Euclidean distances. ``nominal`` is the free-flow
    travel time: the distance plus the service time of the tail node, so that
    service is folded into the outgoing arcs.
    """

    name: str
    coords: np.ndarray
    demand: np.ndarray
    ready: np.ndarray
    due: np.ndarray
    service: np.ndarray
    capacity: float
    fleet: int
    cost: np.ndarray = field(init=False, repr=False)
    nominal: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float).reshape(-1, 2)
        n1 = coords.shape[0]
        arrays = {}
        for key in ("demand", "ready", "due", "service"):
            arr = np.asarray(getattr(self, key), dtype=float).reshape(-1)
            if arr.shape[0] != n1:
                raise InstanceError(f"{key} has {arr.shape[0]} entries, expected {n1}")
            arrays[key] = arr
        if n1 < 2:
            raise InstanceError("instance needs a depot and at least one customer")
        if arrays["demand"][0] != 0:
            raise InstanceError("depot demand must be 0")
        if np.any(arrays["demand"] < 0):
            raise InstanceError("demands must be nonnegative")
        if np.any(arrays["demand"] != np.round(arrays["demand"])):
            raise InstanceError("demands must be integral")
        if np.any(arrays["ready"] < 0):
            raise InstanceError("ready times must be nonnegative")
        bad = np.nonzero(arrays["ready"] > arrays["due"])[0]
        if bad.size:
            raise InstanceError(f"node {int(bad[0])} has ready time after due date")
        if np.any(arrays["service"] < 0):
            raise InstanceError("service times must be nonnegative")
        if not self.capacity > 0:
            raise InstanceError("capacity must be positive")
        if int(self.fleet) < 1:
            raise InstanceError("fleet size must be at least 1")
        diff = coords[:, None, :] - coords[None, :, :]
        cost = np.sqrt((diff**2).sum(axis=2))
        service = arrays["service"].copy()
        service[0] = 0.0
        nominal = cost + service[:, None]
        np.fill_diagonal(nominal, 0.0)
        for arr in (coords, cost, nominal, *arrays.values()):
            arr.setflags(write=False)
        object.__setattr__(self, "coords", coords)
        for key, arr in arrays.items():
            object.__setattr__(self, key, arr)
        object.__setattr__(self, "capacity", float(self.capacity))
        object.__setattr__(self, "fleet", int(self.fleet))
        object.__setattr__(self, "cost", cost)
        object.__setattr__(self, "nominal", nominal)

    @property
    def n_customers(self) -> int:
        return self.coords.shape[0] - 1

    @property
    def n_nodes(self) -> int:
        return self.coords.shape[0]

    @property
    def customers(self) -> range:
        return range(1, self.n_nodes)

    @property
    def arcs(self) -> list[tuple[int, int]]:
        """Off-diagonal arcs in row-major ``(i, j)`` order."""
        n1 = self.n_nodes
        return [(i, j) for i in range(n1) for j in range(n1) if i != j]

    @property
    def n_arcs(self) -> int:
        return self.n_nodes * (self.n_nodes - 1)

    def arc_matrix(self, values: np.ndarray) -> np.ndarray:
        """Scatter arc vectors ``(..., n_arcs)`` into ``(..., N+1, N+1)`` matrices."""
        values = np.asarray(values, dtype=float)
        n1 = self.n_nodes
        out = np.zeros(values.shape[:-1] + (n1, n1))
        mask = ~np.eye(n1, dtype=bool)
        out[..., mask] = values
        return out

    def arc_vector(self, matrix: np.ndarray) -> np.ndarray:
        """Inverse of :meth:`arc_matrix`."""
        matrix = np.asarray(matrix, dtype=float)
        mask = ~np.eye(self.n_nodes, dtype=bool)
        return matrix[..., mask]

    def arc_index(self, i: int, j: int) -> int:
        n1 = self.n_nodes
        return i * (n1 - 1) + (j if j < i else j - 1)

    def truncated(self, n_customers: int) -> "Instance":
        """Keep the depot and the first ``n_customers`` customers."""
        if not 1 <= n_customers <= self.n_customers:
            raise InstanceError(f"cannot truncate {self.n_customers} customers to {n_customers}")
        k = n_customers + 1
        return Instance(
            name=self.name,
            coords=self.coords[:k],
            demand=self.demand[:k],
            ready=self.ready[:k],
            due=self.due[:k],
            service=self.service[:k],
            capacity=self.capacity,
            fleet=self.fleet,
        )

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "capacity": self.capacity,
            "fleet": self.fleet,
            "nodes": [
                {
                    "id": i,
                    "x": float(self.coords[i, 0]),
                    "y": float(self.coords[i, 1]),
                    "demand": float(self.demand[i]),
                    "ready": float(self.ready[i]),
                    "due": float(self.due[i]),
                    "service": float(self.service[i]),
                }
                for i in range(self.n_nodes)
            ],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "Instance":
        nodes = sorted(data["nodes"], key=lambda n: n["id"])
        return cls(
            name=data["name"],
            coords=[(n["x"], n["y"]) for n in nodes],
            demand=[n["demand"] for n in nodes],
            ready=[n["ready"] for n in nodes],
            due=[n["due"] for n in nodes],
            service=[n.get("service", 0.0) for n in nodes],
            capacity=data["capacity"],
            fleet=data["fleet"],
        )

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "Instance":
        return cls.from_dict(json.loads(text))

    def same_as(self, other: "Instance") -> bool:
        return (
            self.name == other.name
            and self.capacity == other.capacity
            and self.fleet == other.fleet
            and all(
                np.array_equal(getattr(self, k), getattr(other, k))
                for k in ("coords", "demand", "ready", "due", "service")
            )
        )


# --------------------------------------------------------------------------
# Solomon format
# --------------------------------------------------------------------------


def parse_solomon(text: str | Iterable[str], n_customers: int | None = None) -> Instance:
    """Parse the classic Solomon VRPTW layout.

    The file gives a name line, a VEHICLE block with number and capacity, and
    a CUSTOMER table (id, x, y, demand, ready, due, service). ``n_customers``
    keeps only the first customers of the table.
    """
    lines = text.splitlines() if isinstance(text, str) else [l.rstrip("\n") for l in text]
    numbered = [(k + 1, l.strip()) for k, l in enumerate(lines) if l.strip()]
    if not numbered:
        raise SolomonParseError("empty input")
    name = numbered[0][1]
    pos = 1

    def expect(keyword: str):
        nonlocal pos
        if pos >= len(numbered) or not numbered[pos][1].upper().startswith(keyword):
            line = numbered[pos][0] if pos < len(numbered) else None
            raise SolomonParseError(f"expected '{keyword}' header", line)
        pos += 1

    expect("VEHICLE")
    expect("NUMBER")
    if pos >= len(numbered):
        raise SolomonParseError("missing vehicle number/capacity row")
    lineno, row = numbered[pos]
    parts = row.split()
    try:
        fleet, capacity = int(parts[0]), float(parts[1])
    except (ValueError, IndexError):
        raise SolomonParseError("vehicle row must hold number and capacity", lineno) from None
    pos += 1
    expect("CUSTOMER")
    expect("CUST")

    records = []
    for lineno, row in numbered[pos:]:
        parts = row.split()
        if len(parts) != 7:
            raise SolomonParseError(f"customer row needs 7 fields, got {len(parts)}", lineno)
        try:
            vals = [float(v) for v in parts]
        except ValueError:
            raise SolomonParseError("non-numeric field in customer row", lineno) from None
        if vals[0] != int(vals[0]):
            raise SolomonParseError("customer id must be an integer", lineno)
        records.append((int(vals[0]), lineno, vals[1:]))

    ids = [r[0] for r in records]
    if len(set(ids)) != len(ids):
        dup = next(i for i in ids if ids.count(i) > 1)
        raise InstanceError(f"duplicate node id {dup}")
    if not records or records[0][0] != 0:
        raise InstanceError("first customer row must be the depot (id 0)")
    if ids != list(range(len(ids))):
        raise InstanceError("node ids must be consecutive from 0")
    if n_customers is not None:
        if n_customers > len(records) - 1:
            raise InstanceError(f"file has only {len(records) - 1} customers")
        records = records[: n_customers + 1]

    data = np.array([r[2] for r in records])
    suffix = "" if n_customers is None else f"-{n_customers}"
    return Instance(
        name=name + suffix,
        coords=data[:, 0:2],
        demand=data[:, 2],
        ready=data[:, 3],
        due=data[:, 4],
        service=data[:, 5],
        capacity=capacity,
        fleet=fleet,
    )


def _fmt(v: float) -> str:
    return str(int(v)) if float(v).is_integer() else repr(float(v))


def write_solomon(inst: Instance) -> str:
    """Serialize in Solomon layout; :func:`parse_solomon` reads it back exactly."""
    out = [inst.name, "", "VEHICLE", "NUMBER     CAPACITY", f"  {inst.fleet}         {_fmt(inst.capacity)}", ""]
    out += ["CUSTOMER", "CUST NO.   XCOORD.   YCOORD.    DEMAND   READY TIME   DUE DATE   SERVICE TIME", ""]
    for i in range(inst.n_nodes):
        vals = [inst.coords[i, 0], inst.coords[i, 1], inst.demand[i], inst.ready[i], inst.due[i], inst.service[i]]
        out.append(f"{i:5d} " + " ".join(f"{_fmt(v):>10}" for v in vals))
    return "\n".join(out) + "\n"


def load_solomon(name: str, n_customers: int | None = None) -> Instance:
    """Load a bundled Solomon instance (``R101``, ``C101`` or ``RC101``)."""
    from importlib.resources import files

    path = files("csvrptw") / "data" / f"{name.upper()}.txt"
    if not path.is_file():
        raise FileNotFoundError(f"no bundled Solomon instance named {name!r}")
    return parse_solomon(path.read_text(), n_customers)


# --------------------------------------------------------------------------
# Penalties
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PenaltyFn:
    """Nondecreasing lateness penalty with ``pi(u) = 0`` for ``u <= 0``.

    ``table`` holds ``(u, pi(u))`` breakpoints for the ``custom`` kind; the
    function is linearly interpolated between breakpoints and extrapolated with
    the last slope.
    """

    kind: str = "quadratic"
    scale: float = 1.0
    table: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        if self.kind not in ("quadratic", "linear", "custom"):
            raise ValueError(f"unknown penalty kind {self.kind!r}")
        if self.scale < 0:
            raise ValueError("penalty scale must be nonnegative")
        if self.kind == "custom":
            pts = sorted((float(u), float(v)) for u, v in self.table)
            if len(pts) < 2 or pts[0] != (0.0, 0.0):
                raise ValueError("custom penalty table must start at (0, 0) with >= 2 points")
            if any(b[1] < a[1] or b[0] <= a[0] for a, b in zip(pts, pts[1:])):
                raise ValueError("custom penalty table must be strictly increasing in u, nondecreasing in pi")
            object.__setattr__(self, "table", tuple(pts))

    def __call__(self, u):
        u = np.asarray(u, dtype=float)
        pos = np.maximum(u, 0.0)
        if self.kind == "quadratic":
            out = self.scale * pos * pos
        elif self.kind == "linear":
            out = self.scale * pos
        else:
            us = np.array([p[0] for p in self.table])
            vs = np.array([p[1] for p in self.table])
            slope = (vs[-1] - vs[-2]) / (us[-1] - us[-2])
            out = np.interp(pos, us, vs) + np.where(pos > us[-1], (pos - us[-1]) * slope, 0.0)
            out = self.scale * out
        return out if out.ndim else float(out)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "scale": self.scale, "table": [list(p) for p in self.table]}

    @classmethod
    def from_dict(cls, data: dict) -> "PenaltyFn":
        return cls(data.get("kind", "quadratic"), data.get("scale", 1.0), tuple(map(tuple, data.get("table", ()))))


QUADRATIC = PenaltyFn("quadratic")


# --------------------------------------------------------------------------
# Routes, scenarios, solutions
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class Route:
    customers: tuple[int, ...]
    load: float
    cost: float

    @classmethod
    def build(cls, inst: Instance, customers: Sequence[int]) -> "Route":
        seq = tuple(int(c) for c in customers)
        if not seq:
            raise InstanceError("a route visits at least one customer")
        if len(set(seq)) != len(seq):
            raise InstanceError(f"route {seq} repeats a customer")
        if any(c < 1 or c > inst.n_customers for c in seq):
            raise InstanceError(f"route {seq} references an unknown customer")
        load = float(sum(inst.demand[c] for c in seq))
        if load > inst.capacity + 1e-9:
            raise InstanceError(f"route {seq} exceeds capacity ({load} > {inst.capacity})")
        return cls(seq, load, route_cost(inst, seq))

    def __len__(self) -> int:
        return len(self.customers)

    def arcs(self) -> list[tuple[int, int]]:
        path = (0,) + self.customers + (0,)
        return list(zip(path[:-1], path[1:]))


def route_cost(inst: Instance, customers: Sequence[int]) -> float:
    path = [0, *customers, 0]
    c = inst.cost
    return float(sum(c[a, b] for a, b in zip(path[:-1], path[1:])))


@dataclass(frozen=True, eq=False)
class ScenarioSet:
    """Weighted travel-time scenarios; weights are renormalized to sum to one."""

    times: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        times = np.asarray(self.times, dtype=float)
        if times.ndim == 2:
            times = times[None]
        weights = np.asarray(self.weights, dtype=float).reshape(-1)
        if times.ndim != 3 or times.shape[1] != times.shape[2]:
            raise ValueError("scenario times must have shape (S, N+1, N+1)")
        if times.shape[0] < 1 or weights.shape[0] != times.shape[0]:
            raise ValueError("need one weight per scenario and at least one scenario")
        if np.any(weights < 0) or not np.all(np.isfinite(weights)):
            raise ValueError("scenario weights must be finite and nonnegative")
        total = weights.sum()
        if abs(total - 1.0) > 1e-9:
            raise ValueError(f"scenario weights sum to {total}, expected 1")
        weights = weights / total
        if np.any(times < 0):
            raise ValueError("travel times must be nonnegative")
        times.setflags(write=False)
        weights.setflags(write=False)
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "weights", weights)

    @classmethod
    def uniform(cls, times) -> "ScenarioSet":
        times = np.asarray(times, dtype=float)
        if times.ndim == 2:
            times = times[None]
        return cls(times, np.full(times.shape[0], 1.0 / times.shape[0]))

    @classmethod
    def single(cls, t) -> "ScenarioSet":
        return cls.uniform(np.asarray(t, dtype=float)[None])

    def __len__(self) -> int:
        return self.times.shape[0]

    def drop_zero_weights(self) -> "ScenarioSet":
        keep = self.weights > 0
        return ScenarioSet(self.times[keep], self.weights[keep] / self.weights[keep].sum())

    def mean_times(self) -> np.ndarray:
        return np.tensordot(self.weights, self.times, axes=1)


@dataclass(frozen=True)
class Solution:
    routes: tuple[Route, ...]
    method: str = ""
    first_stage: float = math.nan
    second_stage: float = math.nan

    @property
    def objective(self) -> float:
        return self.first_stage + self.second_stage

    def fingerprint(self) -> tuple[tuple[int, ...], ...]:
        """Canonical route-set identity, independent of route order."""
        return tuple(sorted(r.customers for r in self.routes))

    def to_dict(self) -> dict:
        return {
            "method": self.method,
            "routes": [list(r.customers) for r in sorted(self.routes, key=lambda r: r.customers)],
            "first_stage": self.first_stage,
            "second_stage": self.second_stage,
        }

    @classmethod
    def from_dict(cls, inst: Instance, data: dict) -> "Solution":
        routes = tuple(Route.build(inst, r) for r in data["routes"])
        return cls(routes, data.get("method", ""), data.get("first_stage", math.nan), data.get("second_stage", math.nan))


def check_solution(sol: Solution, inst: Instance) -> None:
    """Raise :class:`InfeasibleSolutionError` unless every customer is covered once by at most K routes."""
    seen: list[int] = []
    for r in sol.routes:
        if r.load > inst.capacity + 1e-9:
            raise InfeasibleSolutionError(f"route {r.customers} exceeds capacity")
        seen.extend(r.customers)
    if sorted(seen) != list(inst.customers):
        raise InfeasibleSolutionError("customers are not covered exactly once")
    if len(sol.routes) > inst.fleet:
        raise InfeasibleSolutionError(f"{len(sol.routes)} routes exceed fleet size {inst.fleet}")


# --------------------------------------------------------------------------
# Arrival times and penalties
# --------------------------------------------------------------------------


def arrival_times(route: Route | Sequence[int], t: np.ndarray, inst: Instance) -> tuple[np.ndarray, np.ndarray]:
    """Arrival and service-start times along a route under one travel-time matrix.

    Early service is forbidden: the vehicle waits until the ready time.
    """
    seq = route.customers if isinstance(route, Route) else tuple(route)
    a = np.empty(len(seq))
    s = np.empty(len(seq))
    prev, start = 0, 0.0
    for k, v in enumerate(seq):
        a[k] = start + t[prev, v]
        s[k] = max(inst.ready[v], a[k])
        prev, start = v, s[k]
    return a, s


def scenario_arrivals(customers: Sequence[int], times: np.ndarray, inst: Instance) -> np.ndarray:
    """Arrival times ``(S, L)`` of a route under a stack of travel-time matrices."""
    times = np.asarray(times)
    if times.ndim == 2:
        times = times[None]
    out = np.empty((times.shape[0], len(customers)))
    prev = 0
    start = np.zeros(times.shape[0])
    for k, v in enumerate(customers):
        out[:, k] = start + times[:, prev, v]
        start = np.maximum(inst.ready[v], out[:, k])
        prev = v
    return out


def route_penalty(route: Route | Sequence[int], t: np.ndarray, pen: PenaltyFn, inst: Instance) -> float:
    seq = route.customers if isinstance(route, Route) else tuple(route)
    a, _ = arrival_times(seq, t, inst)
    return float(np.sum(pen(a - inst.due[list(seq)])))


def expected_route_penalty(route: Route | Sequence[int], scen: ScenarioSet, pen: PenaltyFn, inst: Instance) -> float:
    """Scenario-weighted penalty of a route."""
    seq = route.customers if isinstance(route, Route) else tuple(route)
    arr = scenario_arrivals(seq, scen.times, inst)
    per = pen(arr - inst.due[list(seq)][None, :]).sum(axis=1)
    return float(scen.weights @ per)


def solution_value(sol: Solution, t: np.ndarray, pen: PenaltyFn, inst: Instance) -> tuple[float, float, float]:
    """``(total, first_stage, second_stage)`` of a feasible solution under realized times."""
    check_solution(sol, inst)
    first = float(sum(r.cost for r in sol.routes))
    second = float(sum(route_penalty(r, t, pen, inst) for r in sol.routes))
    return first + second, first, second


def solution_from_routes(
    inst: Instance, routes: Iterable[Sequence[int]], scen: ScenarioSet, pen: PenaltyFn, method: str = ""
) -> Solution:
    """Build a solution and fill its scenario-weighted objective components."""
    rs = tuple(Route.build(inst, r) for r in routes)
    first = float(sum(r.cost for r in rs))
    second = float(sum(expected_route_penalty(r, scen, pen, inst) for r in rs))
    sol = Solution(rs, method, first, second)
    check_solution(sol, inst)
    return sol
