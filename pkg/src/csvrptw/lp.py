"""Linear-programming kernel for the restricted master problem and the knapsack bound.

LPs are solved with the HiGHS dual simplex shipped in SciPy; this module fixes
the problem layout, dual sign conventions and status handling the column
generation relies on.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import csc_matrix


@dataclass(eq=False)
class LpProblem:
    """``min c'z`` s.t. ``A_eq z = b_eq``, ``A_ub z <= b_ub``, ``0 <= z <= upper``."""

    c: np.ndarray
    A_eq: np.ndarray
    b_eq: np.ndarray
    A_ub: np.ndarray | None = None
    b_ub: np.ndarray | None = None
    upper: np.ndarray | None = None
    names: list[str] | None = None

    def __post_init__(self):
        self.c = np.asarray(self.c, dtype=float)
        n = self.c.shape[0]
        self.A_eq = np.asarray(self.A_eq, dtype=float).reshape(-1, n)
        self.b_eq = np.asarray(self.b_eq, dtype=float).reshape(-1)
        if self.A_ub is None:
            self.A_ub = np.zeros((0, n))
            self.b_ub = np.zeros(0)
        self.A_ub = np.asarray(self.A_ub, dtype=float).reshape(-1, n)
        self.b_ub = np.asarray(self.b_ub, dtype=float).reshape(-1)
        if self.upper is None:
            self.upper = np.full(n, np.inf)
        self.upper = np.asarray(self.upper, dtype=float).reshape(-1)
        if self.A_eq.shape[0] != self.b_eq.shape[0] or self.A_ub.shape[0] != self.b_ub.shape[0]:
            raise ValueError("row counts of constraint matrices and right-hand sides differ")
        if self.upper.shape[0] != n:
            raise ValueError("need one upper bound per column")
        for arr in (self.c, self.A_eq, self.b_eq, self.A_ub, self.b_ub):
            if not np.all(np.isfinite(arr)):
                raise ValueError("LP data must be finite")

    @property
    def n_cols(self) -> int:
        return self.c.shape[0]


@dataclass(eq=False)
class LpSolution:
    status: str
    z: np.ndarray | None = None
    objective: float = float("nan")
    duals_eq: np.ndarray | None = None
    duals_ub: np.ndarray | None = None
    reduced: np.ndarray | None = None

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


_STATUS = {0: "optimal", 2: "infeasible", 3: "unbounded"}


def solve_lp(prob: LpProblem) -> LpSolution:
    """Solve to an optimal basic solution; infeasible/unbounded are reported in ``status``.

    ``duals_eq`` and ``duals_ub`` are the sensitivities of the optimum to the
    right-hand sides, so the reduced cost of column ``j`` is
    ``c_j - A_eq[:, j]' duals_eq - A_ub[:, j]' duals_ub`` (``duals_ub <= 0``).
    """
    kwargs = dict(
        c=prob.c,
        A_eq=csc_matrix(prob.A_eq) if prob.A_eq.size else None,
        b_eq=prob.b_eq if prob.A_eq.size else None,
        A_ub=csc_matrix(prob.A_ub) if prob.A_ub.size else None,
        b_ub=prob.b_ub if prob.A_ub.size else None,
        bounds=np.column_stack([np.zeros(prob.n_cols), prob.upper]),
        method="highs-ds",
    )
    res = linprog(**kwargs)
    status = _STATUS.get(res.status, "error")
    if status != "optimal":
        return LpSolution(status)
    y_eq = np.asarray(res.eqlin.marginals) if prob.A_eq.size else np.zeros(prob.A_eq.shape[0])
    y_ub = np.asarray(res.ineqlin.marginals) if prob.A_ub.size else np.zeros(prob.A_ub.shape[0])
    reduced = prob.c - prob.A_eq.T @ y_eq - prob.A_ub.T @ y_ub
    return LpSolution(status, np.asarray(res.x), float(res.fun), y_eq, y_ub, reduced)


def _num(v: float) -> str:
    return f"{v:.12g}"


def write_lp_file(prob: LpProblem, path=None) -> str:
    """CPLEX-LP text of the problem (12 significant digits)."""
    names = prob.names or [f"z{j}" for j in range(prob.n_cols)]

    def expr(coefs):
        terms = [f"{'-' if v < 0 else '+'} {_num(abs(v))} {names[j]}" for j, v in enumerate(coefs) if v != 0]
        text = " ".join(terms) or "0 " + names[0]
        return text[2:] if text.startswith("+ ") else text

    lines = ["Minimize", " obj: " + expr(prob.c), "Subject To"]
    for r in range(prob.A_eq.shape[0]):
        lines.append(f" eq{r}: {expr(prob.A_eq[r])} = {_num(prob.b_eq[r])}")
    for r in range(prob.A_ub.shape[0]):
        lines.append(f" ub{r}: {expr(prob.A_ub[r])} <= {_num(prob.b_ub[r])}")
    lines.append("Bounds")
    for j, u in enumerate(prob.upper):
        lines.append(f" 0 <= {names[j]} <= {_num(u)}" if np.isfinite(u) else f" {names[j]} >= 0")
    lines.append("End")
    text = "\n".join(lines) + "\n"
    if path is not None:
        with open(path, "w") as fh:
            fh.write(text)
    return text


def fractional_knapsack(values, weights, cap: float, excluded=()) -> tuple[float, np.ndarray]:
    """LP relaxation of a 0/1 knapsack, solved greedily by value/weight ratio.

    Items with nonpositive value or listed in ``excluded`` stay at 0. Returns
    the optimal value and the fractional solution (at most one fractional entry).
    """
    v = np.asarray(values, dtype=float).reshape(-1)
    w = np.asarray(weights, dtype=float).reshape(-1)
    if v.shape != w.shape:
        raise ValueError("values and weights differ in length")
    if np.any(w <= 0):
        raise ValueError("knapsack weights must be positive")
    if cap < 0:
        raise ValueError("capacity must be nonnegative")
    z = np.zeros(v.shape[0])
    ok = v > 0
    if len(excluded):
        ok[np.asarray(list(excluded), dtype=int)] = False
    cand = np.nonzero(ok)[0]
    if cand.size == 0 or cap == 0:
        return 0.0, z
    order = cand[np.argsort(-v[cand] / w[cand], kind="stable")]
    room = float(cap)
    total = 0.0
    for j in order:
        if w[j] <= room:
            z[j] = 1.0
            room -= w[j]
            total += v[j]
        else:
            z[j] = room / w[j]
            total += v[j] * z[j]
            break
    return total, z
