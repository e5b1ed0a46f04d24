import numpy as np
import pytest

from csvrptw.core import Instance


def make_instance(coords, demand=None, ready=None, due=None, capacity=100.0, fleet=3, service=None, name="TOY"):
    coords = np.asarray(coords, dtype=float)
    n1 = coords.shape[0]
    return Instance(
        name,
        coords,
        np.zeros(n1) if demand is None else np.asarray(demand, dtype=float),
        np.zeros(n1) if ready is None else np.asarray(ready, dtype=float),
        np.full(n1, 1000.0) if due is None else np.asarray(due, dtype=float),
        np.zeros(n1) if service is None else np.asarray(service, dtype=float),
        capacity,
        fleet,
    )


@pytest.fixture
def line3():
    """Depot at the origin, three customers on a line."""
    return make_instance([[0, 0], [3, 0], [7, 0], [10, 0]], demand=[0, 1, 1, 1],
                         ready=[0, 0, 5, 0], due=[100, 2, 8, 20], capacity=3, fleet=2)


@pytest.fixture
def square4():
    return make_instance([[0, 0], [10, 0], [10, 10], [0, 10], [-10, 0]], demand=[0, 2, 3, 2, 4],
                         ready=[0, 0, 0, 0, 0], due=[200, 15, 30, 45, 12], capacity=7, fleet=3)


ACCEPTANCE: dict[int, tuple[bool, str]] = {}


@pytest.fixture
def record():
    """Store one acceptance verdict for the end-of-run summary."""

    def _record(number: int, ok: bool, detail: str):
        ACCEPTANCE[number] = (bool(ok), detail)
        return ok

    return _record


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for k in sorted(ACCEPTANCE):
        ok, detail = ACCEPTANCE[k]
        terminalreporter.write_line(f"criterion {k}: {'PASS' if ok else 'FAIL'}  {detail}")
