import numpy as np
import pytest

from fairclust.core import ColorModel, Dataset
from fairclust.flowround import FlowNetwork
from fairclust.lpsolve import EQ, GE, LE, LpInstance

# acceptance outcomes, echoed at the end of the run
ACCEPTANCE: list[str] = []


def record(number, ok, detail):
    line = f"criterion {number}: {'PASS' if ok else 'FAIL'}  {detail}"
    ACCEPTANCE.append(line)
    print(line)
    return ok


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE:
        terminalreporter.write_sep("=", "acceptance criteria")
        for line in sorted(ACCEPTANCE, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


def two_color(coords, p_first, name="toy"):
    p = np.asarray(p_first, dtype=float)
    return Dataset(np.asarray(coords, dtype=float), ColorModel("probabilistic", ("a", "b")),
                   probs=np.column_stack([p, 1 - p]), name=name)


def labeled(coords, labels, colors=("a", "b")):
    return Dataset(np.asarray(coords, dtype=float), ColorModel("deterministic", tuple(colors)),
                   labels=labels)


def metric(coords, values, R):
    return Dataset(np.asarray(coords, dtype=float), ColorModel("metric", ("value",), R=R),
                   values=values)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


def random_lp(rng, max_vars=12):
    """Random LP in the unit box, feasible by construction."""
    N = int(rng.integers(2, max_vars + 1))
    m = int(rng.integers(1, 5))
    A = rng.normal(size=(m, N)).round(2)
    senses = rng.choice([LE, GE, EQ], size=m, p=[0.5, 0.3, 0.2])
    b = A @ rng.random(N)
    b = np.where(senses == LE, b + rng.random(m), np.where(senses == GE, b - rng.random(m), b))
    return LpInstance(rng.normal(size=N), A, senses.tolist(), b, 0, 1)


def random_network(rng):
    """Random graph with demands taken from a random feasible flow."""
    nn = int(rng.integers(3, 7))
    ne = int(rng.integers(nn, 15))
    net = FlowNetwork()
    for v in range(nn):
        net.add_node(v, 0)
    flow = []
    for _ in range(ne):
        u, v = rng.choice(nn, 2, replace=False)
        cap = int(rng.integers(1, 3))
        f = int(rng.integers(0, cap + 1))
        lower = int(rng.integers(0, f + 1)) if rng.random() < 0.2 else 0
        net.add_edge(int(u), int(v), cap, int(rng.integers(0, 10)), lower)
        flow.append(f)
    for e, f in enumerate(flow):
        net.demand[net.tail[e]] -= f
        net.demand[net.head[e]] += f
    return net
