"""Multi-color fair clustering when every cluster is large.

Bounds are relaxed, colors are drawn independently from the marginals, and
the resulting deterministic instance is solved with a lower bound on cluster
sizes. Dependent rounding of a fractional assignment is provided for the
k-center variant.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .colorblind import select_centers
from .core import (ContractError, Dataset, FairnessInfeasible, FairnessSpec, InputError,
                   ObjectiveSpec, Solution, center_distances)
from .fairlp import FractionalAssignment, kcenter_radius_search, solve_fair_assignment
from .flowround import COST_SCALE, UNIT, FlowNetwork, _edge_cost, min_cost_flow, snap_units
from .lpsolve import HighsSession


def relax_bounds(spec: FairnessSpec, epsilon_relax: float) -> FairnessSpec:
    """Scale lower bounds by ``1 - eps`` and upper bounds by ``1 + eps`` (clamped at 1)."""
    if not 0.0 <= epsilon_relax < 1.0:
        raise InputError("epsilon_relax must lie in [0, 1)")
    lower = {h: l * (1.0 - epsilon_relax) for h, l in spec.lower.items()}
    upper = {}
    for h, u in spec.upper.items():
        u = u * (1.0 + epsilon_relax)
        upper[h] = u if h == "value" else min(u, 1.0)
    return FairnessSpec(lower, upper, spec.delta)


@dataclass(frozen=True, eq=False)
class SampledDataset:
    base: Dataset
    labels: np.ndarray  # sampled color index per point
    rng_seed: int

    def as_dataset(self) -> Dataset:
        return self.base.with_labels(self.labels)

    def mass(self) -> np.ndarray:
        return np.eye(len(self.base.colors))[self.labels]


def sample_colors(dataset: Dataset, seed: int) -> SampledDataset:
    """Draw every point's color independently from its marginals."""
    if dataset.model.kind != "probabilistic":
        raise InputError("sampling needs a probabilistic color model")
    P = np.asarray(dataset.probs)
    if np.any(np.abs(P.sum(axis=1) - 1.0) > 1e-9):
        raise InputError("marginals must sum to 1")
    rng = np.random.default_rng(seed)
    cum = np.cumsum(P, axis=1)
    cum /= cum[:, -1:]
    u = rng.random(dataset.n)
    labels = (cum > u[:, None]).argmax(axis=1)
    labels.setflags(write=False)
    return SampledDataset(dataset, labels, seed)


@dataclass(frozen=True)
class DfclbSpec:
    bounds: FairnessSpec  # already relaxed
    L: int
    k: int
    p: float

    def __post_init__(self):
        if self.L < 1:
            raise InputError("cluster lower bound L must be >= 1")


def dfclb_round(dataset: Dataset, fa: FractionalAssignment, labels: np.ndarray,
                objective: ObjectiveSpec | float, cost_scale: int = COST_SCALE,
                unit: int = UNIT) -> Solution:
    """Round a lower-bounded deterministic fair assignment through a three-layer flow.

    Points of color h feed node (i, h) whose throughput is held between floor
    and ceiling of the fractional color-h mass of cluster i; node i feeds the
    sink with throughput between floor and ceiling of the fractional cluster
    size. Points already integral in ``fa`` are fixed first and only the
    fractional remainder goes through the network; the remainder's bounds are
    the floor/ceiling of the remaining fractional amounts.
    """
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    units = snap_units(fa.x, unit)
    labels = np.asarray(labels)
    k, n = units.shape
    H = int(labels.max()) + 1 if n else 0
    D = center_distances(dataset, fa.centers)
    integral = (units == unit).any(axis=0)
    assign = np.full(n, -1, dtype=int)
    assign[integral] = np.asarray(fa.centers)[np.argmax(units[:, integral], axis=0)]
    frac_pts = np.flatnonzero(~integral)
    rest = units.copy()
    rest[:, integral] = 0
    net = FlowNetwork(meta={"cost_scale": cost_scale, "unit": unit})
    for j in frac_pts:
        net.add_node(("point", int(j)), -1)
    size_floor = 0
    for c, center in enumerate(fa.centers):
        total = int(rest[c].sum())
        if total == 0:
            continue
        for h in range(H):
            if rest[c, labels == h].sum():
                net.add_node(("color", center, h), 0)
        net.add_node(("center", center), 0)
        size_floor += total // unit
    net.add_node(("t",), len(frac_pts))
    for c, center in enumerate(fa.centers):
        total = int(rest[c].sum())
        if total == 0:
            continue
        for j in np.flatnonzero(rest[c]):
            net.add_edge(("point", int(j)), ("color", center, int(labels[j])), 1,
                         _edge_cost(D[c, j], p, cost_scale))
        for h in range(H):
            mass = int(rest[c, labels == h].sum())
            if mass:
                net.add_edge(("color", center, h), ("center", center),
                             -(-mass // unit), 0, mass // unit)
        net.add_edge(("center", center), ("t",), -(-total // unit), 0, total // unit)
    flow = min_cost_flow(net)
    for e, f in enumerate(flow.flow):
        u, v = net.labels[net.tail[e]], net.labels[net.head[e]]
        if f and u[0] == "point":
            assign[u[1]] = v[1]
    if np.any(assign < 0):
        raise ContractError("rounding left a point unassigned")
    sol = Solution.build(dataset, fa.centers, assign, objective, flow_cost=flow.total_cost,
                         rounded_points=int(len(frac_pts)))
    object.__setattr__(sol, "meta", {**sol.meta, "units": units, "unit": unit})
    return sol


def dfclb_changes(units: np.ndarray, unit: int, centers: Sequence[int], labels: np.ndarray,
                  assignment: np.ndarray) -> tuple[float, float]:
    """Worst change in cluster size and in per-color count caused by rounding (exact)."""
    from fractions import Fraction

    labels = np.asarray(labels)
    H = int(labels.max()) + 1
    worst_size = worst_color = Fraction(0)
    for c, center in enumerate(centers):
        members = assignment == center
        worst_size = max(worst_size, abs(int(members.sum()) - Fraction(int(units[c].sum()), unit)))
        for h in range(H):
            frac = Fraction(int(units[c, labels == h].sum()), unit)
            worst_color = max(worst_color, abs(int((members & (labels == h)).sum()) - frac))
    return worst_size, worst_color


def solve_dfclb(sampled: SampledDataset, spec: DfclbSpec, colorblind_centers: Sequence[int],
                cost_scale: int = COST_SCALE, method: str = "auto",
                session: HighsSession | None = None) -> Solution:
    """Lower-bounded deterministic fair assignment on sampled colors, then flow rounding."""
    ds = sampled.base
    centers = tuple(int(c) for c in colorblind_centers)
    if len(centers) * spec.L > ds.n:
        raise FairnessInfeasible(f"k * L = {len(centers) * spec.L} exceeds n = {ds.n}")
    det = sampled.as_dataset()
    if math.isinf(spec.p):
        fa = kcenter_radius_search(det, centers, spec.bounds, min_size=spec.L, method=method).assignment
    else:
        fa = solve_fair_assignment(det, centers, spec.bounds, spec.p, min_size=spec.L, method=method,
                                   session=session)
    sol = dfclb_round(ds, fa, sampled.labels, spec.p, cost_scale)
    object.__setattr__(sol, "meta", {**sol.meta, "lp_cost": fa.lp_cost,
                                     "lp_objective": fa.lp_objective})
    return sol


@dataclass(eq=False)
class RoundedBipartite:
    X: np.ndarray  # 0/1 matrix, shape (k, n)
    centers: tuple[int, ...]
    steps: list[tuple[str, int]] = field(default_factory=list)  # ("cycle"|"path", length)


def _find_structure(frac_adj: dict, nodes_order: list) -> tuple[str, list]:
    """A cycle or a maximal path in the fractional support, as a node sequence."""
    start = None
    for v in nodes_order:
        if len(frac_adj[v]) == 1:
            start = v
            break
    if start is None:
        start = next(v for v in nodes_order if frac_adj[v])
    path = [start]
    pos = {start: 0}
    prev = None
    while True:
        v = path[-1]
        nxt = None
        for w in sorted(frac_adj[v]):
            if w != prev:
                nxt = w
                break
        if nxt is None:
            return "path", path
        if nxt in pos:
            return "cycle", path[pos[nxt]:] + [nxt]
        pos[nxt] = len(path)
        prev = v
        path.append(nxt)


def dependent_round(fa: FractionalAssignment | np.ndarray, seed: int, unit: int = UNIT,
                    centers: Sequence[int] | None = None) -> RoundedBipartite:
    """Dependent rounding of a center-by-point fractional matrix.

    Repeatedly takes a cycle or maximal path of fractional edges (explored
    depth-first from the lowest-id node, preferring path endpoints), splits it
    into alternating edge sets and shifts mass one way or the other with
    probabilities that keep every edge's expectation. Arithmetic runs on an
    integer grid so degree bounds hold exactly.
    """
    if isinstance(fa, FractionalAssignment):
        x, centers = fa.x, fa.centers
    else:
        x = np.asarray(fa, dtype=float)
        centers = tuple(range(x.shape[0])) if centers is None else tuple(centers)
    sums = x.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        raise InputError("every point must have fractional degree exactly 1")
    U = snap_units(x, unit).astype(object)
    k, n = U.shape
    rng = np.random.default_rng(seed)
    # nodes: ("c", i) for centers, ("p", j) for points; ordering puts centers first
    adj: dict = {("c", i): set() for i in range(k)}
    adj.update({("p", j): set() for j in range(n)})
    for i, j in zip(*np.nonzero((U > 0) & (U < unit))):
        adj[("c", int(i))].add(("p", int(j)))
        adj[("p", int(j))].add(("c", int(i)))
    order = sorted(adj)
    steps = []

    def edge(a, b):
        return (a[1], b[1]) if a[0] == "c" else (b[1], a[1])

    while any(adj[v] for v in order):
        kind, seq = _find_structure(adj, order)
        edges = [edge(a, b) for a, b in zip(seq, seq[1:])]
        m1, m2 = edges[0::2], edges[1::2]
        alpha = min([unit - U[e] for e in m1] + [U[e] for e in m2])
        beta = min([U[e] for e in m1] + [unit - U[e] for e in m2])
        if int(rng.integers(alpha + beta)) < beta:
            s1, s2 = alpha, -alpha
        else:
            s1, s2 = -beta, beta
        for e in m1:
            U[e] += s1
        for e in m2:
            U[e] += s2
        for i, j in edges:
            if U[i, j] in (0, unit):
                adj[("c", i)].discard(("p", j))
                adj[("p", j)].discard(("c", i))
        steps.append((kind, len(edges)))
    X = (U == unit).astype(np.int8)
    if np.any(X.sum(axis=0) != 1):
        raise ContractError("dependent rounding broke a point's degree")
    return RoundedBipartite(X, tuple(centers), steps)


def round_dependent(dataset: Dataset, fa: FractionalAssignment, seed: int,
                    objective: ObjectiveSpec | float) -> Solution:
    rb = dependent_round(fa, seed)
    assign = np.asarray(rb.centers)[np.argmax(rb.X, axis=0)]
    return Solution.build(dataset, rb.centers, assign, objective, rounding="dependent")


@dataclass(eq=False)
class LargeClusterResult:
    solution: Solution
    sampled: SampledDataset
    relaxed: FairnessSpec
    centers: tuple[int, ...]


def large_cluster_fair(dataset: Dataset, objective: ObjectiveSpec, spec: FairnessSpec, L: int,
                       epsilon_relax: float = 0.1, seed: int = 0,
                       centers: Sequence[int] | None = None, colorblind: str = "kmeanspp",
                       method: str = "auto", session: HighsSession | None = None
                       ) -> LargeClusterResult:
    """Relax, sample colors, and solve the lower-bounded deterministic problem.

    Pass one ``session`` across repeated trials to warm-start the LP.
    """
    relaxed = relax_bounds(spec, epsilon_relax)
    if centers is None:
        centers = select_centers(dataset, objective.k, colorblind, seed).centers
    sampled = sample_colors(dataset, seed)
    sol = solve_dfclb(sampled, DfclbSpec(relaxed, L, objective.k, objective.p), centers,
                      method=method, session=session)
    return LargeClusterResult(sol, sampled, relaxed, tuple(centers))


def relaxed_satisfaction(dataset: Dataset, solution: Solution, relaxed: FairnessSpec,
                         epsilon_relax: float) -> tuple[bool, float]:
    """Check the expected color mass of every cluster against the relaxed window.

    Violations of at most ``epsilon_relax`` times the cluster's expected color
    mass are tolerated. Returns ``(ok, worst_ratio)`` where ``worst_ratio`` is
    the largest violation divided by that tolerance.
    """
    lo, hi = relaxed.arrays(dataset.model)
    M = dataset.mass()
    worst = 0.0
    for c in solution.centers:
        members = solution.assignment == c
        size = int(members.sum())
        E = M[members].sum(axis=0)
        viol = np.maximum.reduce([lo * size - E, E - hi * size, np.zeros_like(E)])
        tol = epsilon_relax * E
        with np.errstate(divide="ignore", invalid="ignore"):
            ratio = np.where(viol > 0, viol / np.where(tol > 0, tol, np.nan), 0.0)
        ratio = np.nan_to_num(ratio, nan=np.inf)
        worst = max(worst, float(ratio.max()))
    return worst <= 1.0, worst
