"""Rounding a fractional fair assignment through a minimum-cost flow.

The fractional solution is first snapped onto an integer grid (``UNIT`` parts
per point, every point's parts summing to exactly ``UNIT``) so that the
greedy slot construction and all violation bounds are exact integer
arithmetic.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Hashable, Mapping, Sequence

import numpy as np

from .core import ContractError, Dataset, ObjectiveSpec, Solution, center_distances
from .fairlp import FractionalAssignment

UNIT = 10 ** 9
COST_SCALE = 1000


@dataclass
class ClusterEdges:
    """Output of the greedy slot construction for one center."""

    center: int
    order: list[int]  # points with positive assignment, by non-increasing key
    size: int  # number of slots, ceil(total assignment)
    edges: list[tuple[int, int, object]]  # (point, slot index from 0, amount sent)


def build_cluster_edges(center: int, x: Mapping[int, object], sort_key: Mapping[int, object] | Sequence,
                        unit=1) -> ClusterEdges:
    """Connect the points of one cluster to consecutive unit-capacity slots.

    Points are taken in non-increasing order of ``sort_key`` (ties by lowest
    id); each slot accumulates exactly ``unit`` of assignment before the next
    one opens, and a point whose remainder overflows a slot continues into
    the next. Amounts may be ints, Fractions or floats; pass integer amounts
    with a matching ``unit`` for exact results.
    """
    pts = [j for j, v in x.items() if v > 0]
    order = sorted(pts, key=lambda j: (-sort_key[j], j))
    edges = []
    q, acc = 0, 0
    for j in order:
        rem = x[j]
        while rem > 0:
            take = min(unit - acc, rem)
            edges.append((j, q, take))
            acc += take
            rem -= take
            if acc >= unit:
                q, acc = q + 1, 0
    size = q + (1 if acc > 0 else 0)
    return ClusterEdges(center, order, size, edges)


@dataclass(eq=False)
class FlowNetwork:
    """Directed network with integer node demands (negative = supply).

    Edge ``e`` goes ``tail[e] -> head[e]`` with flow in ``[lower[e], cap[e]]``
    at integer ``cost[e]`` per unit.
    """

    labels: list[Hashable] = field(default_factory=list)
    demand: list[int] = field(default_factory=list)
    tail: list[int] = field(default_factory=list)
    head: list[int] = field(default_factory=list)
    cap: list[int] = field(default_factory=list)
    cost: list[int] = field(default_factory=list)
    lower: list[int] = field(default_factory=list)
    index: dict = field(default_factory=dict)
    meta: dict = field(default_factory=dict)

    def add_node(self, label: Hashable, demand: int = 0) -> int:
        if label in self.index:
            raise ContractError(f"duplicate node {label!r}")
        self.index[label] = len(self.labels)
        self.labels.append(label)
        self.demand.append(int(demand))
        return self.index[label]

    def add_edge(self, u: Hashable, v: Hashable, cap: int = 1, cost: int = 0, lower: int = 0) -> int:
        self.tail.append(self.index[u])
        self.head.append(self.index[v])
        self.cap.append(int(cap))
        self.cost.append(int(cost))
        self.lower.append(int(lower))
        return len(self.tail) - 1

    @property
    def num_nodes(self) -> int:
        return len(self.labels)

    @property
    def num_edges(self) -> int:
        return len(self.tail)

    def edge_labels(self) -> list[tuple[Hashable, Hashable]]:
        return [(self.labels[u], self.labels[v]) for u, v in zip(self.tail, self.head)]

    def to_dot(self) -> str:
        def name(lab):
            return '"' + (" ".join(map(str, lab)) if isinstance(lab, tuple) else str(lab)) + '"'

        out = ["digraph flow {"]
        for lab, d in zip(self.labels, self.demand):
            out.append(f"  {name(lab)} [demand={d}];")
        for e in range(self.num_edges):
            u, v = self.labels[self.tail[e]], self.labels[self.head[e]]
            out.append(f"  {name(u)} -> {name(v)} [cap={self.cap[e]}, cost={self.cost[e]}"
                       + (f", lower={self.lower[e]}" if self.lower[e] else "") + "];")
        out.append("}")
        return "\n".join(out) + "\n"


@dataclass(eq=False)
class IntegralFlow:
    flow: list[int]
    total_cost: int

    def on(self, e: int) -> int:
        return self.flow[e]


def check_flow(network: FlowNetwork, flow: Sequence[int]) -> None:
    """Raise ``ContractError`` unless ``flow`` respects bounds and conservation."""
    net = [0] * network.num_nodes
    for e, f in enumerate(flow):
        if not network.lower[e] <= f <= network.cap[e]:
            raise ContractError(f"edge {e} carries {f}, outside [{network.lower[e]}, {network.cap[e]}]")
        net[network.tail[e]] -= f
        net[network.head[e]] += f
    for v, (got, want) in enumerate(zip(net, network.demand)):
        if got != want:
            raise ContractError(f"node {network.labels[v]!r} nets {got}, demand {want}")


def min_cost_flow(network: FlowNetwork) -> IntegralFlow:
    """Integral minimum-cost flow meeting every node demand exactly.

    Successive shortest paths with node potentials (Dijkstra), augmenting a
    blocking flow on the zero-reduced-cost subgraph after every distance
    computation. Costs must be nonnegative.
    """
    nn, ne = network.num_nodes, network.num_edges
    if any(c < 0 for c in network.cost):
        raise ContractError("min_cost_flow requires nonnegative edge costs")
    demand = list(network.demand)
    for e in range(ne):
        lo = network.lower[e]
        if lo > network.cap[e]:
            raise ContractError(f"edge {e} has lower bound above capacity")
        if lo:
            demand[network.tail[e]] += lo
            demand[network.head[e]] -= lo
    supply_total = sum(-d for d in demand if d < 0)
    if supply_total != sum(d for d in demand if d > 0):
        raise ContractError("total supply does not equal total demand")
    S, T = nn, nn + 1
    N = nn + 2
    to: list[int] = []
    cap: list[int] = []
    cost: list[int] = []
    adj: list[list[int]] = [[] for _ in range(N)]

    def add(u, v, c, w):
        adj[u].append(len(to))
        to.append(v), cap.append(c), cost.append(w)
        adj[v].append(len(to))
        to.append(u), cap.append(0), cost.append(-w)

    for e in range(ne):
        add(network.tail[e], network.head[e], network.cap[e] - network.lower[e], network.cost[e])
    # every source edge saturates in any feasible flow, so shifting its cost by
    # a constant leaves the optimum unchanged; aligning it with the cheapest
    # outgoing edge lets the first phase route most supply at once
    out_min = [0] * nn
    for v in range(nn):
        costs = [network.cost[e] for e in (a // 2 for a in adj[v] if a % 2 == 0)]
        out_min[v] = min(costs) if costs else 0
    top = max((out_min[v] for v in range(nn) if demand[v] < 0), default=0)
    for v in range(nn):
        if demand[v] < 0:
            add(S, v, -demand[v], top - out_min[v])
        elif demand[v] > 0:
            add(v, T, demand[v], 0)

    pot = [0] * N
    pushed = 0
    INF = math.inf
    while pushed < supply_total:
        dist = [INF] * N
        dist[S] = 0
        heap = [(0, S)]
        while heap:
            d, u = heapq.heappop(heap)
            if d > dist[u]:
                continue
            pu = pot[u]
            for a in adj[u]:
                if cap[a] > 0:
                    v = to[a]
                    nd = d + cost[a] + pu - pot[v]
                    if nd < dist[v]:
                        dist[v] = nd
                        heapq.heappush(heap, (nd, v))
        if dist[T] == INF:
            break
        far = max(d for d in dist if d < INF)
        for v in range(N):
            pot[v] += dist[v] if dist[v] < INF else far
        pushed += _blocking_flow(N, S, T, adj, to, cap, cost, pot)
    if pushed < supply_total:
        raise ContractError(f"network is infeasible: routed {pushed} of {supply_total} units")
    flow = [network.lower[e] + cap[2 * e + 1] for e in range(ne)]
    total = sum(f * c for f, c in zip(flow, network.cost))
    return IntegralFlow(flow, total)


def _blocking_flow(N, S, T, adj, to, cap, cost, pot) -> int:
    """Dinic-style blocking flow restricted to zero-reduced-cost residual arcs."""

    def admissible(u, a):
        return cap[a] > 0 and cost[a] + pot[u] - pot[to[a]] == 0

    total = 0
    while True:
        level = [-1] * N
        level[S] = 0
        frontier = [S]
        while frontier and level[T] < 0:
            nxt = []
            for u in frontier:
                for a in adj[u]:
                    v = to[a]
                    if level[v] < 0 and admissible(u, a):
                        level[v] = level[u] + 1
                        nxt.append(v)
            frontier = nxt
        if level[T] < 0:
            return total
        it = [0] * N
        while True:
            path: list[int] = []
            u = S
            while u != T:
                arcs = adj[u]
                i = it[u]
                while i < len(arcs):
                    a = arcs[i]
                    if level[to[a]] == level[u] + 1 and admissible(u, a):
                        break
                    i += 1
                it[u] = i
                if i == len(arcs):
                    level[u] = -1
                    if not path:
                        break
                    a = path.pop()
                    u = to[a ^ 1]
                    it[u] += 1
                    continue
                path.append(arcs[i])
                u = to[arcs[i]]
            if u != T:
                break
            f = min(cap[a] for a in path)
            for a in path:
                cap[a] -= f
                cap[a ^ 1] += f
            total += f


def snap_units(x: np.ndarray, unit: int = UNIT) -> np.ndarray:
    """Integer parts per point (columns) summing to exactly ``unit``."""
    x = np.clip(np.asarray(x, dtype=float), 0.0, None)
    sums = x.sum(axis=0)
    if np.any(np.abs(sums - 1.0) > 1e-6):
        j = int(np.argmax(np.abs(sums - 1.0)))
        raise ContractError(f"point {j} has total assignment {sums[j]!r}, expected 1")
    u = np.rint(x / sums * unit).astype(np.int64)
    fix = unit - u.sum(axis=0)
    top = np.argmax(u, axis=0)
    u[top, np.arange(u.shape[1])] += fix
    if np.any(u < 0):
        raise ContractError("snapping produced a negative share")
    return u


def _edge_cost(d: float, p: float, scale: int) -> int:
    return int(round(scale * (d * d if p == 2 else d)))


@dataclass(eq=False)
class RoundingResult:
    solution: Solution
    network: FlowNetwork
    flow: IntegralFlow
    units: np.ndarray  # snapped x, shape (k, n), columns sum to ``unit``
    unit: int
    clusters: dict[int, ClusterEdges]
    centers: tuple[int, ...]


def build_flow_network(dataset: Dataset, fa: FractionalAssignment, objective: ObjectiveSpec | float,
                       cost_scale: int = COST_SCALE, unit: int = UNIT,
                       units: np.ndarray | None = None, sort_key: np.ndarray | None = None):
    """Build the rounding network for ``fa``.

    Returns ``(network, clusters, units)``. Slot-edge costs are
    ``round(cost_scale * d)`` (k-median, k-center) or ``round(cost_scale * d^2)``
    (k-means); every other edge is free. Centers without assignment are left out.
    """
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    if units is None:
        units = snap_units(fa.x, unit)
    if sort_key is None:
        sort_key = dataset.mass()[:, 0]
    D = center_distances(dataset, fa.centers)
    net = FlowNetwork(meta={"edge_cost": "d^2" if p == 2 else "d", "cost_scale": cost_scale,
                            "unit": unit})
    n = dataset.n
    for j in range(n):
        net.add_node(("point", j), -1)
    clusters: dict[int, ClusterEdges] = {}
    floor_total = 0
    for c, center in enumerate(fa.centers):
        row = units[c]
        total = int(row.sum())
        if total == 0:
            continue
        support = {int(j): int(row[j]) for j in np.flatnonzero(row)}
        ce = build_cluster_edges(center, support, sort_key, unit)
        clusters[center] = ce
        for q in range(ce.size):
            net.add_node(("slot", center, q), 0)
        net.add_node(("center", center), total // unit)
        floor_total += total // unit
    net.add_node(("t",), n - floor_total)
    for c, center in enumerate(fa.centers):
        ce = clusters.get(center)
        if ce is None:
            continue
        for j, q, _ in ce.edges:
            net.add_edge(("point", j), ("slot", center, q), 1, _edge_cost(D[c, j], p, cost_scale))
        for q in range(ce.size):
            net.add_edge(("slot", center, q), ("center", center), 1, 0)
        if int(units[c].sum()) % unit:
            net.add_edge(("center", center), ("t",), 1, 0)
    return net, clusters, units


def extract_assignment(network: FlowNetwork, flow: IntegralFlow, dataset: Dataset,
                       objective: ObjectiveSpec | float, **meta) -> Solution:
    """Read the center each point's unit of flow reaches."""
    assign = np.full(dataset.n, -1, dtype=int)
    for e, f in enumerate(flow.flow):
        if f <= 0:
            continue
        u, v = network.labels[network.tail[e]], network.labels[network.head[e]]
        if u[0] == "point" and v[0] == "slot":
            if assign[u[1]] != -1:
                raise ContractError(f"point {u[1]} routed twice")
            assign[u[1]] = v[1]
    if np.any(assign < 0):
        raise ContractError(f"point {int(np.argmin(assign))} received no center")
    centers = sorted({lab[1] for lab in network.labels if lab[0] == "center"})
    return Solution.build(dataset, centers, assign, objective, **meta)


def round_assignment(dataset: Dataset, fa: FractionalAssignment, objective: ObjectiveSpec | float,
                     cost_scale: int = COST_SCALE, unit: int = UNIT) -> RoundingResult:
    """Build the network, solve it and return the integral solution."""
    net, clusters, units = build_flow_network(dataset, fa, objective, cost_scale, unit)
    flow = min_cost_flow(net)
    sol = extract_assignment(net, flow, dataset, objective, flow_cost=flow.total_cost,
                             cost_scale=cost_scale, edge_cost=net.meta["edge_cost"])
    return RoundingResult(sol, net, flow, units, unit, clusters, fa.centers)


def rounding_changes(rr: RoundingResult, dataset: Dataset) -> tuple[Fraction, Fraction]:
    """Exact worst per-cluster change in size and in color mass (column 0) caused by rounding.

    Color mass uses the exact rational value of every float marginal, and the
    integers directly for metric membership.
    """
    mass = dataset.mass()
    if dataset.model.is_metric:
        key = [int(v) for v in dataset.values]
    else:
        key = [Fraction(float(v)) for v in mass[:, 0]]
    a = rr.solution.assignment
    worst_size = Fraction(0)
    worst_color = Fraction(0)
    for c, center in enumerate(rr.centers):
        row = rr.units[c]
        frac_size = Fraction(int(row.sum()), rr.unit)
        members = np.flatnonzero(a == center)
        size_change = abs(len(members) - frac_size)
        frac_color = sum((key[j] * int(row[j]) for j in np.flatnonzero(row)), Fraction(0)) / rr.unit
        int_color = sum((key[j] for j in members), Fraction(0))
        worst_size = max(worst_size, size_change)
        worst_color = max(worst_color, abs(int_color - frac_color))
    return worst_size, worst_color
