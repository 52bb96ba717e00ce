"""Brute-force ground truth for tiny instances."""

from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .core import Dataset, FairnessSpec, InputError, Solution
from .flowround import FlowNetwork, IntegralFlow
from .lpsolve import EQ, GE, LE, LpInstance

MAX_POINTS = 10
MAX_K = 3
MAX_EDGES = 20
MAX_LP_VARS = 12


@dataclass(eq=False)
class OracleResult:
    optimum: float  # inf when nothing feasible exists
    witness: object  # Solution, IntegralFlow, or x vector; None when infeasible
    enumerated_count: int

    @property
    def feasible(self) -> bool:
        return self.witness is not None


def brute_force_fair_opt(dataset: Dataset, k: int, p: float, spec: FairnessSpec,
                         allow_violation: float = 0.0) -> OracleResult:
    """Optimal clustering with at most ``k`` centers whose violation is <= ``allow_violation``.

    Enumerates every center subset and every point-to-center function.
    """
    n = dataset.n
    if n > MAX_POINTS or k > MAX_K:
        raise InputError(f"oracle is limited to n <= {MAX_POINTS}, k <= {MAX_K} (got n={n}, k={k})")
    lo, hi = spec.arrays(dataset.model)
    M = dataset.mass()
    X = dataset.coords
    Dfull = np.sqrt(((X[:, None, :] - X[None, :, :]) ** 2).sum(-1))
    tol = 1e-9 * max(1.0, float(np.abs(M).max()))
    best, witness, count = math.inf, None, 0
    for size in range(1, k + 1):
        # every function point -> S, vectorized over all size**n choices
        choice = np.array(list(itertools.product(range(size), repeat=n)), dtype=int)
        for S in itertools.combinations(range(n), size):
            count += len(choice)
            dist = Dfull[np.asarray(S)[choice], np.arange(n)]
            if math.isinf(p):
                cost = dist.max(axis=1)
            else:
                cost = (dist ** p).sum(axis=1) ** (1.0 / p)
            ok = np.ones(len(choice), dtype=bool)
            for c in range(size):
                members = (choice == c)
                cnt = members.sum(axis=1)
                tot = members.astype(float) @ M  # (choices, H)
                viol = np.maximum(lo[None] * cnt[:, None] - tot, tot - hi[None] * cnt[:, None])
                ok &= (viol <= allow_violation + tol).all(axis=1)
            if not ok.any():
                continue
            cand = np.flatnonzero(ok)
            r = cand[np.argmin(cost[cand])]
            if cost[r] < best - 1e-12:
                best = float(cost[r])
                assign = np.asarray(S)[choice[r]]
                witness = Solution(tuple(sorted(set(assign.tolist()))), assign, best,
                                   {"oracle": True})
    return OracleResult(best, witness, count)


def enumerate_integral_flows(network: FlowNetwork) -> OracleResult:
    """Minimum cost over every integral flow (each edge's flow from lower to cap)."""
    E = network.num_edges
    if E > MAX_EDGES:
        raise InputError(f"flow enumeration is limited to {MAX_EDGES} edges (got {E})")
    ranges = [range(network.lower[e], network.cap[e] + 1) for e in range(E)]
    total = math.prod(len(r) for r in ranges)
    if total > 2 ** MAX_EDGES:
        raise InputError("too many candidate flows to enumerate")
    F = np.array(list(itertools.product(*ranges)), dtype=np.int64).reshape(-1, E)
    inc = np.zeros((network.num_nodes, E), dtype=np.int64)
    inc[network.head, np.arange(E)] += 1
    inc[network.tail, np.arange(E)] -= 1
    ok = np.all(F @ inc.T == np.asarray(network.demand)[None, :], axis=1)
    if not ok.any():
        return OracleResult(math.inf, None, len(F))
    costs = F @ np.asarray(network.cost, dtype=np.int64)
    cand = np.flatnonzero(ok)
    r = int(cand[np.argmin(costs[cand])])
    return OracleResult(float(costs[r]), IntegralFlow(F[r].tolist(), int(costs[r])), len(F))


def enumerate_lp_vertices(inst: LpInstance, tol: float = 1e-9) -> OracleResult:
    """Best basic feasible point, by enumerating active sets.

    Every variable is at its lower bound, its upper bound, or free; the free
    variables are solved from an equal number of active rows (equalities are
    always active). Patterns of bounded variables are batched per active set.
    """
    A = inst.dense()
    m, N = A.shape
    if N > MAX_LP_VARS:
        raise InputError(f"vertex enumeration is limited to {MAX_LP_VARS} variables (got {N})")
    if not np.all(np.isfinite(inst.hi)):
        raise InputError("vertex enumeration needs finite upper bounds")
    senses = np.array(inst.senses)
    eq_rows = np.flatnonzero(senses == EQ)
    # redundant equalities stay in the feasibility check but not in the active set
    keep: list[int] = []
    for r in eq_rows:
        if np.linalg.matrix_rank(A[keep + [int(r)]]) > len(keep):
            keep.append(int(r))
    eq_rows = np.asarray(keep, dtype=int)
    ineq_rows = np.flatnonzero(senses != EQ)
    best, witness, count = math.inf, None, 0
    scale = max(1.0, float(np.abs(inst.b).max(initial=0.0)))
    for r in range(len(ineq_rows) + 1):
        for extra in itertools.combinations(ineq_rows, r):
            rows = np.concatenate([eq_rows, np.asarray(extra, dtype=int)])
            nf = len(rows)
            if nf > N:
                continue
            for free in itertools.combinations(range(N), nf):
                free = np.asarray(free, dtype=int)
                fixed = np.setdiff1d(np.arange(N), free)
                B = A[np.ix_(rows, free)] if nf else np.zeros((0, 0))
                if nf and abs(np.linalg.det(B)) < 1e-12:
                    continue
                pats = np.array(list(itertools.product((0, 1), repeat=len(fixed))), dtype=float)
                pats = pats.reshape(2 ** len(fixed), len(fixed))
                xf = inst.lo[fixed] + pats * (inst.hi[fixed] - inst.lo[fixed])
                X = np.zeros((len(pats), N))
                X[:, fixed] = xf
                if nf:
                    rhs = inst.b[rows][None, :] - xf @ A[np.ix_(rows, fixed)].T
                    X[:, free] = np.linalg.solve(B, rhs.T).T
                count += len(pats)
                act = X @ A.T
                ok = np.all(X >= inst.lo - tol * scale, axis=1) & np.all(X <= inst.hi + tol * scale, axis=1)
                ok &= np.all(act[:, senses == LE] <= inst.b[senses == LE] + tol * scale, axis=1)
                ok &= np.all(act[:, senses == GE] >= inst.b[senses == GE] - tol * scale, axis=1)
                ok &= np.all(np.abs(act[:, senses == EQ] - inst.b[senses == EQ]) <= tol * scale, axis=1)
                if not ok.any():
                    continue
                vals = X @ inst.c
                cand = np.flatnonzero(ok)
                i = int(cand[np.argmin(vals[cand])])
                if vals[i] < best:
                    best, witness = float(vals[i]), X[i]
    return OracleResult(best, witness, count)
