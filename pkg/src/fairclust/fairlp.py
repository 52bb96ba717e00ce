"""The fair-assignment LP for a fixed center set, and the k-center radius search."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import (ContractError, Dataset, FairnessInfeasible, FairnessSpec, InputError,
                   ObjectiveSpec, center_distances)
from .lpsolve import EQ, GE, LE, HighsSession, LpInstance, solve_lp

log = logging.getLogger(__name__)

# LPs with more variables than this are solved by column generation over the
# nearest centers of every point (full pricing against the duals each round).
COLGEN_MIN_VARS = 20_000


@dataclass(eq=False)
class FractionalAssignment:
    """LP assignment ``x[c, j]`` of point ``j`` to ``centers[c]``."""

    centers: tuple[int, ...]
    x: np.ndarray
    lp_cost: float  # the linear LP objective (sum of d^p x)
    lp_objective: float  # same, in the l_p-norm convention of evaluate_cost
    p: float = 1.0
    meta: dict = field(default_factory=dict)

    def items(self):
        for c, j in zip(*np.nonzero(self.x)):
            yield (self.centers[c], int(j)), float(self.x[c, j])

    def as_dict(self) -> dict[tuple[int, int], float]:
        return dict(self.items())

    def cluster_sizes(self) -> np.ndarray:
        return self.x.sum(axis=1)


@dataclass(eq=False)
class RadiusSearchResult:
    radius: float
    assignment: FractionalAssignment
    probes: list[tuple[float, bool]] = field(default_factory=list)


def _cost_matrix(D: np.ndarray, p: float) -> np.ndarray:
    if math.isinf(p):
        return np.zeros_like(D)
    return D ** p


def build_fair_assignment_lp(dataset: Dataset, centers: Sequence[int], spec: FairnessSpec,
                             objective: ObjectiveSpec | float, *, columns: np.ndarray | None = None,
                             min_size: float | None = None, mass: np.ndarray | None = None,
                             D: np.ndarray | None = None) -> LpInstance:
    """Assemble the fair-assignment LP.

    Rows, in order: one equality per point (its assignment sums to one), then
    for every center and color the pair ``sum_j (m_jh - u_h) x_ij <= 0`` and
    ``sum_j (l_h - m_jh) x_ij <= 0``, then optionally ``sum_j x_ij >= min_size``
    per center. ``columns`` is a boolean ``(k, n)`` mask of admissible pairs;
    ``mass`` overrides the dataset's color mass (used for sampled colors).
    """
    centers = tuple(int(c) for c in centers)
    if not centers:
        raise InputError("need at least one center")
    lo, hi = spec.arrays(dataset.model)
    M = dataset.mass() if mass is None else np.asarray(mass, dtype=float)
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    n, k, H = dataset.n, len(centers), M.shape[1]
    if D is None:
        D = center_distances(dataset, centers)
    if columns is None:
        columns = np.ones((k, n), dtype=bool)
    I, J = np.nonzero(columns)
    nv = I.size
    cost = _cost_matrix(D, p)[I, J]
    var = np.arange(nv)
    rows = [J]
    cols = [var]
    vals = [np.ones(nv)]
    senses = [EQ] * n
    b = [np.ones(n)]
    base = n
    for h in range(H):
        rows += [base + 2 * (I * H + h), base + 2 * (I * H + h) + 1]
        cols += [var, var]
        vals += [M[J, h] - hi[h], lo[h] - M[J, h]]
    senses += [LE] * (2 * k * H)
    b.append(np.zeros(2 * k * H))
    nrows = n + 2 * k * H
    if min_size is not None:
        rows.append(nrows + I)
        cols.append(var)
        vals.append(np.ones(nv))
        senses += [GE] * k
        b.append(np.full(k, float(min_size)))
        nrows += k
    A = sp.csr_matrix((np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))),
                      shape=(nrows, nv))
    labels = list(zip((centers[i] for i in I), J.tolist()))
    return LpInstance(cost, A, senses, np.concatenate(b), np.zeros(nv), np.ones(nv), labels)


def _global_check(M: np.ndarray, lo: np.ndarray, hi: np.ndarray, colors) -> str:
    f = M.mean(axis=0)
    bad = [f"{h}: global proportion {f[t]:.4g} outside [{lo[t]:.4g}, {hi[t]:.4g}]"
           for t, h in enumerate(colors) if not (lo[t] - 1e-9 <= f[t] <= hi[t] + 1e-9)]
    return "; ".join(bad)


def _infeasible(dataset, M, spec, extra="") -> FairnessInfeasible:
    lo, hi = spec.arrays(dataset.model)
    why = _global_check(M, lo, hi, dataset.colors)
    msg = "fair assignment LP is infeasible"
    if why:
        msg += f" ({why})"
    if extra:
        msg += f" ({extra})"
    return FairnessInfeasible(msg)


def _to_assignment(inst: LpInstance, sol, centers, n, p) -> np.ndarray:
    x = np.zeros((len(centers), n))
    pos = {c: t for t, c in enumerate(centers)}
    ci = np.fromiter((pos[c] for c, _ in inst.labels), dtype=int, count=len(inst.labels))
    pj = np.fromiter((j for _, j in inst.labels), dtype=int, count=len(inst.labels))
    x[ci, pj] = sol.values
    return x


def _solve_columns(dataset, centers, spec, p, columns, min_size, M, D, method, session=None):
    inst = build_fair_assignment_lp(dataset, centers, spec, p, columns=columns,
                                    min_size=min_size, mass=M, D=D)
    return inst, solve_lp(inst, method=method, session=session)


def _reduced_costs(dataset, centers, spec, p, min_size, M, D, duals) -> np.ndarray:
    """Reduced cost of every (center, point) pair against row duals of the restricted LP."""
    lo, hi = spec.arrays(dataset.model)
    n, k, H = dataset.n, len(centers), M.shape[1]
    y_assign = duals[:n]
    fair = duals[n:n + 2 * k * H].reshape(k, H, 2)
    rc = _cost_matrix(D, p) - y_assign[None, :]
    # coefficient of x_ij in row (i,h,0) is M_jh - u_h and in (i,h,1) is l_h - M_jh
    rc -= fair[:, :, 0] @ M.T - (fair[:, :, 0] @ hi)[:, None]
    rc -= (fair[:, :, 1] @ lo)[:, None] - fair[:, :, 1] @ M.T
    if min_size is not None:
        rc -= duals[n + 2 * k * H:][:, None]
    return rc


def solve_fair_assignment(dataset: Dataset, centers: Sequence[int], spec: FairnessSpec,
                          objective: ObjectiveSpec | float, *, min_size: float | None = None,
                          mass: np.ndarray | None = None, method: str = "auto",
                          colgen: bool | None = None,
                          session: HighsSession | None = None) -> FractionalAssignment:
    """Solve the fair-assignment LP and map the solution back to ``x[c, j]``.

    A HiGHS ``session`` warm-starts repeated solves of same-shaped LPs and
    turns column generation off (its restricted LPs change shape every round).
    Raises ``FairnessInfeasible`` when no fractional fair assignment exists.
    """
    centers = tuple(int(c) for c in centers)
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    M = dataset.mass() if mass is None else np.asarray(mass, dtype=float)
    D = center_distances(dataset, centers)
    n, k = dataset.n, len(centers)
    if colgen is None:
        colgen = n * k >= COLGEN_MIN_VARS and method != "simplex" and k > 2 and session is None
    rounds = 0
    if colgen:
        order = np.argsort(D, axis=0, kind="stable")
        columns = np.zeros((k, n), dtype=bool)
        width = 2
        columns[order[:width], np.arange(n)] = True
        while True:
            rounds += 1
            inst, sol = _solve_columns(dataset, centers, spec, p, columns, min_size, M, D, "highs")
            if not sol.optimal:
                if width >= k:
                    raise _infeasible(dataset, M, spec)
                width = min(k, width + 1)
                columns[order[:width], np.arange(n)] = True
                continue
            rc = _reduced_costs(dataset, centers, spec, p, min_size, M, D, sol.duals)
            scale = max(1.0, float(np.abs(rc).max()))
            add = (~columns) & (rc < -1e-9 * scale)
            if not add.any():
                break
            columns |= add
    else:
        inst, sol = _solve_columns(dataset, centers, spec, p, None, min_size, M, D, method, session)
        if not sol.optimal:
            raise _infeasible(dataset, M, spec)
        rounds = 1
    x = _to_assignment(inst, sol, centers, n, p)
    lp_cost = float(np.sum(_cost_matrix(D, p) * x))
    if math.isinf(p):
        support = x > 1e-9
        lp_obj = float(D[support].max()) if support.any() else 0.0
    else:
        lp_obj = lp_cost ** (1.0 / p)
    return FractionalAssignment(centers, x, lp_cost, lp_obj, p,
                                {"lp_method": sol.method, "lp_rounds": rounds,
                                 "lp_iterations": sol.iterations})


def kcenter_radius_search(dataset: Dataset, centers: Sequence[int], spec: FairnessSpec, *,
                          min_size: float | None = None, mass: np.ndarray | None = None,
                          method: str = "auto") -> RadiusSearchResult:
    """Smallest center-point distance ``w`` whose radius-restricted LP is feasible.

    Probes are solved with a warm-started HiGHS session unless ``method`` is
    ``"simplex"``.
    """
    centers = tuple(int(c) for c in centers)
    D = center_distances(dataset, centers)
    M = dataset.mass() if mass is None else np.asarray(mass, dtype=float)
    cand = np.unique(D)
    floor = D.min(axis=0).max()
    cand = cand[cand >= floor]
    probes: list[tuple[float, bool]] = []
    # one LP for every probe: pairs beyond w get upper bound 0, so the shape
    # never changes and a HiGHS session can warm-start the whole search
    inst = build_fair_assignment_lp(dataset, centers, spec, 1.0, min_size=min_size, mass=M, D=D)
    inst.c = np.zeros_like(inst.c)
    pos = {c: t for t, c in enumerate(centers)}
    pair_d = np.array([D[pos[c], j] for c, j in inst.labels])
    session = HighsSession() if method in ("highs", "auto") else None

    def feasible(w):
        inst.hi = (pair_d <= w).astype(float)
        sol = solve_lp(inst, method=method, session=session)
        ok = sol.optimal
        for w_prev, ok_prev in probes:
            if (w_prev <= w and ok_prev and not ok) or (w_prev >= w and ok and not ok_prev):
                raise ContractError(f"radius feasibility is not monotone at {w_prev} vs {w}")
        probes.append((float(w), ok))
        return sol if ok else None

    top = feasible(cand[-1])
    if top is None:
        raise _infeasible(dataset, M, spec, "even with every center-point pair allowed")
    lo_i, hi_i, best = 0, len(cand) - 1, top
    while lo_i < hi_i:
        mid = (lo_i + hi_i) // 2
        got = feasible(cand[mid])
        if got is None:
            lo_i = mid + 1
        else:
            hi_i, best = mid, got
    w = float(cand[hi_i])
    x = _to_assignment(inst, best, centers, dataset.n, math.inf)
    fa = FractionalAssignment(centers, x, 0.0, w, math.inf,
                              {"lp_method": best.method, "radius": w})
    return RadiusSearchResult(w, fa, probes)
