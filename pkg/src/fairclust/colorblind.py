"""Color-blind center selection (step one of the two-step framework)."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial.distance import cdist

from .core import Dataset, InputError


@dataclass(frozen=True)
class CenterSet:
    centers: tuple[int, ...]
    algo: str
    alpha: float | None  # nominal approximation ratio, None for heuristics

    def __len__(self):
        return len(self.centers)


def _check_k(dataset: Dataset, k: int):
    if not 1 <= k <= dataset.n:
        raise InputError(f"k must be in [1, {dataset.n}], got {k}")


def gonzalez_kcenter(dataset: Dataset, k: int, seed: int | None = None) -> CenterSet:
    """Farthest-first traversal; a 2-approximation for k-center.

    The first center is point 0 unless ``seed`` is given, in which case it is
    drawn uniformly. Ties go to the lowest point id.
    """
    _check_k(dataset, k)
    X = dataset.coords
    first = 0 if seed is None else int(np.random.default_rng(seed).integers(dataset.n))
    centers = [first]
    dmin = cdist(X[[first]], X)[0]
    while len(centers) < k:
        nxt = int(np.argmax(dmin))
        if dmin[nxt] == 0:
            # every point already coincides with a center; pad with unused ids
            nxt = next(i for i in range(dataset.n) if i not in set(centers))
        centers.append(nxt)
        dmin = np.minimum(dmin, cdist(X[[nxt]], X)[0])
    return CenterSet(tuple(centers), "gonzalez", 2.0)


def _d_sampling(X: np.ndarray, k: int, rng: np.random.Generator, power: float) -> list[int]:
    n = X.shape[0]
    centers = [int(rng.integers(n))]
    dmin = cdist(X[[centers[0]]], X)[0]
    while len(centers) < k:
        w = dmin ** power
        total = w.sum()
        if total <= 0:
            rest = [i for i in range(n) if i not in set(centers)]
            nxt = int(rng.choice(rest))
        else:
            nxt = int(rng.choice(n, p=w / total))
        centers.append(nxt)
        dmin = np.minimum(dmin, cdist(X[[nxt]], X)[0])
    return centers


def _kmeans_sse(X: np.ndarray, C: np.ndarray) -> tuple[float, np.ndarray]:
    D = cdist(X, C, "sqeuclidean")
    a = np.argmin(D, axis=1)
    return float(D[np.arange(len(X)), a].sum()), a


def _snap(X: np.ndarray, C: np.ndarray) -> list[int]:
    """Map continuous centers to distinct nearest data points."""
    D = cdist(C, X)
    taken: set[int] = set()
    out = []
    for row in D:
        for j in np.argsort(row, kind="stable"):
            if int(j) not in taken:
                taken.add(int(j))
                out.append(int(j))
                break
    return out


def kmeanspp_lloyd(dataset: Dataset, k: int, seed: int = 0, max_iters: int = 100,
                   history: list | None = None) -> CenterSet:
    """D^2 seeding followed by Lloyd iterations, centers snapped to data points.

    If ``history`` is a list, the continuous k-means cost after seeding and
    after every Lloyd step is appended to it.
    """
    _check_k(dataset, k)
    if max_iters < 0:
        raise InputError("max_iters must be >= 0")
    X = dataset.coords
    rng = np.random.default_rng(seed)
    seeds = _d_sampling(X, k, rng, power=2.0)
    if max_iters == 0:
        return CenterSet(tuple(seeds), "kmeanspp", None)
    C = X[seeds].copy()
    cost, a = _kmeans_sse(X, C)
    if history is not None:
        history.append(cost)
    for _ in range(max_iters):
        for c in range(k):
            members = a == c
            if members.any():
                C[c] = X[members].mean(axis=0)
        cost, new_a = _kmeans_sse(X, C)
        if history is not None:
            history.append(cost)
        if np.array_equal(new_a, a):
            break
        a = new_a
    return CenterSet(tuple(_snap(X, C)), "kmeanspp", None)


def local_search_kmedian(dataset: Dataset, k: int, seed: int = 0, epsilon_ls: float = 1e-3,
                         max_passes: int = 10_000) -> CenterSet:
    """Single-swap local search for k-median, seeded by D-sampling.

    A swap is taken only if it lowers the cost by a factor of at least
    ``1 + epsilon_ls / k``; among qualifying swaps the best one is taken,
    ties to the lowest (removed, added) pair.
    """
    _check_k(dataset, k)
    X = dataset.coords
    n = dataset.n
    rng = np.random.default_rng(seed)
    S = _d_sampling(X, k, rng, power=1.0)
    if k == n:
        return CenterSet(tuple(range(n)), "localsearch", 5.0)
    factor = 1.0 + epsilon_ls / k
    block = max(1, min(n, 2_000_000 // max(n, 1)))
    for _ in range(max_passes):
        D = cdist(X[S], X)  # k x n
        order = np.argsort(D, axis=0, kind="stable")
        near = order[0]
        d1 = D[near, np.arange(n)]
        d2 = D[order[1], np.arange(n)] if k > 1 else np.full(n, np.inf)
        cost = float(d1.sum())
        best = (cost / factor, None, None)
        in_S = np.zeros(n, bool)
        in_S[S] = True
        for start in range(0, n, block):
            cand = np.arange(start, min(n, start + block))
            cand = cand[~in_S[cand]]
            if cand.size == 0:
                continue
            Do = cdist(X[cand], X)  # m x n
            base = np.minimum(Do, d1).sum(axis=1)  # cost if the removed center changed nothing
            # points whose nearest center is removed fall back to min(d_o, d2)
            delta = np.minimum(Do, d2) - np.minimum(Do, d1)
            per_removed = np.zeros((cand.size, k))
            for c in range(k):
                mask = near == c
                if mask.any():
                    per_removed[:, c] = delta[:, mask].sum(axis=1)
            costs = base[:, None] + per_removed
            r, c = np.unravel_index(np.argmin(costs), costs.shape)
            if costs[r, c] < best[0]:
                best = (float(costs[r, c]), c, int(cand[r]))
        if best[1] is None:
            break
        S = list(S)
        S[best[1]] = best[2]
    return CenterSet(tuple(S), "localsearch", 5.0)


ALGORITHMS = {
    "gonzalez": gonzalez_kcenter,
    "kmeanspp": kmeanspp_lloyd,
    "localsearch": local_search_kmedian,
}


def select_centers(dataset: Dataset, k: int, algo: str, seed: int | None = 0) -> CenterSet:
    try:
        fn = ALGORITHMS[algo]
    except KeyError:
        raise InputError(f"unknown color-blind algorithm {algo!r}") from None
    if algo == "gonzalez":
        return fn(dataset, k, seed)
    return fn(dataset, k, 0 if seed is None else seed)
