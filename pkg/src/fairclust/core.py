"""Domain types, metric helpers, objectives and fairness accounting."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from scipy.spatial.distance import cdist

PROB_TOL = 1e-9

KCENTER = math.inf
KMEDIAN = 1.0
KMEANS = 2.0

_OBJECTIVE_NAMES = {"kcenter": KCENTER, "kmedian": KMEDIAN, "kmeans": KMEANS}


class FairClustError(Exception):
    """Base class for errors raised by this package."""


class InputError(FairClustError, ValueError):
    pass


class ContractError(FairClustError, RuntimeError):
    pass


class FairnessInfeasible(FairClustError):
    pass


class SolverError(FairClustError, RuntimeError):
    pass


def _frozen(a: np.ndarray) -> np.ndarray:
    a = np.array(a, copy=True)
    a.setflags(write=False)
    return a


@dataclass(frozen=True)
class ColorModel:
    """How group membership is attached to points.

    ``kind`` is one of ``"deterministic"``, ``"probabilistic"`` or ``"metric"``.
    Metric membership carries a single pseudo-color named ``"value"`` and the
    maximum value ``R``.
    """

    kind: str
    colors: tuple[str, ...]
    R: int | None = None

    def __post_init__(self):
        if self.kind not in ("deterministic", "probabilistic", "metric"):
            raise InputError(f"unknown color model {self.kind!r}")
        if not self.colors:
            raise InputError("color set must be nonempty")
        if self.kind == "metric":
            if self.R is None or self.R < 1:
                raise InputError("metric membership needs R >= 1")
            if self.colors != ("value",):
                object.__setattr__(self, "colors", ("value",))

    @property
    def is_metric(self) -> bool:
        return self.kind == "metric"


@dataclass(frozen=True)
class Point:
    id: int
    coords: np.ndarray
    color: str | None = None
    color_probs: Mapping[str, float] | None = None
    value: int | None = None


@dataclass(frozen=True, eq=False)
class Dataset:
    """Points in Euclidean space together with their color information.

    Exactly one of ``labels`` (integer color index per point), ``probs``
    (``n x |colors|`` marginals) or ``values`` (integers in ``[0, R]``) is set,
    matching ``model.kind``.
    """

    coords: np.ndarray
    model: ColorModel
    labels: np.ndarray | None = None
    probs: np.ndarray | None = None
    values: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        coords = np.asarray(self.coords, dtype=float)
        if coords.ndim == 1:
            coords = coords[:, None]
        if coords.ndim != 2 or coords.shape[0] == 0 or coords.shape[1] == 0:
            raise InputError("coordinates must be a nonempty n x d matrix")
        if not np.all(np.isfinite(coords)):
            raise InputError("coordinates must be finite")
        object.__setattr__(self, "coords", _frozen(coords))
        n = coords.shape[0]
        kind = self.model.kind
        H = len(self.model.colors)
        if kind == "deterministic":
            if self.labels is None:
                raise InputError("deterministic model needs labels")
            labels = np.asarray(self.labels, dtype=int)
            if labels.shape != (n,) or labels.min() < 0 or labels.max() >= H:
                raise InputError("labels must index the color set, one per point")
            object.__setattr__(self, "labels", _frozen(labels))
        elif kind == "probabilistic":
            if self.probs is None:
                raise InputError("probabilistic model needs probs")
            probs = np.asarray(self.probs, dtype=float)
            if probs.shape != (n, H):
                raise InputError(f"probs must have shape {(n, H)}, got {probs.shape}")
            if np.any(probs < -PROB_TOL) or np.any(probs > 1 + PROB_TOL):
                raise InputError("probabilities must lie in [0, 1]")
            sums = probs.sum(axis=1)
            if np.any(np.abs(sums - 1.0) > PROB_TOL):
                bad = int(np.argmax(np.abs(sums - 1.0)))
                raise InputError(f"marginals of point {bad} sum to {sums[bad]!r}, not 1")
            probs = np.clip(probs, 0.0, 1.0)
            probs = probs / probs.sum(axis=1, keepdims=True)
            object.__setattr__(self, "probs", _frozen(probs))
        else:
            if self.values is None:
                raise InputError("metric model needs values")
            values = np.asarray(self.values)
            if values.shape != (n,) or not np.all(values == np.round(values)):
                raise InputError("values must be one integer per point")
            values = values.astype(np.int64)
            if values.min() < 0 or values.max() > self.model.R:
                raise InputError(f"values must lie in [0, {self.model.R}]")
            object.__setattr__(self, "values", _frozen(values))

    @property
    def n(self) -> int:
        return self.coords.shape[0]

    @property
    def dim(self) -> int:
        return self.coords.shape[1]

    @property
    def colors(self) -> tuple[str, ...]:
        return self.model.colors

    def mass(self) -> np.ndarray:
        """Per-point color mass, shape ``(n, H)``.

        One-hot rows for deterministic colors, the marginals for probabilistic
        colors and the raw value (``H = 1``) for metric membership.
        """
        if self.model.kind == "deterministic":
            return np.eye(len(self.colors))[self.labels]
        if self.model.kind == "probabilistic":
            return np.array(self.probs)
        return np.asarray(self.values, dtype=float)[:, None]

    def point(self, i: int) -> Point:
        kind = self.model.kind
        color = probs = value = None
        if kind == "deterministic":
            color = self.colors[self.labels[i]]
        elif kind == "probabilistic":
            probs = dict(zip(self.colors, map(float, self.probs[i])))
        else:
            value = int(self.values[i])
        return Point(i, self.coords[i], color, probs, value)

    def subset(self, idx: Sequence[int]) -> Dataset:
        idx = np.asarray(idx, dtype=int)
        return Dataset(
            self.coords[idx],
            self.model,
            labels=None if self.labels is None else self.labels[idx],
            probs=None if self.probs is None else self.probs[idx],
            values=None if self.values is None else self.values[idx],
            name=self.name,
        )

    def with_probs(self, probs: np.ndarray, colors: Sequence[str] | None = None) -> Dataset:
        return Dataset(self.coords, ColorModel("probabilistic", tuple(colors or self.colors)),
                       probs=probs, name=self.name)

    def with_labels(self, labels: np.ndarray, colors: Sequence[str] | None = None) -> Dataset:
        return Dataset(self.coords, ColorModel("deterministic", tuple(colors or self.colors)),
                       labels=labels, name=self.name)


@dataclass(frozen=True)
class FairnessSpec:
    """Per-color proportion bounds (or a scalar window for metric membership).

    For metric membership the single key ``"value"`` holds ``l`` and ``u``.
    """

    lower: Mapping[str, float]
    upper: Mapping[str, float]
    delta: float | None = None

    def __post_init__(self):
        if set(self.lower) != set(self.upper):
            raise InputError("lower and upper bounds must name the same colors")
        for h in self.lower:
            l, u = self.lower[h], self.upper[h]
            if not (0.0 <= l <= u):
                raise InputError(f"bounds for {h!r} must satisfy 0 <= l <= u, got [{l}, {u}]")

    @classmethod
    def metric(cls, l: float, u: float, delta: float | None = None) -> FairnessSpec:
        return cls({"value": l}, {"value": u}, delta)

    @classmethod
    def vacuous(cls, model: ColorModel) -> FairnessSpec:
        if model.is_metric:
            return cls.metric(0.0, float(model.R))
        return cls({h: 0.0 for h in model.colors}, {h: 1.0 for h in model.colors})

    def arrays(self, model: ColorModel) -> tuple[np.ndarray, np.ndarray]:
        """Bounds as arrays aligned with ``model.colors``; checks the shape matches."""
        if set(self.lower) != set(model.colors):
            raise InputError(
                f"fairness bounds name {sorted(self.lower)} but the color model has {list(model.colors)}")
        lo = np.array([self.lower[h] for h in model.colors], dtype=float)
        hi = np.array([self.upper[h] for h in model.colors], dtype=float)
        if model.is_metric:
            if hi[0] > model.R:
                raise InputError(f"metric upper bound {hi[0]} exceeds R = {model.R}")
        elif np.any(hi > 1.0):
            raise InputError("proportion upper bounds must be <= 1")
        return lo, hi


@dataclass(frozen=True)
class ObjectiveSpec:
    p: float
    k: int

    def __post_init__(self):
        if self.p not in (KCENTER, KMEDIAN, KMEANS):
            raise InputError("p must be inf (k-center), 1 (k-median) or 2 (k-means)")
        if self.k < 1:
            raise InputError("k must be >= 1")

    @classmethod
    def from_name(cls, name: str, k: int) -> ObjectiveSpec:
        try:
            return cls(_OBJECTIVE_NAMES[name], k)
        except KeyError:
            raise InputError(f"unknown objective {name!r}") from None

    @property
    def name(self) -> str:
        return {KCENTER: "kcenter", KMEDIAN: "kmedian", KMEANS: "kmeans"}[self.p]


@dataclass(frozen=True, eq=False)
class Solution:
    centers: tuple[int, ...]
    assignment: np.ndarray
    cost: float
    meta: dict = field(default_factory=dict)

    @classmethod
    def build(cls, dataset: Dataset, centers: Sequence[int], assignment: Sequence[int],
              objective: ObjectiveSpec, **meta) -> Solution:
        assignment = _frozen(np.asarray(assignment, dtype=int))
        used = sorted(set(assignment.tolist()))
        cset = [int(c) for c in centers]
        if not set(used) <= set(cset):
            raise ContractError("assignment uses a center outside the center set")
        sol = cls(tuple(c for c in cset if c in set(used)), assignment, 0.0, dict(meta))
        object.__setattr__(sol, "cost", evaluate_cost(dataset, sol, objective))
        return sol

    def clusters(self) -> dict[int, np.ndarray]:
        return {c: np.flatnonzero(self.assignment == c) for c in self.centers}


@dataclass(frozen=True)
class ViolationReport:
    per_cluster_color_mass: dict[tuple[int, str], float]
    gamma: float
    normalized_gamma: float
    cluster_sizes: dict[int, int] = field(default_factory=dict)


def normalize_features(raw) -> np.ndarray:
    """Min-max scale each column to ``[0, 1]``; constant columns become zeros."""
    a = np.asarray(raw, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if a.size == 0 or a.shape[0] == 0:
        raise InputError("cannot normalize an empty dataset")
    if not np.all(np.isfinite(a)):
        raise InputError("feature matrix contains non-finite values")
    lo = a.min(axis=0)
    span = a.max(axis=0) - lo
    out = np.zeros_like(a)
    ok = span > 0
    out[:, ok] = (a[:, ok] - lo[ok]) / span[ok]
    return out


def distance(a, b) -> float:
    """Euclidean distance between two points (``Point`` or coordinate vectors)."""
    x = np.atleast_1d(np.asarray(a.coords if isinstance(a, Point) else a, dtype=float))
    y = np.atleast_1d(np.asarray(b.coords if isinstance(b, Point) else b, dtype=float))
    if x.shape != y.shape:
        raise InputError(f"dimension mismatch: {x.shape} vs {y.shape}")
    return float(np.sqrt(np.sum((x - y) ** 2)))


def center_distances(dataset: Dataset, centers: Sequence[int]) -> np.ndarray:
    """Distances ``D[c, j]`` from each center (by position in ``centers``) to every point."""
    idx = np.asarray(centers, dtype=int)
    return cdist(dataset.coords[idx], dataset.coords)


def point_center_distances(dataset: Dataset, solution: Solution) -> np.ndarray:
    a = np.asarray(solution.assignment)
    if a.shape != (dataset.n,):
        raise ContractError("solution must assign every point")
    if np.any(a < 0) or np.any(a >= dataset.n):
        raise ContractError("assignment contains an unassigned point")
    return np.sqrt(np.sum((dataset.coords - dataset.coords[a]) ** 2, axis=1))


def evaluate_cost(dataset: Dataset, solution: Solution, objective: ObjectiveSpec | float) -> float:
    """The l_p clustering cost ``(sum_v d(v, phi(v))^p)^(1/p)``; max distance for p = inf."""
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    d = point_center_distances(dataset, solution)
    if math.isinf(p):
        return float(d.max())
    return float(np.sum(d ** p) ** (1.0 / p))


def table_cost(dataset: Dataset, solution: Solution, objective: ObjectiveSpec | float) -> float:
    """Cost in the convention of experiment tables: sum of squares for k-means."""
    p = objective.p if isinstance(objective, ObjectiveSpec) else float(objective)
    d = point_center_distances(dataset, solution)
    if math.isinf(p):
        return float(d.max())
    return float(np.sum(d ** p))


def color_mass(dataset: Dataset, solution: Solution) -> dict[int, dict[str, float]]:
    """Sum of color marginals (or values) over each cluster."""
    mass = dataset.mass()
    a = np.asarray(solution.assignment)
    out = {}
    for c in solution.centers:
        tot = mass[a == c].sum(axis=0)
        out[c] = {h: float(tot[t]) for t, h in enumerate(dataset.colors)}
    return out


def max_additive_violation(dataset: Dataset, solution: Solution, spec: FairnessSpec,
                           normalize: str | None = None) -> ViolationReport:
    """Smallest gamma for which the solution is gamma-violating.

    ``normalize`` selects ``normalized_gamma``: ``"R"`` divides by the metric
    range, ``"size"`` takes the max of per-cluster violation over cluster size.
    The default is ``"R"`` for metric membership and no normalization otherwise.
    """
    lo, hi = spec.arrays(dataset.model)
    mass = dataset.mass()
    a = np.asarray(solution.assignment)
    per = {}
    sizes = {}
    gamma = 0.0
    by_size = 0.0
    for c in solution.centers:
        members = a == c
        size = int(members.sum())
        sizes[c] = size
        tot = mass[members].sum(axis=0)
        viol = np.maximum.reduce([lo * size - tot, tot - hi * size, np.zeros_like(tot)])
        for t, h in enumerate(dataset.colors):
            per[(c, h)] = float(tot[t])
        g = float(viol.max())
        gamma = max(gamma, g)
        if size:
            by_size = max(by_size, g / size)
    if normalize is None:
        normalize = "R" if dataset.model.is_metric else "none"
    if normalize == "R":
        norm = gamma / dataset.model.R if dataset.model.is_metric else gamma
    elif normalize == "size":
        norm = by_size
    elif normalize == "none":
        norm = gamma
    else:
        raise InputError(f"unknown normalization {normalize!r}")
    return ViolationReport(per, gamma, norm, sizes)


def price_of_fairness(fair_cost: float, colorblind_cost: float) -> float:
    """Fair cost over color-blind cost; ``nan`` flags the undefined 0-denominator case."""
    if colorblind_cost < 0 or fair_cost < 0:
        raise InputError("costs must be nonnegative")
    if colorblind_cost == 0:
        return 1.0 if fair_cost == 0 else math.nan
    return fair_cost / colorblind_cost


def nearest_assignment(dataset: Dataset, centers: Sequence[int]) -> np.ndarray:
    """Assign every point to its closest center, ties to the lowest center id."""
    centers = np.asarray(sorted(int(c) for c in centers), dtype=int)
    D = center_distances(dataset, centers)
    return centers[np.argmin(D, axis=0)]


def load_csv(path: str | Path, schema: Mapping | str | Path, normalize: bool = True) -> Dataset:
    """Read a CSV file described by a JSON schema.

    Schema keys: ``coords`` (list of numeric columns), and one of ``color``
    (categorical column, optional ``color_map`` merging raw values),
    ``probabilities`` (one column per color) or ``value`` (integer column for
    metric membership). Optional ``sep``, ``name``, ``columns`` (names for
    a file without a header row) and ``skiprows``.
    """
    import pandas as pd

    if not isinstance(schema, Mapping):
        schema = json.loads(Path(schema).read_text())
    names = schema.get("columns")
    df = pd.read_csv(path, sep=schema.get("sep", ","), skipinitialspace=True,
                     header=None if names else "infer", names=names,
                     skiprows=schema.get("skiprows"), na_values=["?"])
    df = df.dropna(subset=list(schema["coords"]))
    if df.empty:
        raise InputError(f"{path} has no rows")
    missing = [c for c in schema["coords"] if c not in df.columns]
    if missing:
        raise InputError(f"columns {missing} not found in {path}")
    raw = df[list(schema["coords"])].to_numpy(dtype=float)
    coords = normalize_features(raw) if normalize else raw
    name = schema.get("name", Path(path).stem)
    if "color" in schema:
        col = df[schema["color"]].astype(str).str.strip()
        cmap = schema.get("color_map")
        if cmap:
            col = col.map(lambda v: cmap.get(v, v))
        colors = tuple(schema.get("colors") or sorted(col.unique()))
        index = {h: t for t, h in enumerate(colors)}
        if not set(col) <= set(index):
            raise InputError(f"color values {sorted(set(col) - set(index))} not in schema colors")
        return Dataset(coords, ColorModel("deterministic", colors),
                       labels=col.map(index).to_numpy(), name=name)
    if "probabilities" in schema:
        cols = list(schema["probabilities"])
        return Dataset(coords, ColorModel("probabilistic", tuple(cols)),
                       probs=df[cols].to_numpy(dtype=float), name=name)
    if "value" in schema:
        from .harness import preprocess_metric_membership

        if schema["value"] in schema["coords"]:
            raise InputError("the value column must not also be a coordinate")
        return preprocess_metric_membership(coords, df[schema["value"]].to_numpy(), name)
    raise InputError("schema must declare one of color, probabilities or value")
