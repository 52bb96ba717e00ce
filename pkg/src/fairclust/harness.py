"""Experiment sweeps: dataset preparation, baselines, and CSV/JSON reports."""

from __future__ import annotations

import csv
import json
import logging
import math
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .colorblind import select_centers
from .core import (ColorModel, Dataset, FairClustError, FairnessSpec, InputError, ObjectiveSpec,
                   Solution, load_csv, max_additive_violation, price_of_fairness, table_cost)
from .datasets import SYNTHETIC
from .lpsolve import HighsSession
from .multicolor import large_cluster_fair, relaxed_satisfaction
from .pipeline import DEFAULT_ALGO, colorblind_solution, fair_clustering

log = logging.getLogger(__name__)

_session: HighsSession | None = None


def _warm_session() -> HighsSession:
    # one per process; consecutive large-cluster trials share LP shapes
    global _session
    if _session is None:
        _session = HighsSession()
    return _session


def derive_bounds(dataset: Dataset, delta_bounds: float = 0.2) -> FairnessSpec:
    """Bounds ``l = (1 - delta) f`` and ``u = f / (1 - delta)`` around the global proportions.

    ``f`` is the mean color mass per point (the mean value for metric
    membership). Upper bounds are clamped to 1 for colors and to ``R`` for
    metric membership.
    """
    if not 0.0 <= delta_bounds < 1.0:
        raise InputError("delta_bounds must lie in [0, 1)")
    f = dataset.mass().mean(axis=0)
    lo = (1.0 - delta_bounds) * f
    hi = f / (1.0 - delta_bounds)
    cap = float(dataset.model.R) if dataset.model.is_metric else 1.0
    hi = np.minimum(hi, cap)
    names = dataset.colors
    return FairnessSpec({h: float(lo[t]) for t, h in enumerate(names)},
                        {h: float(hi[t]) for t, h in enumerate(names)}, delta_bounds)


def perturb_labels(dataset: Dataset, p_acc: float) -> Dataset:
    """Turn two deterministic colors into marginals ``p_acc`` / ``1 - p_acc``."""
    if dataset.model.kind != "deterministic" or len(dataset.colors) != 2:
        raise InputError("label perturbation needs exactly two deterministic colors")
    if not 0.5 <= p_acc <= 1.0:
        raise InputError("p_acc must lie in [0.5, 1]")
    P = np.full((dataset.n, 2), 1.0 - p_acc)
    P[np.arange(dataset.n), dataset.labels] = p_acc
    return dataset.with_probs(P)


def threshold_baseline(dataset: Dataset) -> Dataset:
    """Give each point its likelier color; an exact 0.5 goes to color index 0."""
    if dataset.model.kind != "probabilistic" or len(dataset.colors) != 2:
        raise InputError("thresholding needs two probabilistic colors")
    labels = np.where(dataset.probs[:, 0] >= 0.5, 0, 1)
    return dataset.with_labels(labels)


def synthetic_noisy_multicolor(dataset: Dataset, accuracy: float) -> Dataset:
    """Marginals of a labeler that is right with probability ``accuracy``.

    The remaining mass is spread evenly over the other colors.
    """
    if dataset.model.kind != "deterministic":
        raise InputError("noisy labeling needs deterministic colors")
    H = len(dataset.colors)
    if H < 2 or not 1.0 / H < accuracy <= 1.0:
        raise InputError(f"accuracy must lie in (1/{H}, 1]")
    P = np.full((dataset.n, H), (1.0 - accuracy) / (H - 1))
    P[np.arange(dataset.n), dataset.labels] = accuracy
    return dataset.with_probs(P)


def preprocess_metric_membership(coords, values, name: str = "dataset") -> Dataset:
    """Shift integer values so the minimum is 0 and build a metric-membership dataset.

    ``coords`` must not contain the value column.
    """
    values = np.asarray(values)
    if values.ndim != 1 or not np.all(values == np.round(values)):
        raise InputError("metric membership needs one integer value per point")
    shifted = (values - values.min()).astype(np.int64)
    R = int(shifted.max())
    if R == 0:
        raise InputError("all values are equal, so there is nothing to balance")
    return Dataset(coords, ColorModel("metric", ("value",), R=R), values=shifted, name=name)


@dataclass(frozen=True)
class ExperimentConfig:
    """One sweep over ``k`` and seeds.

    ``dataset`` is a CSV path (with ``schema``) or the name of a synthetic
    generator. ``p_acc`` perturbs two colors into marginals, ``accuracy``
    applies the noisy multi-color labeler. A ``cluster_lb`` switches to the
    large-cluster algorithm. ``threshold`` adds thresholding-baseline rows.
    """

    dataset: str = "bank_like"
    schema: str | None = None
    objective: str = "kmeans"
    k_min: int = 2
    k_max: int = 10
    delta_bounds: float = 0.2
    p_acc: float | None = None
    accuracy: float | None = None
    epsilon_relax: float = 0.1
    cluster_lb: int | None = None
    threshold: bool = False
    colorblind: str | None = None
    seeds: tuple[int, ...] = tuple(range(10))
    subsample: int | None = 1000
    data_seed: int = 0
    out: str | None = None
    workers: int = 1

    def __post_init__(self):
        if self.k_min < 1 or self.k_max < self.k_min:
            raise InputError("k range must be nonempty with k_min >= 1")
        if self.subsample is not None and self.subsample < 1:
            raise InputError("subsample must be positive")
        if not self.seeds:
            raise InputError("at least one seed is required")
        ObjectiveSpec.from_name(self.objective, self.k_min)
        object.__setattr__(self, "seeds", tuple(int(s) for s in self.seeds))

    @classmethod
    def from_dict(cls, d: Mapping) -> ExperimentConfig:
        known = {f.name for f in fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise InputError(f"unknown config keys {sorted(unknown)}")
        return cls(**d)

    @classmethod
    def from_json(cls, path: str | Path) -> ExperimentConfig:
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class ReportRow:
    dataset: str
    objective: str
    k: int
    seed: int
    method: str  # "fair", "threshold" or "large_cluster"
    fair_cost: float = math.nan
    colorblind_cost: float = math.nan
    pof: float = math.nan
    gamma: float = math.nan
    normalized_gamma: float = math.nan
    colorblind_gamma: float = math.nan
    colorblind_normalized_gamma: float = math.nan
    lp_cost: float = math.nan
    cluster_lb: int | None = None
    relaxed_ok: bool | None = None
    runtime: float = 0.0
    error: str = ""
    centers: list = field(default_factory=list)
    assignment: list = field(default_factory=list)

    CSV_FIELDS = ("dataset", "objective", "k", "seed", "method", "fair_cost", "colorblind_cost",
                  "pof", "gamma", "normalized_gamma", "colorblind_gamma",
                  "colorblind_normalized_gamma", "lp_cost", "cluster_lb", "relaxed_ok",
                  "runtime", "error")


def load_dataset(config: ExperimentConfig) -> Dataset:
    """The full dataset named by the config, with the configured color model applied."""
    if config.dataset in SYNTHETIC and config.schema is None:
        ds = SYNTHETIC[config.dataset](seed=config.data_seed)
    else:
        if config.schema is None:
            raise InputError(f"{config.dataset!r} is not a synthetic generator and no schema was given")
        ds = load_csv(config.dataset, config.schema)
    if config.p_acc is not None:
        ds = perturb_labels(ds, config.p_acc)
    if config.accuracy is not None:
        ds = synthetic_noisy_multicolor(ds, config.accuracy)
    return ds


def _normalization(dataset: Dataset, large: bool) -> str:
    if large:
        return "size"
    return "R" if dataset.model.is_metric else "none"


def _fill_metrics(row: ReportRow, ds: Dataset, spec: FairnessSpec, obj: ObjectiveSpec,
                  fair: Solution, cb: Solution, norm: str) -> None:
    row.fair_cost = table_cost(ds, fair, obj)
    row.colorblind_cost = table_cost(ds, cb, obj)
    row.pof = price_of_fairness(row.fair_cost, row.colorblind_cost)
    v = max_additive_violation(ds, fair, spec, norm)
    row.gamma, row.normalized_gamma = v.gamma, v.normalized_gamma
    v = max_additive_violation(ds, cb, spec, norm)
    row.colorblind_gamma, row.colorblind_normalized_gamma = v.gamma, v.normalized_gamma
    row.centers = [int(c) for c in fair.centers]
    row.assignment = fair.assignment.tolist()


def run_single(config: ExperimentConfig, dataset: Dataset, k: int, seed: int) -> list[ReportRow]:
    """All rows for one ``(k, seed)``; failures are recorded, not raised."""
    obj = ObjectiveSpec.from_name(config.objective, k)
    base = dict(dataset=dataset.name, objective=obj.name, k=k, seed=seed)
    rng = np.random.default_rng(seed)
    if config.subsample is not None and config.subsample < dataset.n:
        ds = dataset.subset(np.sort(rng.choice(dataset.n, config.subsample, replace=False)))
    else:
        ds = dataset
    rows = []
    t0 = time.perf_counter()
    try:
        spec = derive_bounds(ds, config.delta_bounds)
        algo = config.colorblind or DEFAULT_ALGO[obj.name]
        centers = select_centers(ds, k, algo, seed)
        cb = colorblind_solution(ds, centers.centers, obj)
    except FairClustError as e:
        return [ReportRow(**base, method="fair", error=f"{type(e).__name__}: {e}",
                          runtime=time.perf_counter() - t0)]
    setup = time.perf_counter() - t0

    def attempt(method, fn):
        row = ReportRow(**base, method=method, cluster_lb=config.cluster_lb)
        t = time.perf_counter()
        try:
            fn(row)
        except FairClustError as e:
            row.error = f"{type(e).__name__}: {e}"
            log.warning("%s k=%d seed=%d failed: %s", method, k, seed, row.error)
        row.runtime = setup + time.perf_counter() - t
        rows.append(row)

    if config.cluster_lb is not None:
        def large(row):
            res = large_cluster_fair(ds, obj, spec, config.cluster_lb, config.epsilon_relax, seed,
                                     centers=centers.centers, session=_warm_session())
            _fill_metrics(row, ds, spec, obj, res.solution, cb, "size")
            row.lp_cost = res.solution.meta.get("lp_cost", math.nan)
            row.relaxed_ok = relaxed_satisfaction(ds, res.solution, res.relaxed,
                                                  config.epsilon_relax)[0]
        attempt("large_cluster", large)
        return rows

    norm = _normalization(ds, False)

    def fair(row):
        res = fair_clustering(ds, obj, spec, centers=centers)
        _fill_metrics(row, ds, spec, obj, res.fair, cb, norm)
        row.lp_cost = res.fractional.lp_cost

    attempt("fair", fair)
    if config.threshold:
        def thresh(row):
            det = threshold_baseline(ds)
            res = fair_clustering(det, obj, spec, centers=centers)
            # judged against the probabilistic colors the baseline ignored
            _fill_metrics(row, ds, spec, obj, res.fair, cb, norm)
            row.lp_cost = res.fractional.lp_cost
        attempt("threshold", thresh)
    return rows


def _run_task(args) -> list[ReportRow]:
    return run_single(*args)


def run_experiment(config: ExperimentConfig, dataset: Dataset | None = None) -> list[ReportRow]:
    """Sweep every ``k`` in range and every seed; write reports when ``config.out`` is set."""
    ds = load_dataset(config) if dataset is None else dataset
    if config.subsample is not None and config.subsample > ds.n:
        raise InputError(f"subsample {config.subsample} exceeds dataset size {ds.n}")
    tasks = [(config, ds, k, s) for k in range(config.k_min, config.k_max + 1) for s in config.seeds]
    if config.workers > 1:
        with ProcessPoolExecutor(config.workers) as pool:
            parts = list(pool.map(_run_task, tasks))
    else:
        parts = [_run_task(t) for t in tasks]
    rows = [r for part in parts for r in part]
    if config.out:
        write_reports(rows, config.out, config)
    return rows


def summarize(rows: Iterable[ReportRow]) -> list[dict]:
    """Mean, min and max of POF and violations per ``(method, k)`` over seeds."""
    groups: dict = {}
    for r in rows:
        if not r.error:
            groups.setdefault((r.method, r.k, r.cluster_lb), []).append(r)
    out = []
    for (method, k, L), rs in sorted(groups.items(), key=lambda kv: (kv[0][0], kv[0][1], kv[0][2] or 0)):
        entry = {"method": method, "k": k, "cluster_lb": L, "runs": len(rs)}
        for key in ("pof", "gamma", "normalized_gamma", "colorblind_gamma", "runtime"):
            vals = np.array([getattr(r, key) for r in rs], dtype=float)
            entry[key] = {"mean": float(vals.mean()), "min": float(vals.min()), "max": float(vals.max())}
        out.append(entry)
    return out


def write_reports(rows: Sequence[ReportRow], out: str | Path, config: ExperimentConfig | None = None
                  ) -> tuple[Path, Path]:
    """``<out>.csv`` with one line per run and ``<out>.json`` with summary and assignments."""
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    csv_path, json_path = out.with_suffix(".csv"), out.with_suffix(".json")
    with csv_path.open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=ReportRow.CSV_FIELDS)
        w.writeheader()
        for r in rows:
            d = asdict(r)
            w.writerow({f: d[f] for f in ReportRow.CSV_FIELDS})
    payload = {
        "config": None if config is None else asdict(config),
        "summary": summarize(rows),
        "runs": [asdict(r) for r in rows],
    }
    json_path.write_text(json.dumps(payload, indent=1, default=_json_default))
    return csv_path, json_path


def _json_default(o):
    if isinstance(o, (np.integer,)):
        return int(o)
    if isinstance(o, (np.floating,)):
        return float(o)
    raise TypeError(f"cannot serialize {type(o).__name__}")
