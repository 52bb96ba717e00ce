"""Two-step fair clustering: color-blind centers, then fair assignment and rounding."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

from .colorblind import CenterSet, select_centers
from .core import Dataset, FairnessSpec, ObjectiveSpec, Solution, nearest_assignment
from .fairlp import FractionalAssignment, kcenter_radius_search, solve_fair_assignment
from .flowround import COST_SCALE, RoundingResult, round_assignment

DEFAULT_ALGO = {"kcenter": "gonzalez", "kmedian": "localsearch", "kmeans": "kmeanspp"}


@dataclass(eq=False)
class PipelineResult:
    centers: CenterSet
    colorblind: Solution
    fractional: FractionalAssignment
    rounding: RoundingResult

    @property
    def fair(self) -> Solution:
        return self.rounding.solution


def colorblind_solution(dataset: Dataset, centers: Sequence[int], objective: ObjectiveSpec) -> Solution:
    return Solution.build(dataset, centers, nearest_assignment(dataset, centers), objective,
                          assignment_rule="nearest")


def fair_clustering(dataset: Dataset, objective: ObjectiveSpec, spec: FairnessSpec, *,
                    algo: str | None = None, seed: int | None = 0,
                    centers: CenterSet | Sequence[int] | None = None,
                    cost_scale: int = COST_SCALE, method: str = "auto") -> PipelineResult:
    """Run both steps. ``centers`` skips step one when given."""
    if centers is None:
        centers = select_centers(dataset, objective.k, algo or DEFAULT_ALGO[objective.name], seed)
    elif not isinstance(centers, CenterSet):
        centers = CenterSet(tuple(int(c) for c in centers), "given", None)
    cb = colorblind_solution(dataset, centers.centers, objective)
    if math.isinf(objective.p):
        fa = kcenter_radius_search(dataset, centers.centers, spec, method=method).assignment
    else:
        fa = solve_fair_assignment(dataset, centers.centers, spec, objective, method=method)
    rr = round_assignment(dataset, fa, objective, cost_scale)
    return PipelineResult(centers, cb, fa, rr)
