import csv
import json
import math

import numpy as np
import pytest

from conftest import labeled, metric, two_color
from fairclust.cli import main
from fairclust.core import InputError, Solution, max_additive_violation
from fairclust.datasets import adult_like, bank_like, census_like
from fairclust.harness import (ExperimentConfig, derive_bounds, perturb_labels,
                               preprocess_metric_membership, run_experiment, summarize,
                               synthetic_noisy_multicolor, threshold_baseline, write_reports)


def test_derive_bounds_examples():
    ds = labeled(np.zeros((4, 1)), [0, 1, 0, 1])
    spec = derive_bounds(ds, 0.2)
    assert spec.lower["a"] == pytest.approx(0.4) and spec.upper["a"] == pytest.approx(0.625)
    spec = derive_bounds(ds, 0.0)
    assert spec.lower == spec.upper == {"a": 0.5, "b": 0.5}
    m = metric(np.zeros((4, 1)), [0, 1, 2, 3], 3)
    spec = derive_bounds(m, 0.2)
    assert spec.lower["value"] == pytest.approx(1.2) and spec.upper["value"] == pytest.approx(1.875)
    with pytest.raises(InputError):
        derive_bounds(ds, 1.0)


def test_derive_bounds_clamps_upper():
    ds = labeled(np.zeros((10, 1)), [0] * 9 + [1])
    assert derive_bounds(ds, 0.2).upper["a"] == 1.0


def test_perturb_labels_examples():
    ds = labeled(np.zeros((3, 1)), [0, 1, 0])
    assert np.array_equal(perturb_labels(ds, 1.0).probs, np.eye(2)[[0, 1, 0]])
    assert np.all(perturb_labels(ds, 0.5).probs == 0.5)
    assert perturb_labels(ds, 0.7).probs[0].tolist() == pytest.approx([0.7, 0.3])
    with pytest.raises(InputError):
        perturb_labels(labeled(np.zeros((3, 1)), [0, 1, 2], ("a", "b", "c")), 0.7)
    with pytest.raises(InputError):
        perturb_labels(ds, 0.4)


def test_threshold_baseline_examples():
    ds = two_color(np.zeros((3, 1)), [0.7, 0.2, 0.5])
    assert threshold_baseline(ds).labels.tolist() == [0, 1, 0]


def test_thresholding_near_half_is_infeasible():
    from fairclust.core import FairnessInfeasible, ObjectiveSpec
    from fairclust.pipeline import fair_clustering

    rng = np.random.default_rng(4)
    ds = two_color(rng.random((40, 2)), np.full(40, 0.55))
    spec = derive_bounds(ds, 0.2)
    fair_clustering(ds, ObjectiveSpec(2.0, 3), spec, seed=0)
    det = threshold_baseline(ds)
    assert np.all(det.labels == 0)
    with pytest.raises(FairnessInfeasible):
        fair_clustering(det, ObjectiveSpec(2.0, 3), spec, seed=0)


def test_noisy_multicolor_examples():
    ds = labeled(np.zeros((7, 1)), np.arange(7), tuple("abcdefg"))
    P = synthetic_noisy_multicolor(ds, 0.68).probs
    assert np.allclose(np.diag(P), 0.68)
    assert np.allclose(P[~np.eye(7, dtype=bool)], 0.32 / 6)
    assert np.array_equal(synthetic_noisy_multicolor(ds, 1.0).probs, np.eye(7))
    with pytest.raises(InputError):
        synthetic_noisy_multicolor(ds, 1 / 7)


def test_preprocess_metric_membership():
    ds = preprocess_metric_membership(np.zeros((3, 1)), [20, 30, 90])
    assert ds.values.tolist() == [0, 10, 70] and ds.model.R == 70
    assert preprocess_metric_membership(np.zeros((3, 1)), [0, 4, 2]).values.tolist() == [0, 4, 2]
    with pytest.raises(InputError):
        preprocess_metric_membership(np.zeros((3, 1)), [5, 5, 5])


def test_config_validation(tmp_path):
    with pytest.raises(InputError):
        ExperimentConfig(k_min=5, k_max=4)
    with pytest.raises(InputError):
        ExperimentConfig.from_dict({"bogus": 1})
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps({"objective": "kmedian", "seeds": [3, 4]}))
    cfg = ExperimentConfig.from_json(path)
    assert cfg.objective == "kmedian" and cfg.seeds == (3, 4)
    with pytest.raises(InputError):
        run_experiment(ExperimentConfig(subsample=500), bank_like(n=200))


def test_rows_recompute_from_assignment():
    ds = perturb_labels(bank_like(n=300), 0.8)
    cfg = ExperimentConfig(k_min=2, k_max=4, seeds=(0, 1), subsample=None)
    rows = run_experiment(cfg, ds)
    spec = derive_bounds(ds, 0.2)
    assert len(rows) == 6 and not any(r.error for r in rows)
    for r in rows:
        sol = Solution(tuple(r.centers), np.array(r.assignment), r.fair_cost)
        assert max_additive_violation(ds, sol, spec).gamma == r.gamma
        assert r.pof == pytest.approx(r.fair_cost / r.colorblind_cost, abs=1e-9)
        assert r.pof >= 1 - 1e-12
        assert r.gamma < 1


def test_errors_are_recorded_not_raised():
    # thresholding 0.6 marginals makes every point color a, far outside the bounds
    rows = run_experiment(ExperimentConfig(k_min=1, k_max=1, seeds=(0,), subsample=None,
                                           threshold=True),
                          two_color(np.arange(6.0), np.full(6, 0.6)))
    fair, thr = rows
    assert fair.method == "fair" and fair.error == ""
    assert thr.method == "threshold" and "FairnessInfeasible" in thr.error


def test_metric_run_normalized_gamma_below_one():
    ds = adult_like(n=400)
    rows = run_experiment(ExperimentConfig(objective="kmedian", k_min=2, k_max=4, seeds=(0,),
                                           subsample=None), ds)
    assert all(not r.error and r.normalized_gamma < 1 for r in rows)


def test_pof_trend_over_label_accuracy():
    base = bank_like()
    means = []
    for p_acc in (0.5, 0.7, 0.9, 1.0):
        rows = run_experiment(ExperimentConfig(k_min=5, k_max=5), perturb_labels(base, p_acc))
        assert not any(r.error for r in rows)
        pof = np.array([r.pof for r in rows])
        if p_acc == 0.5:
            costs = np.array([(r.fair_cost, r.colorblind_cost) for r in rows])
            assert np.all(np.abs(costs[:, 0] / costs[:, 1] - 1) <= 0.01)
        means.append(pof.mean())
    inversions = sum(b < a for a, b in zip(means, means[1:]))
    assert inversions <= 1


def test_reports_and_summary(tmp_path):
    ds = perturb_labels(bank_like(n=200), 0.8)
    cfg = ExperimentConfig(k_min=2, k_max=3, seeds=(0, 1), subsample=150, out=str(tmp_path / "r"))
    rows = run_experiment(cfg, ds)
    with open(tmp_path / "r.csv") as fh:
        table = list(csv.DictReader(fh))
    assert len(table) == 4 and "assignment" not in table[0]
    payload = json.loads((tmp_path / "r.json").read_text())
    assert payload["config"]["k_max"] == 3
    assert len(payload["runs"]) == 4 and len(payload["runs"][0]["assignment"]) == 150
    summ = summarize(rows)
    assert [(s["method"], s["k"], s["runs"]) for s in summ] == [("fair", 2, 2), ("fair", 3, 2)]
    assert summ[0]["pof"]["min"] <= summ[0]["pof"]["mean"] <= summ[0]["pof"]["max"]
    write_reports(rows, tmp_path / "again")
    assert (tmp_path / "again.json").exists()


def test_large_cluster_rows():
    ds = synthetic_noisy_multicolor(census_like(n=3000), 0.68)
    cfg = ExperimentConfig(objective="kmeans", k_min=5, k_max=5, seeds=(0,), subsample=None,
                           cluster_lb=100)
    (row,) = run_experiment(cfg, ds)
    assert row.method == "large_cluster" and row.error == ""
    assert row.relaxed_ok is True and row.cluster_lb == 100
    assert min(np.bincount(row.assignment)[row.centers]) >= 99


def test_cli_run(tmp_path, capsys):
    out = tmp_path / "cli"
    code = main(["run", "--dataset", "bank_like", "--p-acc", "0.8", "--k-min", "2", "--k-max", "3",
                 "--trials", "2", "--subsample", "200", "--threshold", "--out", str(out)])
    assert code == 0
    text = capsys.readouterr().out
    assert "fair" in text and "threshold" in text and "POF" in text
    assert out.with_suffix(".csv").exists() and out.with_suffix(".json").exists()


def test_cli_config_and_errors(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"dataset": "adult_like", "objective": "kcenter", "k_min": 2,
                               "k_max": 2, "seeds": [0], "subsample": 100}))
    assert main(["run", "--config", str(cfg)]) == 0
    assert main(["run", "--dataset", "nope.csv"]) == 2
    assert "error:" in capsys.readouterr().err


def test_cli_oracle(capsys):
    assert main(["oracle", "--random", "6", "--k", "2", "--objective", "kmedian"]) == 0
    out = json.loads(capsys.readouterr().out)
    assert out["feasible"] and out["gamma"] <= 1e-9 and len(out["assignment"]) == 6
    assert math.isfinite(out["optimum"])
