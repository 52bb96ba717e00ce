import itertools

import numpy as np
import pytest
from scipy import stats

from conftest import two_color
from fairclust.core import (ColorModel, Dataset, FairnessInfeasible, FairnessSpec, InputError,
                            ObjectiveSpec, center_distances, nearest_assignment)
from fairclust.fairlp import FractionalAssignment
from fairclust.multicolor import (DfclbSpec, SampledDataset, dependent_round, dfclb_changes,
                                  dfclb_round, large_cluster_fair, relax_bounds,
                                  relaxed_satisfaction, sample_colors, solve_dfclb)

# fixed 6 points x 3 centers matrix shared by the marginal tests
X63 = np.array([[0.5, 0.2, 0.3, 0.6, 0.1, 0.25],
                [0.3, 0.5, 0.3, 0.2, 0.45, 0.25],
                [0.2, 0.3, 0.4, 0.2, 0.45, 0.5]])


def _certain(coords, labels, H=2):
    """Probabilistic dataset whose marginals are 0/1, sampled deterministically."""
    labels = np.asarray(labels)
    ds = Dataset(np.asarray(coords, dtype=float),
                 ColorModel("probabilistic", tuple("abcdefg"[:H])), probs=np.eye(H)[labels])
    return SampledDataset(ds, labels, 0)


def test_relax_bounds_examples():
    spec = FairnessSpec({"a": 0.5, "b": 0.3}, {"a": 0.5, "b": 0.95})
    r = relax_bounds(spec, 0.1)
    assert r.lower == {"a": pytest.approx(0.45), "b": pytest.approx(0.27)}
    assert r.upper == {"a": pytest.approx(0.55), "b": 1.0}
    assert relax_bounds(spec, 0.0) == spec
    assert relax_bounds(FairnessSpec.metric(2, 9), 0.5).upper == {"value": 13.5}
    with pytest.raises(InputError):
        relax_bounds(spec, 1.0)


def test_sample_colors_degenerate_and_reproducible():
    ds = two_color(np.zeros((3, 1)), [1.0, 0.0, 0.4])
    s = sample_colors(ds, 5)
    assert s.labels[0] == 0 and s.labels[1] == 1
    assert np.array_equal(s.labels, sample_colors(ds, 5).labels)
    with pytest.raises(InputError):
        sample_colors(Dataset(np.zeros((1, 1)), ColorModel("deterministic", ("a", "b")),
                              labels=[0]), 0)


def test_sample_colors_binomial_band():
    n, p = 10_000, 0.3
    # exact two-sided tail of the +-150 band
    tail = stats.binom.cdf(2849, n, p) + stats.binom.sf(3150, n, p)
    assert tail < 0.01
    ds = two_color(np.zeros((n, 1)), np.full(n, p))
    for seed in range(20):
        assert abs(int((sample_colors(ds, seed).labels == 0).sum()) - 3000) <= 150


def test_sampled_mass_matches_marginals_in_expectation():
    p = np.array([0.1, 0.35, 0.8, 0.55])
    ds = two_color(np.zeros((4, 1)), p)
    trials = 4000
    hits = np.array([sample_colors(ds, s).labels == 0 for s in range(trials)])
    cluster = [0, 2]
    mean = hits[:, cluster].sum(axis=1).mean()
    se = np.sqrt((p[cluster] * (1 - p[cluster])).sum() / trials)
    assert abs(mean - p[cluster].sum()) < 4 * se


def test_dfclb_unit_lower_bound_is_nearest(rng):
    X = rng.random((15, 2))
    s = _certain(X, rng.integers(0, 2, 15))
    spec = DfclbSpec(FairnessSpec({"a": 0, "b": 0}, {"a": 1, "b": 1}), 1, 3, 1.0)
    centers = [0, 4, 9]
    sol = solve_dfclb(s, spec, centers)
    assert np.array_equal(sol.assignment, nearest_assignment(s.base, centers))


def test_dfclb_size_bound_matches_enumeration():
    X = np.array([[0.0], [1.0], [2.0], [3.0], [4.0], [20.0]])
    s = _certain(X, [0, 1, 0, 1, 0, 1])
    centers = [0, 5]
    spec = DfclbSpec(FairnessSpec({"a": 0, "b": 0}, {"a": 1, "b": 1}), 3, 2, 1.0)
    sol = solve_dfclb(s, spec, centers)
    sizes = [int((sol.assignment == c).sum()) for c in centers]
    assert sizes == [3, 3]
    D = center_distances(s.base, centers)
    best = min(D[list(f), range(6)].sum() for f in itertools.product((0, 1), repeat=6)
               if min(f.count(0), f.count(1)) >= 3)
    assert sol.cost == pytest.approx(best, abs=6e-3)


def test_dfclb_rejects_oversized_lower_bound():
    s = _certain(np.arange(4.0), [0, 1, 0, 1])
    with pytest.raises(FairnessInfeasible):
        solve_dfclb(s, DfclbSpec(FairnessSpec.vacuous(s.base.model), 3, 2, 1.0), [0, 3])
    with pytest.raises(InputError):
        DfclbSpec(FairnessSpec.vacuous(s.base.model), 0, 2, 1.0)


def _outlier_instance():
    # eight certain-white points near the origin, two far outliers that are white w.p. 0.45
    X = np.vstack([np.random.default_rng(3).normal(0, 0.3, (8, 2)), [[10.0, 10.0], [10.2, 10.0]]])
    p = np.r_[np.ones(8), 0.45, 0.45]
    ds = Dataset(X, ColorModel("probabilistic", ("white", "black")),
                 probs=np.column_stack([p, 1 - p]))
    spec = relax_bounds(FairnessSpec({"white": 0.6, "black": 0.0}, {"white": 1.0, "black": 1.0}),
                        0.1)
    return ds, spec


@pytest.mark.parametrize("outlier_colors", list(itertools.product((0, 1), repeat=2)))
def test_lower_bound_keeps_outliers_valid(outlier_colors):
    ds, spec = _outlier_instance()
    s = SampledDataset(ds, np.r_[np.zeros(8, dtype=int), outlier_colors], 0)
    good = solve_dfclb(s, DfclbSpec(spec, 3, 2, 1.0), [0, 8])
    assert relaxed_satisfaction(ds, good, spec, 0.1)[0]
    if outlier_colors == (0, 0):
        # without the lower bound the outliers sampled white form their own cluster
        bad = solve_dfclb(s, DfclbSpec(spec, 1, 2, 1.0), [0, 8])
        assert sorted(np.flatnonzero(bad.assignment == 8).tolist()) == [8, 9]
        assert not relaxed_satisfaction(ds, bad, spec, 0.1)[0]


def test_dfclb_round_integral_identity(rng):
    ds = two_color(rng.random((10, 2)), np.full(10, 0.5))
    pick = rng.integers(0, 2, 10)
    x = np.zeros((2, 10))
    x[pick, np.arange(10)] = 1
    sol = dfclb_round(ds, FractionalAssignment((3, 7), x, 0.0, 0.0, 1.0), rng.integers(0, 3, 10), 1.0)
    assert np.array_equal(sol.assignment, np.array([3, 7])[pick])


def test_dfclb_round_half_units():
    # cluster 0 holds red 2.5 and blue 1.5
    labels = np.array([0, 0, 0, 1, 1, 0, 1])
    x = np.array([[1, 1, 0.5, 1, 0.5, 0, 0], [0, 0, 0.5, 0, 0.5, 1, 1]])
    ds = two_color(np.arange(7.0), np.full(7, 0.5))
    sol = dfclb_round(ds, FractionalAssignment((0, 6), x, 0.0, 0.0, 1.0), labels, 1.0)
    members = sol.assignment == 0
    assert int((members & (labels == 0)).sum()) in (2, 3)
    assert int((members & (labels == 1)).sum()) in (1, 2)
    assert abs(int(members.sum()) - 4) <= 1


def test_dfclb_round_plus_minus_one(rng):
    for _ in range(40):
        n, k = 20, 2
        ds = two_color(rng.random((n, 2)), np.full(n, 0.5))
        labels = rng.integers(0, 3, n)
        x = rng.dirichlet(np.ones(k), size=n).T
        x[:, rng.random(n) < 0.3] = np.eye(k)[:, [0]]  # some integral columns
        fa = FractionalAssignment((0, 1), x, 0.0, 0.0, 2.0)
        sol = dfclb_round(ds, fa, labels, 2.0)
        size, color = dfclb_changes(sol.meta["units"], sol.meta["unit"], fa.centers, labels,
                                    sol.assignment)
        assert size <= 1 and color <= 1


def test_dependent_round_integral_unchanged():
    x = np.array([[1.0, 0.0, 1.0], [0.0, 1.0, 0.0]])
    rb = dependent_round(x, 0)
    assert np.array_equal(rb.X, x) and rb.steps == []


def test_dependent_round_fair_coin():
    x = np.array([[0.5], [0.5]])
    picks = np.array([dependent_round(x, s).X[0, 0] for s in range(10_000)])
    assert abs(picks.mean() - 0.5) <= 0.02


def test_dependent_round_degrees_and_marginals():
    trials = 3000
    deg = X63.sum(axis=1)
    total = np.zeros_like(X63)
    for s in range(trials):
        rb = dependent_round(X63, s)
        assert np.all(rb.X.sum(axis=0) == 1)
        d = rb.X.sum(axis=1)
        assert np.all((d == np.floor(deg)) | (d == np.ceil(deg)))
        assert np.all(rb.X[X63 == 0] == 0)
        assert all(kind in ("cycle", "path") for kind, _ in rb.steps)
        total += rb.X
    se = np.sqrt(X63 * (1 - X63) / trials)
    assert np.all(np.abs(total / trials - X63) <= 4 * se)


def test_dependent_round_fractional_degree():
    # center 0 has fractional degree 2.6
    x = np.array([[0.9, 0.8, 0.5, 0.4], [0.1, 0.2, 0.5, 0.6]])
    for s in range(500):
        assert dependent_round(x, s).X[0].sum() in (2, 3)


def test_dependent_round_rejects_bad_degree():
    with pytest.raises(InputError):
        dependent_round(np.array([[0.5], [0.4]]), 0)


def test_sampled_mass_concentrates():
    # four fixed clusters of 500 points; a labeler that is right 80% of the time
    rng = np.random.default_rng(7)
    n, H, acc = 2000, 3, 0.8
    truth = rng.choice(H, size=n, p=[0.2, 0.3, 0.5])
    P = np.full((n, H), (1 - acc) / (H - 1))
    P[np.arange(n), truth] = acc
    clusters = np.repeat(np.arange(4), 500)
    E = np.array([P[clusters == c].sum(axis=0) for c in range(4)])
    assert (E / 500).min() >= 0.1
    ds = Dataset(np.zeros((n, 1)), ColorModel("probabilistic", ("a", "b", "c")), probs=P)
    ok = 0
    for seed in range(1000):
        lab = sample_colors(ds, seed).labels
        S = np.array([np.bincount(lab[clusters == c], minlength=H) for c in range(4)])
        ok += bool(np.all(np.abs(S - E) <= 0.2 * E))
    assert ok >= 990


def _isolated_blobs(m=500):
    # two far blobs, each exactly balanced in expectation
    rng = np.random.default_rng(11)
    X = np.vstack([rng.normal(0, 0.5, (m, 2)), rng.normal(0, 0.5, (m, 2)) + [40.0, 0.0]])
    p = np.tile(np.repeat([0.2, 0.8], m // 2), 2)
    ds = Dataset(X, ColorModel("probabilistic", ("a", "b")), probs=np.column_stack([p, 1 - p]))
    return ds, FairnessSpec({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5})


def test_relaxation_needed_for_isolated_balanced_cluster():
    ds, spec = _isolated_blobs()
    centers = [0, 500]
    natural = np.repeat(centers, 500)
    obj = ObjectiveSpec(1.0, 2)
    kept = {}
    for eps in (0.0, 0.1):
        count = 0
        for seed in range(40):
            try:
                res = large_cluster_fair(ds, obj, spec, 400, eps, seed, centers=centers)
            except FairnessInfeasible:
                continue  # sampled proportions miss l = u exactly
            count += bool(np.array_equal(res.solution.assignment, natural))
        kept[eps] = count / 40
    assert kept[0.0] < 0.5
    assert kept[0.1] > 0.95
