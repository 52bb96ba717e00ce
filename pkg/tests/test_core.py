import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from fairclust.core import (ColorModel, ContractError, Dataset, FairnessSpec, InputError,
                            ObjectiveSpec, Solution, color_mass, distance, evaluate_cost, load_csv,
                            max_additive_violation, normalize_features, price_of_fairness,
                            table_cost)

from conftest import labeled, metric, two_color


def test_normalize_scales_columns_independently():
    assert np.allclose(normalize_features([[2], [4], [6]])[:, 0], [0, 0.5, 1])
    assert np.allclose(normalize_features([[5], [5], [5]])[:, 0], 0)
    assert np.allclose(normalize_features([[0, 10], [1, 20]]), [[0, 0], [1, 1]])


def test_normalize_rejects_empty():
    with pytest.raises(InputError):
        normalize_features(np.zeros((0, 2)))


def test_distance_examples():
    assert distance([0, 0], [3, 4]) == 5
    assert distance([1, 2], [1, 2]) == 0
    assert distance([1], [4]) == 3
    with pytest.raises(InputError):
        distance([0, 0], [1])


def test_distance_accepts_points():
    ds = two_color([[0, 0], [3, 4]], [0.5, 0.5])
    assert distance(ds.point(0), ds.point(1)) == 5


def test_metric_axioms_on_random_triples(rng):
    P = rng.normal(size=(1000, 3, 4))
    for a, b, c in P:
        ab, ba, bc, ac = distance(a, b), distance(b, a), distance(b, c), distance(a, c)
        assert ab == ba
        assert ac <= ab + bc + 1e-12
        assert distance(a, a) == 0 and ab > 0


def test_probabilities_are_validated_and_renormalized():
    ds = two_color([[0], [1]], [0.3, 1.0])
    assert np.allclose(ds.probs.sum(axis=1), 1)
    with pytest.raises(InputError):
        Dataset([[0.0]], ColorModel("probabilistic", ("a", "b")), probs=[[0.3, 0.6]])
    near = Dataset([[0.0]], ColorModel("probabilistic", ("a", "b")), probs=[[0.3, 0.7 + 5e-10]])
    assert near.probs.sum() == pytest.approx(1, abs=1e-15)


def test_metric_values_must_fit_range():
    with pytest.raises(InputError):
        metric([[0], [1]], [0, 5], R=4)
    with pytest.raises(InputError):
        ColorModel("metric", ("value",), R=0)


def test_dataset_is_immutable():
    ds = two_color([[0], [1]], [0.3, 0.6])
    with pytest.raises(ValueError):
        ds.coords[0, 0] = 5


def test_fairness_spec_rejects_inverted_bounds():
    with pytest.raises(InputError):
        FairnessSpec({"a": 0.6}, {"a": 0.4})
    spec = FairnessSpec({"a": 0.2}, {"a": 0.4})
    with pytest.raises(InputError):
        spec.arrays(ColorModel("probabilistic", ("a", "b")))


def test_objective_names():
    assert ObjectiveSpec.from_name("kcenter", 3).p == math.inf
    assert ObjectiveSpec.from_name("kmeans", 3).name == "kmeans"
    with pytest.raises(InputError):
        ObjectiveSpec(3.0, 2)


def _sol(ds, centers, assign, p=1.0):
    return Solution.build(ds, centers, assign, ObjectiveSpec(p, len(centers)))


def test_evaluate_cost_examples():
    ds = labeled([[0], [1], [3]], [0, 0, 1])
    assert _sol(ds, [0], [0, 0, 0]).cost == 4
    assert _sol(labeled([[0], [2]], [0, 1]), [0], [0, 0], math.inf).cost == 2
    single = labeled([[1, 1]], [0])
    assert _sol(single, [0], [0]).cost == 0


def test_kmeans_costs_norm_and_table_conventions():
    ds = labeled([[0], [1], [3]], [0, 0, 1])
    s = _sol(ds, [0], [0, 0, 0], 2.0)
    assert s.cost == pytest.approx(math.sqrt(10))
    assert table_cost(ds, s, 2.0) == pytest.approx(10)


def test_cost_matches_brute_force_on_permuted_assignments(rng):
    X = rng.random((50, 2))
    ds = labeled(X, np.zeros(50, dtype=int))
    centers = [3, 17, 41]
    for _ in range(20):
        a = rng.choice(centers, size=50)
        brute = sum(math.dist(X[j], X[a[j]]) for j in range(50))
        assert evaluate_cost(ds, Solution(tuple(centers), a, 0.0), 1.0) == pytest.approx(brute, abs=1e-9)


def test_unassigned_point_is_a_contract_error():
    ds = labeled([[0], [1]], [0, 1])
    with pytest.raises(ContractError):
        evaluate_cost(ds, Solution((0,), np.array([0, -1]), 0.0), 1.0)


def test_color_mass_examples():
    ds = two_color([[0], [1]], [0.3, 0.7])
    assert color_mass(ds, _sol(ds, [0], [0, 0]))[0]["a"] == pytest.approx(1.0)
    ds = labeled([[0], [1], [2], [3]], [0, 0, 0, 1], ("red", "blue"))
    m = color_mass(ds, _sol(ds, [0], [0, 0, 0, 0]))[0]
    assert m == {"red": 3, "blue": 1}
    R = 8
    ds = metric([[0], [1], [2]], [0, 3 * R // 4, R], R)
    assert color_mass(ds, _sol(ds, [0], [0, 0, 0]))[0]["value"] == 7 * R / 4


def test_violation_examples():
    ds = labeled([[0], [1], [2], [3]], [0, 0, 0, 1])
    spec = FairnessSpec({"a": 0.5, "b": 0.5}, {"a": 0.5, "b": 0.5})
    assert max_additive_violation(ds, _sol(ds, [0], [0] * 4), spec).gamma == 1
    balanced = labeled([[0], [1], [2], [3]], [0, 1, 0, 1])
    assert max_additive_violation(balanced, _sol(balanced, [0], [0] * 4), spec).gamma == 0


def test_violation_normalizations():
    R = 4
    ds = metric([[0], [1], [2], [3]], [0, 0, 0, 4], R)
    spec = FairnessSpec.metric(2, 2)
    rep = max_additive_violation(ds, _sol(ds, [0], [0] * 4), spec)
    assert rep.gamma == 4 and rep.normalized_gamma == 1
    rep = max_additive_violation(ds, _sol(ds, [0], [0] * 4), spec, "size")
    assert rep.normalized_gamma == 1


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10_000))
def test_violation_zero_iff_bounds_hold(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(2, 12))
    ds = two_color(r.random((n, 1)), r.random(n))
    a = r.choice([0, 1], size=n)
    a[0], a[1] = 0, 1
    sol = _sol(ds, [0, 1], a)
    lo, hi = sorted(r.random(2))
    spec = FairnessSpec({"a": lo, "b": 0.0}, {"a": hi, "b": 1.0})
    holds = all(lo * (a == c).sum() <= ds.probs[a == c, 0].sum() <= hi * (a == c).sum()
                for c in (0, 1))
    assert (max_additive_violation(ds, sol, spec).gamma == 0) == holds


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 10_000))
def test_color_mass_is_conserved(seed):
    r = np.random.default_rng(seed)
    n = int(r.integers(3, 30))
    ds = two_color(r.random((n, 2)), r.random(n))
    a = r.choice([0, 1, 2], size=n)
    a[:3] = [0, 1, 2]
    total = sum(m["a"] for m in color_mass(ds, _sol(ds, [0, 1, 2], a)).values())
    assert total == pytest.approx(ds.probs[:, 0].sum(), abs=1e-9)
    lab = labeled(r.random((n, 1)), r.integers(0, 2, n))
    counts = color_mass(lab, _sol(lab, [0, 1, 2], a))
    assert sum(m["a"] for m in counts.values()) == (lab.labels == 0).sum()


def test_price_of_fairness():
    assert price_of_fairness(10, 10) == 1.0
    assert price_of_fairness(10.2, 10) == pytest.approx(1.02)
    assert price_of_fairness(0, 0) == 1.0
    assert math.isnan(price_of_fairness(1, 0))


def test_load_csv_color_schema(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x,y,marital\n0,10,married\n1,20,single\n2,30,divorced\n")
    ds = load_csv(f, {"coords": ["x", "y"], "color": "marital",
                      "color_map": {"single": "other", "divorced": "other"},
                      "colors": ["married", "other"]})
    assert ds.labels.tolist() == [0, 1, 1]
    assert np.allclose(ds.coords[:, 1], [0, 0.5, 1])


def test_load_csv_probabilities_and_values(tmp_path):
    f = tmp_path / "d.csv"
    f.write_text("x,pa,pb,age\n0,0.2,0.8,20\n1,0.5,0.5,30\n2,1,0,90\n")
    ds = load_csv(f, {"coords": ["x"], "probabilities": ["pa", "pb"]})
    assert ds.model.kind == "probabilistic" and ds.probs[0, 1] == pytest.approx(0.8)
    ds = load_csv(f, {"coords": ["x"], "value": "age"})
    assert ds.values.tolist() == [0, 10, 70] and ds.model.R == 70
    with pytest.raises(InputError):
        load_csv(f, {"coords": ["x", "age"], "value": "age"})


def test_load_csv_headerless(tmp_path):
    f = tmp_path / "d.data"
    f.write_text("1, 2, a\n3, 4, b\n")
    ds = load_csv(f, {"columns": ["u", "v", "c"], "coords": ["u", "v"], "color": "c"})
    assert ds.n == 2 and ds.colors == ("a", "b")
