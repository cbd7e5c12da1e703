import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from fogdetect.errors import ContractError
from fogdetect.forest import (DecisionTree, ForestModel, best_split, fit_forest, load_forest,
                              predict_proba, save_forest)

from oracles import gini_best_split


@given(st.integers(0, 10_000), st.integers(2, 20))
def test_best_split_matches_exhaustive_gini(seed, n):
    rng = np.random.default_rng(seed)
    x = np.round(rng.standard_normal((n, 4)), 1)  # rounding creates repeated values
    y = (rng.random(n) < 0.5).astype(float)
    w = rng.integers(1, 4, size=n).astype(float)
    feats = rng.choice(4, size=3, replace=False)
    got = best_split(x, w, y, feats)
    ref = gini_best_split(x.tolist(), w.tolist(), y.tolist(), [int(f) for f in feats])
    if ref is None:
        assert got is None
    else:
        assert got[0] == ref[0] and got[1] == pytest.approx(ref[1], abs=1e-12)


def test_best_split_constant_features():
    x = np.ones((5, 3))
    assert best_split(x, np.ones(5), np.array([0, 1, 0, 1, 0.0]), [0, 1, 2]) is None


def _separable(n=200, seed=0):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((n, 21))
    y = (rng.random(n) < 0.3).astype(int)
    x[:, 5] = np.where(y == 1, rng.uniform(10, 20, n), rng.uniform(0, 5, n))
    return x, y


def test_separating_feature_gives_perfect_training_accuracy():
    x, y = _separable()
    m = fit_forest(x, y, seed=1, n_trees=25)
    assert np.all((predict_proba(m, x) >= 0.5) == (y == 1))


def test_single_class_predicts_certainty():
    x = np.random.default_rng(2).standard_normal((30, 21))
    with pytest.warns(RuntimeWarning):
        m = fit_forest(x, np.ones(30, dtype=int), seed=0, n_trees=10)
    assert np.all(predict_proba(m, np.random.default_rng(3).standard_normal((5, 21))) == 1.0)


def test_same_seed_same_forest():
    x, y = _separable(120)
    a = fit_forest(x, y, seed=7, n_trees=10)
    b = fit_forest(x, y, seed=7, n_trees=10)
    c = fit_forest(x, y, seed=8, n_trees=10)
    for ta, tb in zip(a.trees, b.trees):
        for name in ("feature", "threshold", "left", "right", "value"):
            assert np.array_equal(getattr(ta, name), getattr(tb, name))
    assert any(not np.array_equal(ta.feature, tc.feature) for ta, tc in zip(a.trees, c.trees))


def _stump(value_left, value_right):
    return DecisionTree(np.array([0, -1, -1]), np.array([0.0, 0, 0]), np.array([1, -1, -1]),
                        np.array([2, -1, -1]), np.array([0.5, value_left, value_right]))


def test_probability_is_the_tree_average():
    trees = tuple([_stump(1.0, 1.0)] * 50 + [_stump(0.0, 0.0)] * 50)
    m = ForestModel(trees, seed=0)
    assert np.all(predict_proba(m, np.zeros((3, 21))) == 0.5)


def test_trees_grow_to_purity():
    x, y = _separable(150, seed=4)
    x[:, 5] = np.random.default_rng(5).standard_normal(150)  # remove the easy feature
    m = fit_forest(x, y, seed=0, n_trees=25)
    for t in m.trees:
        leaves = t.feature == -1
        assert np.all(np.isin(t.value[leaves], (0.0, 1.0)))
    # a training row falls in a pure leaf of its own label in every tree whose
    # bootstrap drew it (about 63% of them), so scores sit near the label
    s = predict_proba(m, x)
    assert np.mean(np.abs(s - y)) < 0.3


def test_identical_rows_identical_scores():
    x, y = _separable(80)
    m = fit_forest(x, y, seed=0, n_trees=10)
    q = np.tile(x[:1], (4, 1))
    assert len(set(predict_proba(m, q).tolist())) == 1


def test_dimension_errors():
    x, y = _separable(40)
    with pytest.raises(ContractError):
        fit_forest(x[:, :20], y)
    m = fit_forest(x, y, n_trees=2)
    with pytest.raises(ContractError):
        predict_proba(m, x[:, :5])


def test_label_errors():
    x, _ = _separable(10)
    with pytest.raises(ContractError):
        fit_forest(x, np.full(10, 2))
    with pytest.raises(ContractError):
        fit_forest(x, np.zeros(9))


def test_save_load_round_trip(tmp_path):
    x, y = _separable(60)
    m = fit_forest(x, y, seed=3, n_trees=7)
    path = tmp_path / "f.npz"
    save_forest(m, path)
    back = load_forest(path)
    assert back.seed == 3 and len(back.trees) == 7
    np.testing.assert_array_equal(predict_proba(back, x), predict_proba(m, x))
