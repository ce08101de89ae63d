"""Margin-scale attribution: exact tree walk, linear case, ranking."""

from types import SimpleNamespace

import numpy as np
import pytest

from comprisk.explain import (
    linear_attribution,
    linear_attribution_matrix,
    rank_features,
    tree_attribution,
    tree_attribution_matrix,
    tree_expectation,
)
from comprisk.features import (
    FEATURE_NAMES,
    N_FEATURES,
    PreprocessorKind,
    fit_preprocessor,
)
from comprisk.learners import GbmParams, LogisticParams, train_gbm
from comprisk.learners.gbm import GbmModel, Tree
from comprisk.learners.logistic import LogisticModel

from oracles import brute_force_base, brute_force_shapley


def single_split_model(learning_rate=1.0):
    nested = {
        "slot": 0, "threshold": 0.5, "missing": "left", "cover": 100.0,
        "left": {"value": 0.0, "cover": 60.0},
        "right": {"value": 0.2, "cover": 40.0},
    }
    tree = Tree.from_nested(nested)
    hp = GbmParams(num_leaves=2, learning_rate=learning_rate, max_depth=1, n_estimators=1)
    return GbmModel(base_score=0.0, trees=[tree], hp=hp, n_features=1), nested


def test_single_split_attribution_by_hand():
    # E[f] = (60*0.0 + 40*0.2)/100 = 0.08; the right leaf pays 0.2 - 0.08
    model, _ = single_split_model()
    att = tree_attribution(model, np.array([0.7]))
    assert att.base_value == pytest.approx(0.08, abs=1e-12)
    assert att.values[0] == pytest.approx(0.12, abs=1e-12)
    assert att.margin == pytest.approx(model.predict_margin(np.array([0.7])))

    low = tree_attribution(model, np.array([0.2]))
    assert low.values[0] == pytest.approx(-0.08, abs=1e-12)


def test_missing_input_follows_default_direction():
    model, _ = single_split_model()
    att = tree_attribution(model, np.array([np.nan]))
    # missing routes left, so it carries the left-leaf attribution
    assert att.values[0] == pytest.approx(-0.08, abs=1e-12)


def test_learning_rate_scales_attributions():
    model, _ = single_split_model(learning_rate=0.25)
    att = tree_attribution(model, np.array([0.7]))
    assert att.base_value == pytest.approx(0.02, abs=1e-12)
    assert att.values[0] == pytest.approx(0.03, abs=1e-12)


def test_repeated_feature_on_one_path_counted_once():
    nested = {
        "slot": 0, "threshold": 0.5, "missing": "right", "cover": 100.0,
        "left": {
            "slot": 0, "threshold": 0.2, "missing": "left", "cover": 70.0,
            "left": {"value": 1.0, "cover": 30.0},
            "right": {"value": 2.0, "cover": 40.0},
        },
        "right": {"value": 3.0, "cover": 30.0},
    }
    tree = Tree.from_nested(nested)
    model = GbmModel(
        base_score=0.0, trees=[tree],
        hp=GbmParams(num_leaves=3, learning_rate=1.0, max_depth=2, n_estimators=1),
        n_features=2,
    )
    for x in ([0.1, 0.0], [0.3, 0.0], [0.9, 0.0], [np.nan, 0.0]):
        arr = np.asarray(x, dtype=np.float64)
        att = tree_attribution(model, arr)
        expected = brute_force_shapley([nested], arr, 2)
        np.testing.assert_allclose(att.values, expected, atol=1e-12)
        assert att.values[1] == 0.0
        assert att.margin == pytest.approx(model.predict_margin(arr))


def test_fitted_forest_matches_brute_force():
    rng = np.random.default_rng(21)
    X = rng.normal(size=(40, 3))
    X[::5, 1] = np.nan
    y = (X[:, 0] + rng.normal(scale=0.5, size=40) > 0).astype(np.float64)
    model = train_gbm(
        X, y, GbmParams(num_leaves=4, learning_rate=0.4, max_depth=3, n_estimators=3)
    )
    nested = [t.to_nested() for t in model.trees]
    base, phi = tree_attribution_matrix(model, X[:6])
    assert base == pytest.approx(
        model.base_score + brute_force_base(nested, model.hp.learning_rate), abs=1e-10
    )
    for i in range(6):
        expected = brute_force_shapley(nested, X[i], 3, scale=model.hp.learning_rate)
        np.testing.assert_allclose(phi[i], expected, atol=1e-10)


def test_local_accuracy_on_a_larger_forest():
    rng = np.random.default_rng(5)
    X = rng.normal(size=(120, 6))
    X[rng.uniform(size=X.shape) < 0.1] = np.nan
    y = (np.nan_to_num(X[:, 0]) - np.nan_to_num(X[:, 3]) > 0).astype(np.float64)
    model = train_gbm(
        X, y, GbmParams(num_leaves=6, learning_rate=0.2, max_depth=4, n_estimators=12)
    )
    base, phi = tree_attribution_matrix(model, X)
    margins = model.predict_margin(X)
    np.testing.assert_allclose(base + phi.sum(axis=1), margins, atol=1e-9)


def test_empty_forest_attribution_is_base_score_only():
    model = GbmModel(
        base_score=-1.3, trees=[],
        hp=GbmParams(n_estimators=0), n_features=4,
    )
    base, phi = tree_attribution_matrix(model, np.zeros((2, 4)))
    assert base == -1.3
    assert (phi == 0.0).all()


def test_tree_expectation_is_cover_weighted_mean():
    _, nested = single_split_model()
    assert tree_expectation(Tree.from_nested(nested)) == pytest.approx(0.08)


def test_attribution_feature_width_checked():
    model, _ = single_split_model()
    with pytest.raises(ValueError, match="expected 1 features"):
        tree_attribution_matrix(model, np.zeros((2, 3)))


def test_linear_attribution_identity():
    weights = np.array([0.5, -1.0, 2.0])
    model = LogisticModel(weights=weights, bias=0.7, hp=LogisticParams())
    mean = np.array([0.1, 0.2, 0.3])
    x = np.array([1.0, 0.0, -1.0])
    att = linear_attribution(model, x, mean)
    np.testing.assert_allclose(att.values, weights * (x - mean), atol=1e-15)
    assert att.base_value == pytest.approx(float(weights @ mean + 0.7), abs=1e-12)
    assert att.margin == pytest.approx(float(weights @ x + 0.7), abs=1e-12)
    with pytest.raises(ValueError, match="width mismatch"):
        linear_attribution_matrix(model, np.zeros((1, 2)), mean)


def _fake_lr_ensemble(weights):
    n = 4
    values = np.ones((n, N_FEATURES))
    mask = np.zeros((n, N_FEATURES), dtype=bool)
    pre = fit_preprocessor(PreprocessorKind.PASSTHROUGH, values, mask)
    model = LogisticModel(weights=weights, bias=0.0, hp=LogisticParams())
    member = SimpleNamespace(fold=0, model=model)
    ensemble = SimpleNamespace(
        family="lr",
        members=[member],
        fold_preprocessors={0: pre},
        background_means={0: np.zeros(N_FEATURES)},
    )
    return ensemble, values, mask


def test_rank_features_orders_by_mean_absolute_attribution():
    weights = np.zeros(N_FEATURES)
    weights[0] = 3.0    # age
    weights[5] = -2.0
    weights[9] = 2.0
    weights[12] = 0.5
    ensemble, values, mask = _fake_lr_ensemble(weights)
    top = rank_features(ensemble, values, mask, top_k=4)
    names = [name for name, _ in top]
    # all inputs are 1.0 with zero background, so scores equal |weights|;
    # the -2/+2 tie breaks on slot order
    assert names == [FEATURE_NAMES[0], FEATURE_NAMES[5], FEATURE_NAMES[9], FEATURE_NAMES[12]]
    assert [round(s, 6) for _, s in top] == [3.0, 2.0, 2.0, 0.5]


def test_rank_features_rejects_families_without_attributions():
    ensemble, values, mask = _fake_lr_ensemble(np.zeros(N_FEATURES))
    for family in ("knn", "mlp"):
        ensemble.family = family
        with pytest.raises(ValueError, match="unavailable"):
            rank_features(ensemble, values, mask)
