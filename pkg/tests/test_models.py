from __future__ import annotations

import numpy as np
import pytest

from dysec.models import (
    DegenerateData,
    DimensionMismatch,
    ModelConfig,
    ModelError,
    ModelKind,
    TrainedModel,
    TreeNode,
    default_config,
    feature_importances,
    load_model,
    model_from_dict,
    model_to_dict,
    predict,
    save_model,
    score,
    train,
)


def _blobs(rng, n_per=60, margin=2.0, noise=0.4, d=2):
    neg = rng.normal(-margin, noise, size=(n_per, d))
    pos = rng.normal(margin, noise, size=(n_per, d))
    X = np.vstack([neg, pos])
    y = np.array([0] * n_per + [1] * n_per)
    order = rng.permutation(len(y))
    return X[order], y[order]


def test_dt_single_feature_separable_is_depth_one():
    X = np.array([[0.1], [0.2], [0.3], [0.8], [0.9], [1.0]] * 3)
    y = np.array([0, 0, 0, 1, 1, 1] * 3)
    model = train(ModelConfig(kind=ModelKind.DT, max_depth=8, min_samples_split=2), X, y)
    root = model.trees[0]
    assert root.depth() == 1
    assert np.all(predict(model, X) == y)


def test_rf_fixed_seed_is_bitwise_deterministic():
    rng = np.random.default_rng(0)
    X, y = _blobs(rng)
    test = rng.normal(0, 2, size=(80, 2))
    a = train(default_config(ModelKind.RF, seed=42), X, y)
    b = train(default_config(ModelKind.RF, seed=42), X, y)
    assert np.all(score(a, test) == score(b, test))
    assert np.all(predict(a, test) == predict(b, test))


@pytest.mark.parametrize("kind", list(ModelKind))
def test_all_models_perfect_on_margin_blobs(kind):
    rng = np.random.default_rng(3)
    X, y = _blobs(rng, n_per=80)
    X_test, y_test = _blobs(np.random.default_rng(103), n_per=40)
    model = train(default_config(kind, seed=1), X, y)
    assert np.mean(predict(model, X_test) == y_test) == 1.0


def test_predict_leaf_distribution_and_tie_rule():
    leaf_hot = TreeNode(value=0.9, n_samples=10)
    model = TrainedModel(
        config=default_config(ModelKind.DT),
        feature_names=("a",),
        trees=[leaf_hot],
        importances_raw=np.zeros(1),
    )
    assert predict(model, np.array([0.0])) == 1
    model.trees = [TreeNode(value=0.5, n_samples=10)]
    assert predict(model, np.array([0.0])) == 0  # exact tie -> benign


def test_predict_batch_preserves_order():
    rng = np.random.default_rng(4)
    X, y = _blobs(rng)
    model = train(default_config(ModelKind.DT, seed=0), X, y)
    rows = rng.normal(0, 2, size=(25, 2))
    batch = predict(model, rows)
    singles = [predict(model, row) for row in rows]
    assert list(batch) == singles


def test_rf_unanimous_vote_scores_one():
    rng = np.random.default_rng(5)
    X = np.concatenate([rng.normal(-3, 0.3, 80), rng.normal(3, 0.3, 80)]).reshape(-1, 1)
    y = np.array([0] * 80 + [1] * 80)
    model = train(default_config(ModelKind.RF, seed=9), X, y)
    assert score(model, np.array([6.0])) == 1.0
    assert score(model, np.array([-6.0])) == 0.0


def test_gb_zero_stages_scores_base_rate():
    rng = np.random.default_rng(6)
    X = rng.normal(size=(50, 3))
    y = (rng.random(50) < 0.3).astype(int)
    model = train(ModelConfig(kind=ModelKind.GB, n_estimators=0, seed=0), X, y)
    assert score(model, X[0]) == pytest.approx(y.mean(), abs=1e-12)


def test_gb_depth_one_score_monotone_in_informative_feature():
    x = np.linspace(0, 1, 60).reshape(-1, 1)
    y = (x[:, 0] > 0.55).astype(int)
    model = train(
        ModelConfig(kind=ModelKind.GB, n_estimators=50, max_depth=1, seed=2), x, y
    )
    grid = np.linspace(-0.2, 1.2, 500).reshape(-1, 1)
    s = score(model, grid)
    assert np.all(np.diff(s) >= -1e-12)


def test_scores_always_in_unit_interval_and_consistent_with_predict():
    rng = np.random.default_rng(7)
    X, y = _blobs(rng, noise=1.5)
    rows = rng.normal(0, 3, size=(60, 2))
    for kind in ModelKind:
        model = train(default_config(kind, seed=3), X, y)
        s = score(model, rows)
        assert np.all((s >= 0) & (s <= 1))
        assert np.all(predict(model, rows) == (s > 0.5).astype(int))


def test_tree_depth_and_min_split_bounds():
    rng = np.random.default_rng(8)
    X = rng.normal(size=(300, 4))
    y = (X[:, 0] + 0.8 * rng.normal(size=300) > 0).astype(int)
    config = default_config(ModelKind.DT)
    model = train(config, X, y)

    def walk(node, depth, parent_n):
        assert depth <= config.max_depth
        if not node.is_leaf():
            assert node.n_samples >= config.min_samples_split
            walk(node.left, depth + 1, node.n_samples)
            walk(node.right, depth + 1, node.n_samples)

    walk(model.trees[0], 0, len(y))
    assert model.trees[0].depth() <= config.max_depth


def test_rf_not_worse_than_dt_on_noisy_fixture():
    dt_errors, rf_errors = [], []
    for seed in range(10):
        rng = np.random.default_rng(100 + seed)
        X, y = _blobs(rng, n_per=80, margin=1.0, noise=1.2, d=5)
        Xt, yt = _blobs(np.random.default_rng(900 + seed), n_per=80, margin=1.0, noise=1.2, d=5)
        dt = train(default_config(ModelKind.DT, seed=seed), X, y)
        rf = train(default_config(ModelKind.RF, seed=seed), X, y)
        dt_errors.append(np.mean(predict(dt, Xt) != yt))
        rf_errors.append(np.mean(predict(rf, Xt) != yt))
    assert np.mean(rf_errors) <= np.mean(dt_errors)


def test_tree_predictions_scale_invariant():
    rng = np.random.default_rng(9)
    X = rng.normal(size=(120, 3))
    y = (X[:, 1] - 0.5 * X[:, 2] + 0.4 * rng.normal(size=120) > 0).astype(int)
    rows = rng.normal(size=(50, 3))
    for kind in (ModelKind.DT, ModelKind.RF, ModelKind.GB):
        base = train(default_config(kind, seed=4), X, y)
        X2, rows2 = X.copy(), rows.copy()
        X2[:, 1] *= 3.7
        rows2[:, 1] *= 3.7
        scaled = train(default_config(kind, seed=4), X2, y)
        assert np.all(predict(base, rows) == predict(scaled, rows2))


def test_root_split_is_brute_force_optimal():
    # Depth-1 fit vs exhaustive (feature, midpoint) enumeration on small data.
    def weighted_gini(y_left, y_right):
        total = len(y_left) + len(y_right)
        g = 0.0
        for side in (y_left, y_right):
            if len(side) == 0:
                return None
            p = side.mean()
            g += len(side) / total * (2 * p * (1 - p))
        return g

    rng = np.random.default_rng(13)
    for _ in range(25):
        n = int(rng.integers(4, 51))
        d = int(rng.integers(1, 6))
        X = np.round(rng.normal(size=(n, d)), 1)
        y = rng.integers(0, 2, size=n)
        if y.min() == y.max():
            y[0] = 1 - y[0]
        model = train(ModelConfig(kind=ModelKind.DT, max_depth=1, min_samples_split=2), X, y)
        root = model.trees[0]
        best = None
        for j in range(d):
            vals = np.unique(X[:, j])
            for i in range(len(vals) - 1):
                thr = (vals[i] + vals[i + 1]) / 2
                g = weighted_gini(y[X[:, j] <= thr], y[X[:, j] > thr])
                if g is not None and (best is None or g < best):
                    best = g
        if root.is_leaf():
            assert best is None or best == pytest.approx(
                2 * y.mean() * (1 - y.mean()), abs=1e-12
            )
            continue
        mask = X[:, root.feature] <= root.threshold
        achieved = weighted_gini(y[mask], y[~mask])
        assert achieved == pytest.approx(best, abs=1e-12)


def test_degenerate_single_class_raises():
    X = np.random.default_rng(1).normal(size=(20, 2))
    with pytest.raises(DegenerateData):
        train(default_config(ModelKind.DT), X, np.zeros(20, dtype=int))


def test_dimension_mismatch_raises():
    rng = np.random.default_rng(2)
    X, y = _blobs(rng)
    model = train(default_config(ModelKind.DT, seed=0), X, y)
    with pytest.raises(DimensionMismatch):
        predict(model, np.zeros(5))


def test_seed_mandatory_for_rf_and_gb():
    rng = np.random.default_rng(3)
    X, y = _blobs(rng)
    for kind in (ModelKind.RF, ModelKind.GB):
        with pytest.raises(ModelError):
            train(ModelConfig(kind=kind, seed=None), X, y)


def test_default_configs_match_reference_settings():
    dt = default_config(ModelKind.DT)
    assert (dt.max_depth, dt.min_samples_split) == (8, 10)
    rf = default_config(ModelKind.RF, seed=0)
    assert (rf.n_estimators, rf.max_depth) == (100, 8)
    gb = default_config(ModelKind.GB, seed=0)
    assert (gb.n_estimators, gb.max_depth, gb.learning_rate) == (100, 5, 0.1)
    svm = default_config(ModelKind.SVM)
    assert svm.svm_c == 1.0 and svm.svm_tol == 1e-4


def test_serialization_round_trip_preserves_scores(tmp_path):
    rng = np.random.default_rng(10)
    X, y = _blobs(rng)
    rows = rng.normal(0, 2, size=(30, 2))
    for kind in ModelKind:
        model = train(default_config(kind, seed=5), X, y, feature_names=("u", "v"))
        model.normalization = {"u": (0.0, 1.0), "v": (-1.0, 2.0)}
        path = tmp_path / f"m_{kind.value}.json"
        save_model(model, path)
        again = load_model(path)
        assert again.feature_names == ("u", "v")
        assert again.normalization == model.normalization
        assert np.allclose(score(model, rows), score(again, rows), atol=0)


def test_model_format_tag_checked():
    with pytest.raises(ModelError):
        model_from_dict({"format": "something-else"})


def test_importances_normalized_and_aligned():
    rng = np.random.default_rng(11)
    X = rng.normal(size=(200, 3))
    y = (X[:, 0] > 0).astype(int)  # only feature 0 informative
    for kind in ModelKind:
        model = train(default_config(kind, seed=6), X, y)
        imp = feature_importances(model)
        assert imp.sum() == pytest.approx(1.0, abs=1e-9)
        assert imp.argmax() == 0


def test_serialized_model_dict_is_self_describing():
    rng = np.random.default_rng(12)
    X, y = _blobs(rng)
    doc = model_to_dict(train(default_config(ModelKind.GB, seed=1), X, y))
    assert doc["format"] == "dysec-model/1"
    assert doc["config"]["kind"] == "GB"
    assert len(doc["trees"]) == 100
