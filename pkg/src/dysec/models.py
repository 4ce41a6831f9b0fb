"""Supervised classifiers built from scratch on the split-search kernels.

Four model kinds share one training entry point:

* decision tree — greedy Gini splits, max_depth 8, min_samples_split 10
* random forest — 100 bagged trees, max_depth 8, per-split feature subsets
  of ceil(sqrt(d)), seed-deterministic
* gradient boosting — 100 logistic-loss stages of depth-5 regression trees,
  learning rate 0.1, Newton leaf values
* linear SVM — dual coordinate descent on the L1-loss objective, with a
  logistic calibration of the margin for probabilistic scores

Scores are always in [0, 1]; ``predict`` labels a row malicious when its
score strictly exceeds 0.5, so exact ties resolve to benign.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Any

import numpy as np

from dysec import kernels

MODEL_FORMAT_TAG = "dysec-model/1"

# Numerical guards for the boosting stages.
_GB_LEAF_CLIP = 10.0
_GB_HESSIAN_FLOOR = 1e-12


class ModelError(Exception):
    pass


class DegenerateData(ModelError):
    """Training data contains a single class."""


class DimensionMismatch(ModelError):
    """Row width does not match the model's feature order."""


class UntrainedModel(ModelError):
    pass


class ModelKind(str, Enum):
    DT = "DT"
    RF = "RF"
    GB = "GB"
    SVM = "SVM"


@dataclass(frozen=True)
class ModelConfig:
    kind: ModelKind
    max_depth: int = 8
    min_samples_split: int = 2
    n_estimators: int = 100
    learning_rate: float = 0.1
    svm_c: float = 1.0
    svm_tol: float = 1e-4
    seed: int | None = None


def default_config(kind: ModelKind, seed: int | None = None) -> ModelConfig:
    """Per-kind defaults; overridable, but these are the reference settings."""
    if kind is ModelKind.DT:
        return ModelConfig(kind=kind, max_depth=8, min_samples_split=10, seed=seed)
    if kind is ModelKind.RF:
        return ModelConfig(kind=kind, max_depth=8, n_estimators=100, seed=seed)
    if kind is ModelKind.GB:
        return ModelConfig(
            kind=kind, max_depth=5, n_estimators=100, learning_rate=0.1, seed=seed
        )
    return ModelConfig(kind=ModelKind.SVM, svm_c=1.0, svm_tol=1e-4, seed=seed)


@dataclass
class TreeNode:
    feature: int = -1  # -1 marks a leaf
    threshold: float = 0.0
    left: TreeNode | None = None
    right: TreeNode | None = None
    value: float = 0.0  # leaf: P(malicious) or additive regression output
    n_samples: int = 0

    def is_leaf(self) -> bool:
        return self.feature < 0

    def depth(self) -> int:
        if self.is_leaf():
            return 0
        return 1 + max(self.left.depth(), self.right.depth())


@dataclass
class TrainedModel:
    config: ModelConfig
    feature_names: tuple[str, ...]
    trees: list[TreeNode] = field(default_factory=list)
    base_score: float = 0.0  # GB initial log-odds
    weights: np.ndarray | None = None  # SVM, bias appended
    calibration: tuple[float, float] | None = None  # (slope, intercept) on margin
    importances_raw: np.ndarray | None = None
    n_training_samples: int = 0
    # Stored here so a saved model carries the exact train-time transform.
    normalization: dict[str, tuple[float, float]] | None = None


# ---------------------------------------------------------------------------
# Tree growing
# ---------------------------------------------------------------------------

def _grow_tree(
    X: np.ndarray,
    y: np.ndarray,
    idx: np.ndarray,
    depth: int,
    cfg: ModelConfig,
    max_features: int | None,
    rng: np.random.Generator | None,
    importances: np.ndarray,
    n_total: int,
    regression: bool,
    hessians: np.ndarray | None = None,
) -> TreeNode:
    n = idx.size
    if regression:
        r_sum = float(y[idx].sum())
        h_sum = float(hessians[idx].sum())
        leaf_value = r_sum / max(h_sum, _GB_HESSIAN_FLOOR)
        leaf_value = max(-_GB_LEAF_CLIP, min(_GB_LEAF_CLIP, leaf_value))
    else:
        pos = int(y[idx].sum())
        leaf_value = pos / n

    node = TreeNode(value=leaf_value, n_samples=n)
    if depth >= cfg.max_depth or n < max(cfg.min_samples_split, 2):
        return node
    if not regression and (leaf_value == 0.0 or leaf_value == 1.0):
        return node

    d = X.shape[1]
    if max_features is not None and max_features < d:
        candidates = rng.choice(d, size=max_features, replace=False)
    else:
        candidates = range(d)

    split = kernels.best_split_regression if regression else kernels.best_split_classification
    best_score = float("-inf")
    best_feature = -1
    best_threshold = 0.0
    col_targets = y[idx]
    for j in candidates:
        valid, threshold, score = split(X[idx, j], col_targets)
        if valid and score > best_score:
            best_score = score
            best_feature = int(j)
            best_threshold = threshold
    if best_feature < 0:
        return node

    mask = X[idx, best_feature] <= best_threshold
    left_idx = idx[mask]
    right_idx = idx[~mask]
    if left_idx.size == 0 or right_idx.size == 0:
        return node

    # Impurity decrease, already weighted by node size relative to the root.
    if regression:
        parent_score = r_sum * r_sum / n
    else:
        neg = n - pos
        parent_score = (pos * pos + neg * neg) / n
    importances[best_feature] += (best_score - parent_score) / n_total

    node.feature = best_feature
    node.threshold = best_threshold
    node.left = _grow_tree(
        X, y, left_idx, depth + 1, cfg, max_features, rng, importances, n_total,
        regression, hessians,
    )
    node.right = _grow_tree(
        X, y, right_idx, depth + 1, cfg, max_features, rng, importances, n_total,
        regression, hessians,
    )
    return node


def _tree_scores(node: TreeNode, X: np.ndarray) -> np.ndarray:
    out = np.empty(X.shape[0], dtype=np.float64)
    stack = [(node, np.arange(X.shape[0]))]
    while stack:
        cur, idx = stack.pop()
        if cur.is_leaf():
            out[idx] = cur.value
            continue
        mask = X[idx, cur.feature] <= cur.threshold
        stack.append((cur.left, idx[mask]))
        stack.append((cur.right, idx[~mask]))
    return out


# ---------------------------------------------------------------------------
# SVM: dual coordinate descent + logistic margin calibration
# ---------------------------------------------------------------------------

def _fit_linear_svm(X: np.ndarray, y01: np.ndarray, c: float, tol: float) -> np.ndarray:
    """L2-regularized L1-loss SVM via dual coordinate descent.

    The bias is an augmented constant feature, so it is (mildly) regularized
    too.  Deterministic: coordinates are visited in index order, stopping when
    the dual objective moves less than ``tol`` between passes.
    """
    n, d = X.shape
    Xa = np.hstack([X, np.ones((n, 1))])
    y = np.where(y01 > 0, 1.0, -1.0)
    q_diag = np.einsum("ij,ij->i", Xa, Xa)
    alpha = np.zeros(n)
    w = np.zeros(d + 1)
    prev_obj = None
    for _ in range(1000):
        for i in range(n):
            if q_diag[i] <= 0.0:
                continue
            g = y[i] * float(Xa[i] @ w) - 1.0
            a_old = alpha[i]
            a_new = min(max(a_old - g / q_diag[i], 0.0), c)
            if a_new != a_old:
                w += (a_new - a_old) * y[i] * Xa[i]
                alpha[i] = a_new
        obj = 0.5 * float(w @ w) - float(alpha.sum())
        if prev_obj is not None and abs(prev_obj - obj) < tol:
            break
        prev_obj = obj
    return w


def _fit_margin_calibration(margins: np.ndarray, y01: np.ndarray) -> tuple[float, float]:
    """Two-parameter logistic fit of P(malicious | margin) by Newton steps."""
    a, b = 1.0, 0.0
    y = y01.astype(np.float64)
    for _ in range(100):
        z = np.clip(a * margins + b, -35.0, 35.0)
        p = 1.0 / (1.0 + np.exp(-z))
        grad_a = float(((p - y) * margins).sum())
        grad_b = float((p - y).sum())
        w = p * (1.0 - p)
        h_aa = float((w * margins * margins).sum()) + 1e-9
        h_ab = float((w * margins).sum())
        h_bb = float(w.sum()) + 1e-9
        det = h_aa * h_bb - h_ab * h_ab
        if abs(det) < 1e-12:
            break
        da = (h_bb * grad_a - h_ab * grad_b) / det
        db = (h_aa * grad_b - h_ab * grad_a) / det
        # Damp steps so separable data converges to a steep, finite slope.
        da = max(-5.0, min(5.0, da))
        db = max(-5.0, min(5.0, db))
        a -= da
        b -= db
        if abs(da) < 1e-10 and abs(db) < 1e-10:
            break
    return a, b


def _sigmoid(z):
    return 1.0 / (1.0 + np.exp(-np.clip(z, -35.0, 35.0)))


# ---------------------------------------------------------------------------
# Public API
# ---------------------------------------------------------------------------

def train(
    config: ModelConfig,
    X: np.ndarray,
    y: np.ndarray,
    feature_names: tuple[str, ...] | None = None,
    X_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> TrainedModel:
    """Fit one model.  Labels are 0 (benign) / 1 (malicious).

    ``X_val``/``y_val`` are only consumed by the SVM's margin calibration;
    when absent, calibration falls back to the training data.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).ravel()
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise DimensionMismatch(f"X {X.shape} does not align with y {y.shape}")
    if np.unique(y).size < 2:
        raise DegenerateData("training labels contain a single class")
    if config.kind in (ModelKind.RF, ModelKind.GB) and config.seed is None:
        raise ModelError(f"{config.kind.value} requires a seed")

    n, d = X.shape
    names = tuple(feature_names) if feature_names else tuple(f"f{i}" for i in range(d))
    if len(names) != d:
        raise DimensionMismatch("feature_names length does not match X width")

    model = TrainedModel(
        config=config,
        feature_names=names,
        importances_raw=np.zeros(d),
        n_training_samples=n,
    )
    all_idx = np.arange(n)

    if config.kind is ModelKind.DT:
        model.trees = [
            _grow_tree(
                X, y, all_idx, 0, config, None, None, model.importances_raw, n,
                regression=False,
            )
        ]
    elif config.kind is ModelKind.RF:
        max_features = max(1, math.ceil(math.sqrt(d)))
        children = np.random.SeedSequence(config.seed).spawn(config.n_estimators)
        for seq in children:
            rng = np.random.default_rng(seq)
            boot = rng.integers(0, n, size=n)
            model.trees.append(
                _grow_tree(
                    X, y, boot, 0, config, max_features, rng,
                    model.importances_raw, n, regression=False,
                )
            )
    elif config.kind is ModelKind.GB:
        pos_rate = float(y.mean())
        pos_rate = min(max(pos_rate, 1e-12), 1.0 - 1e-12)
        model.base_score = math.log(pos_rate / (1.0 - pos_rate))
        current = np.full(n, model.base_score)
        for _ in range(config.n_estimators):
            p = _sigmoid(current)
            residuals = y - p
            hess = p * (1.0 - p)
            tree = _grow_tree(
                X, residuals, all_idx, 0, config, None, None,
                model.importances_raw, n, regression=True, hessians=hess,
            )
            model.trees.append(tree)
            current = current + config.learning_rate * _tree_scores(tree, X)
    else:
        model.weights = _fit_linear_svm(X, y, config.svm_c, config.svm_tol)
        if X_val is not None and y_val is not None and len(y_val):
            cal_X = np.asarray(X_val, dtype=np.float64)
            cal_y = np.asarray(y_val, dtype=np.int64).ravel()
        else:
            cal_X, cal_y = X, y
        margins = cal_X @ model.weights[:-1] + model.weights[-1]
        model.calibration = _fit_margin_calibration(margins, cal_y)
        model.importances_raw = np.abs(model.weights[:-1])

    return model


def _as_matrix(model: TrainedModel, x: np.ndarray) -> tuple[np.ndarray, bool]:
    arr = np.asarray(x, dtype=np.float64)
    single = arr.ndim == 1
    if single:
        arr = arr.reshape(1, -1)
    if arr.ndim != 2 or arr.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"row width {arr.shape[-1]} != model feature count {len(model.feature_names)}"
        )
    return arr, single


def score(model: TrainedModel, x: np.ndarray):
    """Continuous malicious score in [0, 1]; scalar for a 1-D row."""
    X, single = _as_matrix(model, x)
    kind = model.config.kind
    if kind is ModelKind.DT:
        out = _tree_scores(model.trees[0], X)
    elif kind is ModelKind.RF:
        acc = np.zeros(X.shape[0])
        for tree in model.trees:
            acc += _tree_scores(tree, X)
        out = acc / len(model.trees)
    elif kind is ModelKind.GB:
        acc = np.full(X.shape[0], model.base_score)
        for tree in model.trees:
            acc += model.config.learning_rate * _tree_scores(tree, X)
        out = _sigmoid(acc)
    else:
        if model.weights is None:
            raise UntrainedModel("SVM has no weights")
        margins = X @ model.weights[:-1] + model.weights[-1]
        a, b = model.calibration if model.calibration else (1.0, 0.0)
        out = _sigmoid(a * margins + b)
    return float(out[0]) if single else out


def predict(model: TrainedModel, x: np.ndarray):
    """1 = malicious, 0 = benign; a score of exactly 0.5 stays benign."""
    s = score(model, x)
    if isinstance(s, float):
        return int(s > 0.5)
    return (s > 0.5).astype(np.int64)


def feature_importances(model: TrainedModel) -> np.ndarray:
    """Importances normalized to sum 1 (uniform if the model never split)."""
    if model.importances_raw is None:
        raise UntrainedModel("model carries no importance accumulator")
    total = float(model.importances_raw.sum())
    if total <= 0.0:
        return np.full(len(model.feature_names), 1.0 / len(model.feature_names))
    return model.importances_raw / total


# ---------------------------------------------------------------------------
# Serialization: self-describing JSON with a format tag.
# ---------------------------------------------------------------------------

def _node_to_dict(node: TreeNode) -> dict[str, Any]:
    if node.is_leaf():
        return {"v": node.value, "n": node.n_samples}
    return {
        "f": node.feature,
        "t": node.threshold,
        "n": node.n_samples,
        "v": node.value,
        "l": _node_to_dict(node.left),
        "r": _node_to_dict(node.right),
    }


def _node_from_dict(doc: dict[str, Any]) -> TreeNode:
    if "f" not in doc:
        return TreeNode(value=doc["v"], n_samples=doc["n"])
    return TreeNode(
        feature=doc["f"],
        threshold=doc["t"],
        value=doc.get("v", 0.0),
        n_samples=doc["n"],
        left=_node_from_dict(doc["l"]),
        right=_node_from_dict(doc["r"]),
    )


def model_to_dict(model: TrainedModel) -> dict[str, Any]:
    cfg = model.config
    doc: dict[str, Any] = {
        "format": MODEL_FORMAT_TAG,
        "config": {
            "kind": cfg.kind.value,
            "max_depth": cfg.max_depth,
            "min_samples_split": cfg.min_samples_split,
            "n_estimators": cfg.n_estimators,
            "learning_rate": cfg.learning_rate,
            "svm_c": cfg.svm_c,
            "svm_tol": cfg.svm_tol,
            "seed": cfg.seed,
        },
        "feature_names": list(model.feature_names),
        "n_training_samples": model.n_training_samples,
        "base_score": model.base_score,
        "trees": [_node_to_dict(t) for t in model.trees],
        "weights": None if model.weights is None else model.weights.tolist(),
        "calibration": list(model.calibration) if model.calibration else None,
        "importances_raw": (
            None if model.importances_raw is None else model.importances_raw.tolist()
        ),
    }
    if model.normalization is not None:
        doc["normalization"] = {k: list(v) for k, v in model.normalization.items()}
    return doc


def model_from_dict(doc: dict[str, Any]) -> TrainedModel:
    if doc.get("format") != MODEL_FORMAT_TAG:
        raise ModelError(f"unsupported model format: {doc.get('format')!r}")
    c = doc["config"]
    config = ModelConfig(
        kind=ModelKind(c["kind"]),
        max_depth=c["max_depth"],
        min_samples_split=c["min_samples_split"],
        n_estimators=c["n_estimators"],
        learning_rate=c["learning_rate"],
        svm_c=c["svm_c"],
        svm_tol=c["svm_tol"],
        seed=c["seed"],
    )
    model = TrainedModel(
        config=config,
        feature_names=tuple(doc["feature_names"]),
        trees=[_node_from_dict(t) for t in doc["trees"]],
        base_score=doc.get("base_score", 0.0),
        weights=None if doc.get("weights") is None else np.asarray(doc["weights"]),
        calibration=tuple(doc["calibration"]) if doc.get("calibration") else None,
        importances_raw=(
            None
            if doc.get("importances_raw") is None
            else np.asarray(doc["importances_raw"])
        ),
        n_training_samples=doc.get("n_training_samples", 0),
    )
    if doc.get("normalization"):
        model.normalization = {k: (v[0], v[1]) for k, v in doc["normalization"].items()}
    return model


def save_model(model: TrainedModel, path: str | Path) -> None:
    Path(path).write_text(json.dumps(model_to_dict(model)))


def load_model(path: str | Path) -> TrainedModel:
    return model_from_dict(json.loads(Path(path).read_text()))
