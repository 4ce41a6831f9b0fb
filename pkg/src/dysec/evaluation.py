"""Data splitting and metric computation (malicious is the positive class).

Precision/recall/F1 are reported support-weighted across the two classes,
plus the positive-class precision and F1 on their own.  ROC AUC uses the
rank-statistic formulation (ties count one half), which equals the
trapezoidal area under the ROC over all distinct thresholds.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np


class EvaluationError(ValueError):
    pass


class InsufficientClass(EvaluationError):
    pass


class SingleClass(EvaluationError):
    pass


DEFAULT_FRACTIONS = (0.70, 0.15, 0.15)
SPLIT_PART_NAMES = ("train", "validation", "test")


@dataclass(frozen=True)
class SplitPlan:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    fractions: tuple[float, float, float]
    seed: int

    def parts(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        return self.train, self.validation, self.test


def _largest_remainder(total: int, fractions: Sequence[float]) -> list[int]:
    ideals = [total * f for f in fractions]
    counts = [int(np.floor(v)) for v in ideals]
    leftover = total - sum(counts)
    remainders = sorted(
        range(len(fractions)), key=lambda i: (-(ideals[i] - counts[i]), i)
    )
    for i in remainders[:leftover]:
        counts[i] += 1
    return counts


def stratified_split(
    labels: Sequence[int],
    fractions: tuple[float, float, float] = DEFAULT_FRACTIONS,
    seed: int = 0,
) -> SplitPlan:
    """Deterministic stratified train/validation/test split.

    Per-class counts are rounded by largest remainder; each class's leftover
    samples go to whichever part is furthest below its global target, so
    part sizes land within one sample of ``total * fraction``.
    """
    y = np.asarray(labels)
    if abs(sum(fractions) - 1.0) > 1e-9:
        raise EvaluationError(f"fractions must sum to 1, got {fractions}")
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise InsufficientClass("need two classes to stratify")
    if counts.min() < 3:
        raise InsufficientClass("every class needs at least 3 samples")

    rng = np.random.default_rng(seed)
    n = y.size
    global_targets = _largest_remainder(n, fractions)
    part_totals = [0, 0, 0]
    parts: list[list[int]] = [[], [], []]
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        n_cls = idx.size
        base = [int(np.floor(n_cls * f)) for f in fractions]
        leftover = n_cls - sum(base)
        # Largest remainder first; among equal remainders prefer the part
        # furthest below its global target, then the earlier part.
        ranked = sorted(
            range(3),
            key=lambda p: (
                -(n_cls * fractions[p] - base[p]),
                -(global_targets[p] - part_totals[p] - base[p]),
                p,
            ),
        )
        for p in ranked[:leftover]:
            base[p] += 1
        offset = 0
        for p in range(3):
            parts[p].extend(idx[offset : offset + base[p]].tolist())
            part_totals[p] += base[p]
            offset += base[p]

    return SplitPlan(
        train=np.array(sorted(parts[0]), dtype=np.int64),
        validation=np.array(sorted(parts[1]), dtype=np.int64),
        test=np.array(sorted(parts[2]), dtype=np.int64),
        fractions=tuple(fractions),
        seed=seed,
    )


def stratified_kfold(labels: Sequence[int], k: int = 5, seed: int = 0) -> list[np.ndarray]:
    """k disjoint, exhaustive folds with per-class counts within one of even."""
    y = np.asarray(labels)
    classes, counts = np.unique(y, return_counts=True)
    if classes.size < 2:
        raise InsufficientClass("need two classes to stratify")
    if counts.min() < k:
        raise InsufficientClass(f"every class needs at least {k} samples")
    rng = np.random.default_rng(seed)
    folds: list[list[int]] = [[] for _ in range(k)]
    for cls in classes:
        idx = np.flatnonzero(y == cls)
        rng.shuffle(idx)
        base, extra = divmod(idx.size, k)
        offset = 0
        for f in range(k):
            take = base + (1 if f < extra else 0)
            folds[f].extend(idx[offset : offset + take].tolist())
            offset += take
    return [np.array(sorted(f), dtype=np.int64) for f in folds]


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int
    tn: int
    fp: int
    fn: int

    @property
    def total(self) -> int:
        return self.tp + self.tn + self.fp + self.fn


def confusion(pred: Sequence[int], truth: Sequence[int]) -> ConfusionMatrix:
    p = np.asarray(pred)
    t = np.asarray(truth)
    if p.shape != t.shape:
        raise EvaluationError(f"length mismatch: {p.shape} vs {t.shape}")
    return ConfusionMatrix(
        tp=int(((p == 1) & (t == 1)).sum()),
        tn=int(((p == 0) & (t == 0)).sum()),
        fp=int(((p == 1) & (t == 0)).sum()),
        fn=int(((p == 0) & (t == 1)).sum()),
    )


def roc_auc(scores: Sequence[float], truth: Sequence[int]) -> float:
    """Probability a random positive outscores a random negative, ties at 1/2."""
    s = np.asarray(scores, dtype=np.float64)
    t = np.asarray(truth)
    n_pos = int((t == 1).sum())
    n_neg = int((t == 0).sum())
    if n_pos == 0 or n_neg == 0:
        raise SingleClass("ROC AUC needs both classes")
    order = np.argsort(s, kind="mergesort")
    ranks = np.empty(s.size, dtype=np.float64)
    sorted_scores = s[order]
    i = 0
    while i < s.size:
        j = i
        while j + 1 < s.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0  # average rank, 1-based
        i = j + 1
    pos_rank_sum = float(ranks[t == 1].sum())
    u = pos_rank_sum - n_pos * (n_pos + 1) / 2.0
    return u / (n_pos * n_neg)


@dataclass(frozen=True)
class MetricSet:
    accuracy: float
    precision_weighted: float
    recall_weighted: float
    f1_weighted: float
    precision_positive: float
    f1_positive: float
    roc_auc: float | None
    test_time_s: float = 0.0

    def to_dict(self) -> dict:
        return {
            "accuracy": self.accuracy,
            "precision_weighted": self.precision_weighted,
            "recall_weighted": self.recall_weighted,
            "f1_weighted": self.f1_weighted,
            "precision_positive": self.precision_positive,
            "f1_positive": self.f1_positive,
            "roc_auc": self.roc_auc,
            "test_time_s": self.test_time_s,
        }


def _safe_div(num: float, den: float) -> float:
    return num / den if den else 0.0


def metrics(
    cm: ConfusionMatrix,
    scores: Sequence[float] | None = None,
    truth: Sequence[int] | None = None,
    test_time_s: float = 0.0,
) -> MetricSet:
    """Metric set from a confusion matrix, plus ROC AUC when scores are given."""
    if cm.total == 0:
        raise EvaluationError("empty confusion matrix")
    support_pos = cm.tp + cm.fn
    support_neg = cm.tn + cm.fp
    prec_pos = _safe_div(cm.tp, cm.tp + cm.fp)
    prec_neg = _safe_div(cm.tn, cm.tn + cm.fn)
    rec_pos = _safe_div(cm.tp, support_pos)
    rec_neg = _safe_div(cm.tn, support_neg)
    f1_pos = _safe_div(2 * prec_pos * rec_pos, prec_pos + rec_pos)
    f1_neg = _safe_div(2 * prec_neg * rec_neg, prec_neg + rec_neg)

    def weighted(pos_value: float, neg_value: float) -> float:
        return (pos_value * support_pos + neg_value * support_neg) / cm.total

    auc = None
    if scores is not None and truth is not None:
        auc = roc_auc(scores, truth)

    return MetricSet(
        accuracy=(cm.tp + cm.tn) / cm.total,
        precision_weighted=weighted(prec_pos, prec_neg),
        recall_weighted=weighted(rec_pos, rec_neg),
        f1_weighted=weighted(f1_pos, f1_neg),
        precision_positive=prec_pos,
        f1_positive=f1_pos,
        roc_auc=auc,
        test_time_s=test_time_s,
    )


# ---------------------------------------------------------------------------
# Report files
# ---------------------------------------------------------------------------

def write_metrics_csv(path: str | Path, rows: dict[tuple[str, str], MetricSet]) -> None:
    """One row per (model, feature_set); columns follow the headline metrics."""
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["model", "feature_set", "accuracy", "precision", "recall", "f1_score"])
        for (model, feature_set), m in rows.items():
            writer.writerow(
                [
                    model,
                    feature_set,
                    f"{m.accuracy:.4f}",
                    f"{m.precision_weighted:.4f}",
                    f"{m.recall_weighted:.4f}",
                    f"{m.f1_weighted:.4f}",
                ]
            )


def write_confusion_csv(path: str | Path, cm: ConfusionMatrix) -> None:
    # 2x2 layout: rows = truth (malicious, benign), columns = prediction.
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["", "pred_malicious", "pred_benign"])
        writer.writerow(["true_malicious", cm.tp, cm.fn])
        writer.writerow(["true_benign", cm.fp, cm.tn])


def write_evaluation_json(
    path: str | Path,
    results: dict[str, dict],
) -> None:
    Path(path).write_text(json.dumps(results, indent=2, sort_keys=True))
