"""Staged feature selection: candidates -> correlation filter -> importance cut.

Stages and default thresholds:

1. drop zero-variance columns (correlation is undefined for them);
2. greedy pairwise Pearson filter at ``|r| > 0.50``, keeping the
   higher-variance member of each offending pair (ties keep the earlier
   catalog position);
3. train every model kind per trace-category group and keep features whose
   best importance score clears 0.05 (reported) and 0.08 (selected).

Importance is scoped to the feature's category group: each trained model
sees only one group's columns and its scores sum to one within that group.
Scoping importances globally would cap how many features can clear a fixed
threshold (scores sum to one per model), which contradicts the per-category
selection counts this pipeline is built to report.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from dysec.models import (
    ModelKind,
    TrainedModel,
    UntrainedModel,
    DimensionMismatch,
    default_config,
    feature_importances,
    train,
)

DEFAULT_R_MAX = 0.50
DEFAULT_IMS_LOW = 0.05
DEFAULT_IMS_HIGH = 0.08

ALL_MODEL_KINDS = (ModelKind.RF, ModelKind.DT, ModelKind.SVM, ModelKind.GB)


class LengthMismatch(ValueError):
    pass


def pearson_r(x: Sequence[float], y: Sequence[float]) -> float:
    """Product-moment correlation; 0 by convention when either side is constant."""
    xa = np.asarray(x, dtype=np.float64)
    ya = np.asarray(y, dtype=np.float64)
    if xa.shape != ya.shape or xa.ndim != 1:
        raise LengthMismatch(f"series shapes differ: {xa.shape} vs {ya.shape}")
    if xa.size < 2:
        raise LengthMismatch("need at least two observations")
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx == 0.0 or syy == 0.0:
        return 0.0
    return float((dx @ dy) / np.sqrt(sxx * syy))


@dataclass(frozen=True)
class ImportanceTable:
    model_id: ModelKind
    scores: dict[str, float]  # sums to 1 over the model's own features


def importance_scores(
    model: TrainedModel, X_val: np.ndarray, y_val: np.ndarray
) -> ImportanceTable:
    """Normalized importances of a trained model.

    Tree kinds report mean decrease in impurity aggregated over their trees;
    the linear SVM reports normalized absolute weights.  Both are artifacts
    of training; the validation data is checked for shape compatibility only.
    """
    if model.importances_raw is None:
        raise UntrainedModel("model has no importances")
    X_val = np.asarray(X_val)
    if X_val.ndim != 2 or X_val.shape[1] != len(model.feature_names):
        raise DimensionMismatch(
            f"validation width {X_val.shape} != feature count {len(model.feature_names)}"
        )
    if len(y_val) != X_val.shape[0]:
        raise LengthMismatch("validation labels do not align with rows")
    normalized = feature_importances(model)
    return ImportanceTable(
        model_id=model.config.kind,
        scores={name: float(normalized[i]) for i, name in enumerate(model.feature_names)},
    )


# ---------------------------------------------------------------------------
# Correlation filter
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class CorrelationRemoval:
    dropped: str
    kept_partner: str
    r: float


def correlation_filter(
    X: np.ndarray,
    feature_names: Sequence[str],
    r_max: float = DEFAULT_R_MAX,
) -> tuple[list[str], list[CorrelationRemoval]]:
    """Drop one member of every pair with ``|r| > r_max``.

    Pairs are scanned in catalog order; the later feature is dropped unless
    its variance exceeds the earlier's.  After the single pass no surviving
    pair can exceed the threshold, because a pair is examined exactly when
    both members are still alive.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] < 2:
        raise LengthMismatch("need at least two rows to correlate")
    names = list(feature_names)
    variances = X.var(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        corr = np.corrcoef(X.T) if X.shape[1] > 1 else np.ones((1, 1))
    active = [True] * len(names)
    removed: list[CorrelationRemoval] = []
    for i in range(len(names)):
        if not active[i]:
            continue
        for j in range(i + 1, len(names)):
            if not active[i]:
                break
            if not active[j]:
                continue
            r = float(corr[i, j])
            # Constant columns produce NaN; correlation is undefined there
            # and the pair is left alone.
            if not np.isnan(r) and abs(r) > r_max:
                if variances[j] > variances[i]:
                    victim, survivor = i, j
                else:
                    victim, survivor = j, i
                active[victim] = False
                removed.append(
                    CorrelationRemoval(names[victim], names[survivor], r)
                )
    kept = [names[i] for i in range(len(names)) if active[i]]
    return kept, removed


# ---------------------------------------------------------------------------
# Full staged selection
# ---------------------------------------------------------------------------

@dataclass
class SelectionReport:
    cf_count: int
    zero_variance: tuple[str, ...]
    removed_correlated: tuple[CorrelationRemoval, ...]
    idf_count: int
    imf: dict[str, tuple[str, ...]]  # model kind -> features with IMS > ims_low
    sef: tuple[str, ...]
    thresholds: tuple[float, float, float]  # (r_max, ims_low, ims_high)
    max_ims: dict[str, float] = field(default_factory=dict)
    category_counts: dict[str, dict[str, int]] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "cf_count": self.cf_count,
            "zero_variance": list(self.zero_variance),
            "removed_correlated": [
                {"dropped": r.dropped, "kept_partner": r.kept_partner, "r": r.r}
                for r in self.removed_correlated
            ],
            "idf_count": self.idf_count,
            "imf": {k: list(v) for k, v in self.imf.items()},
            "sef": list(self.sef),
            "thresholds": {
                "r_max": self.thresholds[0],
                "ims_low": self.thresholds[1],
                "ims_high": self.thresholds[2],
            },
            "max_ims": self.max_ims,
            "category_counts": self.category_counts,
        }


def write_sef_list(path: str | Path, sef: Sequence[str]) -> None:
    """One feature per line; the list a later training run consumes."""
    Path(path).write_text("\n".join(sef) + "\n")


def read_sef_list(path: str | Path) -> tuple[str, ...]:
    return tuple(
        line.strip() for line in Path(path).read_text().splitlines() if line.strip()
    )


def select_sef(
    X: np.ndarray,
    y: np.ndarray,
    feature_names: Sequence[str],
    groups: Mapping[str, str] | None = None,
    model_kinds: Sequence[ModelKind] = ALL_MODEL_KINDS,
    r_max: float = DEFAULT_R_MAX,
    ims_low: float = DEFAULT_IMS_LOW,
    ims_high: float = DEFAULT_IMS_HIGH,
    seed: int = 0,
    X_val: np.ndarray | None = None,
    y_val: np.ndarray | None = None,
) -> SelectionReport:
    """Run the staged selection and report every intermediate set.

    ``groups`` maps feature name -> trace category; importance models are
    trained per group.  With no grouping every feature shares one group.
    With the default thresholds the 0.08 cut subsumes the 0.05 one; both
    stage memberships are still reported.
    """
    X = np.asarray(X, dtype=np.float64)
    y = np.asarray(y, dtype=np.int64).ravel()
    names = list(feature_names)
    if X.shape[1] != len(names):
        raise LengthMismatch("feature_names do not match matrix width")
    col_of = {name: i for i, name in enumerate(names)}

    variances = X.var(axis=0)
    zero_var = tuple(n for i, n in enumerate(names) if variances[i] == 0.0)
    live = [n for n in names if n not in set(zero_var)]

    live_X = X[:, [col_of[n] for n in live]]
    kept, removed = correlation_filter(live_X, live, r_max=r_max)

    group_of = {n: (groups[n] if groups else "all") for n in names}
    group_order: list[str] = []
    for n in kept:
        if group_of[n] not in group_order:
            group_order.append(group_of[n])

    if X_val is None:
        X_val, y_val = X, y

    max_ims: dict[str, float] = {n: 0.0 for n in kept}
    imf: dict[str, list[str]] = {kind.value: [] for kind in model_kinds}
    for g_index, group in enumerate(group_order):
        members = [n for n in kept if group_of[n] == group]
        cols = [col_of[n] for n in members]
        Xg = X[:, cols]
        Xg_val = np.asarray(X_val, dtype=np.float64)[:, cols]
        for k_index, kind in enumerate(model_kinds):
            config = default_config(kind, seed=seed + 1000 * g_index + k_index)
            model = train(config, Xg, y, feature_names=tuple(members),
                          X_val=Xg_val, y_val=y_val)
            table = importance_scores(model, Xg_val, np.asarray(y_val))
            for name, value in table.scores.items():
                if value > ims_low:
                    imf[kind.value].append(name)
                if value > max_ims[name]:
                    max_ims[name] = value

    sef = tuple(
        n for n in kept if max_ims[n] > ims_low and max_ims[n] > ims_high
    )

    category_counts: dict[str, dict[str, int]] = {}
    if groups:
        for group in dict.fromkeys(group_of[n] for n in names):
            members_all = [n for n in names if group_of[n] == group]
            members_kept = [n for n in kept if group_of[n] == group]
            category_counts[group] = {
                "cf": len(members_all),
                "df": len(members_all) - len(members_kept),
                "idf": len(members_kept),
                "sef": sum(1 for n in sef if group_of[n] == group),
            }

    return SelectionReport(
        cf_count=len(names),
        zero_variance=zero_var,
        removed_correlated=tuple(removed),
        idf_count=len(kept),
        imf={k: tuple(v) for k, v in imf.items()},
        sef=sef,
        thresholds=(r_max, ims_low, ims_high),
        max_ims=max_ims,
        category_counts=category_counts,
    )
