"""Gradient-boosted regression trees with exhaustive exact split search.

Plain squared-error boosting: every tree greedily fits the current
residuals, scanning each feature and every midpoint between consecutive
distinct sorted values for the split with the largest variance reduction.
Ties break toward the lowest feature index, then the lowest threshold,
and routing sends values <= threshold left, so fits are bit-reproducible.
Datasets here are small enough that exactness beats histogram tricks.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from datetime import date

import numpy as np

from .errors import ModelError
from .series import (
    CountSeries,
    Forecast,
    SupervisedMatrix,
    feature_names_for,
    feature_row,
    make_supervised,
    period_start,
)
from .stats import normal_quantile

MAX_HORIZON_RECURSIVE = 366


@dataclass(frozen=True)
class GbtSpec:
    n_trees: int = 200
    max_depth: int = 4
    learning_rate: float = 0.1
    min_samples_leaf: int = 5
    lags: tuple[int, ...] = tuple(range(1, 15))
    ma_windows: tuple[int, ...] = (7, 28)
    calendar: frozenset[str] = frozenset({"weekday", "month", "linear_index"})
    seed: int = 0  # reserved; fitting is exhaustive and uses no randomness

    def __post_init__(self):
        if self.n_trees < 1 or self.max_depth < 1:
            raise ValueError("n_trees and max_depth must be >= 1")
        if not 0.0 < self.learning_rate <= 1.0:
            raise ValueError("learning_rate must lie in (0, 1]")
        if self.min_samples_leaf < 1:
            raise ValueError("min_samples_leaf must be >= 1")
        object.__setattr__(self, "lags", tuple(self.lags))
        object.__setattr__(self, "ma_windows", tuple(self.ma_windows))
        object.__setattr__(self, "calendar", frozenset(self.calendar))


@dataclass
class Node:
    """Internal node (feature/threshold/children) or leaf (value)."""

    value: float | None = None
    feature: int | None = None
    threshold: float | None = None
    left: "Node | None" = None
    right: "Node | None" = None

    def is_leaf(self) -> bool:
        return self.value is not None

    def predict_one(self, row: np.ndarray) -> float:
        node = self
        while not node.is_leaf():
            node = node.left if row[node.feature] <= node.threshold else node.right
        return node.value

    def to_dict(self) -> dict:
        if self.is_leaf():
            return {"value": self.value}
        return {
            "feature": self.feature,
            "threshold": self.threshold,
            "left": self.left.to_dict(),
            "right": self.right.to_dict(),
        }

    @staticmethod
    def from_dict(obj: dict) -> "Node":
        if "value" in obj:
            return Node(value=float(obj["value"]))
        return Node(
            feature=int(obj["feature"]),
            threshold=float(obj["threshold"]),
            left=Node.from_dict(obj["left"]),
            right=Node.from_dict(obj["right"]),
        )


@dataclass
class GbtModel:
    base_score: float
    learning_rate: float
    feature_names: tuple[str, ...]
    trees: list[Node] = field(default_factory=list)
    gains: dict[str, float] = field(default_factory=dict)
    total_gain: float = 0.0
    rmse_train: float = 0.0
    stage_rmse: list[float] = field(default_factory=list)


def _best_split(x: np.ndarray, residual: np.ndarray, idx: np.ndarray, min_leaf: int):
    """Exhaustive scan; returns (gain, feature, threshold, left_idx, right_idx)
    or None. Strictly-greater comparisons with features and thresholds
    scanned in ascending order realize the normative tie-break."""
    n = idx.size
    total = residual[idx].sum()
    base_term = total * total / n
    best = None
    best_gain = 0.0
    for j in range(x.shape[1]):
        col = x[idx, j]
        order = np.argsort(col, kind="stable")
        xv = col[order]
        rv = residual[idx][order]
        prefix = np.cumsum(rv)

        cuts = np.arange(min_leaf, n - min_leaf + 1)
        if cuts.size == 0:
            continue
        boundary = xv[cuts] != xv[cuts - 1]
        if not boundary.any():
            continue
        cuts = cuts[boundary]
        left_sum = prefix[cuts - 1]
        right_sum = total - left_sum
        gains = left_sum**2 / cuts + right_sum**2 / (n - cuts) - base_term

        k = int(np.argmax(gains))
        if gains[k] > best_gain:
            cut = int(cuts[k])
            threshold = (xv[cut - 1] + xv[cut]) / 2.0
            left_idx = idx[order[:cut]]
            right_idx = idx[order[cut:]]
            best = (float(gains[k]), j, float(threshold), left_idx, right_idx)
            best_gain = float(gains[k])
    return best


def _build_tree(x: np.ndarray, residual: np.ndarray, idx: np.ndarray, depth: int,
                spec: GbtSpec, model: GbtModel) -> Node:
    if depth >= spec.max_depth or idx.size < 2 * spec.min_samples_leaf:
        return Node(value=float(residual[idx].mean()))
    found = _best_split(x, residual, idx, spec.min_samples_leaf)
    if found is None:
        return Node(value=float(residual[idx].mean()))
    gain, feature, threshold, left_idx, right_idx = found
    name = model.feature_names[feature]
    model.gains[name] = model.gains.get(name, 0.0) + gain
    model.total_gain += gain
    return Node(
        feature=feature,
        threshold=threshold,
        left=_build_tree(x, residual, left_idx, depth + 1, spec, model),
        right=_build_tree(x, residual, right_idx, depth + 1, spec, model),
    )


def fit(matrix: SupervisedMatrix, spec: GbtSpec) -> GbtModel:
    x, y = matrix.x, matrix.y
    if x.shape[0] == 0:
        raise ModelError("empty supervised matrix")
    if x.shape[0] < 2 * spec.min_samples_leaf:
        raise ModelError(
            f"need at least {2 * spec.min_samples_leaf} rows for min_samples_leaf={spec.min_samples_leaf}"
        )
    bad_rows = np.flatnonzero(~np.isfinite(x).all(axis=1) | ~np.isfinite(y))
    if bad_rows.size:
        raise ModelError(f"non-finite feature or target at row {int(bad_rows[0])}")

    model = GbtModel(
        base_score=float(y.mean()),
        learning_rate=spec.learning_rate,
        feature_names=matrix.feature_names,
        gains={name: 0.0 for name in matrix.feature_names},
    )
    residual = y - model.base_score
    all_idx = np.arange(x.shape[0])
    for _ in range(spec.n_trees):
        tree = _build_tree(x, residual, all_idx, 0, spec, model)
        preds = np.array([tree.predict_one(row) for row in x])
        residual = residual - spec.learning_rate * preds
        model.trees.append(tree)
        model.stage_rmse.append(float(np.sqrt(np.mean(residual**2))))
    model.rmse_train = model.stage_rmse[-1]
    return model


def predict(model: GbtModel, features: np.ndarray) -> float:
    features = np.asarray(features, dtype=float)
    if features.shape != (len(model.feature_names),):
        raise ModelError(
            f"feature vector length {features.shape} does not match {len(model.feature_names)} features"
        )
    return model.base_score + model.learning_rate * sum(
        tree.predict_one(features) for tree in model.trees
    )


def feature_importance(model: GbtModel) -> dict[str, float]:
    """Total split gain per feature, sorted descending (never-split = 0)."""
    return dict(sorted(model.gains.items(), key=lambda kv: (-kv[1], kv[0])))


def fit_series(series: CountSeries, spec: GbtSpec) -> GbtModel:
    """Convenience: build the supervised matrix from a series, then fit."""
    calendar = set(spec.calendar)
    if series.granularity != "daily":
        calendar.discard("weekday")
    matrix = make_supervised(series, list(spec.lags), list(spec.ma_windows), calendar)
    return fit(matrix, spec)


def forecast_recursive(model: GbtModel, series: CountSeries, spec: GbtSpec,
                       horizon: int, level: float = 0.95) -> Forecast:
    """Step-by-step forecast feeding predictions back as pseudo-history.

    Calendar features advance with the calendar; intervals use the
    train-residual RMSE * sqrt(step) heuristic and are labeled as such.
    """
    if not 1 <= horizon <= MAX_HORIZON_RECURSIVE:
        raise ModelError(f"horizon must lie in 1..{MAX_HORIZON_RECURSIVE}, got {horizon}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    calendar = set(spec.calendar)
    if series.granularity != "daily":
        calendar.discard("weekday")
    expected = feature_names_for(list(spec.lags), list(spec.ma_windows), calendar, series.granularity)
    if expected != tuple(model.feature_names):
        raise ModelError("model feature layout does not match the spec/series combination")

    depth = max(list(spec.lags) + list(spec.ma_windows))
    n = len(series)
    if n < depth:
        raise ModelError(f"series shorter than the deepest lag/window ({depth})")
    if not series.mask[n - depth:].all():
        raise ModelError("masked periods in the series tail; shift the origin to observed data")

    idx, vals = series.observed()
    history = np.full(n + horizon, np.nan)
    history[idx] = vals

    points = np.empty(horizon)
    for step in range(horizon):
        t = n + step
        target_date = period_start(series.start, series.granularity, t)
        row = feature_row(history, t, target_date, series.start,
                          list(spec.lags), list(spec.ma_windows), calendar)
        if row is None:
            raise ModelError("forecast features touched a masked period")
        value = max(predict(model, row), 0.0)
        points[step] = value
        history[t] = value

    z = normal_quantile(0.5 + level / 2.0)
    half = z * model.rmse_train * np.sqrt(np.arange(1, horizon + 1))
    lower = np.maximum(points - half, 0.0)
    upper = np.maximum(points + half, 0.0)
    origin = period_start(series.start, series.granularity, n)
    return Forecast(series.granularity, origin, points, lower, upper, level,
                    interval_method="train_rmse_sqrt_step_heuristic")


# --------------------------------------------------------------------------
# JSON round-trip


def model_to_json(model: GbtModel) -> str:
    payload = {
        "base_score": model.base_score,
        "learning_rate": model.learning_rate,
        "feature_names": list(model.feature_names),
        "trees": [tree.to_dict() for tree in model.trees],
        "gains": model.gains,
        "rmse_train": model.rmse_train,
    }
    return json.dumps(payload, indent=2, sort_keys=True)


def model_from_json(text: str) -> GbtModel:
    payload = json.loads(text)
    model = GbtModel(
        base_score=float(payload["base_score"]),
        learning_rate=float(payload["learning_rate"]),
        feature_names=tuple(payload["feature_names"]),
        trees=[Node.from_dict(obj) for obj in payload["trees"]],
        gains={k: float(v) for k, v in payload.get("gains", {}).items()},
        rmse_train=float(payload.get("rmse_train", 0.0)),
    )
    model.total_gain = sum(model.gains.values())
    return model
