"""Masked count series and the feature machinery shared by all models.

A CountSeries is a contiguous run of daily or monthly counts with an
observed mask. Days with no matching records are real zero observations;
administratively excluded spans are masked out instead of zeroed, and every
model trains only on masked-in data. Model code reads training values
exclusively through ``CountSeries.observed``, which keeps that promise
auditable.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass, field
from datetime import date, timedelta

import numpy as np

from .ingest import Category, LossRecord

DAILY = "daily"
MONTHLY = "monthly"

WEEKDAY_FEATURES = 7   # Monday first
MONTH_FEATURES = 12

CALENDAR_FLAGS = ("weekday", "month", "linear_index")


def add_months(day: date, n: int) -> date:
    """First day of the month ``n`` months after ``day``'s month."""
    total = day.year * 12 + (day.month - 1) + n
    return date(total // 12, total % 12 + 1, 1)


def month_index(day: date) -> int:
    return day.year * 12 + (day.month - 1)


def period_start(start: date, granularity: str, i: int) -> date:
    if granularity == DAILY:
        return start + timedelta(days=i)
    return add_months(start, i)


def period_index(start: date, granularity: str, day: date) -> int:
    """Index of the period containing ``day``; may be negative or past the end."""
    if granularity == DAILY:
        return (day - start).days
    return month_index(day) - month_index(start)


def period_end(start: date, granularity: str, i: int) -> date:
    """Last day covered by period ``i`` (inclusive)."""
    if granularity == DAILY:
        return period_start(start, granularity, i)
    return add_months(start, i + 1) - timedelta(days=1)


@dataclass(frozen=True, eq=False)
class CountSeries:
    """Contiguous masked counts at daily or monthly granularity."""

    granularity: str
    start: date
    values: np.ndarray
    mask: np.ndarray

    def __post_init__(self):
        if self.granularity not in (DAILY, MONTHLY):
            raise ValueError(f"unknown granularity {self.granularity!r}")
        if self.granularity == MONTHLY and self.start.day != 1:
            raise ValueError("monthly series must start on the first of a month")
        values = np.asarray(self.values, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if values.ndim != 1 or mask.shape != values.shape:
            raise ValueError("values and mask must be 1-D and the same length")
        if not np.all(np.isfinite(values)):
            raise ValueError("series values must be finite")
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "mask", mask)

    def __len__(self) -> int:
        return len(self.values)

    def period_starts(self) -> list[date]:
        return [period_start(self.start, self.granularity, i) for i in range(len(self))]

    def end(self) -> date:
        """Last day covered by the final period."""
        return period_end(self.start, self.granularity, len(self) - 1)

    def index_of(self, day: date) -> int:
        return period_index(self.start, self.granularity, day)

    def observed(self) -> tuple[np.ndarray, np.ndarray]:
        """Indices and values of masked-in periods.

        The single sanctioned read path for model training code; masked
        values are never returned here.
        """
        idx = np.flatnonzero(self.mask)
        return idx, self.values[idx].copy()

    def last_observed_index(self) -> int:
        idx = np.flatnonzero(self.mask)
        if idx.size == 0:
            raise ValueError("series has no observed periods")
        return int(idx[-1])

    def head(self, n: int) -> "CountSeries":
        """First ``n`` periods, masks carried through."""
        if not 1 <= n <= len(self):
            raise ValueError(f"head length {n} outside 1..{len(self)}")
        return CountSeries(self.granularity, self.start, self.values[:n].copy(), self.mask[:n].copy())

    def fingerprint(self) -> str:
        """Stable hex digest of the serialized series (for traceable reports)."""
        return hashlib.sha256(series_to_csv(self).encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class ExclusionWindow:
    """Inclusive date span masked out of training and scoring."""

    start: date
    end: date

    def __post_init__(self):
        if self.start > self.end:
            raise ValueError(f"exclusion window start {self.start} after end {self.end}")


@dataclass(frozen=True)
class SupervisedMatrix:
    """Feature rows with targets for tree and neural regressors."""

    feature_names: tuple[str, ...]
    x: np.ndarray            # (n_rows, n_features)
    y: np.ndarray            # (n_rows,)
    target_dates: tuple[date, ...]

    def __post_init__(self):
        if self.x.ndim != 2 or self.x.shape[1] != len(self.feature_names):
            raise ValueError("feature matrix width must match feature_names")
        if self.x.shape[0] != self.y.shape[0] or self.x.shape[0] != len(self.target_dates):
            raise ValueError("row count mismatch between x, y, and target_dates")


@dataclass(frozen=True)
class Forecast:
    """Point path plus interval bounds, anchored at the origin period."""

    granularity: str
    origin: date
    point: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    level: float
    interval_method: str = "gaussian"

    def __post_init__(self):
        for name in ("point", "lower", "upper"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float))
        if not (len(self.point) == len(self.lower) == len(self.upper)):
            raise ValueError("forecast arrays must share one length")

    def __len__(self) -> int:
        return len(self.point)

    def period_starts(self) -> list[date]:
        return [period_start(self.origin, self.granularity, i) for i in range(len(self))]


# --------------------------------------------------------------------------
# Construction and masking


def aggregate(
    records: list[LossRecord],
    granularity: str,
    category_filter: set[Category] | None = None,
    date_range: tuple[date, date] | None = None,
) -> CountSeries:
    """Count matching records per period over ``date_range`` (inclusive).

    Periods with no matching records get an observed zero: within
    coverage, the absence of a confirmed loss is a real observation of
    zero under minimum-count semantics.
    """
    if date_range is None:
        if not records:
            raise ValueError("cannot infer a date range from zero records")
        days = [r.date for r in records]
        date_range = (min(days), max(days))
    lo, hi = date_range
    if lo is None or hi is None:
        raise ValueError("empty date range")
    if lo > hi:
        raise ValueError(f"date range start {lo} after end {hi}")

    start = lo if granularity == DAILY else date(lo.year, lo.month, 1)
    n = period_index(start, granularity, hi) + 1
    values = np.zeros(n, dtype=float)
    for r in records:
        if category_filter is not None and r.category not in category_filter:
            continue
        if not lo <= r.date <= hi:
            continue
        values[period_index(start, granularity, r.date)] += 1.0
    return CountSeries(granularity, start, values, np.ones(n, dtype=bool))


def apply_exclusions(series: CountSeries, windows: list[ExclusionWindow]) -> CountSeries:
    """Mask every period overlapping any window; values stay untouched.

    A period partially covered by a window is wholly masked. Windows
    outside the series range are no-ops, and reapplication is idempotent.
    """
    mask = series.mask.copy()
    for w in windows:
        first = max(0, period_index(series.start, series.granularity, w.start))
        last = min(len(series) - 1, period_index(series.start, series.granularity, w.end))
        if first <= last:
            mask[first:last + 1] = False
    return CountSeries(series.granularity, series.start, series.values.copy(), mask)


def split(series: CountSeries, cutoff: date) -> tuple[CountSeries, CountSeries]:
    """Periods ending strictly before ``cutoff`` on the left, the rest right."""
    i = period_index(series.start, series.granularity, cutoff)
    if not 0 <= i <= len(series) - 1:
        raise ValueError(f"cutoff {cutoff} outside series range")
    if i == 0:
        raise ValueError("cutoff at series start would leave an empty left part")
    left = CountSeries(series.granularity, series.start, series.values[:i].copy(), series.mask[:i].copy())
    right_start = period_start(series.start, series.granularity, i)
    right = CountSeries(series.granularity, right_start, series.values[i:].copy(), series.mask[i:].copy())
    return left, right


# --------------------------------------------------------------------------
# Transforms


def log_transform(series: CountSeries) -> CountSeries:
    """Elementwise ln(1+v); the +1 offset keeps zero-count periods finite."""
    if np.any(series.values < 0):
        raise ValueError("log transform requires non-negative values")
    return CountSeries(series.granularity, series.start, np.log1p(series.values), series.mask.copy())


def inverse_log_transform(series: CountSeries) -> CountSeries:
    """Elementwise exp(v)-1, clamped at zero."""
    values = np.maximum(np.expm1(series.values), 0.0)
    return CountSeries(series.granularity, series.start, values, series.mask.copy())


def difference(values: np.ndarray, d: int) -> np.ndarray:
    """d-th finite difference (d in 0..2)."""
    if d not in (0, 1, 2):
        raise ValueError(f"differencing order must be 0, 1, or 2, got {d}")
    values = np.asarray(values, dtype=float)
    if len(values) <= d:
        raise ValueError(f"need more than {d} values to difference at order {d}")
    return np.diff(values, n=d) if d else values.copy()


def integrate(diffs: np.ndarray, anchors: list[float]) -> np.ndarray:
    """Invert ``difference`` given the first value of each difference level.

    anchors[k] is the first element of the k-th difference of the original
    sequence, so integrate(difference(x, d), [x[0], diff(x)[0], ...]) == x.
    """
    out = np.asarray(diffs, dtype=float).copy()
    for anchor in reversed(anchors):
        out = np.concatenate(([anchor], anchor + np.cumsum(out)))
    return out


def anchors_of(values: np.ndarray, d: int) -> list[float]:
    """The d retained values needed to undo differencing at order d."""
    values = np.asarray(values, dtype=float)
    return [float(np.diff(values, n=k)[0]) for k in range(d)]


# --------------------------------------------------------------------------
# Supervised matrix


def feature_names_for(
    lags: list[int],
    ma_windows: list[int],
    calendar: set[str],
    granularity: str,
) -> tuple[str, ...]:
    names = [f"lag_{k}" for k in sorted(lags)]
    names += [f"ma_{w}" for w in sorted(ma_windows)]
    if "weekday" in calendar:
        if granularity != DAILY:
            raise ValueError("weekday features require daily granularity")
        names += [f"weekday_{i}" for i in range(WEEKDAY_FEATURES)]
    if "month" in calendar:
        names += [f"month_{i}" for i in range(1, MONTH_FEATURES + 1)]
    if "linear_index" in calendar:
        names.append("linear_index")
    return tuple(names)


def feature_row(
    history: np.ndarray,
    t: int,
    target_date: date,
    series_start: date,
    lags: list[int],
    ma_windows: list[int],
    calendar: set[str],
) -> np.ndarray | None:
    """Feature vector for target period ``t`` over a NaN-masked history array.

    Returns None when any referenced lag or moving-average span touches a
    missing (NaN) or out-of-range value. Moving averages are trailing
    means over the w periods ending at t-1, so no feature sees the target
    or its future.
    """
    feats: list[float] = []
    for k in sorted(lags):
        if t - k < 0:
            return None
        v = history[t - k]
        if np.isnan(v):
            return None
        feats.append(float(v))
    for w in sorted(ma_windows):
        if t - w < 0:
            return None
        window = history[t - w:t]
        if np.any(np.isnan(window)):
            return None
        feats.append(float(window.mean()))
    if "weekday" in calendar:
        onehot = [0.0] * WEEKDAY_FEATURES
        onehot[target_date.weekday()] = 1.0
        feats.extend(onehot)
    if "month" in calendar:
        onehot = [0.0] * MONTH_FEATURES
        onehot[target_date.month - 1] = 1.0
        feats.extend(onehot)
    if "linear_index" in calendar:
        feats.append(float((target_date - series_start).days))
    return np.array(feats, dtype=float)


def make_supervised(
    series: CountSeries,
    lags: list[int],
    ma_windows: list[int],
    calendar: set[str] | None = None,
) -> SupervisedMatrix:
    """One row per period whose target and full feature history are observed.

    Rows whose target, any lag, or any moving-average span touches a
    masked period are dropped outright; masked data is never imputed.
    """
    calendar = set(calendar or ())
    unknown = calendar - set(CALENDAR_FLAGS)
    if unknown:
        raise ValueError(f"unknown calendar flags: {sorted(unknown)}")
    if not lags and not ma_windows and not calendar:
        raise ValueError("no features requested: lags, ma_windows, and calendar all empty")
    for k in lags:
        if k < 1:
            raise ValueError(f"lag must be >= 1, got {k}")
    for w in ma_windows:
        if w < 1:
            raise ValueError(f"moving-average window must be >= 1, got {w}")

    idx, vals = series.observed()
    if idx.size == 0:
        raise ValueError("series has no observed periods")
    history = np.full(len(series), np.nan)
    history[idx] = vals

    depth = max(list(lags) + list(ma_windows), default=0)
    if depth >= idx.size:
        raise ValueError(f"max lag/window {depth} exceeds observed length {idx.size}")

    names = feature_names_for(lags, ma_windows, calendar, series.granularity)
    rows, targets, dates = [], [], []
    for t in range(depth, len(series)):
        if np.isnan(history[t]):
            continue
        target_date = period_start(series.start, series.granularity, t)
        row = feature_row(history, t, target_date, series.start, lags, ma_windows, calendar)
        if row is None:
            continue
        rows.append(row)
        targets.append(history[t])
        dates.append(target_date)

    x = np.array(rows, dtype=float) if rows else np.empty((0, len(names)))
    return SupervisedMatrix(names, x, np.array(targets, dtype=float), tuple(dates))


# --------------------------------------------------------------------------
# CSV round-trips


def _fmt(v: float) -> str:
    return format(float(v), ".12g")


def series_to_csv(series: CountSeries) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["period_start", "value", "observed"])
    for day, value, obs in zip(series.period_starts(), series.values, series.mask):
        writer.writerow([day.isoformat(), _fmt(value), int(obs)])
    return out.getvalue()


def series_from_csv(text: str) -> CountSeries:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0][:3] != ["period_start", "value", "observed"]:
        raise ValueError("expected header 'period_start,value,observed'")
    body = [r for r in rows[1:] if r]
    if not body:
        raise ValueError("series file has no data rows")
    starts = [date.fromisoformat(r[0]) for r in body]
    values = np.array([float(r[1]) for r in body])
    mask = np.array([bool(int(r[2])) for r in body])
    if len(starts) > 1 and (starts[1] - starts[0]).days == 1:
        granularity = DAILY
    elif len(starts) > 1:
        granularity = MONTHLY
    else:
        granularity = DAILY if starts[0].day != 1 else MONTHLY
    expect = [period_start(starts[0], granularity, i) for i in range(len(starts))]
    if expect != starts:
        raise ValueError("series periods are not contiguous")
    return CountSeries(granularity, starts[0], values, mask)


def supervised_to_csv(matrix: SupervisedMatrix) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(list(matrix.feature_names) + ["target", "target_date"])
    for row, target, day in zip(matrix.x, matrix.y, matrix.target_dates):
        writer.writerow([_fmt(v) for v in row] + [_fmt(target), day.isoformat()])
    return out.getvalue()


def forecast_to_csv(forecast: Forecast) -> str:
    out = io.StringIO()
    writer = csv.writer(out, lineterminator="\n")
    writer.writerow(["period_start", "point", "lower", "upper", "level"])
    for day, p, lo, hi in zip(forecast.period_starts(), forecast.point, forecast.lower, forecast.upper):
        writer.writerow([day.isoformat(), _fmt(p), _fmt(lo), _fmt(hi), _fmt(forecast.level)])
    return out.getvalue()
