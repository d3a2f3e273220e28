"""Uniform fit+forecast adapters for the five model families.

``forecast_model`` fits the named model on a masked series and forecasts
the periods following the last observed one, so a trailing exclusion
window simply moves the origin back onto observed data. The backtest
factories built on top realign those forecasts to absolute periods by
forecasting through any trailing masked gap and dropping the gap steps.

Monthly presets differ from the daily ones because monthly histories are
short: smaller lookbacks/receptive fields, no weekday features, and more
optimizer steps for the full-batch neural fits. Everything can be
overridden per model through ``params``.
"""

from __future__ import annotations

import numpy as np

from . import arima, decomp, gbtrees, neural
from .evaluate import ForecastFactory
from .series import DAILY, MONTHLY, CountSeries, Forecast

MODEL_NAMES = ("arima", "decomp", "lstm", "tcn", "gbt")


def _arima_spec(granularity: str, seed: int, p: dict) -> arima.ArimaSpec:
    return arima.ArimaSpec(
        p=p.get("p", 1), d=p.get("d", 1), q=p.get("q", 1),
        use_log=p.get("use_log", True), intercept=p.get("intercept", True),
    )


def _decomp_spec(granularity: str, seed: int, p: dict) -> decomp.DecompSpec:
    monthly = granularity == MONTHLY
    return decomp.DecompSpec(
        n_changepoints=p.get("n_changepoints", 10 if monthly else 25),
        changepoint_range=p.get("changepoint_range", 0.8),
        weekly_order=p.get("weekly_order", 0 if monthly else 3),
        yearly_order=p.get("yearly_order", 3 if monthly else 10),
        trend_penalty=p.get("trend_penalty", 10.0),
        level=p.get("level", 0.95),
    )


def _lstm_spec(granularity: str, seed: int, p: dict) -> neural.LstmSpec:
    monthly = granularity == MONTHLY
    return neural.LstmSpec(
        lookback=p.get("lookback", 6 if monthly else 28),
        hidden=p.get("hidden", 16 if monthly else 32),
        epochs=p.get("epochs", 2500 if monthly else 200),
        learning_rate=p.get("learning_rate", 5e-3 if monthly else 1e-3),
        seed=p.get("seed", seed),
        use_weekday=p.get("use_weekday", not monthly),
        use_month=p.get("use_month", False),
    )


def _tcn_spec(granularity: str, seed: int, p: dict) -> neural.TcnSpec:
    monthly = granularity == MONTHLY
    return neural.TcnSpec(
        kernel=p.get("kernel", 2 if monthly else 3),
        dilations=tuple(p.get("dilations", (1, 2, 4) if monthly else (1, 2, 4, 8))),
        channels=p.get("channels", 8 if monthly else 16),
        epochs=p.get("epochs", 2500 if monthly else 200),
        learning_rate=p.get("learning_rate", 5e-3 if monthly else 1e-3),
        seed=p.get("seed", seed),
    )


def _gbt_spec(granularity: str, seed: int, p: dict) -> gbtrees.GbtSpec:
    monthly = granularity == MONTHLY
    calendar = {"month", "linear_index"} if monthly else {"weekday", "month", "linear_index"}
    return gbtrees.GbtSpec(
        n_trees=p.get("n_trees", 200),
        max_depth=p.get("max_depth", 4),
        learning_rate=p.get("learning_rate", 0.1),
        min_samples_leaf=p.get("min_samples_leaf", 5),
        lags=tuple(p.get("lags", (1, 2, 3, 6, 12) if monthly else tuple(range(1, 15)))),
        ma_windows=tuple(p.get("ma_windows", (3, 6) if monthly else (7, 28))),
        calendar=frozenset(p.get("calendar", calendar)),
        seed=p.get("seed", seed),
    )


def forecast_model(name: str, series: CountSeries, horizon: int, seed: int = 0,
                   params: dict | None = None, level: float = 0.95) -> Forecast:
    """Fit the named model and forecast from the last observed period.

    The model trains on the masked series as given (only observed values
    are ever read); the recursive models receive the series truncated at
    the last observed period so their lookback windows end on real data.
    """
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
    p = dict(params or {})
    granularity = series.granularity
    trimmed = series.head(series.last_observed_index() + 1)

    if name == "arima":
        spec = _arima_spec(granularity, seed, p)
        fitted = arima.fit(series, spec)
        return arima.forecast(fitted, series, spec, horizon, level=level)
    if name == "decomp":
        spec = _decomp_spec(granularity, seed, p)
        fitted = decomp.fit(series, spec)
        return decomp.forecast(fitted, series, horizon, level=level)
    if name == "lstm":
        spec = _lstm_spec(granularity, seed, p)
        model, _ = neural.lstm_fit(series, spec)
        return neural.lstm_forecast(model, trimmed, horizon, spec, level=level)
    if name == "tcn":
        spec = _tcn_spec(granularity, seed, p)
        model, _ = neural.tcn_fit(series, spec)
        return neural.tcn_forecast(model, trimmed, horizon, spec, level=level)
    spec = _gbt_spec(granularity, seed, p)
    model = gbtrees.fit_series(series, spec)
    return gbtrees.forecast_recursive(model, trimmed, spec, horizon, level=level)


def build_factory(name: str, granularity: str = DAILY, seed: int = 0,
                  params: dict | None = None) -> ForecastFactory:
    """Backtest adapter: points aligned to the periods after the train range."""
    if name not in MODEL_NAMES:
        raise ValueError(f"unknown model {name!r}; expected one of {', '.join(MODEL_NAMES)}")
    frozen_params = dict(params or {})

    def fit_forecast(train: CountSeries, horizon: int) -> np.ndarray:
        gap = len(train) - 1 - train.last_observed_index()
        fc = forecast_model(name, train, gap + horizon, seed=seed, params=frozen_params)
        return np.asarray(fc.point[gap:], dtype=float)

    return ForecastFactory(name, fit_forecast)


def default_factories(granularity: str = DAILY, seed: int = 0,
                      params: dict[str, dict] | None = None) -> list[ForecastFactory]:
    """All five factories with granularity-appropriate presets."""
    params = params or {}
    return [build_factory(name, granularity, seed, params.get(name)) for name in MODEL_NAMES]
