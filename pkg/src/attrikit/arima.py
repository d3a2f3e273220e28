"""ARIMA(p,d,q) with intercept by conditional sum of squares.

Estimation minimizes the conditional sum of squared innovations with
Nelder-Mead over a partial-autocorrelation reparameterization, which keeps
every iterate stationary and invertible by construction. Masked interior
gaps restart the innovation recursion, so no residual ever spans excluded
periods. CSS is simpler than exact likelihood and adequate at the series
lengths this toolkit targets; estimates of small samples can differ
slightly from exact-MLE implementations.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.signal import lfilter

from .errors import ModelError
from .optim import nelder_mead
from .series import CountSeries, Forecast, period_start
from .stats import normal_quantile

MAX_HORIZON = 120


@dataclass(frozen=True)
class ArimaSpec:
    p: int = 1
    d: int = 1
    q: int = 1
    use_log: bool = True
    intercept: bool = True

    def __post_init__(self):
        if not 0 <= self.p <= 5 or not 0 <= self.q <= 5:
            raise ValueError("p and q must lie in 0..5")
        if not 0 <= self.d <= 2:
            raise ValueError("d must lie in 0..2")


@dataclass(frozen=True)
class ArimaFit:
    phi: np.ndarray
    theta: np.ndarray
    mu: float
    sigma2: float
    loglik: float
    aic: float
    n_used: int


def _pacf_to_ar(pacf: np.ndarray) -> np.ndarray:
    """Durbin-Levinson map from partial autocorrelations in (-1,1) to a
    stationary AR coefficient vector."""
    phi = np.empty(0)
    for k, pk in enumerate(pacf):
        prev = phi
        phi = np.empty(k + 1)
        phi[:k] = prev - pk * prev[::-1]
        phi[k] = pk
    return phi


def _unpack(x: np.ndarray, spec: ArimaSpec, mu_fixed: float) -> tuple[np.ndarray, np.ndarray, float]:
    p, q = spec.p, spec.q
    phi = _pacf_to_ar(np.tanh(x[:p])) if p else np.empty(0)
    # Invertible MA coefficients come from the same stationarity map.
    theta = -_pacf_to_ar(np.tanh(x[p:p + q])) if q else np.empty(0)
    mu = float(x[p + q]) if spec.intercept else mu_fixed
    return phi, theta, mu


def _observed_segments(series: CountSeries, use_log: bool) -> list[np.ndarray]:
    """Maximal contiguous observed runs, already transformed."""
    idx, vals = series.observed()
    if use_log:
        if np.any(vals < 0):
            raise ModelError("log transform requires non-negative values")
        vals = np.log1p(vals)
    segments: list[np.ndarray] = []
    cut = np.flatnonzero(np.diff(idx) > 1) + 1
    for chunk in np.split(np.arange(idx.size), cut):
        segments.append(vals[chunk])
    return segments


def _diff_segments(segments: list[np.ndarray], d: int) -> list[np.ndarray]:
    out = []
    for seg in segments:
        if len(seg) > d:
            out.append(np.diff(seg, n=d) if d else seg)
    return out


def _css(zsegs: list[np.ndarray], phi: np.ndarray, theta: np.ndarray, mu: float) -> tuple[float, int]:
    """Conditional sum of squares; each segment conditions on its first p
    values with pre-segment innovations at zero."""
    p = len(phi)
    ma_poly = np.concatenate(([1.0], theta))
    total, n_used = 0.0, 0
    for z in zsegs:
        if len(z) <= p:
            continue
        zt = z - mu
        u = zt[p:].copy()
        for i in range(1, p + 1):
            u -= phi[i - 1] * zt[p - i:len(zt) - i]
        e = lfilter([1.0], ma_poly, u)
        total += float(e @ e)
        n_used += len(e)
    return total, n_used


def fit(series: CountSeries, spec: ArimaSpec, max_iter: int = 2000) -> ArimaFit:
    """Estimate (phi, theta, mu) by CSS with a fixed, deterministic start.

    The optimizer walks the transformed space from phi = theta = 0 and
    mu = the sample mean of the differenced data, so identical inputs give
    identical fits.
    """
    n_obs = int(series.mask.sum())
    minimum = spec.p + spec.q + spec.d + 10
    if n_obs < minimum:
        raise ModelError(f"need at least {minimum} observed periods for ARIMA{(spec.p, spec.d, spec.q)}, have {n_obs}")

    zsegs = _diff_segments(_observed_segments(series, spec.use_log), spec.d)
    pooled = np.concatenate(zsegs) if zsegs else np.empty(0)
    if pooled.size <= spec.p:
        raise ModelError("not enough contiguous observed data after differencing")
    mu0 = float(pooled.mean()) if spec.intercept else 0.0

    n_params = spec.p + spec.q + (1 if spec.intercept else 0)
    x0 = np.zeros(n_params)
    if spec.intercept:
        x0[-1] = mu0

    def objective(x: np.ndarray) -> float:
        phi, theta, mu = _unpack(x, spec, 0.0)
        total, n_used = _css(zsegs, phi, theta, mu)
        if n_used == 0:
            return np.inf
        return total

    if n_params:
        result = nelder_mead(objective, x0, max_iter=max_iter)
        x_best = result.x
    else:
        x_best = x0
    phi, theta, mu = _unpack(x_best, spec, 0.0)
    css, n_used = _css(zsegs, phi, theta, mu)
    if n_used == 0:
        raise ModelError("no usable residuals: observed segments too short for the AR order")

    sigma2 = max(css / n_used, 1e-12)
    loglik = -0.5 * n_used * (np.log(2.0 * np.pi * sigma2) + 1.0)
    k = spec.p + spec.q + (1 if spec.intercept else 0) + 1
    aic = 2.0 * k - 2.0 * loglik
    return ArimaFit(phi=phi, theta=theta, mu=mu, sigma2=sigma2, loglik=float(loglik),
                    aic=float(aic), n_used=n_used)


def _psi_weights(phi: np.ndarray, theta: np.ndarray, d: int, horizon: int) -> np.ndarray:
    """MA-infinity weights of the integrated process, for forecast variance."""
    ar_poly = np.concatenate(([1.0], -phi))
    for _ in range(d):
        ar_poly = np.convolve(ar_poly, [1.0, -1.0])
    c = ar_poly[1:]  # A(B) = 1 + sum c_i B^i
    psi = np.zeros(horizon)
    psi[0] = 1.0
    for j in range(1, horizon):
        acc = theta[j - 1] if j - 1 < len(theta) else 0.0
        for i in range(1, min(j, len(c)) + 1):
            acc -= c[i - 1] * psi[j - i]
        psi[j] = acc
    return psi


def forecast(fit_result: ArimaFit, series: CountSeries, spec: ArimaSpec,
             horizon: int, level: float = 0.95) -> Forecast:
    """Iterate the ARMA recursion with future innovations at zero.

    Runs on the differenced (and log) scale, integrates back through the
    differencing anchors of the final observed segment, and maps point and
    bounds through the inverse log transform when one was used. No
    back-transform bias correction is applied: the point path is the
    transformed-scale path mapped directly. Everything is clamped at zero
    on the count scale. The forecast origin is the period following the
    last observed one.
    """
    if horizon < 1:
        raise ValueError("horizon must be >= 1")
    if horizon > MAX_HORIZON:
        raise ModelError(f"horizon {horizon} exceeds {MAX_HORIZON} periods; extrapolation that far is not meaningful")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")

    segments = _observed_segments(series, spec.use_log)
    final = segments[-1]
    if len(final) < spec.d + 1:
        raise ModelError("final observed segment too short to anchor differencing")

    z = np.diff(final, n=spec.d) if spec.d else final.copy()
    p, q = spec.p, spec.q
    if len(z) < p:
        raise ModelError("final observed segment too short for the AR order")

    zt = list(z - fit_result.mu)
    # Innovations over the final segment, conditioned exactly as in fitting.
    e_hist = [0.0] * p
    if len(z) > p:
        u = (z - fit_result.mu)[p:].copy()
        for i in range(1, p + 1):
            u -= fit_result.phi[i - 1] * (z - fit_result.mu)[p - i:len(z) - i]
        e_hist += list(lfilter([1.0], np.concatenate(([1.0], fit_result.theta)), u))

    z_future = []
    for _ in range(horizon):
        val = 0.0
        for i in range(1, p + 1):
            val += fit_result.phi[i - 1] * zt[-i]
        for j in range(1, q + 1):
            val += fit_result.theta[j - 1] * e_hist[-j]
        z_future.append(val)
        zt.append(val)
        e_hist.append(0.0)
    z_path = fit_result.mu + np.asarray(z_future)

    # Integrate back through the final segment's tail values.
    tails = [float(np.diff(final, n=k)[-1]) for k in range(spec.d)]
    w_path = np.empty(horizon)
    for h in range(horizon):
        v = z_path[h]
        for k in range(spec.d - 1, -1, -1):
            v = tails[k] + v
            tails[k] = v
        w_path[h] = v

    psi = _psi_weights(fit_result.phi, fit_result.theta, spec.d, horizon)
    half = normal_quantile(0.5 + level / 2.0) * np.sqrt(fit_result.sigma2 * np.cumsum(psi**2))
    lower, upper = w_path - half, w_path + half

    if spec.use_log:
        w_path, lower, upper = np.expm1(w_path), np.expm1(lower), np.expm1(upper)
    point = np.maximum(w_path, 0.0)
    lower = np.maximum(lower, 0.0)
    upper = np.maximum(upper, 0.0)

    origin = period_start(series.start, series.granularity, series.last_observed_index() + 1)
    return Forecast(series.granularity, origin, point, lower, upper, level, interval_method="gaussian_psi")
