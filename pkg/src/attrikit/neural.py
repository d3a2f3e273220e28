"""LSTM and TCN forecasters on the package's own gradient core.

Both models standardize inputs, train full-batch with Adam from a seeded
initialization, and forecast recursively by feeding each prediction back
as pseudo-history. Interval bounds use the train-RMSE * sqrt(step)
heuristic and are labeled as such in the forecast metadata. Training is
deterministic for a fixed (seed, data, spec) triple.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path

import numpy as np

from . import autodiff as ad
from .autodiff import Adam, Tensor
from .errors import ModelError
from .series import DAILY, CountSeries, Forecast, period_start
from .stats import normal_quantile

MAX_HORIZON = 120
MAGIC = b"ATFN1"


@dataclass(frozen=True)
class LstmSpec:
    lookback: int = 28
    hidden: int = 32
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0
    use_weekday: bool = True
    use_month: bool = False

    def __post_init__(self):
        if self.lookback < 1 or self.hidden < 1:
            raise ValueError("lookback and hidden must be >= 1")
        if self.epochs < 1:
            raise ValueError("epochs must be >= 1")


@dataclass(frozen=True)
class TcnSpec:
    kernel: int = 3
    dilations: tuple[int, ...] = (1, 2, 4, 8)
    channels: int = 16
    epochs: int = 200
    learning_rate: float = 1e-3
    seed: int = 0

    def __post_init__(self):
        if self.kernel < 2:
            raise ValueError("kernel width must be >= 2")
        if not self.dilations or any(d < 1 for d in self.dilations):
            raise ValueError("dilations must be a non-empty list of positive ints")
        if self.channels < 1:
            raise ValueError("channels must be >= 1")
        object.__setattr__(self, "dilations", tuple(self.dilations))


@dataclass
class TrainReport:
    epoch_losses: list[float] = field(default_factory=list)
    final_loss: float = float("nan")
    epochs_run: int = 0


def receptive_field(spec: TcnSpec) -> int:
    return 1 + (spec.kernel - 1) * sum(spec.dilations)


# --------------------------------------------------------------------------
# Feature layout


def _calendar_width(use_weekday: bool, use_month: bool) -> int:
    return 1 + (7 if use_weekday else 0) + (12 if use_month else 0)


def _feature_vector(std_value: float, day: date, use_weekday: bool, use_month: bool) -> np.ndarray:
    parts = [std_value]
    if use_weekday:
        onehot = [0.0] * 7
        onehot[day.weekday()] = 1.0
        parts.extend(onehot)
    if use_month:
        onehot = [0.0] * 12
        onehot[day.month - 1] = 1.0
        parts.extend(onehot)
    return np.array(parts)


def _standardization(series: CountSeries) -> tuple[float, float]:
    _, vals = series.observed()
    mean = float(vals.mean())
    std = float(vals.std())
    if std < 1e-12:
        std = 1.0
    return mean, std


def _window_targets(mask: np.ndarray, lookback: int) -> list[int]:
    """Target indices whose window [t-lookback, t] is fully observed."""
    out = []
    for t in range(lookback, len(mask)):
        if mask[t - lookback:t + 1].all():
            out.append(t)
    return out


def _train_windows(series: CountSeries, lookback: int, use_weekday: bool, use_month: bool,
                   mean: float, std: float) -> tuple[np.ndarray, np.ndarray]:
    idx, vals = series.observed()
    std_full = np.full(len(series), np.nan)
    std_full[idx] = (vals - mean) / std
    targets = _window_targets(series.mask, lookback)
    if not targets:
        raise ModelError(
            f"no training windows: need {lookback + 1} consecutive observed periods"
        )
    n_feat = _calendar_width(use_weekday, use_month)
    x = np.empty((len(targets), lookback, n_feat))
    y = np.empty((len(targets), 1))
    for row, t in enumerate(targets):
        for j, src in enumerate(range(t - lookback, t)):
            day = period_start(series.start, series.granularity, src)
            x[row, j] = _feature_vector(std_full[src], day, use_weekday, use_month)
        y[row, 0] = std_full[t]
    return x, y


# --------------------------------------------------------------------------
# LSTM


class LstmModel:
    """Single LSTM layer (gates: input, forget, output, candidate) plus a
    linear head on the final hidden state."""

    def __init__(self, spec: LstmSpec, granularity: str, mean: float, std: float, seed_arrays=None):
        self.spec = spec
        self.granularity = granularity
        self.mean = mean
        self.std = std
        self.rmse_train = float("nan")
        n_in = _calendar_width(spec.use_weekday, spec.use_month)
        h = spec.hidden
        if seed_arrays is None:
            rng = np.random.default_rng(spec.seed)
            scale = 1.0 / np.sqrt(h)
            self.wx = ad.parameter((n_in, 4 * h), rng, scale)
            self.wh = ad.parameter((h, 4 * h), rng, scale)
            self.b = ad.parameter((4 * h,), rng, scale)
            self.b.value[h:2 * h] = 1.0  # forget gate starts open
            self.w_out = ad.parameter((h, 1), rng, scale)
            self.b_out = ad.parameter((1,), rng, scale)
        else:
            self.wx, self.wh, self.b, self.w_out, self.b_out = (
                Tensor(a, requires_grad=True) for a in seed_arrays
            )

    def parameters(self) -> list[Tensor]:
        return [self.wx, self.wh, self.b, self.w_out, self.b_out]

    def forward(self, x: np.ndarray) -> Tensor:
        """x: (n, lookback, features) -> predictions (n, 1)."""
        n, steps, _ = x.shape
        h_size = self.spec.hidden
        h = ad.constant(np.zeros((n, h_size)))
        c = ad.constant(np.zeros((n, h_size)))
        for t in range(steps):
            x_t = ad.constant(x[:, t, :])
            gates = ad.add(ad.add(ad.matmul(x_t, self.wx), ad.matmul(h, self.wh)), self.b)
            i_gate = ad.sigmoid(ad.narrow(gates, 1, 0, h_size))
            f_gate = ad.sigmoid(ad.narrow(gates, 1, h_size, h_size))
            o_gate = ad.sigmoid(ad.narrow(gates, 1, 2 * h_size, h_size))
            cand = ad.tanh(ad.narrow(gates, 1, 3 * h_size, h_size))
            c = ad.add(ad.mul(f_gate, c), ad.mul(i_gate, cand))
            h = ad.mul(o_gate, ad.tanh(c))
        return ad.add(ad.matmul(h, self.w_out), self.b_out)

    def loss(self, x: np.ndarray, y: np.ndarray) -> Tensor:
        return ad.mse(self.forward(x), ad.constant(y))


def _train(model, x: np.ndarray, y: np.ndarray, epochs: int, lr: float) -> TrainReport:
    optimizer = Adam(model.parameters(), lr=lr)
    report = TrainReport()
    for epoch in range(epochs):
        optimizer.zero_grad()
        loss = model.loss(x, y)
        value = float(loss.value)
        if not np.isfinite(value):
            raise ModelError(f"training diverged at epoch {epoch}: non-finite loss")
        report.epoch_losses.append(value)
        loss.backward()
        optimizer.step()
    report.final_loss = report.epoch_losses[-1]
    report.epochs_run = epochs

    preds = model.forward(x).value
    model.rmse_train = float(np.sqrt(np.mean((preds - y) ** 2))) * model.std
    return report


def lstm_fit(series: CountSeries, spec: LstmSpec) -> tuple[LstmModel, TrainReport]:
    if spec.use_weekday and series.granularity != DAILY:
        raise ModelError("weekday features require a daily series; set use_weekday=False")
    n_obs = int(series.mask.sum())
    if n_obs < spec.lookback + 30:
        raise ModelError(f"need at least lookback+30={spec.lookback + 30} observed periods, have {n_obs}")
    mean, std = _standardization(series)
    x, y = _train_windows(series, spec.lookback, spec.use_weekday, spec.use_month, mean, std)
    model = LstmModel(spec, series.granularity, mean, std)
    report = _train(model, x, y, spec.epochs, spec.learning_rate)
    return model, report


def _recursive_forecast(model, series: CountSeries, horizon: int, lookback: int,
                        use_weekday: bool, use_month: bool, level: float) -> Forecast:
    if not 1 <= horizon <= MAX_HORIZON:
        raise ModelError(f"horizon must lie in 1..{MAX_HORIZON}, got {horizon}")
    if not 0.0 < level < 1.0:
        raise ValueError("level must lie in (0, 1)")
    n = len(series)
    if n < lookback:
        raise ModelError(f"series shorter than the {lookback}-period lookback window")
    if not series.mask[n - lookback:].all():
        raise ModelError(
            "masked periods in the final lookback window; shift the forecast origin "
            "to end on observed data (e.g. truncate the series at the last observed period)"
        )

    std_tail = list((series.values[n - lookback:] - model.mean) / model.std)
    tail_dates = [period_start(series.start, series.granularity, n - lookback + i) for i in range(lookback)]

    points = np.empty(horizon)
    for step in range(horizon):
        window = np.stack([
            _feature_vector(v, d, use_weekday, use_month)
            for v, d in zip(std_tail[-lookback:], tail_dates[-lookback:])
        ])
        pred_std = float(model.forward(window[None]).value[0, 0])
        value = max(pred_std * model.std + model.mean, 0.0)
        points[step] = value
        std_tail.append((value - model.mean) / model.std)
        tail_dates.append(period_start(series.start, series.granularity, n + step))

    z = normal_quantile(0.5 + level / 2.0)
    half = z * model.rmse_train * np.sqrt(np.arange(1, horizon + 1))
    lower = np.maximum(points - half, 0.0)
    upper = np.maximum(points + half, 0.0)
    origin = period_start(series.start, series.granularity, n)
    return Forecast(series.granularity, origin, points, lower, upper, level,
                    interval_method="train_rmse_sqrt_step_heuristic")


def lstm_forecast(model: LstmModel, series: CountSeries, horizon: int,
                  spec: LstmSpec | None = None, level: float = 0.95) -> Forecast:
    spec = spec or model.spec
    return _recursive_forecast(model, series, horizon, spec.lookback,
                               spec.use_weekday, spec.use_month, level)


# --------------------------------------------------------------------------
# TCN


class TcnModel:
    """Stack of residual blocks (causal conv -> ReLU -> residual add, with a
    1x1 projection when channel counts differ) and a head on the last step."""

    def __init__(self, spec: TcnSpec, granularity: str, mean: float, std: float):
        self.spec = spec
        self.granularity = granularity
        self.mean = mean
        self.std = std
        self.rmse_train = float("nan")
        rng = np.random.default_rng(spec.seed)
        scale = 1.0 / np.sqrt(spec.channels)
        self.blocks: list[dict] = []
        in_ch = 1
        for dilation in spec.dilations:
            taps = [ad.parameter((in_ch, spec.channels), rng, scale) for _ in range(spec.kernel)]
            bias = ad.parameter((spec.channels,), rng, scale)
            proj = ad.parameter((in_ch, spec.channels), rng, scale) if in_ch != spec.channels else None
            self.blocks.append({"taps": taps, "bias": bias, "proj": proj, "dilation": dilation})
            in_ch = spec.channels
        self.w_out = ad.parameter((spec.channels, 1), rng, scale)
        self.b_out = ad.parameter((1,), rng, scale)

    def parameters(self) -> list[Tensor]:
        params: list[Tensor] = []
        for block in self.blocks:
            params.extend(block["taps"])
            params.append(block["bias"])
            if block["proj"] is not None:
                params.append(block["proj"])
        params.extend([self.w_out, self.b_out])
        return params

    def features(self, x: np.ndarray) -> Tensor:
        """Pre-head activations, (n, steps, channels); strictly causal."""
        steps = x.shape[1]
        cur = ad.constant(x)
        for block in self.blocks:
            dilation, k = block["dilation"], self.spec.kernel
            padded = ad.pad_left(cur, 1, (k - 1) * dilation)
            conv = None
            for i, tap in enumerate(block["taps"]):
                term = ad.matmul(ad.narrow(padded, 1, i * dilation, steps), tap)
                conv = term if conv is None else ad.add(conv, term)
            conv = ad.add(conv, block["bias"])
            out = ad.relu(conv)
            residual = cur if block["proj"] is None else ad.matmul(cur, block["proj"])
            cur = ad.add(out, residual)
        return cur

    def forward(self, x: np.ndarray) -> Tensor:
        feats = self.features(x)
        last = ad.narrow(feats, 1, x.shape[1] - 1, 1)          # (n, 1, channels)
        out = ad.add(ad.matmul(last, self.w_out), self.b_out)  # (n, 1, 1)
        return _squeeze_mid(out, x.shape[0])

    def loss(self, x: np.ndarray, y: np.ndarray) -> Tensor:
        return ad.mse(self.forward(x), ad.constant(y))


def _squeeze_mid(t: Tensor, n: int) -> Tensor:
    """(n, 1, 1) -> (n, 1) without a dedicated reshape op."""
    out_value = t.value.reshape(n, 1)

    def backward(grad):
        t._accumulate(grad.reshape(t.value.shape))

    if not (t.requires_grad or t.parents):
        return Tensor(out_value)
    return Tensor(out_value, parents=(t,), backward=backward)


def tcn_fit(series: CountSeries, spec: TcnSpec) -> tuple[TcnModel, TrainReport]:
    rf = receptive_field(spec)
    targets = _window_targets(series.mask, rf)
    if not targets:
        runs = _longest_observed_run(series.mask)
        raise ModelError(
            f"receptive field {rf} exceeds the usable window length "
            f"{max(runs - 1, 0)} (need {rf + 1} consecutive observed periods)"
        )
    mean, std = _standardization(series)
    x, y = _train_windows(series, rf, False, False, mean, std)
    model = TcnModel(spec, series.granularity, mean, std)
    report = _train(model, x, y, spec.epochs, spec.learning_rate)
    return model, report


def _longest_observed_run(mask: np.ndarray) -> int:
    best = run = 0
    for flag in mask:
        run = run + 1 if flag else 0
        best = max(best, run)
    return best


def tcn_forecast(model: TcnModel, series: CountSeries, horizon: int,
                 spec: TcnSpec | None = None, level: float = 0.95) -> Forecast:
    spec = spec or model.spec
    return _recursive_forecast(model, series, horizon, receptive_field(spec), False, False, level)


# --------------------------------------------------------------------------
# Gradient verification


def grad_check(model, sample_window: tuple[np.ndarray, np.ndarray], h: float = 1e-5) -> float:
    """Max relative error between analytic and central-difference gradients.

    Denominator is max(|analytic|, |numeric|, 1e-8) per element; the
    maximum is taken over every parameter of the model.
    """
    x, y = sample_window
    if x.ndim == 2:
        x = x[None]
    y = np.asarray(y, dtype=float).reshape(x.shape[0], 1)

    for p in model.parameters():
        p.grad = None
    loss = model.loss(x, y)
    loss.backward()
    analytic = [p.grad.copy() if p.grad is not None else np.zeros_like(p.value) for p in model.parameters()]

    worst = 0.0
    for p, a_grad in zip(model.parameters(), analytic):
        flat = p.value.reshape(-1)
        a_flat = a_grad.reshape(-1)
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(model.loss(x, y).value)
            flat[i] = orig - h
            down = float(model.loss(x, y).value)
            flat[i] = orig
            numeric = (up - down) / (2.0 * h)
            denom = max(abs(a_flat[i]), abs(numeric), 1e-8)
            worst = max(worst, abs(a_flat[i] - numeric) / denom)
    return worst


# --------------------------------------------------------------------------
# Serialization: "ATFN1" + shape-prefixed little-endian float64 arrays, with
# a JSON sidecar for the spec and standardization parameters.


def _model_arrays(model) -> list[np.ndarray]:
    return [p.value for p in model.parameters()]


def save_model(model, path: str | Path) -> None:
    path = Path(path)
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        for arr in _model_arrays(model):
            fh.write(struct.pack("<q", arr.ndim))
            for dim in arr.shape:
                fh.write(struct.pack("<q", dim))
            fh.write(arr.astype("<f8").tobytes(order="C"))

    if isinstance(model, LstmModel):
        arch = "lstm"
        spec_dict = {
            "lookback": model.spec.lookback, "hidden": model.spec.hidden,
            "epochs": model.spec.epochs, "learning_rate": model.spec.learning_rate,
            "seed": model.spec.seed, "use_weekday": model.spec.use_weekday,
            "use_month": model.spec.use_month,
        }
    else:
        arch = "tcn"
        spec_dict = {
            "kernel": model.spec.kernel, "dilations": list(model.spec.dilations),
            "channels": model.spec.channels, "epochs": model.spec.epochs,
            "learning_rate": model.spec.learning_rate, "seed": model.spec.seed,
        }
    sidecar = {
        "arch": arch, "spec": spec_dict, "granularity": model.granularity,
        "mean": model.mean, "std": model.std, "rmse_train": model.rmse_train,
    }
    with open(path.with_suffix(path.suffix + ".json"), "w", encoding="utf-8") as fh:
        json.dump(sidecar, fh, indent=2, sort_keys=True)


def load_model(path: str | Path):
    path = Path(path)
    with open(path.with_suffix(path.suffix + ".json"), "r", encoding="utf-8") as fh:
        sidecar = json.load(fh)

    arrays = []
    with open(path, "rb") as fh:
        if fh.read(len(MAGIC)) != MAGIC:
            raise ModelError(f"{path} is not a model container (bad magic)")
        while True:
            head = fh.read(8)
            if not head:
                break
            ndim = struct.unpack("<q", head)[0]
            shape = tuple(struct.unpack("<q", fh.read(8))[0] for _ in range(ndim))
            count = int(np.prod(shape)) if shape else 1
            data = np.frombuffer(fh.read(count * 8), dtype="<f8").reshape(shape)
            arrays.append(data.astype(float))

    if sidecar["arch"] == "lstm":
        spec = LstmSpec(**sidecar["spec"])
        model = LstmModel(spec, sidecar["granularity"], sidecar["mean"], sidecar["std"],
                          seed_arrays=arrays)
    else:
        spec = TcnSpec(**{**sidecar["spec"], "dilations": tuple(sidecar["spec"]["dilations"])})
        model = TcnModel(spec, sidecar["granularity"], sidecar["mean"], sidecar["std"])
        for param, arr in zip(model.parameters(), arrays):
            param.value = arr.copy()
    model.rmse_train = sidecar["rmse_train"]
    return model
