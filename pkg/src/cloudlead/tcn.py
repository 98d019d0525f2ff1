"""Dilated causal convolutional network in plain numpy, with manual backprop.

Arrays are channels-last internally: inputs are ``(batch, time, channels)``.
Each residual block is conv -> ReLU -> conv -> ReLU at one dilation, plus a
residual add (1x1 conv when the channel count changes). Block outputs are
summed into skip features. The head is either a linear map of the final
step's features (``horizon`` mode, ``out_dim`` direct outputs) or a 1x1 conv
applied at every step (``seq2seq`` mode).
"""
from __future__ import annotations

import csv
import json
import time
import warnings
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .core import CloudleadError, ConfigError, DataError

CHECKPOINT_VERSION = 1


class NonFiniteLossError(CloudleadError, ArithmeticError):
    """Training produced a NaN/inf loss; ``batch`` is the offending batch id."""

    def __init__(self, epoch: int, batch: int, loss: float):
        super().__init__(f"non-finite loss {loss} at epoch {epoch}, batch {batch}")
        self.epoch, self.batch, self.loss = epoch, batch, loss


@dataclass
class TcnConfig:
    kernel_size: int = 2
    dilations: tuple[int, ...] = (1, 2)
    n_stacks: int = 1
    n_filters: int = 16
    in_channels: int = 1
    out_dim: int = 1
    use_residual: bool = True
    use_skip: bool = True
    seq2seq: bool = False
    seed: int = 0

    def __post_init__(self):
        self.dilations = tuple(int(d) for d in self.dilations)
        if self.kernel_size < 1:
            raise ConfigError(f"kernel_size={self.kernel_size} must be >= 1")
        if not self.dilations or min(self.dilations) < 1:
            raise ConfigError(f"dilations {self.dilations} must be non-empty and >= 1")
        for name in ("n_stacks", "n_filters", "in_channels", "out_dim"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be >= 1")

    def to_json(self) -> dict:
        d = asdict(self)
        d["dilations"] = list(self.dilations)
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "TcnConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown TcnConfig keys: {sorted(unknown)}")
        return cls(**obj)


@dataclass
class TrainConfig:
    epochs: int = 20
    batch_size: int = 16
    learning_rate: float = 1e-3
    gradient_clip: float | None = None
    early_stop_patience: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.epochs < 1:
            raise ConfigError("epochs must be >= 1")
        if self.batch_size < 1:
            raise ConfigError("batch_size must be >= 1")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")


def receptive_field(cfg: TcnConfig) -> int:
    """Number of past steps (including the current one) an output can see."""
    return 1 + 2 * (cfg.kernel_size - 1) * cfg.n_stacks * sum(cfg.dilations)


def _blocks(cfg: TcnConfig) -> list[tuple[int, int]]:
    """(dilation, input channels) for every residual block in order."""
    out = []
    cin = cfg.in_channels
    for _ in range(cfg.n_stacks):
        for d in cfg.dilations:
            out.append((d, cin))
            cin = cfg.n_filters
    return out


def param_shapes(cfg: TcnConfig) -> dict[str, tuple[int, ...]]:
    K, F = cfg.kernel_size, cfg.n_filters
    shapes: dict[str, tuple[int, ...]] = {}
    for j, (_, cin) in enumerate(_blocks(cfg)):
        shapes[f"b{j}.conv1.w"] = (K, cin, F)
        shapes[f"b{j}.conv1.b"] = (F,)
        shapes[f"b{j}.conv2.w"] = (K, F, F)
        shapes[f"b{j}.conv2.b"] = (F,)
        if cfg.use_residual and cin != F:
            shapes[f"b{j}.res.w"] = (1, cin, F)
            shapes[f"b{j}.res.b"] = (F,)
    shapes["head.w"] = (F, cfg.out_dim)
    shapes["head.b"] = (cfg.out_dim,)
    return shapes


@dataclass
class TcnModel:
    config: TcnConfig
    params: dict[str, np.ndarray] = field(default_factory=dict)

    def __post_init__(self):
        shapes = param_shapes(self.config)
        if set(shapes) != set(self.params):
            raise ConfigError(f"parameter names do not match config: {sorted(set(shapes) ^ set(self.params))}")
        for k, s in shapes.items():
            p = np.asarray(self.params[k], dtype=np.float64)
            if p.shape != s:
                raise ConfigError(f"parameter {k} has shape {p.shape}, expected {s}")
            if not np.all(np.isfinite(p)):
                raise ConfigError(f"parameter {k} has non-finite entries")
            self.params[k] = p

    @property
    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self) -> "TcnModel":
        return TcnModel(self.config, {k: v.copy() for k, v in self.params.items()})


def init_model(cfg: TcnConfig) -> TcnModel:
    """Zero biases; weights ~ N(0, gain/fan_in).

    Convs use gain 1. The head gain is divided by the number of summed skip
    features squared so the initial output stays O(input).
    """
    rng = np.random.default_rng(cfg.seed)
    n_sum = len(_blocks(cfg)) if cfg.use_skip else 1
    params = {}
    for name, shape in param_shapes(cfg).items():
        if name.endswith(".b"):
            params[name] = np.zeros(shape)
        else:
            fan_in = int(np.prod(shape[:-1]))
            gain = 1.0 / n_sum ** 2 if name.startswith("head") else 1.0
            params[name] = rng.normal(0.0, np.sqrt(gain / fan_in), size=shape)
    return TcnModel(cfg, params)


def randomize_params(model: TcnModel, seed: int, scale: float = 0.5) -> TcnModel:
    """Copy with every parameter (biases included) redrawn from N(0, scale^2).

    Nonzero biases keep pre-activations off the ReLU kink, which gradient
    checks need.
    """
    rng = np.random.default_rng(seed)
    out = model.copy()
    for k in out.params:
        out.params[k] = rng.normal(0.0, scale, size=out.params[k].shape)
    return out


def _conv_cols(x: np.ndarray, K: int, d: int) -> np.ndarray:
    """Stack the K causal taps: cols[b, t, i*C:(i+1)*C] = x[b, t - d*i] (0 before start)."""
    if K == 1:
        return x
    B, T, C = x.shape
    pad = (K - 1) * d
    xp = np.concatenate([np.zeros((B, pad, C)), x], axis=1)
    return np.concatenate([xp[:, pad - d * i: pad - d * i + T] for i in range(K)], axis=2)


def _conv_forward(x, w, b, d):
    K, C, Co = w.shape
    cols = _conv_cols(x, K, d)
    return cols @ w.reshape(K * C, Co) + b, cols


def _conv_backward(dy, cols, w, d):
    K, C, Co = w.shape
    B, T, _ = dy.shape
    dw = (cols.reshape(-1, K * C).T @ dy.reshape(-1, Co)).reshape(K, C, Co)
    db = dy.sum(axis=(0, 1))
    dcols = (dy @ w.reshape(K * C, Co).T).reshape(B, T, K, C)
    dx = dcols[:, :, 0, :].copy()
    for i in range(1, K):
        s = d * i
        if s < T:
            dx[:, : T - s] += dcols[:, s:, i, :]
    return dx, dw, db


def dilated_causal_conv(x, filt, d: int) -> np.ndarray:
    """Single-channel dilated causal convolution ``y[m] = sum_i f[i] * x[m - d*i]``."""
    if d < 1:
        raise ConfigError("dilation must be >= 1")
    x = np.asarray(x, dtype=np.float64)
    f = np.asarray(filt, dtype=np.float64)
    y, _ = _conv_forward(x[None, :, None], f[:, None, None], np.zeros(1), d)
    return y[0, :, 0]


def _check_input(model: TcnModel, x) -> np.ndarray:
    x = np.asarray(x, dtype=np.float64)
    if x.ndim == 2:
        x = x[None]
    if x.ndim != 3:
        raise DataError(f"input must be (batch, time, channels), got shape {x.shape}")
    if x.shape[2] != model.config.in_channels:
        raise DataError(f"input has {x.shape[2]} channels, model expects {model.config.in_channels}")
    if x.shape[1] < 1:
        raise DataError("input needs at least one time step")
    return x


def _forward(model: TcnModel, x: np.ndarray):
    cfg, p = model.config, model.params
    cache = []
    h = x
    skip = None
    for j, (d, cin) in enumerate(_blocks(cfg)):
        z1, c1 = _conv_forward(h, p[f"b{j}.conv1.w"], p[f"b{j}.conv1.b"], d)
        a1 = np.maximum(z1, 0.0)
        z2, c2 = _conv_forward(a1, p[f"b{j}.conv2.w"], p[f"b{j}.conv2.b"], d)
        a2 = np.maximum(z2, 0.0)
        out = a2
        if cfg.use_residual:
            if f"b{j}.res.w" in p:
                out = a2 + (h @ p[f"b{j}.res.w"][0] + p[f"b{j}.res.b"])
            else:
                out = a2 + h
        cache.append((h, z1, c1, z2, c2))
        skip = out if skip is None else skip + out
        h = out
    feat = skip if cfg.use_skip else h
    if cfg.seq2seq:
        y = feat @ p["head.w"] + p["head.b"]
    else:
        y = feat[:, -1, :] @ p["head.w"] + p["head.b"]
    return y, (cache, feat)


def _backward(model: TcnModel, dy: np.ndarray, state, need_dx: bool = False):
    cfg, p = model.config, model.params
    cache, feat = state
    grads = {}
    if cfg.seq2seq:
        grads["head.w"] = feat.reshape(-1, feat.shape[2]).T @ dy.reshape(-1, dy.shape[2])
        grads["head.b"] = dy.sum(axis=(0, 1))
        dfeat = dy @ p["head.w"].T
    else:
        last = feat[:, -1, :]
        grads["head.w"] = last.T @ dy
        grads["head.b"] = dy.sum(axis=0)
        dfeat = np.zeros_like(feat)
        dfeat[:, -1, :] = dy @ p["head.w"].T
    blocks = _blocks(cfg)
    # gradient flowing into the current block's output from the block above
    dout = dfeat if not cfg.use_skip else np.zeros_like(feat)
    for j in range(len(blocks) - 1, -1, -1):
        d, _ = blocks[j]
        h, z1, c1, z2, c2 = cache[j]
        if cfg.use_skip:
            dout = dout + dfeat
        da2 = dout
        dz2 = da2 * (z2 > 0)
        da1, grads[f"b{j}.conv2.w"], grads[f"b{j}.conv2.b"] = _conv_backward(dz2, c2, p[f"b{j}.conv2.w"], d)
        dz1 = da1 * (z1 > 0)
        dh, grads[f"b{j}.conv1.w"], grads[f"b{j}.conv1.b"] = _conv_backward(dz1, c1, p[f"b{j}.conv1.w"], d)
        if cfg.use_residual:
            if f"b{j}.res.w" in p:
                rw = p[f"b{j}.res.w"][0]
                grads[f"b{j}.res.w"] = (h.reshape(-1, h.shape[2]).T @ dout.reshape(-1, dout.shape[2]))[None]
                grads[f"b{j}.res.b"] = dout.sum(axis=(0, 1))
                dh = dh + dout @ rw.T
            else:
                dh = dh + dout
        dout = dh
    return grads, (dout if need_dx else None)


def forward(model: TcnModel, x) -> np.ndarray:
    """Model output: ``(batch, out_dim)`` in horizon mode, ``(batch, time, out_dim)`` in seq2seq mode.

    A 2-D input ``(time, channels)`` is treated as a batch of one.
    """
    y, _ = _forward(model, _check_input(model, x))
    return y


def mse_loss(pred: np.ndarray, target: np.ndarray) -> float:
    return float(np.mean((pred - target) ** 2))


def gradients(model: TcnModel, x, y) -> tuple[float, dict[str, np.ndarray]]:
    """Mean-squared-error loss and its gradient for every parameter."""
    x = _check_input(model, x)
    y = np.asarray(y, dtype=np.float64)
    pred, state = _forward(model, x)
    if pred.shape != y.shape:
        raise DataError(f"target shape {y.shape} does not match output shape {pred.shape}")
    diff = pred - y
    grads, _ = _backward(model, 2.0 * diff / diff.size, state)
    return float(np.mean(diff ** 2)), grads


def input_gradient(model: TcnModel, x, t: int) -> np.ndarray:
    """d(sum of outputs at step ``t``)/d(input), shape ``(time, channels)``; seq2seq mode only."""
    if not model.config.seq2seq:
        raise ConfigError("input_gradient needs a seq2seq model")
    x = _check_input(model, x)[:1]
    y, state = _forward(model, x)
    dy = np.zeros_like(y)
    dy[0, t, :] = 1.0
    _, dx = _backward(model, dy, state, need_dx=True)
    return dx[0]


def grad_check(model: TcnModel, x, y, eps: float = 1e-6, max_per_param: int | None = None,
               seed: int = 0) -> float:
    """Max relative error between analytic and central-difference gradients."""
    x = _check_input(model, x)
    y = np.asarray(y, dtype=np.float64)
    _, grads = gradients(model, x, y)
    rng = np.random.default_rng(seed)
    worst = 0.0
    probe = model.copy()
    for name, p in probe.params.items():
        flat = p.reshape(-1)
        idx = np.arange(flat.size)
        if max_per_param is not None and flat.size > max_per_param:
            idx = rng.choice(flat.size, max_per_param, replace=False)
        for i in idx:
            orig = flat[i]
            flat[i] = orig + eps
            lp = mse_loss(forward(probe, x), y)
            flat[i] = orig - eps
            lm = mse_loss(forward(probe, x), y)
            flat[i] = orig
            num = (lp - lm) / (2 * eps)
            ana = grads[name].reshape(-1)[i]
            err = abs(ana - num) / max(abs(ana), abs(num), 1e-8)
            worst = max(worst, err)
    return worst


class _Adam:
    def __init__(self, params: dict[str, np.ndarray], lr: float, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        c1 = 1 - self.b1 ** self.t
        c2 = 1 - self.b2 ** self.t
        for k in params:  # fixed key order keeps updates deterministic
            g = grads[k]
            self.m[k] = self.b1 * self.m[k] + (1 - self.b1) * g
            self.v[k] = self.b2 * self.v[k] + (1 - self.b2) * g * g
            params[k] -= self.lr * (self.m[k] / c1) / (np.sqrt(self.v[k] / c2) + self.eps)


@dataclass
class TrainResult:
    model: TcnModel
    train_loss: list[float]
    val_loss: list[float]
    best_epoch: int
    wall_seconds: list[float] | None = None


def _crop(model: TcnModel, x: np.ndarray) -> np.ndarray:
    # horizon mode reads the last step only, so older inputs cannot matter
    if model.config.seq2seq:
        return x
    r = receptive_field(model.config)
    return x[:, -r:] if x.shape[1] > r else x


def train(model: TcnModel, train_data, cfg: TrainConfig, val_data=None,
          timing: bool = False) -> TrainResult:
    """Adam on MSE; returns the parameters from the epoch with the lowest validation loss.

    Without validation data the training loss is used for model selection.
    """
    X, Y = (np.asarray(a, dtype=np.float64) for a in train_data)
    if X.shape[0] == 0:
        raise DataError("empty training set")
    X = _crop(model, _check_input(model, X))
    if X.shape[1] < receptive_field(model.config):
        warnings.warn(f"input windows ({X.shape[1]} steps) are shorter than the receptive field "
                      f"({receptive_field(model.config)})", stacklevel=2)
    if val_data is not None:
        Xv, Yv = (np.asarray(a, dtype=np.float64) for a in val_data)
        if Xv.shape[0] == 0:
            val_data = None
        else:
            Xv = _crop(model, _check_input(model, Xv))
    model = model.copy()
    opt = _Adam(model.params, cfg.learning_rate)
    rng = np.random.default_rng(cfg.seed)
    n = X.shape[0]
    best = (np.inf, 0, model.copy())
    train_curve, val_curve, walls = [], [], []
    wait = 0
    t0 = time.perf_counter()
    for epoch in range(cfg.epochs):
        order = rng.permutation(n)
        total = 0.0
        for bi, start in enumerate(range(0, n, cfg.batch_size)):
            idx = order[start:start + cfg.batch_size]
            loss, grads = gradients(model, X[idx], Y[idx])
            if not np.isfinite(loss):
                raise NonFiniteLossError(epoch, bi, loss)
            if cfg.gradient_clip is not None:
                norm = np.sqrt(sum(float(np.sum(g * g)) for g in grads.values()))
                if norm > cfg.gradient_clip:
                    grads = {k: g * (cfg.gradient_clip / norm) for k, g in grads.items()}
            opt.step(model.params, grads)
            total += loss * len(idx)
        train_curve.append(total / n)
        if val_data is not None:
            val = mse_loss(forward(model, Xv), Yv)
            val_curve.append(val)
        else:
            val = train_curve[-1]
        if timing:
            walls.append(time.perf_counter() - t0)
        if val < best[0]:
            best = (val, epoch, model.copy())
            wait = 0
        else:
            wait += 1
            if cfg.early_stop_patience is not None and wait > cfg.early_stop_patience:
                break
    return TrainResult(best[2], train_curve, val_curve, best[1], walls if timing else None)


def predict(model: TcnModel, window) -> np.ndarray:
    """Forecast for one window ``(time, channels)`` or a batch ``(batch, time, channels)``."""
    x = np.asarray(window, dtype=np.float64)
    single = x.ndim == 2
    out = forward(model, _crop(model, _check_input(model, x)))
    return out[0] if single else out


def save_checkpoint(model: TcnModel, path) -> None:
    obj = {"format_version": CHECKPOINT_VERSION,
           "config": model.config.to_json(),
           "parameters": {k: v.tolist() for k, v in model.params.items()}}
    Path(path).write_text(json.dumps(obj, indent=1))


def load_checkpoint(path) -> TcnModel:
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: malformed checkpoint JSON ({exc.msg})") from exc
    if obj.get("format_version") != CHECKPOINT_VERSION:
        raise DataError(f"{path}: unsupported checkpoint format_version {obj.get('format_version')!r}")
    cfg = TcnConfig.from_json(obj["config"])
    return TcnModel(cfg, {k: np.array(v, dtype=np.float64) for k, v in obj["parameters"].items()})


def write_training_log(result: TrainResult, path) -> None:
    """CSV of per-epoch losses; ``wall_seconds`` stays empty unless timing was recorded."""
    with open(path, "w", newline="") as f:
        w = csv.writer(f)
        w.writerow(["epoch", "train_loss", "val_loss", "wall_seconds"])
        for e, tl in enumerate(result.train_loss):
            vl = result.val_loss[e] if e < len(result.val_loss) else ""
            ws = result.wall_seconds[e] if result.wall_seconds else ""
            w.writerow([e, repr(tl), repr(vl) if vl != "" else "", repr(ws) if ws != "" else ""])
