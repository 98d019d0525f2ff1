"""Day-ahead blending of several degraded forecast sources into one hourly series.

Sources are synthesized from the true hourly irradiance (smoothing, coarse
sampling, bias, noise). A seq2seq causal convolutional network maps the S
source channels to irradiance; a pointwise least-squares blend is the
reference baseline. Metrics are computed on daylight hours only.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np
from scipy import ndimage

from . import tcn
from .core import ConfigError, DataError

WINDOW_H = 48


@dataclass(frozen=True)
class NwpSourceConfig:
    name: str
    granularity_h: int = 1
    bias: float = 0.0
    smooth_h: float = 0.0
    noise_sd: float = 0.0
    horizon_h: int = 48
    seed: int = 0

    def __post_init__(self):
        if self.granularity_h < 1 or 24 % self.granularity_h:
            raise ConfigError(f"{self.name}: granularity_h={self.granularity_h} must divide 24")
        if self.noise_sd < 0 or self.smooth_h < 0:
            raise ConfigError(f"{self.name}: noise_sd and smooth_h must be >= 0")

    def to_json(self) -> dict:
        return asdict(self)

    @classmethod
    def from_json(cls, obj: dict) -> "NwpSourceConfig":
        unknown = set(obj) - set(cls.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown source keys: {sorted(unknown)}")
        return cls(**obj)


def default_suite(seed: int = 0) -> list[NwpSourceConfig]:
    """Five sources with distinct error signatures (coarse, 3-hourly, biased, smoothed, noisy)."""
    return [
        NwpSourceConfig("coarse", 1, bias=0.03, smooth_h=3.0, noise_sd=0.05, seed=seed * 10 + 1),
        NwpSourceConfig("three_hourly", 3, bias=-0.03, smooth_h=0.0, noise_sd=0.08, seed=seed * 10 + 2),
        NwpSourceConfig("biased", 1, bias=0.12, smooth_h=0.0, noise_sd=0.06, seed=seed * 10 + 3),
        NwpSourceConfig("smoothed", 1, bias=-0.05, smooth_h=6.0, noise_sd=0.04, seed=seed * 10 + 4),
        NwpSourceConfig("noisy", 1, bias=0.0, smooth_h=0.0, noise_sd=0.15, seed=seed * 10 + 5),
    ]


def _upsample(coarse_idx: np.ndarray, coarse: np.ndarray, n: int) -> np.ndarray:
    return np.interp(np.arange(n), coarse_idx, coarse)


def synth_nwp(truth_hourly, cfg: NwpSourceConfig) -> np.ndarray:
    """Degrade an hourly truth series: smooth, resample to the source grid, add bias and noise, clip."""
    truth = np.asarray(truth_hourly, dtype=np.float64)
    if truth.ndim != 1:
        raise DataError("truth_hourly must be one-dimensional")
    if np.any(truth < 0) or np.any(truth > 1):
        raise DataError("truth_hourly must lie in [0, 1]")
    x = truth
    if cfg.smooth_h > 0:
        x = ndimage.uniform_filter1d(x, size=max(1, int(round(cfg.smooth_h))), mode="nearest")
    if cfg.granularity_h > 1:
        idx = np.arange(0, x.size, cfg.granularity_h)
        x = _upsample(idx, x[idx], x.size)
    rng = np.random.default_rng(cfg.seed)
    x = x + cfg.bias + (rng.normal(0.0, cfg.noise_sd, size=x.size) if cfg.noise_sd > 0 else 0.0)
    return np.clip(x, 0.0, 1.0)


def to_power(irradiance, capacity_kw: float) -> np.ndarray:
    """Capacity scaling stand-in for an irradiance-to-power model."""
    return np.asarray(irradiance, dtype=np.float64) * capacity_kw


def blend_evaluate(pred, truth, mask=None) -> dict:
    """RMSE and mean signed error ``mean(pred - truth)`` over ``mask`` (default: all)."""
    p = np.asarray(pred, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=np.float64).ravel()
    if p.shape != t.shape:
        raise DataError(f"length mismatch: {p.size} predictions vs {t.size} truth values")
    if mask is not None:
        m = np.asarray(mask, dtype=bool).ravel()
        if m.shape != p.shape:
            raise DataError("mask length mismatch")
        p, t = p[m], t[m]
    if p.size == 0:
        raise DataError("nothing to evaluate")
    e = p - t
    return {"rmse": float(np.sqrt(np.mean(e * e))), "bias": float(np.mean(e))}


@dataclass(frozen=True)
class LinearBlend:
    weights: np.ndarray
    intercept: float

    def predict(self, sources) -> np.ndarray:
        return np.asarray(sources, dtype=np.float64).T @ self.weights + self.intercept


def linear_blend_baseline(sources, truth, mask=None) -> LinearBlend:
    """Pointwise least squares ``truth ~ w . sources + c``; minimum-norm when rank deficient."""
    S = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    y = np.asarray(truth, dtype=np.float64)
    if S.shape[1] != y.size:
        raise DataError(f"sources have {S.shape[1]} steps, truth has {y.size}")
    m = np.ones(y.size, bool) if mask is None else np.asarray(mask, bool)
    A = np.column_stack([S[:, m].T, np.ones(int(m.sum()))])
    coef, *_ = np.linalg.lstsq(A, y[m], rcond=None)
    return LinearBlend(coef[:-1], float(coef[-1]))


def make_windows(sources, truth=None, length: int = WINDOW_H, stride: int = 1):
    """Sliding windows: X ``(n, length, S)`` and Y ``(n, length, 1)`` (Y is None without truth)."""
    S = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    T = S.shape[1]
    if T < length:
        raise DataError(f"need at least {length} hours, got {T}")
    starts = np.arange(0, T - length + 1, stride)
    idx = starts[:, None] + np.arange(length)[None, :]
    X = S.T[idx]
    Y = None if truth is None else np.asarray(truth, dtype=np.float64)[idx][..., None]
    return X, Y


def blend_tcn_config(n_sources: int, seed: int = 0, n_filters: int = 32) -> tcn.TcnConfig:
    """Kernel 2, dilations (1, 2), three stacks, skip connections, seq2seq head."""
    return tcn.TcnConfig(kernel_size=2, dilations=(1, 2), n_stacks=3, n_filters=n_filters,
                         in_channels=n_sources, out_dim=1, use_residual=True, use_skip=True,
                         seq2seq=True, seed=seed)


def blend_train(sources, truth, tcn_config: tcn.TcnConfig | None = None,
                train_cfg: tcn.TrainConfig | None = None, val=None, stride: int = 1,
                length: int = WINDOW_H) -> tcn.TrainResult:
    """Fit the seq2seq blender on sliding windows of the training span.

    ``val`` is an optional ``(sources, truth)`` pair used for early stopping.
    """
    S = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    if S.shape[0] < 1:
        raise DataError("need at least one source")
    cfg = tcn_config or blend_tcn_config(S.shape[0])
    if cfg.in_channels != S.shape[0]:
        raise ConfigError(f"model expects {cfg.in_channels} sources, got {S.shape[0]}")
    X, Y = make_windows(S, truth, length, stride)
    val_data = None
    if val is not None:
        val_data = make_windows(val[0], val[1], length, length)
    return tcn.train(tcn.init_model(cfg), (X, Y), train_cfg or tcn.TrainConfig(), val_data)


def blend_predict(model: tcn.TcnModel, sources, length: int = WINDOW_H) -> np.ndarray:
    """Predict a full span in consecutive non-overlapping windows of ``length`` hours."""
    S = np.atleast_2d(np.asarray(sources, dtype=np.float64))
    T = S.shape[1]
    out = np.empty(T)
    for start in range(0, T, length):
        stop = min(T, start + length)
        out[start:stop] = tcn.forward(model, S[:, start:stop].T[None])[0, :, 0]
    return np.clip(out, 0.0, 1.0)
