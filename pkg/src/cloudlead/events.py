"""Cloud-event extraction and time-lagged correlation of event series."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import DailyProfile

DEFAULT_DX = 0.3
# Float slack on the inclusive drop threshold, so a drop of exactly dx counts.
THRESHOLD_SLACK = 1e-9
# Correlations closer than this are treated as tied when picking the best lag.
TIE_TOL = 1e-12


@dataclass(frozen=True)
class EventSeries:
    values: np.ndarray
    dx: float

    @property
    def cloudy(self) -> bool:
        return bool(np.any(self.values))


@dataclass(frozen=True)
class LagCorrResult:
    """Best lag (in steps) and its correlation.

    ``delta_t_max > 0`` means the detector saw the event before the target.
    """

    delta_t_max: int
    pcc_max: float
    defined: bool


def event_values(values, dx: float = DEFAULT_DX) -> np.ndarray:
    """Forward differences along the last axis with everything above ``-dx`` zeroed."""
    if dx <= 0:
        raise ValueError("dx must be positive")
    diff = np.diff(np.asarray(values, dtype=np.float64), axis=-1)
    return np.where(diff <= -dx + THRESHOLD_SLACK, diff, 0.0)


def extract_events(profile, dx: float = DEFAULT_DX) -> EventSeries:
    values = profile.values if isinstance(profile, DailyProfile) else profile
    return EventSeries(event_values(values, dx), dx)


def pearson(a, b) -> tuple[float, bool]:
    """Pearson r and a ``defined`` flag; zero-variance input gives ``(0.0, False)``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: {a.shape} vs {b.shape}")
    if a.size < 2:
        raise ValueError("pearson needs at least two samples")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return 0.0, False
    ac = a - a.mean()
    bc = b - b.mean()
    r = float(ac @ bc / np.sqrt((ac @ ac) * (bc @ bc)))
    return min(1.0, max(-1.0, r)), True


def shift_matrix(target: np.ndarray, t_shift: int) -> np.ndarray:
    """Rows are the target read ``Δt`` steps ahead, ``Δt = -t_shift..t_shift``, zero padded."""
    n = target.shape[-1]
    out = np.zeros((2 * t_shift + 1, n))
    for k, lag in enumerate(range(-t_shift, t_shift + 1)):
        if lag >= 0:
            if lag < n:
                out[k, : n - lag] = target[lag:]
        elif -lag < n:
            out[k, -lag:] = target[: n + lag]
    return out


def _row_pearson(rows: np.ndarray, cols: np.ndarray) -> np.ndarray:
    """Pearson r between every row of ``rows`` (S, L) and every row of ``cols`` (J, L) -> (S, J)."""
    rc = rows - rows.mean(axis=1, keepdims=True)
    cc = cols - cols.mean(axis=1, keepdims=True)
    num = rc @ cc.T
    den = np.sqrt(np.outer((rc * rc).sum(axis=1), (cc * cc).sum(axis=1)))
    flat_rows = np.ptp(rows, axis=1) == 0
    flat_cols = np.ptp(cols, axis=1) == 0
    with np.errstate(invalid="ignore", divide="ignore"):
        r = np.where(den > 0, num / np.where(den > 0, den, 1.0), 0.0)
    r[flat_rows, :] = 0.0
    r[:, flat_cols] = 0.0
    return np.clip(r, -1.0, 1.0)


def lag_priority(t_shift: int) -> np.ndarray:
    """Row indices of the shift matrix ordered 0, +1, -1, +2, -2, ... (tie-break order)."""
    lags = [0]
    for k in range(1, t_shift + 1):
        lags += [k, -k]
    return np.array(lags) + t_shift


def pick_lag(pcc: np.ndarray, t_shift: int) -> tuple[np.ndarray, np.ndarray]:
    """Best lag per column of ``pcc`` (2*t_shift+1, J), ties to smallest |lag| then positive."""
    prio = lag_priority(t_shift)
    ordered = pcc[prio]
    best = ordered.max(axis=0)
    first = np.argmax(ordered >= best - TIE_TOL, axis=0)
    lag = prio[first] - t_shift
    return lag.astype(int), ordered[first, np.arange(pcc.shape[1])]


def lagged_correlation_many(target, detectors, t_shift: int):
    """Vectorized :func:`lagged_correlation` of one target against J detector series.

    Returns ``(lags, pccs, defined)`` arrays of length J.
    """
    target = np.asarray(target, dtype=np.float64)
    detectors = np.atleast_2d(np.asarray(detectors, dtype=np.float64))
    if t_shift < 1:
        raise ValueError("t_shift must be >= 1")
    if detectors.shape[1] != target.shape[0]:
        raise ValueError(f"length mismatch: {target.shape[0]} vs {detectors.shape[1]}")
    defined = np.any(detectors != 0, axis=1) & bool(np.any(target != 0))
    lags = np.zeros(detectors.shape[0], dtype=int)
    pccs = np.zeros(detectors.shape[0])
    if defined.any():
        pcc = _row_pearson(shift_matrix(target, t_shift), detectors[defined])
        lags[defined], pccs[defined] = pick_lag(pcc, t_shift)
    return lags, pccs, defined


def lagged_correlation(target, detector, t_shift: int) -> LagCorrResult:
    """Shift the target against a fixed detector and keep the lag with the highest Pearson r."""
    t = target.values if isinstance(target, EventSeries) else target
    d = detector.values if isinstance(detector, EventSeries) else detector
    t = np.asarray(t, dtype=np.float64)
    d = np.asarray(d, dtype=np.float64)
    if t.shape != d.shape:
        raise ValueError(f"length mismatch: {t.shape} vs {d.shape}")
    lags, pccs, defined = lagged_correlation_many(t, d[None, :], t_shift)
    return LagCorrResult(int(lags[0]), float(pccs[0]), bool(defined[0]))
