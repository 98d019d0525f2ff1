"""Synthetic multi-site irradiance from a frozen cloud field advected by wind.

Clouds are a smoothed Gaussian random field pushed through a steep logistic
so that cloud edges produce sharp drops. The field is frozen (Taylor
hypothesis): a site downwind sees exactly what an upwind site saw, delayed by
the along-wind distance over the wind speed. That delay is the ground truth
for the lag analysis.
"""
from __future__ import annotations

import datetime as dt
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from statistics import NormalDist

import numpy as np
from scipy import ndimage

from .core import ConfigError, Dataset, SiteMeta, samples_per_day

SUNRISE_H = 6.0
SUNSET_H = 18.0


def grid_sites(rows: int = 4, cols: int = 4, spacing_km: float = 8.0) -> list[SiteMeta]:
    """Sites on a regular grid centred on the origin, ids ``S<row><col>`` (row 0 = south)."""
    x0 = -(cols - 1) * spacing_km / 2
    y0 = -(rows - 1) * spacing_km / 2
    return [SiteMeta(f"S{r}{c}", x0 + c * spacing_km, y0 + r * spacing_km, 1000.0)
            for r in range(rows) for c in range(cols)]


@dataclass
class SimConfig:
    sites: list[SiteMeta] = field(default_factory=grid_sites)
    wind_kmh: tuple[float, float] = (16.0, 0.0)
    corr_length_km: float = 3.0
    coverage: float = 0.3
    depth: float = 0.3
    noise_sd: float = 0.01
    n_days: int = 120
    step_minutes: int = 5
    cloudy_day_prob: float = 0.5
    seed: int = 0
    # day-to-day spread of the wind direction around ``wind_kmh``
    wind_dir_sd_deg: float = 30.0
    # day-to-day spread of cloud coverage (coverage * lognormal factor)
    coverage_sd: float = 0.5
    # rate (1/h) at which the frozen field decorrelates; 0 keeps it exactly frozen
    decorrelation_per_h: float = 0.2
    # cross-wind / along-wind correlation length ratio (cloud streets when > 1)
    cloud_aspect: float = 4.0
    edge_width: float = 0.08
    resolution_km: float = 0.5
    domain_km: float = 60.0
    start: dt.date = dt.date(2020, 1, 1)

    def __post_init__(self):
        if not 0.0 <= self.coverage <= 1.0:
            raise ConfigError(f"coverage={self.coverage} must lie in [0, 1]")
        if not 0.0 <= self.depth < 1.0:
            raise ConfigError(f"depth={self.depth} must lie in [0, 1)")
        if self.corr_length_km <= 0 or self.cloud_aspect <= 0:
            raise ConfigError("corr_length_km and cloud_aspect must be positive")
        if self.noise_sd < 0:
            raise ConfigError("noise_sd must be non-negative")
        if self.n_days < 1:
            raise ConfigError("n_days must be >= 1")
        if not 0.0 <= self.cloudy_day_prob <= 1.0:
            raise ConfigError("cloudy_day_prob must lie in [0, 1]")
        samples_per_day(self.step_minutes)
        self.wind_kmh = tuple(float(w) for w in self.wind_kmh)
        if np.hypot(*self.wind_kmh) == 0:
            raise ConfigError("wind speed must be non-zero")

    def to_json(self) -> dict:
        d = asdict(self)
        d["sites"] = [s.to_json() for s in self.sites]
        d["wind_kmh"] = list(self.wind_kmh)
        d["start"] = self.start.isoformat()
        return d

    @classmethod
    def from_json(cls, obj: dict) -> "SimConfig":
        obj = dict(obj)
        known = set(cls.__dataclass_fields__)
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown SimConfig keys: {sorted(unknown)}")
        if "sites" in obj:
            obj["sites"] = [SiteMeta.from_json(s) for s in obj["sites"]]
        if "start" in obj:
            obj["start"] = dt.date.fromisoformat(obj["start"])
        if "wind_kmh" in obj:
            obj["wind_kmh"] = tuple(obj["wind_kmh"])
        try:
            return cls(**obj)
        except TypeError as exc:
            raise ConfigError(str(exc)) from exc


def field_metric(cfg: SimConfig) -> np.ndarray:
    """Inverse squared correlation lengths of the cloud field, in site (x, y) coordinates."""
    along = np.asarray(cfg.wind_kmh) / np.hypot(*cfg.wind_kmh)
    R = np.column_stack([along, [-along[1], along[0]]])
    L = np.array([cfg.corr_length_km, cfg.corr_length_km * cfg.cloud_aspect])
    return R @ np.diag(1.0 / L ** 2) @ R.T


@dataclass(frozen=True)
class GroundTruth:
    wind_kmh: tuple[float, float]
    daily_wind_kmh: np.ndarray
    cloudy_days: np.ndarray
    site_ids: tuple[str, ...]
    positions: np.ndarray
    metric: np.ndarray = field(default_factory=lambda: np.eye(2))

    def lead_hours(self, i: str, j: str, day: int | None = None) -> float:
        """Hours by which site ``i`` sees a cloud before site ``j``.

        This is the time shift that maximizes the correlation of the frozen
        field between the two sites: ``(d' A w) / (w' A w)`` with ``d`` the
        separation, ``w`` the wind and ``A`` the field's inverse squared
        correlation lengths. For round clouds it is the along-wind distance
        over the wind speed; elongated clouds drifting at an angle to their
        long axis arrive later than that.
        """
        w = np.asarray(self.wind_kmh if day is None else self.daily_wind_kmh[day])
        pi = self.positions[self.site_ids.index(i)]
        pj = self.positions[self.site_ids.index(j)]
        A = self.metric
        return float((pj - pi) @ A @ w / (w @ A @ w))

    def lead_steps(self, i: str, j: str, step_minutes: int, day: int | None = None) -> float:
        return self.lead_hours(i, j, day) * 60.0 / step_minutes

    def to_json(self) -> dict:
        leads = {i: {j: self.lead_hours(i, j) for j in self.site_ids if j != i} for i in self.site_ids}
        return {"wind_kmh": list(self.wind_kmh),
                "daily_wind_kmh": self.daily_wind_kmh.tolist(),
                "cloudy_days": [bool(c) for c in self.cloudy_days],
                "lead_hours": leads}


def clear_sky_profile(M: int, sunrise_h: float = SUNRISE_H, sunset_h: float = SUNSET_H) -> np.ndarray:
    """Raised-cosine daylight bell: 0 outside daylight, 1.0 at the solar-noon index ``M // 2``.

    Symmetric about noon: ``cs[M//2 - k] == cs[M//2 + k]``.
    """
    if M < 4:
        raise ConfigError("clear_sky_profile needs M >= 4")
    noon = M // 2
    half = (sunset_h - sunrise_h) / 2 * M / 24.0
    k = np.abs(np.arange(M) - noon).astype(float)
    cs = np.where(k < half, 0.5 * (1.0 + np.cos(np.pi * k / half)), 0.0)
    return cs


def _squash(g: np.ndarray, coverage: float, depth: float, edge: float) -> np.ndarray:
    """Map a standard-normal field to transmissivity in [depth, 1]."""
    if coverage <= 0:
        return np.ones_like(g)
    if coverage >= 1:
        return np.full_like(g, depth)
    z = NormalDist().inv_cdf(1.0 - coverage)
    cover = 0.5 * (1.0 + np.tanh((g - z) / (2.0 * edge)))
    return 1.0 - (1.0 - depth) * cover


class _Field:
    """Gaussian random field on a regular grid with bilinear sampling."""

    def __init__(self, rng, lo, hi, res, corr):
        self.lo, self.res = lo, res
        shape = tuple(int(np.ceil((hi[k] - lo[k]) / res)) + 1 for k in range(2))
        noise = rng.standard_normal(shape)
        g = ndimage.gaussian_filter(noise, (corr[0] / res, corr[1] / res), mode="wrap")
        self.g = (g - g.mean()) / g.std()

    def sample(self, xy):
        coords = [(xy[..., k] - self.lo[k]) / self.res for k in range(2)]
        return ndimage.map_coordinates(self.g, coords, order=1, mode="nearest")


def _day(cfg: SimConfig, seq: np.random.SeedSequence, pos: np.ndarray, cs: np.ndarray):
    rng = np.random.default_rng(seq)
    M = cs.shape[0]
    cloudy = bool(rng.random() < cfg.cloudy_day_prob)
    w = np.asarray(cfg.wind_kmh)
    if cfg.wind_dir_sd_deg > 0:
        a = np.deg2rad(rng.normal(0.0, cfg.wind_dir_sd_deg))
        w = np.array([w[0] * np.cos(a) - w[1] * np.sin(a), w[0] * np.sin(a) + w[1] * np.cos(a)])
    coverage = cfg.coverage
    if cfg.coverage_sd > 0:
        coverage = float(np.clip(coverage * rng.lognormal(0.0, cfg.coverage_sd), 0.0, 1.0))
    trans = np.ones((pos.shape[0], M))
    if cloudy and coverage > 0:
        t_h = np.arange(M) * cfg.step_minutes / 60.0
        # where each site's column of air came from at each step, in the mean-wind frame
        xy = pos[:, None, :] - t_h[None, :, None] * w[None, None, :]
        along = np.asarray(cfg.wind_kmh) / np.hypot(*cfg.wind_kmh)
        uv = np.stack([xy @ along, xy @ np.array([-along[1], along[0]])], axis=-1)
        corr = (cfg.corr_length_km, cfg.corr_length_km * cfg.cloud_aspect)
        margin = 4.0 * max(corr) + 2.0
        lo = uv.reshape(-1, 2).min(axis=0) - margin
        hi = uv.reshape(-1, 2).max(axis=0) + margin
        f1 = _Field(rng, lo, hi, cfg.resolution_km, corr)
        g = f1.sample(uv)
        if cfg.decorrelation_per_h > 0:
            f2 = _Field(rng, lo, hi, cfg.resolution_km, corr)
            theta = np.minimum(cfg.decorrelation_per_h * t_h, np.pi / 2)[None, :]
            g = np.cos(theta) * g + np.sin(theta) * f2.sample(uv)
        trans = _squash(g, coverage, cfg.depth, cfg.edge_width)
    x = cs[None, :] * trans
    if cfg.noise_sd > 0:
        noise = rng.normal(0.0, cfg.noise_sd, size=x.shape)
        x = np.where(cs[None, :] > 0, x + noise, x)
    return np.clip(x, 0.0, 1.0), w, cloudy


def simulate(cfg: SimConfig) -> tuple[Dataset, GroundTruth]:
    """Generate a normalized Dataset plus the wind ground truth."""
    pos = np.array([[s.x_km, s.y_km] for s in cfg.sites])
    if np.any(np.abs(pos) > cfg.domain_km):
        bad = [s.id for s, p in zip(cfg.sites, pos) if np.any(np.abs(p) > cfg.domain_km)]
        raise ConfigError(f"sites {bad} lie outside the simulated field extent +-{cfg.domain_km} km")
    M = samples_per_day(cfg.step_minutes)
    cs = clear_sky_profile(M)
    seqs = np.random.SeedSequence(cfg.seed).spawn(cfg.n_days)
    days = [_day(cfg, s, pos, cs) for s in seqs]
    values = np.stack([d[0] for d in days], axis=1)
    ds = Dataset(tuple(cfg.sites), cfg.start, cfg.step_minutes, values)
    truth = GroundTruth(cfg.wind_kmh, np.array([d[1] for d in days]),
                        np.array([d[2] for d in days]), tuple(s.id for s in cfg.sites), pos,
                        field_metric(cfg))
    return ds, truth


def save_ground_truth(truth: GroundTruth, path) -> None:
    with open(Path(path), "w") as f:
        json.dump(truth.to_json(), f, indent=1, sort_keys=True)
