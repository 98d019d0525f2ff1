"""Data model, normalization, resampling and on-disk format shared by every stage."""
from __future__ import annotations

import csv
import datetime as dt
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

SITES_FILE = "sites.json"
IRRADIANCE_FILE = "irradiance.csv"
MANIFEST_FILE = "manifest.json"


class CloudleadError(Exception):
    """Base class for errors raised by this package."""


class ConfigError(CloudleadError, ValueError):
    """Invalid configuration or argument (unknown site id, bad parameter)."""


class DataError(CloudleadError, ValueError):
    """Malformed or physically invalid data."""


@dataclass(frozen=True)
class SiteMeta:
    id: str
    x_km: float
    y_km: float
    capacity_kw: float | None = None

    def __post_init__(self):
        if not (math.isfinite(self.x_km) and math.isfinite(self.y_km)):
            raise DataError(f"site {self.id!r}: coordinates must be finite")

    @property
    def pos(self) -> np.ndarray:
        return np.array([self.x_km, self.y_km])

    def to_json(self) -> dict:
        return {"id": self.id, "x_km": self.x_km, "y_km": self.y_km, "capacity_kw": self.capacity_kw}

    @classmethod
    def from_json(cls, obj: Mapping) -> "SiteMeta":
        try:
            cap = obj.get("capacity_kw")
            return cls(str(obj["id"]), float(obj["x_km"]), float(obj["y_km"]),
                       None if cap is None else float(cap))
        except (KeyError, TypeError, ValueError) as exc:
            raise DataError(f"bad site record {obj!r}: {exc}") from exc


def samples_per_day(step_minutes: int) -> int:
    if step_minutes <= 0 or 1440 % step_minutes:
        raise ConfigError(f"step_minutes={step_minutes} must divide 1440")
    return 1440 // step_minutes


@dataclass(frozen=True)
class DailyProfile:
    date: dt.date
    values: np.ndarray
    step_minutes: int

    def __post_init__(self):
        m = samples_per_day(self.step_minutes)
        v = np.asarray(self.values, dtype=float)
        if v.shape != (m,):
            raise DataError(f"profile for {self.date} has shape {v.shape}, expected ({m},)")
        if not np.all(np.isfinite(v)):
            raise DataError(f"profile for {self.date} has missing entries")
        if v.min() < 0.0 or v.max() > 1.0:
            raise DataError(f"profile for {self.date} leaves [0, 1]")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def M(self) -> int:
        return self.values.shape[0]


@dataclass(frozen=True, eq=False)
class Dataset:
    """Normalized irradiance for N sites over D consecutive days.

    ``values`` has shape (N, D, M) and is read-only. ``site_max`` records the
    raw divisor used per site when the data came from :func:`normalize`.
    """

    sites: tuple[SiteMeta, ...]
    start: dt.date
    step_minutes: int
    values: np.ndarray
    site_max: Mapping[str, float] | None = field(default=None)

    def __post_init__(self):
        sites = tuple(self.sites)
        object.__setattr__(self, "sites", sites)
        ids = [s.id for s in sites]
        if len(set(ids)) != len(ids):
            raise DataError("site ids must be unique")
        if len(sites) < 2:
            raise DataError("a dataset needs at least two sites")
        m = samples_per_day(self.step_minutes)
        v = np.array(self.values, dtype=np.float64)
        if v.ndim != 3 or v.shape[0] != len(sites) or v.shape[2] != m or v.shape[1] < 1:
            raise DataError(f"values shape {v.shape} does not match ({len(sites)}, D>=1, {m})")
        bad = ~np.isfinite(v)
        if bad.any():
            n, d, t = np.argwhere(bad)[0]
            raise DataError(f"missing value at site {ids[n]!r}, day {d}, step {t}")
        if v.min() < 0.0 or v.max() > 1.0:
            n, d, t = np.argwhere((v < 0) | (v > 1))[0]
            raise DataError(f"value {v[n, d, t]} outside [0, 1] at site {ids[n]!r}, day {d}, step {t}")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def D(self) -> int:
        return self.values.shape[1]

    @property
    def M(self) -> int:
        return self.values.shape[2]

    @property
    def ids(self) -> list[str]:
        return [s.id for s in self.sites]

    @property
    def days(self) -> list[dt.date]:
        return [self.start + dt.timedelta(days=i) for i in range(self.D)]

    def index(self, site_id: str) -> int:
        try:
            return self.ids.index(site_id)
        except ValueError:
            raise ConfigError(f"unknown site id {site_id!r}") from None

    def site(self, site_id: str) -> SiteMeta:
        return self.sites[self.index(site_id)]

    def profile(self, site_id: str, day: int) -> DailyProfile:
        return DailyProfile(self.start + dt.timedelta(days=day), self.values[self.index(site_id), day],
                            self.step_minutes)

    def series(self, site_id: str) -> np.ndarray:
        """Flattened (D*M,) series for one site."""
        return self.values[self.index(site_id)].reshape(-1)

    def subset_days(self, start: int, stop: int) -> "Dataset":
        return Dataset(self.sites, self.start + dt.timedelta(days=start), self.step_minutes,
                       self.values[:, start:stop], self.site_max)

    def equals(self, other: "Dataset") -> bool:
        return (self.sites == other.sites and self.start == other.start
                and self.step_minutes == other.step_minutes
                and np.array_equal(self.values, other.values))


def normalize(raw, sites: Sequence[SiteMeta], start: dt.date, step_minutes: int) -> Dataset:
    """Divide each site's raw irradiance (W/m2) by that site's maximum over the record.

    ``raw`` is (N, D*M) or (N, D, M).
    """
    raw = np.asarray(raw, dtype=np.float64)
    m = samples_per_day(step_minutes)
    if raw.ndim == 2:
        if raw.shape[1] % m:
            raise DataError(f"series length {raw.shape[1]} is not a whole number of days of {m} steps")
        raw = raw.reshape(raw.shape[0], -1, m)
    if raw.shape[0] != len(sites):
        raise DataError(f"{raw.shape[0]} series for {len(sites)} sites")
    if not np.all(np.isfinite(raw)):
        raise DataError("raw irradiance contains non-finite values")
    if (raw < 0).any():
        n = int(np.argwhere(raw < 0)[0][0])
        raise DataError(f"negative irradiance at site {sites[n].id!r}")
    peak = raw.reshape(raw.shape[0], -1).max(axis=1)
    for s, p in zip(sites, peak):
        if p <= 0:
            raise DataError(f"degenerate site {s.id!r}: no positive irradiance")
    values = raw / peak[:, None, None]
    return Dataset(tuple(sites), start, step_minutes, values,
                   {s.id: float(p) for s, p in zip(sites, peak)})


def resample_hourly(profile: DailyProfile) -> np.ndarray:
    """Hourly means of one day, length 24."""
    if 60 % profile.step_minutes:
        raise ConfigError(f"step_minutes={profile.step_minutes} does not divide 60")
    return profile.values.reshape(24, -1).mean(axis=1)


def hourly_values(dataset: Dataset) -> np.ndarray:
    """(N, D, 24) hourly means for every site and day."""
    if 60 % dataset.step_minutes:
        raise ConfigError(f"step_minutes={dataset.step_minutes} does not divide 60")
    return dataset.values.reshape(dataset.N, dataset.D, 24, -1).mean(axis=3)


# ---------------------------------------------------------------- file I/O


def _timestamp(start: dt.date, step_minutes: int, i: int) -> str:
    t = dt.datetime.combine(start, dt.time()) + dt.timedelta(minutes=step_minutes * i)
    return t.isoformat()


def save_dataset(dataset: Dataset, path) -> Path:
    """Write sites.json, irradiance.csv and manifest.json into directory ``path``."""
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    with open(out / SITES_FILE, "w") as f:
        json.dump([s.to_json() for s in dataset.sites], f, indent=1)
    flat = dataset.values.reshape(dataset.N, -1)
    with open(out / IRRADIANCE_FILE, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["timestamp", *dataset.ids])
        for i in range(flat.shape[1]):
            w.writerow([_timestamp(dataset.start, dataset.step_minutes, i),
                        *(repr(float(v)) for v in flat[:, i])])
    manifest = {"granularity_minutes": dataset.step_minutes, "normalized": True,
                "site_max": dict(dataset.site_max) if dataset.site_max else None}
    with open(out / MANIFEST_FILE, "w") as f:
        json.dump(manifest, f, indent=1, sort_keys=True)
    return out


def _read_json(path: Path):
    try:
        with open(path) as f:
            return json.load(f)
    except FileNotFoundError:
        raise DataError(f"missing file {path}") from None
    except json.JSONDecodeError as exc:
        raise DataError(f"{path}:{exc.lineno}: invalid JSON ({exc.msg})") from exc


def load_dataset(path) -> Dataset:
    """Inverse of :func:`save_dataset`; raw (unnormalized) files are normalized on load."""
    src = Path(path)
    manifest = _read_json(src / MANIFEST_FILE)
    sites_json = _read_json(src / SITES_FILE)
    if not isinstance(sites_json, list):
        raise DataError(f"{src / SITES_FILE}: expected a JSON array of site objects")
    sites = [SiteMeta.from_json(o) for o in sites_json]
    try:
        step = int(manifest["granularity_minutes"])
        normalized = bool(manifest["normalized"])
    except (KeyError, TypeError, ValueError) as exc:
        raise DataError(f"{src / MANIFEST_FILE}: bad manifest ({exc})") from exc
    m = samples_per_day(step)
    csv_path = src / IRRADIANCE_FILE
    try:
        fh = open(csv_path, newline="")
    except FileNotFoundError:
        raise DataError(f"missing file {csv_path}") from None
    with fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if not header or header[0] != "timestamp":
            raise DataError(f"{csv_path}:1: header must start with 'timestamp'")
        col_ids = header[1:]
        if sorted(col_ids) != sorted(s.id for s in sites):
            raise DataError(f"{csv_path}:1: columns {col_ids} do not match site ids {[s.id for s in sites]}")
        order = [col_ids.index(s.id) for s in sites]
        rows, t0, step_td = [], None, dt.timedelta(minutes=step)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(header):
                raise DataError(f"{csv_path}:{lineno}: expected {len(header)} fields, got {len(row)}")
            try:
                ts = dt.datetime.fromisoformat(row[0])
            except ValueError:
                raise DataError(f"{csv_path}:{lineno}: bad timestamp {row[0]!r}") from None
            if t0 is None:
                t0 = ts
                if ts.time() != dt.time():
                    raise DataError(f"{csv_path}:{lineno}: first timestamp must be midnight")
            expected = t0 + step_td * len(rows)
            if ts != expected:
                raise DataError(f"{csv_path}:{lineno}: missing timestamp {expected.isoformat()} (found {row[0]})")
            vals = []
            for col, cell in enumerate(row[1:]):
                try:
                    v = float(cell)
                except ValueError:
                    v = math.nan
                if math.isnan(v):
                    raise DataError(f"{csv_path}:{lineno}: missing value in column {col_ids[col]!r}")
                if v < 0:
                    raise DataError(f"{csv_path}:{lineno}: negative irradiance {v} in column {col_ids[col]!r}")
                vals.append(v)
            rows.append(vals)
    if not rows or len(rows) % m:
        raise DataError(f"{csv_path}: {len(rows)} rows is not a whole number of {m}-step days")
    arr = np.array(rows, dtype=np.float64).T[order]
    start = t0.date()
    if not normalized:
        return normalize(arr, sites, start, step)
    if arr.max() > 1.0:
        r, c = np.argwhere(arr > 1.0)[0]
        raise DataError(f"{csv_path}:{c + 2}: normalized value {arr[r, c]} > 1 for site {sites[r].id!r}")
    site_max = manifest.get("site_max")
    return Dataset(tuple(sites), start, step, arr.reshape(len(sites), -1, m), site_max)
