"""Intra-day forecasting harness: sample assembly, baselines, ablations and horizon sweeps.

Forecasts are made in clear-sky-index space. Every site's series is divided by
the clear-sky curve; the network predicts the change of the target's index
over the horizon relative to its last observed value, and the forecast is that
index times the future clear-sky curve. Metrics are in normalized irradiance.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from . import tcn
from .cloudsim import clear_sky_profile
from .core import ConfigError, Dataset, DataError
from .events import DEFAULT_DX, event_values
from .parallel import run_jobs

MODES = ("selected", "single", "all", "random")
SPLIT = (0.7, 0.2, 0.1)
# below this clear-sky level the index is unreliable and is taken as 1 (clear)
CS_FLOOR = 0.05
K_MAX = 1.5
RANDOM_DRAWS = 10


@dataclass(frozen=True)
class ForecastTask:
    target_id: str
    detector_ids: tuple[str, ...] = ()
    history_steps: int = 288
    horizon_steps: int = 12
    ablation_mode: str = "selected"
    stride: int = 3

    def __post_init__(self):
        object.__setattr__(self, "detector_ids", tuple(self.detector_ids))
        if self.horizon_steps < 1 or self.history_steps < 1 or self.stride < 1:
            raise ConfigError("horizon_steps, history_steps and stride must be >= 1")
        if self.ablation_mode not in MODES:
            raise ConfigError(f"unknown ablation mode {self.ablation_mode!r}; expected one of {MODES}")
        if self.ablation_mode == "single" and self.detector_ids:
            raise ConfigError("single mode takes no detectors")
        if self.target_id in self.detector_ids or len(set(self.detector_ids)) != len(self.detector_ids):
            raise ConfigError("detector ids must be distinct and exclude the target")


@dataclass
class EvalReport:
    rmse: float
    bias: float
    per_horizon_rmse: list[float]
    n_samples: int
    quartiles: list[float] = field(default_factory=list)

    def to_json(self) -> dict:
        return asdict(self)


def clear_sky_index(values: np.ndarray, cs: np.ndarray) -> np.ndarray:
    """``values / cs`` where the clear-sky level is at least CS_FLOOR, 1 elsewhere, clipped to [0, K_MAX]."""
    ok = cs >= CS_FLOOR
    k = np.where(ok, values / np.where(ok, cs, 1.0), 1.0)
    return np.clip(k, 0.0, K_MAX)


def order_by_distance(dataset: Dataset, target_id: str, ids) -> tuple[str, ...]:
    p = dataset.site(target_id).pos
    return tuple(sorted(ids, key=lambda s: (float(np.hypot(*(dataset.site(s).pos - p))), s)))


@dataclass
class SampleSet:
    """Forecast origins over a flattened multi-day series.

    ``k`` is the (C, T) clear-sky index of the channels, ``origins`` the index
    of the last observed step of each sample, ``split`` 0/1/2 for
    train/validation/test.
    """

    task: ForecastTask
    channels: tuple[str, ...]
    k: np.ndarray
    values: np.ndarray
    cs: np.ndarray
    origins: np.ndarray
    split: np.ndarray
    steps_per_day: int

    def inputs(self, idx, length: int | None = None) -> np.ndarray:
        L = self.task.history_steps if length is None else min(length, self.task.history_steps)
        o = self.origins[idx]
        win = o[:, None] + np.arange(-L + 1, 1)[None, :]
        return np.transpose(self.k[:, win], (1, 2, 0))

    def future(self, idx) -> np.ndarray:
        o = self.origins[idx]
        return o[:, None] + np.arange(1, self.task.horizon_steps + 1)[None, :]

    def targets(self, idx) -> np.ndarray:
        """Change of the target's clear-sky index from the origin to each lead."""
        o = self.origins[idx]
        return self.k[0, self.future(idx)] - self.k[0, o][:, None]

    def truth(self, idx) -> np.ndarray:
        return self.values[self.future(idx)]

    def to_irradiance(self, idx, delta_k: np.ndarray) -> np.ndarray:
        o = self.origins[idx]
        k = np.clip(self.k[0, o][:, None] + delta_k, 0.0, K_MAX)
        return np.clip(k * self.cs[self.future(idx)], 0.0, 1.0)

    def index(self, part: int) -> np.ndarray:
        return np.flatnonzero(self.split == part)

    def origin_day(self, idx) -> np.ndarray:
        return self.origins[idx] // self.steps_per_day


def split_days(D: int, fractions=SPLIT) -> np.ndarray:
    """Day index where validation and test begin."""
    a = int(round(fractions[0] * D))
    b = int(round((fractions[0] + fractions[1]) * D))
    return np.array([a, b])


def assemble_samples(dataset: Dataset, task: ForecastTask, fractions=SPLIT) -> SampleSet:
    """Sliding daytime windows with a chronological train/validation/test split by day.

    Channel 0 is the target; detectors follow ordered by distance. A sample is
    kept only when its whole input window and horizon lie inside one split and
    at least one horizon step has daylight.
    """
    for s in (task.target_id, *task.detector_ids):
        dataset.index(s)
    channels = (task.target_id,) + order_by_distance(dataset, task.target_id, task.detector_ids)
    M, D = dataset.M, dataset.D
    T = M * D
    if task.history_steps + task.horizon_steps > T:
        raise DataError(f"dataset has {T} steps; history {task.history_steps} + horizon "
                        f"{task.horizon_steps} does not fit")
    cs = np.tile(clear_sky_profile(M), D)
    vals = np.stack([dataset.series(s) for s in channels])
    k = clear_sky_index(vals, cs[None, :])
    bounds = np.concatenate([[0], split_days(D, fractions) * M, [T]])
    origins, split = [], []
    H, L = task.horizon_steps, task.history_steps
    lit = cs > 0
    for part in range(3):
        lo, hi = bounds[part], bounds[part + 1]
        o = np.arange(lo + L - 1, hi - H, task.stride)
        if o.size == 0:
            continue
        fut = o[:, None] + np.arange(1, H + 1)[None, :]
        o = o[lit[fut].any(axis=1)]
        origins.append(o)
        split.append(np.full(o.size, part))
    if not origins or sum(o.size for o in origins) == 0:
        raise DataError("no forecast windows fit the dataset")
    ss = SampleSet(task, channels, k, vals[0], cs, np.concatenate(origins), np.concatenate(split), M)
    for part in range(3):
        if ss.index(part).size == 0:
            raise DataError(f"split {('train', 'validation', 'test')[part]} has no samples; "
                            f"dataset of {D} days is too short")
    return ss


def persistence_forecast(window, horizon: int, cs_window=None, cs_future=None,
                         value_hold: bool = False) -> np.ndarray:
    """Hold the last clear-sky index (or, with ``value_hold``, the last value) over the horizon."""
    w = np.asarray(window, dtype=np.float64)
    if w.size == 0:
        raise DataError("empty window")
    if value_hold or cs_window is None or cs_future is None:
        return np.full(horizon, w[-1])
    k_last = clear_sky_index(w[-1:], np.asarray(cs_window, dtype=np.float64)[-1:])[0]
    return np.clip(k_last * np.asarray(cs_future, dtype=np.float64)[:horizon], 0.0, 1.0)


def persistence_predictions(samples: SampleSet, idx, value_hold: bool = False) -> np.ndarray:
    """Vectorized persistence for the samples ``idx`` of a set."""
    if value_hold:
        return np.repeat(samples.values[samples.origins[idx]][:, None], samples.task.horizon_steps, 1)
    return samples.to_irradiance(idx, np.zeros((len(idx), samples.task.horizon_steps)))


def evaluate(pred, truth, groups=None) -> EvalReport:
    """RMSE, bias ``mean(pred - truth)`` and per-lead RMSE of ``(n, H)`` arrays.

    ``groups`` (one label per sample) adds quartiles of the per-group RMSE.
    """
    p = np.asarray(pred, dtype=np.float64)
    t = np.asarray(truth, dtype=np.float64)
    if p.shape != t.shape:
        raise DataError(f"shape mismatch: {p.shape} vs {t.shape}")
    if p.size == 0:
        raise DataError("nothing to evaluate")
    p2 = p.reshape(p.shape[0], -1)
    e = p2 - t.reshape(p2.shape)
    quart: list[float] = []
    if groups is not None:
        g = np.asarray(groups)
        per = [float(np.sqrt(np.mean(e[g == u] ** 2))) for u in np.unique(g)]
        quart = [float(q) for q in np.percentile(per, [25, 50, 75])]
    return EvalReport(float(np.sqrt(np.mean(e * e))), float(np.mean(e)),
                      [float(v) for v in np.sqrt(np.mean(e * e, axis=0))], int(p2.shape[0]), quart)


def cloudy_days(dataset: Dataset, site_id: str, dx: float = DEFAULT_DX) -> np.ndarray:
    """(D,) days on which the site has at least one cloud event."""
    return np.any(event_values(dataset.values[dataset.index(site_id)], dx) != 0, axis=1)


def forecast_tcn_config(n_channels: int, horizon: int, seed: int = 0, n_filters: int = 64) -> tcn.TcnConfig:
    """Kernel 3, dilations (1, 3, 9), one stack, direct multi-step head."""
    return tcn.TcnConfig(kernel_size=3, dilations=(1, 3, 9), n_stacks=1, n_filters=n_filters,
                         in_channels=n_channels, out_dim=horizon, use_residual=True, use_skip=True,
                         seq2seq=False, seed=seed)


@dataclass(frozen=True)
class FitResult:
    model: tcn.TcnModel
    report: EvalReport
    cloudy_report: EvalReport | None
    persistence: EvalReport
    cloudy_persistence: EvalReport | None
    train_loss: list[float]
    val_loss: list[float]


def fit_and_evaluate(dataset: Dataset, task: ForecastTask, tcn_cfg: tcn.TcnConfig,
                     train_cfg: tcn.TrainConfig, fractions=SPLIT) -> FitResult:
    """Train on the train split (early stopping on validation) and score the test split."""
    ss = assemble_samples(dataset, task, fractions)
    if tcn_cfg.in_channels != len(ss.channels) or tcn_cfg.out_dim != task.horizon_steps:
        raise ConfigError(f"model expects {tcn_cfg.in_channels} channels / {tcn_cfg.out_dim} outputs; "
                          f"task has {len(ss.channels)} / {task.horizon_steps}")
    L = tcn.receptive_field(tcn_cfg)
    tr, va, te = ss.index(0), ss.index(1), ss.index(2)
    res = tcn.train(tcn.init_model(tcn_cfg), (ss.inputs(tr, L), ss.targets(tr)), train_cfg,
                    (ss.inputs(va, L), ss.targets(va)))
    pred = ss.to_irradiance(te, tcn.predict(res.model, ss.inputs(te, L)))
    truth = ss.truth(te)
    days = ss.origin_day(te)
    report = evaluate(pred, truth, days)
    pers_pred = persistence_predictions(ss, te)
    pers = evaluate(pers_pred, truth, days)
    cloudy = cloudy_days(dataset, task.target_id)[days]
    c_rep = evaluate(pred[cloudy], truth[cloudy]) if cloudy.any() else None
    c_pers = evaluate(pers_pred[cloudy], truth[cloudy]) if cloudy.any() else None
    return FitResult(res.model, report, c_rep, pers, c_pers, res.train_loss, res.val_loss)


@dataclass(frozen=True)
class _Job:
    dataset: Dataset
    task: ForecastTask
    tcn_cfg: tcn.TcnConfig
    train_cfg: tcn.TrainConfig


def _run_job(job: _Job) -> FitResult:
    return fit_and_evaluate(job.dataset, job.task, job.tcn_cfg, job.train_cfg)


@dataclass
class AblationResult:
    """Per-mode, per-seed test RMSE (random mode: median over draws) and reports."""

    rmse: dict[str, list[float]]
    reports: dict[str, list[EvalReport]]
    persistence: list[EvalReport]
    cloudy: dict[str, list[EvalReport | None]]
    cloudy_persistence: list[EvalReport | None]
    random_draws: list[list[tuple[str, ...]]]

    def median(self, mode: str) -> float:
        return float(np.median(self.rmse[mode]))

    def variance(self, mode: str) -> float:
        return float(np.var(self.rmse[mode]))


def _mode_detectors(dataset: Dataset, target: str, selected, mode: str, rng) -> tuple[str, ...]:
    others = [s for s in dataset.ids if s != target]
    if mode == "selected":
        return tuple(selected)
    if mode == "single":
        return ()
    if mode == "all":
        return tuple(others)
    pick = rng.choice(len(others), size=len(selected), replace=False)
    return tuple(others[i] for i in sorted(pick))


def run_ablation(dataset: Dataset, target_id: str, selected, seeds, horizon_steps: int = 12,
                 n_filters: int = 64, train_cfg: tcn.TrainConfig | None = None,
                 history_steps: int = 288, stride: int = 3, random_draws: int = RANDOM_DRAWS,
                 modes=MODES, threads: int | None = None) -> AblationResult:
    """Train the same architecture on each input-site choice for every seed.

    ``selected`` is the detector network; random mode draws that many other
    sites ``random_draws`` times per seed and keeps the median RMSE.
    """
    selected = tuple(selected)
    seeds = [int(s) for s in seeds]
    if "random" in modes and not selected:
        raise ConfigError("random mode needs a non-empty selected network")
    train_cfg = train_cfg or tcn.TrainConfig()
    jobs, keys, draws = [], [], []
    for seed in seeds:
        rng = np.random.default_rng([int(seed), 7919])
        seed_draws = []
        for mode in modes:
            n = random_draws if mode == "random" else 1
            for r in range(n):
                dets = _mode_detectors(dataset, target_id, selected, mode, rng)
                if mode == "random":
                    seed_draws.append(dets)
                task = ForecastTask(target_id, dets, history_steps, horizon_steps, mode, stride)
                cfg = forecast_tcn_config(1 + len(dets), horizon_steps, seed, n_filters)
                tc = tcn.TrainConfig(train_cfg.epochs, train_cfg.batch_size, train_cfg.learning_rate,
                                     train_cfg.gradient_clip, train_cfg.early_stop_patience, int(seed))
                jobs.append(_Job(dataset, task, cfg, tc))
                keys.append((seed, mode))
        draws.append(seed_draws)
    results = run_jobs(_run_job, jobs, threads)
    rmse = {m: [] for m in modes}
    reports = {m: [] for m in modes}
    cloudy = {m: [] for m in modes}
    pers, cpers = [], []
    for seed in seeds:
        for mode in modes:
            rs = [r for k, r in zip(keys, results) if k == (seed, mode)]
            rmse[mode].append(float(np.median([r.report.rmse for r in rs])))
            best = rs[int(np.argsort([r.report.rmse for r in rs])[len(rs) // 2])]
            reports[mode].append(best.report)
            cloudy[mode].append(best.cloudy_report)
        first = next(r for k, r in zip(keys, results) if k[0] == seed)
        pers.append(first.persistence)
        cpers.append(first.cloudy_persistence)
    return AblationResult(rmse, reports, pers, cloudy, cpers, draws)


@dataclass
class SweepResult:
    network_sizes: list[int]
    horizons: list[int]
    rmse: np.ndarray  # (seeds, sizes, horizons)

    @property
    def median(self) -> np.ndarray:
        return np.median(self.rmse, axis=0)

    def argmin_size(self) -> list[int]:
        """Network size with the lowest median RMSE for every horizon."""
        m = self.median
        return [self.network_sizes[int(np.argmin(m[:, h]))] for h in range(len(self.horizons))]


def horizon_sweep(dataset: Dataset, target_id: str, network_sizes, horizons, seeds,
                  n_filters: int = 64, train_cfg: tcn.TrainConfig | None = None,
                  history_steps: int = 288, stride: int = 3, threads: int | None = None) -> SweepResult:
    """RMSE over (network size, horizon) using the k nearest sites as detectors.

    The value reported for horizon ``h`` is the RMSE at lead ``h`` of a model
    trained for that horizon.
    """
    seeds = [int(s) for s in seeds]
    horizons = [int(h) for h in horizons]
    if horizons != sorted(horizons):
        raise ConfigError("horizons must be sorted ascending")
    sizes = [int(k) for k in network_sizes]
    others = order_by_distance(dataset, target_id, [s for s in dataset.ids if s != target_id])
    if max(sizes) > len(others) or min(sizes) < 0:
        raise ConfigError(f"network sizes must lie in [0, {len(others)}]")
    train_cfg = train_cfg or tcn.TrainConfig()
    jobs = []
    for seed in seeds:
        for k in sizes:
            for h in horizons:
                task = ForecastTask(target_id, others[:k], history_steps, h,
                                    "single" if k == 0 else "selected", stride)
                tc = tcn.TrainConfig(train_cfg.epochs, train_cfg.batch_size, train_cfg.learning_rate,
                                     train_cfg.gradient_clip, train_cfg.early_stop_patience, int(seed))
                jobs.append(_Job(dataset, task, forecast_tcn_config(1 + k, h, seed, n_filters), tc))
    results = run_jobs(_run_job, jobs, threads)
    vals = np.array([r.report.per_horizon_rmse[-1] for r in results])
    return SweepResult(sizes, horizons, vals.reshape(len(seeds), len(sizes), len(horizons)))
