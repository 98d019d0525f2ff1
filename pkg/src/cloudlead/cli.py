"""Command-line entry point: ``cloudlead <subcommand> [flags]``.

Exit codes: 0 success, 2 configuration error, 3 data error.
Every subcommand writes only into ``--out`` and leaves a ``run_manifest.json``
there describing how the outputs were produced.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import os
import sys
import tempfile
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__, blend, detector, forecast, tcn
from .cloudsim import SimConfig, clear_sky_profile, save_ground_truth, simulate
from .core import CloudleadError, ConfigError, DataError, hourly_values, load_dataset, save_dataset
from .events import DEFAULT_DX, event_values
from .parallel import resolve_threads

MANIFEST_NAME = "run_manifest.json"
CONFIG_SECTIONS = ("sim", "detector", "train", "forecast", "blend", "report")


# ---------------------------------------------------------------- outputs


def _atomic_write(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.")
    try:
        with os.fdopen(fd, "w", newline="") as f:
            f.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _json_text(obj) -> str:
    return json.dumps(obj, indent=1, sort_keys=True) + "\n"


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([repr(v) if isinstance(v, float) else v for v in r])
    return buf.getvalue()


@dataclass
class RunManifest:
    subcommand: str
    config_paths: list[str]
    seed: int | None
    tool_version: str
    output_dir: str = "."
    arguments: dict = field(default_factory=dict)
    config: dict = field(default_factory=dict)
    outputs: list[str] = field(default_factory=list)

    def to_json(self) -> dict:
        return {"subcommand": self.subcommand, "config_paths": self.config_paths, "seed": self.seed,
                "tool_version": self.tool_version, "output_dir": self.output_dir,
                "arguments": self.arguments, "config": self.config, "outputs": sorted(self.outputs)}


class _Run:
    """Collects outputs for one subcommand and writes them plus the manifest."""

    def __init__(self, args, config: dict):
        if args.out is None:
            raise ConfigError("--out is required")
        self.out = Path(args.out)
        self.manifest = RunManifest(
            args.command, [args.config] if args.config else [], getattr(args, "seed", None), __version__,
            ".", {k: v for k, v in sorted(vars(args).items()) if k not in ("func", "command", "out", "threads")},
            config)

    def write(self, name: str, text: str) -> None:
        _atomic_write(self.out / name, text)
        self.manifest.outputs.append(name)

    def finish(self) -> int:
        _atomic_write(self.out / MANIFEST_NAME, _json_text(self.manifest.to_json()))
        return 0


# ---------------------------------------------------------------- config


def load_config(path) -> dict:
    if path is None:
        return {}
    p = Path(path)
    try:
        obj = json.loads(p.read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file {p} not found") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{p}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise ConfigError(f"{p}: top level must be an object")
    unknown = set(obj) - set(CONFIG_SECTIONS)
    if unknown:
        raise ConfigError(f"{p}: unknown config sections {sorted(unknown)}; expected {list(CONFIG_SECTIONS)}")
    return obj


def _section(cfg: dict, name: str, allowed) -> dict:
    sec = dict(cfg.get(name, {}))
    bad = set(sec) - set(allowed)
    if bad:
        raise ConfigError(f"unknown keys in config section {name!r}: {sorted(bad)}")
    return sec


def _pick(flag, sec: dict, key: str, default):
    """Flags win over config values, which win over defaults."""
    if flag is not None:
        return flag
    return sec.get(key, default)


DETECTOR_KEYS = ("target", "dx", "t_shift", "t_thre", "rule")
FORECAST_KEYS = ("history_steps", "horizon_steps", "stride", "mode", "n_filters", "detectors")
BLEND_KEYS = ("target", "sources", "train_range", "test_range", "n_filters", "stride", "val_days")
REPORT_KEYS = ("seeds", "network_sizes", "horizons", "random_draws", "n_filters", "horizon_steps",
               "stride", "history_steps")


def _detector_params(args, cfg):
    sec = _section(cfg, "detector", DETECTOR_KEYS)
    t_thre = int(_pick(args.tthre, sec, "t_thre", detector.DEFAULT_T_THRE))
    t_shift = int(_pick(args.tshift, sec, "t_shift", detector.default_t_shift(t_thre)))
    dx = float(_pick(args.dx, sec, "dx", DEFAULT_DX))
    target = _pick(args.target, sec, "target", None)
    return target, dx, t_shift, t_thre, sec.get("rule", "max_lag")


def _train_config(args, cfg, seed_default: int = 0) -> tcn.TrainConfig:
    sec = _section(cfg, "train", tcn.TrainConfig.__dataclass_fields__)
    sec["seed"] = int(_pick(args.seed, sec, "seed", seed_default))
    return tcn.TrainConfig(**sec)


def _data(args):
    if args.data is None:
        raise ConfigError("--data is required")
    return load_dataset(args.data)


def _need_target(target, ds):
    if target is None:
        raise ConfigError("--target is required")
    ds.index(target)
    return target


# ---------------------------------------------------------------- subcommands


def cmd_simulate(args, cfg) -> int:
    sim = dict(cfg.get("sim", {}))
    if args.seed is not None:
        sim["seed"] = args.seed
    sc = SimConfig.from_json(sim)
    run = _Run(args, {"sim": sc.to_json()})
    ds, truth = simulate(sc)
    save_dataset(ds, run.out)
    run.manifest.outputs += ["sites.json", "irradiance.csv", "manifest.json"]
    save_ground_truth(truth, run.out / "ground_truth.json")
    run.manifest.outputs.append("ground_truth.json")
    return run.finish()


def cmd_events(args, cfg) -> int:
    ds = _data(args)
    _, dx, _, _, _ = _detector_params(args, cfg)
    run = _Run(args, {"dx": dx})
    summary, series = [], []
    for i, sid in enumerate(ds.ids):
        ev = event_values(ds.values[i], dx)
        for d, date in enumerate(ds.days):
            nz = np.flatnonzero(ev[d])
            summary.append([sid, date.isoformat(), int(nz.size), int(nz.size > 0)])
            series += [[sid, date.isoformat(), int(t), float(ev[d, t])] for t in nz]
    # sparse event series: only the nonzero entries (step i is the drop from x[i] to x[i+1])
    run.write("events.csv", _csv_text(["site", "day", "step", "drop"], series))
    run.write("cloudy_days.csv", _csv_text(["site", "day", "n_events", "cloudy"], summary))
    return run.finish()


def _tables(args, cfg):
    ds = _data(args)
    target, dx, t_shift, t_thre, rule = _detector_params(args, cfg)
    target = _need_target(target, ds)
    return ds, detector.build_tables(ds, target, dx, t_shift, t_thre), (target, dx, t_shift, t_thre, rule)


def cmd_correlate(args, cfg) -> int:
    ds, tb, (target, dx, t_shift, t_thre, rule) = _tables(args, cfg)
    run = _Run(args, {"target": target, "dx": dx, "t_shift": t_shift, "t_thre": t_thre})
    sc = tb.scenarios(t_thre)
    rows = []
    for d, date in enumerate(ds.days):
        for j, c in enumerate(tb.candidate_ids):
            rows.append([date.isoformat(), c, int(tb.lags[d, j]), float(tb.pccs[d, j]),
                         int(tb.defined[d, j]), int(sc[d, j])])
    run.write("correlations.csv",
              _csv_text(["day", "detector_id", "delta_t_max", "pcc_max", "defined", "scenario"], rows))
    return run.finish()


def cmd_select(args, cfg) -> int:
    ds, tb, (target, dx, t_shift, t_thre, rule) = _tables(args, cfg)
    run = _Run(args, {"target": target, "dx": dx, "t_shift": t_shift, "t_thre": t_thre, "rule": rule})
    net = detector.select_detectors(tb, t_thre, rule=rule)
    run.write("detector_network.json", _json_text(net.to_json()))
    run.write("phi_curve.csv", _csv_text(["k", "added", "phi"],
                                         [[k + 1, net.curve_ids[k], float(p)] for k, p in enumerate(net.phi_curve)]))
    return run.finish()


def _parse_range(text, name: str, D: int) -> tuple[int, int]:
    if isinstance(text, (list, tuple)):
        a, b = text
    else:
        try:
            a, b = (int(v) for v in str(text).split(":"))
        except ValueError:
            raise ConfigError(f"{name} must look like START:STOP (day indices), got {text!r}") from None
    a, b = int(a), int(b)
    if not 0 <= a < b <= D:
        raise ConfigError(f"{name} {a}:{b} must satisfy 0 <= start < stop <= {D}")
    return a, b


def cmd_blend(args, cfg) -> int:
    ds = _data(args)
    sec = _section(cfg, "blend", BLEND_KEYS)
    target = _need_target(_pick(args.target, sec, "target", None), ds)
    seed = int(_pick(args.seed, {}, "seed", 0))
    if args.sources:
        try:
            src_json = json.loads(Path(args.sources).read_text())
        except FileNotFoundError:
            raise ConfigError(f"sources file {args.sources} not found") from None
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{args.sources}:{exc.lineno}: invalid JSON ({exc.msg})") from exc
        suite = [blend.NwpSourceConfig.from_json(o) for o in src_json]
    elif "sources" in sec:
        suite = [blend.NwpSourceConfig.from_json(o) for o in sec["sources"]]
    else:
        suite = blend.default_suite(seed)
    D = ds.D
    tr = _parse_range(_pick(args.train_range, sec, "train_range", [0, int(round(0.8 * D))]), "train range", D)
    te = _parse_range(_pick(args.test_range, sec, "test_range", [int(round(0.8 * D)), D]), "test range", D)
    if te[0] < tr[1]:
        raise ConfigError("test range must start after the training range ends")
    train_cfg = _train_config(args, cfg, seed)
    report = run_blend(ds, target, suite, tr, te, train_cfg, int(sec.get("n_filters", 32)),
                       int(sec.get("stride", 1)), int(sec.get("val_days", 0)), seed)
    run = _Run(args, {"target": target, "sources": [s.to_json() for s in suite], "train_range": list(tr),
                      "test_range": list(te), "train": vars(train_cfg)})
    preds = report.pop("_predictions")
    run.write("blend_report.json", _json_text(report))
    names = [s.name for s in suite]
    run.write("predictions.csv", _csv_text(["hour", "truth", "tcn", "linear", *names], preds))
    return run.finish()


def run_blend(ds, target, suite, train_days, test_days, train_cfg, n_filters=32, stride=1,
              val_days=0, seed=0) -> dict:
    """Blend experiment on one site; metrics over daylight hours of the test days."""
    h = hourly_values(ds)[ds.index(target)].reshape(-1)
    cs = clear_sky_profile(ds.M).reshape(24, -1).mean(axis=1)
    day = np.tile(cs > 0, ds.D)
    S = np.stack([blend.synth_nwp(h, c) for c in suite])
    a, b = train_days[0] * 24, train_days[1] * 24
    v = b - val_days * 24
    if v - a < blend.WINDOW_H:
        raise DataError("training range is shorter than one 48 h window")
    val = (S[:, v:b], h[v:b]) if val_days else None
    res = blend.blend_train(S[:, a:v], h[a:v], blend.blend_tcn_config(len(suite), seed, n_filters),
                            train_cfg, val, stride)
    lo, hi = test_days[0] * 24, test_days[1] * 24
    pred = blend.blend_predict(res.model, S[:, lo:hi])
    lin = blend.linear_blend_baseline(S[:, a:b], h[a:b], day[a:b])
    lin_pred = np.clip(lin.predict(S[:, lo:hi]), 0.0, 1.0)
    mask = day[lo:hi]
    truth = h[lo:hi]
    out = {"sources": {s.name: blend.blend_evaluate(S[i, lo:hi], truth, mask) for i, s in enumerate(suite)},
           "linear": dict(blend.blend_evaluate(lin_pred, truth, mask),
                          weights=[float(w) for w in lin.weights], intercept=lin.intercept),
           "tcn": blend.blend_evaluate(pred, truth, mask),
           "train_loss": res.train_loss, "val_loss": res.val_loss}
    out["_predictions"] = [[lo + t, float(truth[t]), float(pred[t]), float(lin_pred[t]),
                            *(float(S[i, lo + t]) for i in range(len(suite)))] for t in range(hi - lo)]
    return out


def _forecast_task(args, cfg, ds, target) -> tuple[forecast.ForecastTask, int]:
    sec = _section(cfg, "forecast", FORECAST_KEYS)
    mode = _pick(args.mode, sec, "mode", "selected")
    horizon = int(_pick(args.horizon, sec, "horizon_steps", 12))
    if mode == "selected":
        if args.network:
            try:
                net = detector.DetectorNetwork.from_json(json.loads(Path(args.network).read_text()))
            except FileNotFoundError:
                raise ConfigError(f"network file {args.network} not found") from None
            if net.target_id != target:
                raise ConfigError(f"network {args.network} is for {net.target_id}, not {target}")
            dets = tuple(net.member_ids)
        elif "detectors" in sec:
            dets = tuple(sec["detectors"])
        else:
            raise ConfigError("selected mode needs --network or forecast.detectors")
    elif mode == "single":
        dets = ()
    elif mode == "all":
        dets = tuple(s for s in ds.ids if s != target)
    else:
        raise ConfigError(f"mode {mode!r} is not trainable on its own; use selected, single or all")
    task = forecast.ForecastTask(target, dets, int(sec.get("history_steps", 288)), horizon, mode,
                                 int(sec.get("stride", 3)))
    return task, int(sec.get("n_filters", 64))


def cmd_train(args, cfg) -> int:
    ds = _data(args)
    target = _need_target(_pick(args.target, _section(cfg, "detector", DETECTOR_KEYS), "target", None), ds)
    task, n_filters = _forecast_task(args, cfg, ds, target)
    train_cfg = _train_config(args, cfg)
    tcfg = forecast.forecast_tcn_config(1 + len(task.detector_ids), task.horizon_steps, train_cfg.seed, n_filters)
    ss = forecast.assemble_samples(ds, task)
    L = tcn.receptive_field(tcfg)
    tr, va = ss.index(0), ss.index(1)
    res = tcn.train(tcn.init_model(tcfg), (ss.inputs(tr, L), ss.targets(tr)), train_cfg,
                    (ss.inputs(va, L), ss.targets(va)))
    run = _Run(args, {"task": _task_json(task), "tcn": tcfg.to_json(), "train": vars(train_cfg)})
    buf = io.StringIO()
    json.dump({"format_version": tcn.CHECKPOINT_VERSION, "config": tcfg.to_json(),
               "parameters": {k: v.tolist() for k, v in res.model.params.items()}}, buf, indent=1)
    run.write("checkpoint.json", buf.getvalue())
    run.write("task.json", _json_text(_task_json(task)))
    rows = [[e, float(t), float(res.val_loss[e]) if e < len(res.val_loss) else "", ""]
            for e, t in enumerate(res.train_loss)]
    run.write("training_log.csv", _csv_text(["epoch", "train_loss", "val_loss", "wall_seconds"], rows))
    return run.finish()


def _task_json(task: forecast.ForecastTask) -> dict:
    return {"target_id": task.target_id, "detector_ids": list(task.detector_ids),
            "history_steps": task.history_steps, "horizon_steps": task.horizon_steps,
            "ablation_mode": task.ablation_mode, "stride": task.stride}


def cmd_forecast(args, cfg) -> int:
    ds = _data(args)
    if args.checkpoint is None:
        raise ConfigError("--checkpoint (a directory written by `train`) is required")
    ck = Path(args.checkpoint)
    model = tcn.load_checkpoint(ck / "checkpoint.json")
    try:
        task = forecast.ForecastTask(**json.loads((ck / "task.json").read_text()))
    except FileNotFoundError:
        raise DataError(f"missing file {ck / 'task.json'}") from None
    ss = forecast.assemble_samples(ds, task)
    te = ss.index(2)
    L = tcn.receptive_field(model.config)
    pred = ss.to_irradiance(te, tcn.predict(model, ss.inputs(te, L)))
    pers = forecast.persistence_predictions(ss, te)
    truth = ss.truth(te)
    cloudy = forecast.cloudy_days(ds, task.target_id)
    rows = []
    for n, o in enumerate(ss.origins[te]):
        day = int(o // ds.M)
        for h in range(task.horizon_steps):
            rows.append([int(o), day, int(cloudy[day]), h + 1, float(truth[n, h]), float(pred[n, h]),
                         float(pers[n, h])])
    run = _Run(args, {"task": _task_json(task)})
    run.write("predictions.csv", _csv_text(["origin", "day", "cloudy", "lead", "truth", "tcn", "persistence"], rows))
    return run.finish()


def _read_predictions(path: Path):
    try:
        fh = open(path, newline="")
    except FileNotFoundError:
        raise DataError(f"missing file {path}") from None
    with fh:
        r = csv.reader(fh)
        header = next(r, None)
        need = ["origin", "day", "cloudy", "lead", "truth", "tcn", "persistence"]
        if header != need:
            raise DataError(f"{path}:1: expected header {need}")
        rows = []
        for lineno, row in enumerate(r, start=2):
            try:
                rows.append([float(v) for v in row])
            except ValueError:
                raise DataError(f"{path}:{lineno}: non-numeric field") from None
    if not rows:
        raise DataError(f"{path}: no predictions")
    return np.array(rows)


def cmd_evaluate(args, cfg) -> int:
    if args.predictions is None:
        raise ConfigError("--predictions is required")
    a = _read_predictions(Path(args.predictions))
    H = int(a[:, 3].max())
    if a.shape[0] % H:
        raise DataError(f"{args.predictions}: rows do not form complete horizons")
    a = a.reshape(-1, H, a.shape[1])
    truth, pred, pers = a[:, :, 4], a[:, :, 5], a[:, :, 6]
    days, cloudy = a[:, 0, 1], a[:, 0, 2] > 0
    out = {"tcn": forecast.evaluate(pred, truth, days).to_json(),
           "persistence": forecast.evaluate(pers, truth, days).to_json()}
    if cloudy.any():
        out["tcn_cloudy"] = forecast.evaluate(pred[cloudy], truth[cloudy]).to_json()
        out["persistence_cloudy"] = forecast.evaluate(pers[cloudy], truth[cloudy]).to_json()
    run = _Run(args, {})
    run.write("evaluation.json", _json_text(out))
    return run.finish()


def cmd_report(args, cfg) -> int:
    """Data behind the selection curve, the input-site ablation and the horizon/size sweep."""
    ds = _data(args)
    target, dx, t_shift, t_thre, rule = _detector_params(args, cfg)
    target = _need_target(target, ds)
    sec = _section(cfg, "report", REPORT_KEYS)
    seeds = [int(s) for s in sec.get("seeds", [0, 1, 2, 3, 4])]
    n_filters = int(sec.get("n_filters", 64))
    horizon = int(_pick(args.horizon, sec, "horizon_steps", 12))
    stride = int(sec.get("stride", 3))
    history = int(sec.get("history_steps", 288))
    train_cfg = _train_config(args, cfg)
    threads = resolve_threads(args.threads)
    # select on the days before the test split so test days stay unseen
    n_seen = int(forecast.split_days(ds.D)[1])
    tb = detector.build_tables(ds.subset_days(0, n_seen), target, dx, t_shift, t_thre)
    net = detector.select_detectors(tb, t_thre, rule=rule)
    abl = forecast.run_ablation(ds, target, net.member_ids, seeds, horizon, n_filters, train_cfg, history,
                                stride, int(sec.get("random_draws", forecast.RANDOM_DRAWS)), threads=threads)
    sweep = forecast.horizon_sweep(ds, target, sec.get("network_sizes", [0, 2, 4, 8]),
                                   sec.get("horizons", [1, 36, 72]), seeds, n_filters, train_cfg, history,
                                   stride, threads)
    run = _Run(args, {"target": target, "dx": dx, "t_shift": t_shift, "t_thre": t_thre, "rule": rule,
                      "report": dict(sec, seeds=seeds), "train": vars(train_cfg)})
    run.write("detector_network.json", _json_text(net.to_json()))
    run.write("phi_curve.csv", _csv_text(["k", "added", "phi"],
                                         [[k + 1, net.curve_ids[k], float(p)] for k, p in enumerate(net.phi_curve)]))
    rows = []
    for mode in abl.reports:
        for s, rep in zip(seeds, abl.reports[mode]):
            rows.append([mode, s, horizon, float(abl.rmse[mode][seeds.index(s)]), float(rep.bias)])
    for s, rep in zip(seeds, abl.persistence):
        rows.append(["persistence", s, horizon, float(rep.rmse), float(rep.bias)])
    run.write("ablation.csv", _csv_text(["mode", "seed", "horizon", "rmse", "bias"], rows))
    rows = []
    for si, s in enumerate(seeds):
        for ki, k in enumerate(sweep.network_sizes):
            for hi, h in enumerate(sweep.horizons):
                rows.append([s, k, h, float(sweep.rmse[si, ki, hi])])
    run.write("horizon_matrix.csv", _csv_text(["seed", "network_size", "horizon", "rmse"], rows))
    run.write("horizon_argmin.csv", _csv_text(["horizon", "best_network_size"],
                                              list(zip(sweep.horizons, sweep.argmin_size()))))
    return run.finish()


# ---------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="cloudlead", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"cloudlead {__version__}")
    sub = p.add_subparsers(dest="command", required=True)

    def add(name, func, help_text, data=True):
        sp = sub.add_parser(name, help=help_text)
        sp.set_defaults(func=func)
        sp.add_argument("--config", help="JSON config file (flags override it)")
        sp.add_argument("--out", required=True, help="output directory")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--threads", type=int, help="worker processes (default $CLOUDLEAD_THREADS or 1)")
        if data:
            sp.add_argument("--data", help="dataset directory written by `simulate`")
        return sp

    add("simulate", cmd_simulate, "generate a synthetic multi-site dataset", data=False)
    sp = add("events", cmd_events, "per-site, per-day cloud event summary")
    sp.add_argument("--dx", type=float)
    for name, func, text in (("correlate", cmd_correlate, "daily lagged correlations against a target"),
                             ("select", cmd_select, "select a detector network for a target")):
        sp = add(name, func, text)
        sp.add_argument("--target")
        sp.add_argument("--dx", type=float)
        sp.add_argument("--tshift", type=int)
        sp.add_argument("--tthre", type=int)
    sp = add("blend", cmd_blend, "blend synthetic forecast sources for a target")
    sp.add_argument("--target")
    sp.add_argument("--sources", help="JSON list of source configs")
    sp.add_argument("--train-range", dest="train_range", help="day indices START:STOP")
    sp.add_argument("--test-range", dest="test_range", help="day indices START:STOP")
    sp = add("train", cmd_train, "train a forecaster for a target")
    sp.add_argument("--target")
    sp.add_argument("--network", help="detector_network.json from `select`")
    sp.add_argument("--horizon", type=int, help="forecast horizon in steps")
    sp.add_argument("--mode", choices=("selected", "single", "all"))
    sp = add("forecast", cmd_forecast, "forecast the test split with a trained checkpoint")
    sp.add_argument("--checkpoint", help="directory written by `train`")
    sp = add("evaluate", cmd_evaluate, "score a predictions.csv written by `forecast`", data=False)
    sp.add_argument("--predictions")
    sp = add("report", cmd_report, "data files for the selection curve, ablation and horizon sweep")
    sp.add_argument("--target")
    sp.add_argument("--dx", type=float)
    sp.add_argument("--tshift", type=int)
    sp.add_argument("--tthre", type=int)
    sp.add_argument("--horizon", type=int)
    for sp in sub.choices.values():
        for name in ("target", "dx", "tshift", "tthre", "horizon", "mode", "network", "checkpoint",
                     "predictions", "sources", "train_range", "test_range", "data"):
            sp.set_defaults(**{name: sp.get_default(name)})
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        resolve_threads(args.threads)
        cfg = load_config(args.config)
        return args.func(args, cfg)
    except ConfigError as exc:
        print(f"cloudlead {args.command}: config error: {exc}", file=sys.stderr)
        return 2
    except CloudleadError as exc:
        print(f"cloudlead {args.command}: data error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
