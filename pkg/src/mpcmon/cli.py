"""Command-line entry point: configuration, baseline generation, scenario runs, reports.

Configuration is a TOML file with one table per module::

    [plant] [disturbance] [scenarios] [mpc] [monitor] [adaptor] [orchestrator] [run]

Keys not set in the file take the values of the selected profile (``full``
or ``ci``). Log verbosity follows the ``MPCMON_LOG`` environment variable.
"""

from __future__ import annotations

import argparse
import dataclasses
import difflib
import json
import logging
import os
import re
import sys
import time
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path
from typing import Optional

import numpy as np
import tomli
import tomli_w

from .adaptor import TdUpdateConfig
from .errors import ConfigurationError
from .monitor import REG_SCALE, BaselineDataset, build_baseline, t2_score, window_features
from .mpc import MpcConfig, ThetaParams, TuningParams
from .orchestrator import (LoopConfig, RunSettings, check_acceptance, emit_report, find_runs,
                           identify_initial_model, load_run, run_closed_loop, write_run)
from .plant import DisturbanceConfig, PlantParams, Scenario, ScenarioShifts
from .predictor import PredictionModel

log = logging.getLogger("mpcmon")

LOG_ENV = "MPCMON_LOG"
SIGNAL_COLUMNS = ("eff", "econ", "zeta", "load")

MONITOR_LOOP_KEYS = ("window", "stride", "persistence", "recovery_windows", "alpha", "confidence")


@dataclasses.dataclass(frozen=True)
class MonitorOptions:
    """Baseline generation settings (window and threshold live in the loop config)."""

    baseline_days: float = 35.0
    num_samples: int = 500
    sample_seed: int = 0
    reg_scale: float = REG_SCALE

    def __post_init__(self):
        if self.baseline_days <= 0:
            raise ConfigurationError("baseline_days must be > 0")
        if self.num_samples < 80:
            raise ConfigurationError("num_samples must be >= 80")
        if self.reg_scale < 0:
            raise ConfigurationError("reg_scale must be >= 0")


@dataclasses.dataclass(frozen=True)
class RunOptions:
    scenario: str = "all"
    days: float = 20.0
    seed: int = 0
    baseline_seed_offset: int = 1000
    out_dir: str = "runs"
    baseline_dir: str = ""
    workers: int = 4

    def __post_init__(self):
        if self.scenario != "all":
            Scenario.parse(self.scenario)
        if self.days < 1:
            raise ConfigurationError("days must be >= 1")
        if self.workers < 1:
            raise ConfigurationError("workers must be >= 1")


@dataclasses.dataclass(frozen=True)
class RunConfig:
    settings: RunSettings = RunSettings()
    monitor: MonitorOptions = MonitorOptions()
    run: RunOptions = RunOptions()
    profile: str = "full"

    @property
    def alpha(self) -> float:
        return self.settings.loop.threshold()

    def baseline_path(self, out: Optional[str] = None) -> Path:
        if self.run.baseline_dir:
            return Path(self.run.baseline_dir)
        return Path(out or self.run.out_dir) / "baseline"


# ---------------------------------------------------------------------------
# Sections
# ---------------------------------------------------------------------------

# section -> (target, dataclass, keys or None for all fields)
_LOOP_ONLY = tuple(f.name for f in dataclasses.fields(LoopConfig) if f.name not in MONITOR_LOOP_KEYS)
SECTIONS = {
    "plant": ("plant", PlantParams, None),
    "disturbance": ("disturbance", DisturbanceConfig,
                    tuple(f.name for f in dataclasses.fields(DisturbanceConfig) if f.name != "steps_per_day")),
    "scenarios": ("shifts", ScenarioShifts, None),
    "mpc": ("mpc", MpcConfig, None),
    "monitor": ("loop", LoopConfig, MONITOR_LOOP_KEYS),
    "adaptor": ("td", TdUpdateConfig, None),
    "orchestrator": ("loop", LoopConfig, _LOOP_ONLY),
    "run": ("run", RunOptions, None),
}
MONITOR_EXTRA = tuple(f.name for f in dataclasses.fields(MonitorOptions))

PROFILES = {
    "full": {},
    "ci": {
        "orchestrator": {"steps_per_day": 48},
        "mpc": {"horizon": 12},
        "monitor": {"window": 24, "persistence": 3},
    },
}


def section_keys(name: str) -> tuple:
    _, cls, keys = SECTIONS[name]
    keys = tuple(f.name for f in dataclasses.fields(cls)) if keys is None else keys
    return keys + MONITOR_EXTRA if name == "monitor" else keys


def _defaults(cls) -> dict:
    return {f.name: f.default for f in dataclasses.fields(cls)}


def _coerce(value, default, where: str):
    """Convert a TOML value to the type implied by the field default."""
    if isinstance(default, bool):
        if not isinstance(value, bool):
            raise ConfigurationError(f"{where}: expected true/false")
        return value
    if isinstance(default, (int, float)) and not isinstance(default, bool):
        if isinstance(value, list):
            return np.asarray(_nums(value, where), dtype=float)
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigurationError(f"{where}: expected a number")
        if isinstance(default, int) and not isinstance(default, bool):
            if isinstance(value, float) and not value.is_integer():
                raise ConfigurationError(f"{where}: expected an integer")
            return int(value)
        return float(value)
    if isinstance(default, tuple):
        if not isinstance(value, list):
            raise ConfigurationError(f"{where}: expected an array")
        return _tuples(value)
    if isinstance(default, str):
        if isinstance(value, list) and value and all(isinstance(v, bool) for v in value):
            return np.asarray(value, dtype=bool)
        if not isinstance(value, str):
            raise ConfigurationError(f"{where}: expected a string")
        return value
    # optional fields default to None
    if isinstance(value, list):
        flat = _tuples(value)
        if all(isinstance(v, bool) for v in flat):
            return np.asarray(flat, dtype=bool)
        return np.asarray(flat, dtype=float)
    return value


def _nums(value, where):
    if not all(isinstance(v, (int, float)) and not isinstance(v, bool) for v in value):
        raise ConfigurationError(f"{where}: expected an array of numbers")
    return value


def _tuples(value):
    return tuple(_tuples(v) if isinstance(v, list) else v for v in value)


def _key_line(text: str, section: str, key: Optional[str]) -> Optional[int]:
    current = None
    for n, line in enumerate(text.splitlines(), 1):
        head = re.match(r"\s*\[\s*([A-Za-z0-9_]+)\s*\]", line)
        if head:
            current = head.group(1)
            if key is None and current == section:
                return n
            continue
        if current == section and key is not None and re.match(rf"\s*{re.escape(key)}\s*=", line):
            return n
    return None


def _fail(source: str, text: str, section: str, key: Optional[str], msg: str):
    line = _key_line(text, section, key)
    where = f"{source}:{line}" if line else source
    name = f"{section}.{key}" if key else section
    raise ConfigurationError(f"{where}: {name}: {msg}")


def _suggest(word: str, options) -> str:
    close = difflib.get_close_matches(word, list(options), n=1)
    return f" (did you mean '{close[0]}'?)" if close else ""


def _merge(dst: dict, src: dict):
    for sec, vals in src.items():
        dst.setdefault(sec, {}).update(vals)


def build_config(data: dict, profile: str = "full", source: str = "<config>", text: str = "") -> RunConfig:
    """Validate a nested section dict on top of a profile and build the RunConfig."""
    if profile not in PROFILES:
        raise ConfigurationError(f"unknown profile '{profile}'{_suggest(profile, PROFILES)}")
    raw: dict = {}
    _merge(raw, PROFILES[profile])
    for sec, vals in data.items():
        if sec not in SECTIONS:
            _fail(source, text, sec, None, f"unknown section{_suggest(sec, SECTIONS)}")
        if not isinstance(vals, dict):
            _fail(source, text, sec, None, "expected a table")
        allowed = section_keys(sec)
        for key in vals:
            if key not in allowed:
                _fail(source, text, sec, key, f"unknown key{_suggest(key, allowed)}")
    _merge(raw, data)

    groups: dict = {}
    extra_monitor: dict = {}
    for sec, vals in raw.items():
        target, cls, _ = SECTIONS[sec]
        defaults = _defaults(cls)
        for key, value in vals.items():
            if sec == "monitor" and key in MONITOR_EXTRA:
                conv = _coerce(value, _defaults(MonitorOptions)[key], f"{sec}.{key}")
                _check_single(MonitorOptions, key, conv, source, text, sec)
                extra_monitor[key] = conv
                continue
            try:
                conv = _coerce(value, defaults[key], f"{sec}.{key}")
            except ConfigurationError as err:
                _fail(source, text, sec, key, str(err).split(": ", 1)[-1])
            _check_single(cls, key, conv, source, text, sec)
            groups.setdefault(target, {})[key] = conv

    loop_kw = groups.get("loop", {})
    spd = loop_kw.get("steps_per_day", LoopConfig.steps_per_day)
    try:
        plant = PlantParams(**groups.get("plant", {}))
        dist = DisturbanceConfig(steps_per_day=spd, **groups.get("disturbance", {}))
        if len(dist.nominal_loads) != plant.n_loads:
            raise ConfigurationError("disturbance.nominal_loads needs one entry per load")
        settings = RunSettings(plant=plant, disturbance=dist, shifts=ScenarioShifts(**groups.get("shifts", {})),
                               mpc=MpcConfig(**groups.get("mpc", {})), td=TdUpdateConfig(**groups.get("td", {})),
                               loop=LoopConfig(**loop_kw))
        return RunConfig(settings, MonitorOptions(**extra_monitor), RunOptions(**groups.get("run", {})), profile)
    except (ConfigurationError, TypeError, ValueError) as err:
        raise ConfigurationError(f"{source}: {err}") from None


def _check_single(cls, key, value, source, text, sec):
    try:
        cls(**{key: value})
    except ConfigurationError as err:
        _fail(source, text, sec, key, str(err))
    except (TypeError, ValueError) as err:
        _fail(source, text, sec, key, f"invalid value ({err})")


def parse_config(path=None, profile: str = "full") -> RunConfig:
    """Strict parse of a TOML configuration file; ``None`` gives the profile defaults."""
    if path is None:
        return build_config({}, profile)
    p = Path(path)
    if not p.is_file():
        raise ConfigurationError(f"config file not found: {p}")
    text = p.read_text()
    try:
        data = tomli.loads(text)
    except tomli.TOMLDecodeError as err:
        raise ConfigurationError(f"{p}: syntax error: {err}") from None
    return build_config(data, profile, str(p), text)


def _plain(v):
    if isinstance(v, np.ndarray):
        return _plain(v.tolist())
    if isinstance(v, (list, tuple)):
        return [_plain(x) for x in v]
    if isinstance(v, np.generic):
        return v.item()
    return v


def config_to_dict(cfg: RunConfig) -> dict:
    """Nested section dict of every set (non-None) value."""
    s = cfg.settings
    objs = {"plant": s.plant, "disturbance": s.disturbance, "scenarios": s.shifts, "mpc": s.mpc,
            "monitor": s.loop, "adaptor": s.td, "orchestrator": s.loop, "run": cfg.run}
    out = {}
    for sec, obj in objs.items():
        keys = section_keys(sec)
        vals = {}
        for k in keys:
            v = getattr(cfg.monitor if k in MONITOR_EXTRA and sec == "monitor" else obj, k)
            if v is not None:
                vals[k] = _plain(v)
        out[sec] = vals
    return out


def emit_config(cfg: RunConfig) -> str:
    return tomli_w.dumps(config_to_dict(cfg))


# ---------------------------------------------------------------------------
# Commands
# ---------------------------------------------------------------------------


def _signals(runlog) -> np.ndarray:
    return np.array([[r[c] for c in SIGNAL_COLUMNS] for r in runlog.steps])


def cmd_baseline(cfg: RunConfig, out: Optional[str] = None) -> dict:
    """Initial model, baseline closed-loop run and the persisted baseline dataset."""
    st, mo = cfg.settings, cfg.monitor
    bdir = cfg.baseline_path(out)
    bdir.mkdir(parents=True, exist_ok=True)
    seed = cfg.run.seed + cfg.run.baseline_seed_offset
    t0 = time.perf_counter()
    model, fit = identify_initial_model(st, seed)
    theta0 = ThetaParams(model, TuningParams.zeros(st.plant.n_loads))
    runlog = run_closed_loop(Scenario.BASELINE, mo.baseline_days, theta0, None, st, seed=seed, adapt=False)
    sig = _signals(runlog)
    deg = runlog.column("degenerate_load")
    W = st.loop.window
    baseline = build_baseline(sig, W, mo.num_samples, mo.sample_seed, deg, mo.reg_scale,
                              meta={"run_seed": seed, "days": mo.baseline_days, "profile": cfg.profile})
    baseline.save(bdir / "baseline.csv")
    model.save(bdir / "model.json")
    (bdir / "config.toml").write_text(emit_config(cfg))
    Z, flags = window_features(sig, W, range(0, len(sig) - W + 1, st.loop.window_stride), deg)
    alpha = cfg.alpha
    t2 = np.array([t2_score(z, baseline) for z in Z[~flags]])
    summary = {"baseline": str(bdir / "baseline.csv"), "samples": baseline.n_samples, "alpha": alpha,
               "self_windows": int(t2.size), "self_acceptable_fraction": float(np.mean(t2 <= alpha)),
               "initial_model_rmse": [float(v) for v in fit.rmse], "conservation": runlog.conservation,
               "seconds": round(time.perf_counter() - t0, 2)}
    (bdir / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
    return summary


def load_baseline(cfg: RunConfig, out: Optional[str] = None):
    bdir = cfg.baseline_path(out)
    files = bdir / "baseline.csv", bdir / "model.json"
    missing = [str(f) for f in files if not f.is_file()]
    if missing:
        raise ConfigurationError(f"baseline files missing ({', '.join(missing)}); run the 'baseline' command "
                                 f"with the same --out/--config first")
    return BaselineDataset.load(files[0], cfg.monitor.reg_scale), PredictionModel.load(files[1])


def run_scenario(cfg: RunConfig, scenario: str, out: Optional[str] = None) -> dict:
    """One closed-loop scenario run; writes the run files and returns its summary."""
    baseline, model = load_baseline(cfg, out)
    st = cfg.settings
    theta0 = ThetaParams(model, TuningParams.zeros(st.plant.n_loads))
    t0 = time.perf_counter()
    runlog = run_closed_loop(scenario, cfg.run.days, theta0, baseline, st, seed=cfg.run.seed, adapt=True)
    summary = emit_report(runlog)
    ok, reasons = check_acceptance(summary)
    summary.update(accepted=ok, acceptance_failures=reasons, seconds=round(time.perf_counter() - t0, 2))
    write_run(runlog, Path(out or cfg.run.out_dir), summary)
    return summary


def _run_job(args):
    cfg, scenario, out = args
    _setup_logging()
    return run_scenario(cfg, scenario, out)


def cmd_run(cfg: RunConfig, scenario: Optional[str] = None, out: Optional[str] = None) -> list:
    scenario = scenario or cfg.run.scenario
    names = [s.value for s in Scenario] if scenario == "all" else [Scenario.parse(scenario).value]
    load_baseline(cfg, out)  # fail early with the instructive message
    if len(names) == 1 or cfg.run.workers == 1:
        return [run_scenario(cfg, n, out) for n in names]
    with ProcessPoolExecutor(max_workers=min(cfg.run.workers, len(names))) as pool:
        return list(pool.map(_run_job, [(cfg, n, out) for n in names]))


def cmd_report(run_dir) -> list:
    runs = find_runs(run_dir)
    if not runs:
        raise ConfigurationError(f"no run summaries in {run_dir}")
    out = []
    for scen, seed in runs:
        summary = emit_report(load_run(run_dir, scen, seed))
        ok, reasons = check_acceptance(summary)
        summary.update(accepted=ok, acceptance_failures=reasons)
        out.append(summary)
    Path(run_dir, "report.json").write_text(json.dumps(out, indent=2) + "\n")
    return out


def _line(summary: dict) -> str:
    lat = summary["detection_latency_days"]
    post = summary["post_recovery_acceptable_fraction"]
    return (f"{summary['scenario']:<9} {'PASS' if summary['accepted'] else 'FAIL'}  "
            f"events={','.join(summary['narrative']) or '-'}  "
            f"latency={'-' if lat is None else f'{lat:.2f}d'}  "
            f"post={'-' if post is None else f'{post:.2f}'}  mean_cost={summary['mean_cost']:.4g}")


def _setup_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(name)s %(levelname)s %(message)s")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="TOML configuration file")
    common.add_argument("--seed", type=int, help="scenario seed (the baseline uses seed + baseline_seed_offset)")
    common.add_argument("--out", help="output directory (default: run.out_dir)")
    common.add_argument("--profile", choices=sorted(PROFILES), default="full")
    parser = argparse.ArgumentParser(prog="mpcmon", description=__doc__.splitlines()[0],
                                     epilog=f"log verbosity: {LOG_ENV}=DEBUG|INFO|WARNING|ERROR")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("baseline", parents=[common], help="generate the initial model and baseline dataset")
    run = sub.add_parser("run", parents=[common], help="run closed-loop scenarios")
    run.add_argument("--scenario", choices=[s.value for s in Scenario] + ["all"])
    sub.add_parser("config", parents=[common], help="print the resolved configuration")
    rep = sub.add_parser("report", help="summarise the runs in a directory")
    rep.add_argument("run_dir")
    return parser


def _load(args) -> RunConfig:
    cfg = parse_config(args.config, args.profile)
    if args.seed is not None:
        cfg = dataclasses.replace(cfg, run=dataclasses.replace(cfg.run, seed=args.seed))
    return cfg


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    _setup_logging()
    try:
        if args.command == "report":
            summaries = cmd_report(args.run_dir)
            for s in summaries:
                print(_line(s))
            return 0
        cfg = _load(args)
        if args.command == "config":
            sys.stdout.write(emit_config(cfg))
            return 0
        if args.command == "baseline":
            s = cmd_baseline(cfg, args.out)
            print(f"baseline: {s['samples']} samples -> {s['baseline']}")
            print(f"self-score: {s['self_acceptable_fraction']:.3f} of {s['self_windows']} windows with "
                  f"T2 <= alpha = {s['alpha']:.3f}")
            return 0 if s["self_acceptable_fraction"] >= 0.9 else 1
        summaries = cmd_run(cfg, args.scenario, args.out)
        for s in summaries:
            print(_line(s))
            for r in s["acceptance_failures"]:
                print(f"          {r}")
        return 0 if all(s["accepted"] for s in summaries) else 1
    except ConfigurationError as err:
        print(f"error: {err}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    raise SystemExit(main())
