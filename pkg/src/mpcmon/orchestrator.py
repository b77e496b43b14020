"""Closed-loop simulation with monitoring and triggered adaption.

The loop runs the MPC on the plant and scores every completed feature
window. A persistent run of unacceptable windows starts an RL adaption phase;
if the phase does not restore acceptable windows before its budget runs out,
an excitation experiment is run, the prediction model is re-identified and the
tuning parameters are reset.
"""

from __future__ import annotations

import csv
import enum
import json
import logging
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .adaptor import AdaptionReport, GradientScaler, TdUpdateConfig, stage_cost, step_td
from .errors import ConfigurationError, SolverError
from .monitor import (FEATURE_NAMES, BaselineDataset, MonitorVerdict, compute_features, step_signals, t2_score,
                      threshold_alpha, update_verdict)
from .mpc import MpcConfig, MpcController, MpcSolution, ThetaParams, TuningParams, get_controller, shift_warm_start
from .plant import (DisturbanceConfig, PlantParams, PlantState, Scenario, ScenarioShifts, apply_scenario,
                    generate_disturbance_profile, plant_step, station_power)
from .predictor import collect_excitation, one_step_rmse, sysid_fit

log = logging.getLogger(__name__)


class Mode(str, enum.Enum):
    MONITOR = "MONITOR"
    RL_ADAPT = "RL_ADAPT"
    SYSID_EXCITE = "SYSID_EXCITE"


ALLOWED_TRANSITIONS = {
    (Mode.MONITOR, Mode.RL_ADAPT),
    (Mode.RL_ADAPT, Mode.MONITOR),
    (Mode.RL_ADAPT, Mode.SYSID_EXCITE),
    (Mode.SYSID_EXCITE, Mode.MONITOR),
}

# Event kinds that make up the adaption narrative of a run.
NARRATIVE = ("rl_trigger", "sysid", "theta_reset", "recovery")


@dataclass(frozen=True)
class LoopConfig:
    """Timing of the monitor and of the adaption phases (in steps or windows)."""

    steps_per_day: int = 288
    window: int = 144
    stride: Optional[int] = None
    persistence: int = 6
    rl_budget_days: float = 5.0
    recovery_windows: int = 2
    change_day: float = 3.0
    sysid_days: float = 2.0
    excitation_amplitude: float = 10.0
    excitation_hold: int = 3
    sysid_ridge: float = 1e-6
    alpha: Optional[float] = None
    confidence: float = 0.95
    flow_lb: float = 10.0
    initial_margin: float = 2.0

    def __post_init__(self):
        if self.window < 2:
            raise ConfigurationError("window must be >= 2")
        if self.stride is not None and self.stride < 1:
            raise ConfigurationError("stride must be >= 1")
        if self.persistence < 1 or self.recovery_windows < 1:
            raise ConfigurationError("persistence and recovery_windows must be >= 1")
        if self.rl_budget_days <= 0 or self.sysid_days <= 0:
            raise ConfigurationError("rl_budget_days and sysid_days must be > 0")
        if not 0 < self.confidence < 1:
            raise ConfigurationError("confidence must lie in (0, 1)")
        if self.alpha is not None and self.alpha <= 0:
            raise ConfigurationError("alpha must be > 0")

    @property
    def window_stride(self) -> int:
        return self.window if self.stride is None else self.stride

    def threshold(self) -> float:
        return self.alpha if self.alpha is not None else threshold_alpha(8, self.confidence)

    def steps(self, days: float) -> int:
        return int(round(days * self.steps_per_day))


@dataclass(frozen=True)
class RunSettings:
    plant: PlantParams = PlantParams()
    disturbance: DisturbanceConfig = DisturbanceConfig()
    shifts: ScenarioShifts = ScenarioShifts()
    mpc: MpcConfig = MpcConfig()
    td: TdUpdateConfig = TdUpdateConfig()
    loop: LoopConfig = LoopConfig()

    def __post_init__(self):
        if self.disturbance.steps_per_day != self.loop.steps_per_day:
            raise ConfigurationError("disturbance and loop steps_per_day differ")
        if self.loop.change_day != int(self.loop.change_day):
            raise ConfigurationError("change_day must be a whole number of days")


# ---------------------------------------------------------------------------
# Run log
# ---------------------------------------------------------------------------


@dataclass
class RunLog:
    """Per-step, per-window and event records of one closed-loop run."""

    scenario: str
    seed: int
    dt: float
    steps_per_day: int
    n_loads: int
    change_step: Optional[int] = None
    steps: list = field(default_factory=list)
    windows: list = field(default_factory=list)
    events: list = field(default_factory=list)
    params: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    tuning_names: list = field(default_factory=list)
    conservation: dict = field(default_factory=lambda: {"flow": 0.0, "energy": 0.0})

    def column(self, name) -> np.ndarray:
        return np.array([r[name] for r in self.steps])

    def window_t2(self) -> np.ndarray:
        return np.array([w["t2"] for w in self.windows])

    def event_kinds(self, kinds=NARRATIVE) -> list:
        return [e["kind"] for e in self.events if kinds is None or e["kind"] in kinds]

    def first_event(self, kind) -> Optional[dict]:
        return next((e for e in self.events if e["kind"] == kind), None)

    def day_of(self, step: int) -> float:
        return step / self.steps_per_day


def evaluate_recovery(windows, since: int, recovery_windows: int = 2) -> bool:
    """True iff the last ``recovery_windows`` windows starting at or after ``since`` are all acceptable."""
    if isinstance(windows, RunLog):
        windows = windows.windows
    recent = [w for w in windows if w["start"] >= since]
    if len(recent) < recovery_windows:
        return False
    return all(w["acceptable"] for w in recent[-recovery_windows:])


# ---------------------------------------------------------------------------
# Closed loop
# ---------------------------------------------------------------------------


class ClosedLoop:
    """Stepping state of one run; implements the adaption-phase loop protocol."""

    def __init__(self, scenario: Scenario, days: float, theta0: ThetaParams, settings: RunSettings, seed: int,
                 runlog: RunLog):
        self.s = settings
        self.scenario = scenario
        self.theta = theta0
        self.log = runlog
        lc, pp = settings.loop, settings.plant
        self.n_steps = lc.steps(days)
        baseline_run = scenario is Scenario.BASELINE
        self.change_step = None if baseline_run else lc.steps(lc.change_day)
        self.profile = generate_disturbance_profile(
            seed, scenario, self.n_steps + settings.mpc.horizon + 1, settings.disturbance, settings.shifts,
            change_day=0 if baseline_run else int(lc.change_day))
        self.params_before = pp
        self.params_after = apply_scenario(pp, scenario, settings.shifts)
        self.ctrl: MpcController = get_controller(pp, settings.mpc)
        d0 = self.profile.at(0)
        self.state = PlantState(np.full(pp.n_loads, d0.supply_temp_lb + lc.initial_margin),
                                pp.consumer_setpoint - pp.loss_return)
        self.prev_state = None
        self.k = 0
        self.mode = Mode.MONITOR
        self.last_input = None
        self._cur = None  # (k, solution) at the current state
        self._prev = None  # last solution at the previous state
        self._last_action: Optional[MpcSolution] = None
        self._failed_best: Optional[MpcSolution] = None

    # -- plant parameters in force at step k -------------------------------

    def plant_params(self, k: int) -> PlantParams:
        if self.change_step is not None and k >= self.change_step:
            return self.params_after
        return self.params_before

    def forecast(self, k: int):
        return self.profile.slice(k, k + self.s.mpc.horizon + 1)

    # -- loop protocol ------------------------------------------------------

    def solve(self, theta: ThetaParams, previous: bool = False) -> Optional[MpcSolution]:
        """MPC at the current (or previous) state; None when the solve fails."""
        if previous:
            if self.prev_state is None:
                return None
            k, x, warm_src = self.k - 1, self.prev_state, self._prev
            warm = warm_src.warm if warm_src is not None else None
        else:
            k, x = self.k, self.state
            if self._cur is not None and self._cur[0] == k:
                warm = self._cur[1].warm
            elif self._last_action is not None:
                warm = shift_warm_start(self._last_action)
            else:
                warm = None
        try:
            sol = self.ctrl.solve(x, self.forecast(k), theta, warm)
        except SolverError as err:
            log.debug("step %d: %s", k, err)
            best = err.best
            if best is not None and np.all(np.isfinite(best.w)):
                self._failed_best = best
            return None
        if not previous:
            self._cur = (k, sol)
        return sol

    def advance(self, sol: Optional[MpcSolution], u: Optional[float] = None, excitation: bool = False) -> float:
        """Apply ``sol``'s first input (or ``u``), step the plant, log; returns C_k."""
        degraded = False
        if u is None:
            if sol is not None:
                u = sol.applied_input
            else:
                degraded = True
                lo, hi = self.s.mpc.input_bounds
                u = self.last_input if self.last_input is not None else 0.5 * (lo + hi)
        k = self.k
        pp = self.plant_params(k)
        dist = self.profile.at(k)
        x_next, out = plant_step(self.state, u, dist, pp)
        cost = stage_cost(out, u, dist, pp, self.s.loop.flow_lb)
        self._record(k, u, out, dist, pp, cost, sol, degraded, excitation)
        if sol is not None:
            self._last_action = sol
            self._prev = sol
        elif degraded and getattr(self, "_failed_best", None) is not None:
            self._last_action = self._failed_best
            self._prev = None
        else:
            self._prev = None
        self._failed_best = None
        self.prev_state = self.state
        self.state = x_next
        self.last_input = u
        self.k += 1
        return cost

    def _record(self, k, u, out, dist, pp, cost, sol, degraded, excitation):
        t0s = u + pp.actuation_offset
        pb = station_power(pp, out.station_flow, t0s, out.return_temp)
        sig, deg_load = step_signals(pb, dist.load_powers, dist.elec_price, out.station_flow,
                                     dist.supply_temp_lb, out.supply_temps, pp.dt, self.s.loop.flow_lb)
        row = {
            "step": k, "time": k * pp.dt, "day": k / self.s.loop.steps_per_day, "mode": self.mode.value,
            "excitation": int(excitation), "degraded": int(degraded), "u": u, "T0s": t0s,
            "T0r": out.return_temp, "q0": out.station_flow,
        }
        n = pp.n_loads
        for i in range(n):
            row[f"Ts{i + 1}"] = out.supply_temps[i]
        for i in range(n):
            row[f"Tc{i + 1}"] = out.consumer_temps[i]
        for i in range(n):
            row[f"qc{i + 1}"] = out.consumer_flows[i]
        for i in range(n):
            row[f"P{i + 1}"] = dist.load_powers[i]
        row.update({
            "price": dist.elec_price, "T0r_lb": dist.return_temp_lb, "Ts_lb": dist.supply_temp_lb, "Pb": pb,
            "cost": cost, "J": sol.optimal_value if sol is not None else float("nan"),
            "kkt": sol.kkt_residual if sol is not None else float("nan"),
            "eff": sig[0], "econ": sig[1], "zeta": sig[2], "load": sig[3], "degenerate_load": int(deg_load),
        })
        self.log.steps.append(row)
        self.log.params.append(self.theta.tuning.to_vector())
        # conservation identities of the realised output
        flow_res = abs(out.station_flow - out.consumer_flows.sum()) / max(out.station_flow, 1e-300)
        delivered = pp.cp * out.consumer_flows * (out.supply_temps - out.consumer_temps)
        scale = np.maximum(np.abs(dist.load_powers), 1e-300)
        with np.errstate(invalid="ignore"):
            energy_res = np.where(dist.load_powers > 0, np.abs(delivered - dist.load_powers) / scale, 0.0)
        c = self.log.conservation
        c["flow"] = max(c["flow"], float(flow_res))
        c["energy"] = max(c["energy"], float(np.max(energy_res)) if energy_res.size else 0.0)

    def set_mode(self, mode: Mode):
        if mode is self.mode:
            return
        if (self.mode, mode) not in ALLOWED_TRANSITIONS:
            raise RuntimeError(f"illegal mode transition {self.mode.value} -> {mode.value}")
        self.log.transitions.append({"step": self.k, "from": self.mode.value, "to": mode.value})
        self.mode = mode

    def event(self, kind: str, detail: str = ""):
        self.log.events.append({"step": self.k, "time": self.k * self.s.plant.dt,
                                "day": self.k / self.s.loop.steps_per_day, "kind": kind, "detail": detail})


def run_closed_loop(scenario, days: float, theta0: ThetaParams, baseline: Optional[BaselineDataset],
                    settings: RunSettings = RunSettings(), seed: int = 0, adapt: bool = True) -> RunLog:
    """Simulate ``days`` days of closed-loop operation.

    With ``baseline=None`` and ``adapt=False`` the run only records data
    (used to build the baseline itself); otherwise every completed window is
    scored and Algorithm-style adaption is applied.
    """
    scenario = Scenario.parse(scenario)
    if days <= 0:
        raise ConfigurationError("days must be > 0")
    if baseline is None and adapt:
        raise ConfigurationError("a baseline dataset is required for monitoring (run the baseline command first)")
    lc, pp = settings.loop, settings.plant
    runlog = RunLog(scenario.value, int(seed), pp.dt, lc.steps_per_day, pp.n_loads,
                    tuning_names=TuningParams.names(pp.n_loads))
    loop = ClosedLoop(scenario, days, theta0, settings, seed, runlog)
    runlog.change_step = loop.change_step
    alpha = lc.threshold()
    W, stride = lc.window, lc.window_stride
    verdict = MonitorVerdict(alpha=alpha)
    rl_budget = lc.steps(lc.rl_budget_days)
    rl_start = None
    trigger_step = None
    awaiting_recovery = False
    scaler = None
    report = None
    sig_cols = ("eff", "econ", "zeta", "load")
    changed = False

    while loop.k < loop.n_steps:
        if loop.change_step is not None and not changed and loop.k >= loop.change_step:
            loop.event("change", scenario.value)
            changed = True

        if loop.mode is Mode.SYSID_EXCITE:
            _run_sysid(loop, settings)
            loop.set_mode(Mode.MONITOR)
            verdict = MonitorVerdict(alpha=alpha)
            continue

        if loop.mode is Mode.RL_ADAPT:
            step_td(loop, settings.td, scaler, report)
        else:
            sol = loop.solve(loop.theta)
            loop.advance(sol)

        # score the window that just completed
        k_end = loop.k
        if baseline is None or k_end < W or (k_end - W) % stride != 0:
            continue
        rows = runlog.steps[k_end - W : k_end]
        if any(r["excitation"] for r in rows):
            continue
        sig = np.array([[r[c] for c in sig_cols] for r in rows])
        fv = compute_features(sig, [r["degenerate_load"] for r in rows])
        t2 = t2_score(fv, baseline)
        verdict = update_verdict(verdict, t2, alpha)
        runlog.windows.append({
            "index": len(runlog.windows), "start": k_end - W, "end": k_end, "t2": t2,
            "acceptable": verdict.acceptable, "violations": verdict.consecutive_violations,
            "mode": loop.mode.value, "degenerate": int(fv.degenerate),
            **{name: float(v) for name, v in zip(FEATURE_NAMES, fv.values)},
        })
        if not adapt:
            continue

        if awaiting_recovery and evaluate_recovery(runlog.windows, trigger_step, lc.recovery_windows):
            loop.event("recovery", f"T2={t2:.3f}")
            awaiting_recovery = False
            if loop.mode is Mode.RL_ADAPT:
                loop.set_mode(Mode.MONITOR)
                verdict = replace(verdict, consecutive_violations=0)
                continue

        if loop.mode is Mode.MONITOR and verdict.consecutive_violations >= lc.persistence:
            loop.event("rl_trigger", f"{verdict.consecutive_violations} consecutive windows above alpha")
            loop.set_mode(Mode.RL_ADAPT)
            rl_start = loop.k
            trigger_step = loop.k
            awaiting_recovery = True
            scaler = GradientScaler(loop.theta.size, settings.td.rms_clip)
            report = AdaptionReport()
            verdict = replace(verdict, consecutive_violations=0)
            continue

        if loop.mode is Mode.RL_ADAPT and loop.k - rl_start >= rl_budget:
            if not verdict.acceptable:
                loop.event("rl_budget_expired", f"T2={t2:.3f} > alpha")
                loop.set_mode(Mode.SYSID_EXCITE)
            else:
                loop.event("rl_budget_expired", f"T2={t2:.3f} <= alpha")
                loop.set_mode(Mode.MONITOR)

    if loop.mode is Mode.SYSID_EXCITE:
        loop.set_mode(Mode.MONITOR)
    return runlog


def _run_sysid(loop: ClosedLoop, settings: RunSettings):
    """Excitation experiment, model refit and tuning reset."""
    lc = settings.loop
    duration = min(lc.steps(lc.sysid_days), loop.n_steps - loop.k)
    loop.event("sysid_start", f"{duration} excitation steps")
    if duration < 1:
        return
    pp = loop.plant_params(loop.k)
    records, x_end, inputs, outputs = collect_excitation(
        loop.state, pp, loop.profile, duration, lc.excitation_amplitude, start_step=loop.k,
        seed=loop.log.seed * 7919 + loop.k, bounds=settings.mpc.input_bounds)
    # logging reuses advance() so the excitation steps appear in the steps table
    loop._last_action = None
    loop._cur = None
    for u in inputs:
        loop.advance(None, u=float(u), excitation=True)
    stale = loop.theta.model
    try:
        fit = sysid_fit(records, lc.sysid_ridge)
    except Exception as err:  # keep running with the old model
        loop.event("sysid_failed", str(err))
        return
    old = one_step_rmse(stale, records)
    loop.theta = ThetaParams(fit.model, TuningParams.zeros(pp.n_loads))
    loop.event("sysid", f"rmse_stale={np.sqrt(np.mean(old ** 2)):.4g} rmse_fit={np.sqrt(np.mean(fit.rmse ** 2)):.4g}")
    loop.event("theta_reset", "tuning parameters set to zero")
    # the theta-hat row logged at the last excitation step reflects the reset
    loop.log.params[-1] = loop.theta.tuning.to_vector()
    loop.sysid_records = records


def identify_initial_model(settings: RunSettings, seed: int, start_temp: float = 75.0):
    """Prediction model fitted to ``sysid_days`` of excitation on the unchanged plant.

    The experiment starts from uniform supply temperatures ``start_temp`` and
    the return temperature at the consumer set point minus the return loss.
    Returns ``(model, SysIdResult)``.
    """
    lc, pp = settings.loop, settings.plant
    duration = lc.steps(lc.sysid_days)
    profile = generate_disturbance_profile(seed, Scenario.BASELINE, duration + 1, settings.disturbance,
                                           settings.shifts)
    x0 = PlantState(np.full(pp.n_loads, start_temp), pp.consumer_setpoint - pp.loss_return)
    records, _, _, _ = collect_excitation(x0, pp, profile, duration, lc.excitation_amplitude, seed=seed + 1,
                                          bounds=settings.mpc.input_bounds)
    fit = sysid_fit(records, lc.sysid_ridge)
    return fit.model, fit


def check_acceptance(summary: dict, min_post_fraction: float = 0.8) -> tuple[bool, list]:
    """Scenario-specific acceptance of a run summary; returns (ok, reasons for failure)."""
    scen, narrative = summary["scenario"], list(summary["narrative"])
    reasons = []
    if scen == Scenario.BASELINE.value:
        if "rl_trigger" in narrative:
            reasons.append("trigger on the baseline scenario")
        return not reasons, reasons
    expected = ["rl_trigger", "recovery"] if scen in ("case1", "case2") else ["rl_trigger", "sysid", "theta_reset",
                                                                              "recovery"]
    if narrative[-len(expected):] != expected:
        reasons.append(f"events end with {narrative[-len(expected):]}, expected {expected}")
    if scen in ("case1", "case2") and "sysid" in narrative:
        reasons.append("sysID was needed")
    post = summary.get("post_recovery_acceptable_fraction")
    if post is None or post < min_post_fraction:
        reasons.append(f"post-recovery acceptable fraction {post} < {min_post_fraction}")
    return not reasons, reasons


# ---------------------------------------------------------------------------
# Reporting and persistence
# ---------------------------------------------------------------------------


def emit_report(runlog: RunLog, alpha: Optional[float] = None) -> dict:
    """Deterministic summary of a run."""
    if not runlog.steps:
        raise ConfigurationError("empty run log")
    spd = runlog.steps_per_day
    cost = runlog.column("cost")
    zeta = runlog.column("zeta")
    trig = runlog.first_event("rl_trigger")
    change_day = runlog.change_step / spd if runlog.change_step is not None else None
    latency = (trig["step"] / spd - change_day) if (trig and change_day is not None) else None
    rec = next((e for e in runlog.events if e["kind"] == "recovery" and trig and e["step"] >= trig["step"]), None)
    recovery_time = (rec["step"] - trig["step"]) / spd if (rec and trig) else None
    modes = runlog.column("mode")
    timeline, last = [], None
    for k, m in enumerate(modes):
        if m != last:
            timeline.append({"step": k, "day": k / spd, "mode": str(m)})
            last = m
    acc = [w["acceptable"] for w in runlog.windows]
    # remaining windows are counted from the final recovery of the run
    last_rec = next((e for e in reversed(runlog.events) if e["kind"] == "recovery"), None)
    post = None
    if rec is not None:
        after = [w["acceptable"] for w in runlog.windows if w["start"] >= last_rec["step"]]
        post = float(np.mean(after)) if after else None
    return {
        "scenario": runlog.scenario,
        "seed": runlog.seed,
        "steps": len(runlog.steps),
        "days": len(runlog.steps) / spd,
        "change_day": change_day,
        "detection_latency_days": latency,
        "recovery_time_days": recovery_time,
        "mean_cost": float(cost.mean()),
        "mean_zeta": float(zeta.mean()),
        "degraded_steps": int(runlog.column("degraded").sum()),
        "windows": len(acc),
        "acceptable_fraction": float(np.mean(acc)) if acc else None,
        "post_recovery_acceptable_fraction": post,
        "events": runlog.event_kinds(None),
        "narrative": runlog.event_kinds(),
        "mode_timeline": timeline,
        "conservation": dict(runlog.conservation),
    }


def run_files(out_dir, scenario: str, seed: int) -> dict:
    out = Path(out_dir)
    stem = f"{scenario}_{seed}"
    return {k: out / f"{stem}_{k}.csv" for k in ("steps", "windows", "events", "params")} | {
        "summary": out / f"{stem}_summary.json"}


def _write_csv(path: Path, rows, columns):
    with path.open("w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(columns)
        for r in rows:
            w.writerow([_fmt(r[c]) for c in columns])


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


def write_run(runlog: RunLog, out_dir, summary: Optional[dict] = None) -> dict:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    files = run_files(out, runlog.scenario, runlog.seed)
    if runlog.steps:
        _write_csv(files["steps"], runlog.steps, list(runlog.steps[0].keys()))
    wcols = ["index", "start", "end", "t2", "acceptable", "violations", "mode", "degenerate", *FEATURE_NAMES]
    _write_csv(files["windows"], runlog.windows, wcols)
    _write_csv(files["events"], runlog.events, ["step", "time", "day", "kind", "detail"])
    prow = [dict(step=k, **dict(zip(runlog.tuning_names, map(float, p)))) for k, p in enumerate(runlog.params)]
    _write_csv(files["params"], prow, ["step", *runlog.tuning_names])
    meta = {"scenario": runlog.scenario, "seed": runlog.seed, "dt": runlog.dt, "steps_per_day": runlog.steps_per_day,
            "n_loads": runlog.n_loads, "change_step": runlog.change_step, "transitions": runlog.transitions,
            "conservation": runlog.conservation}
    files["summary"].write_text(json.dumps({"meta": meta, "summary": summary or emit_report(runlog)}, indent=2) + "\n")
    return files


def _read_csv(path: Path) -> list:
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    return [{k: _parse(v) for k, v in r.items()} for r in rows]


def _parse(v: str):
    for cast in (int, float):
        try:
            return cast(v)
        except ValueError:
            pass
    return v


def load_run(out_dir, scenario: str, seed: int) -> RunLog:
    files = run_files(out_dir, scenario, seed)
    meta = json.loads(files["summary"].read_text())["meta"]
    runlog = RunLog(meta["scenario"], meta["seed"], meta["dt"], meta["steps_per_day"], meta["n_loads"],
                    meta["change_step"], tuning_names=TuningParams.names(meta["n_loads"]))
    runlog.steps = _read_csv(files["steps"])
    runlog.windows = _read_csv(files["windows"])
    for w in runlog.windows:
        w["acceptable"] = bool(w["acceptable"])
    runlog.events = _read_csv(files["events"])
    for e in runlog.events:
        e["detail"] = str(e.get("detail", ""))
    runlog.params = [np.array([r[n] for n in runlog.tuning_names], dtype=float) for r in _read_csv(files["params"])]
    runlog.transitions = meta["transitions"]
    runlog.conservation = meta["conservation"]
    return runlog


def find_runs(out_dir) -> list:
    """(scenario, seed) pairs of the run summaries in ``out_dir``."""
    runs = []
    for p in sorted(Path(out_dir).glob("*_summary.json")):
        scen, seed = p.name[: -len("_summary.json")].rsplit("_", 1)
        runs.append((scen, int(seed)))
    return runs
