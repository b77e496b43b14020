"""Lumped thermal district-heating plant used as the ground-truth simulator.

A single station feeds ``n_loads`` consumers. Each consumer supply
temperature lags the station supply temperature, consumer flows follow
from the load power and the consumer setpoint, and the station return
temperature lags the mixed return stream.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass, field, replace

import numpy as np

from .errors import ConfigurationError, InvalidInputError

CP_WATER = 4186.0
# Lower floor on supply-minus-setpoint in the flow division.
TEMP_FLOOR = 2.0


class Scenario(str, enum.Enum):
    BASELINE = "baseline"
    CASE1 = "case1"
    CASE2 = "case2"
    CASE3 = "case3"

    @classmethod
    def parse(cls, value) -> "Scenario":
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).lower())
        except ValueError:
            names = ", ".join(s.value for s in cls)
            raise ConfigurationError(f"unknown scenario {value!r} (expected one of {names})") from None


@dataclass(frozen=True)
class PlantState:
    supply_temps: np.ndarray
    return_temp: float

    def __post_init__(self):
        object.__setattr__(self, "supply_temps", np.asarray(self.supply_temps, dtype=float).reshape(-1))
        object.__setattr__(self, "return_temp", float(self.return_temp))

    @property
    def n_loads(self) -> int:
        return self.supply_temps.size

    def as_vector(self) -> np.ndarray:
        return np.append(self.supply_temps, self.return_temp)

    @classmethod
    def from_vector(cls, x) -> "PlantState":
        x = np.asarray(x, dtype=float).reshape(-1)
        return cls(x[:-1], x[-1])

    def is_finite(self) -> bool:
        return bool(np.all(np.isfinite(self.supply_temps)) and np.isfinite(self.return_temp))


@dataclass(frozen=True)
class PlantOutput:
    return_temp: float
    station_flow: float
    supply_temps: np.ndarray
    consumer_temps: np.ndarray
    consumer_flows: np.ndarray

    def as_vector(self) -> np.ndarray:
        """Output ordered as [T0r, q0, T_i^s..., T_i^c..., q_i^c...]."""
        return np.concatenate(
            [[self.return_temp, self.station_flow], self.supply_temps, self.consumer_temps, self.consumer_flows]
        )


@dataclass(frozen=True)
class Disturbance:
    load_powers: np.ndarray
    elec_price: float
    return_temp_lb: float
    supply_temp_lb: float

    def __post_init__(self):
        object.__setattr__(self, "load_powers", np.asarray(self.load_powers, dtype=float).reshape(-1))


def _per_load(value, n):
    arr = np.broadcast_to(np.asarray(value, dtype=float), (n,)).copy()
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class PlantParams:
    """System parameters of the lumped plant.

    Scalars given for per-load fields are broadcast to ``n_loads``.
    ``load_scale`` multiplies the nominal load profile per consumer and is
    the knob the load-shift scenarios act on. ``supply_heat_loss`` [W/K] is
    a heat-loss coefficient of each supply line towards ``ground_temp``; the
    resulting temperature drop U (T - T_g) / (c_p q) grows as the consumer
    flow falls. Zero gives the constant-drop network.
    """

    n_loads: int = 3
    dt: float = 300.0
    tau_supply: np.ndarray = 1800.0
    tau_return: float = 1200.0
    loss_supply: np.ndarray = 1.0
    loss_return: float = 0.5
    actuation_offset: float = 0.0
    consumer_setpoint: float = 45.0
    flow_min: np.ndarray = 1.0
    flow_max: np.ndarray = 10.0
    cp: float = CP_WATER
    temp_floor: float = TEMP_FLOOR
    load_scale: np.ndarray = 1.0
    supply_heat_loss: np.ndarray = 150.0
    ground_temp: float = 10.0

    def __post_init__(self):
        n = int(self.n_loads)
        if n < 1:
            raise ConfigurationError("n_loads must be >= 1")
        for name in ("tau_supply", "loss_supply", "flow_min", "flow_max", "load_scale", "supply_heat_loss"):
            object.__setattr__(self, name, _per_load(getattr(self, name), n))
        if np.any(self.tau_supply <= 0) or self.tau_return <= 0:
            raise ConfigurationError("time constants must be > 0")
        if self.cp <= 0 or self.dt <= 0:
            raise ConfigurationError("cp and dt must be > 0")
        if np.any(self.flow_min <= 0) or np.any(self.flow_min >= self.flow_max):
            raise ConfigurationError("flow bounds must satisfy 0 < min < max")
        if np.any(self.load_scale < 0):
            raise ConfigurationError("load_scale must be >= 0")
        if np.any(self.supply_heat_loss < 0):
            raise ConfigurationError("supply_heat_loss must be >= 0")

    def with_(self, **changes) -> "PlantParams":
        return replace(self, **changes)


@dataclass(frozen=True)
class ScenarioShifts:
    """Magnitudes of the degradation scenarios (calibration knobs)."""

    case1_offset: float = -1.0
    case2_load_scale: tuple = (1.1, 1.1, 0.8)
    case3_load_scale: tuple = (1.25, 1.25, 0.5)


def apply_scenario(params: PlantParams, scenario, shifts: ScenarioShifts = ScenarioShifts()) -> PlantParams:
    """Return ``params`` with the scenario's (absolute) parameter changes applied."""
    scenario = Scenario.parse(scenario)
    base = params.with_(actuation_offset=0.0, load_scale=1.0)
    if scenario is Scenario.BASELINE:
        return params
    if scenario is Scenario.CASE1:
        return base.with_(actuation_offset=shifts.case1_offset)
    scale = shifts.case2_load_scale if scenario is Scenario.CASE2 else shifts.case3_load_scale
    return base.with_(load_scale=scale)


def consumer_flows(supply_temps, load_powers, params: PlantParams) -> np.ndarray:
    dtemp = np.maximum(supply_temps - params.consumer_setpoint, params.temp_floor)
    q = load_powers / (params.cp * dtemp)
    return np.clip(q, params.flow_min, params.flow_max)


def plant_output(state: PlantState, dist: Disturbance, params: PlantParams) -> PlantOutput:
    """Algebraic output map at the current state."""
    ts = state.supply_temps
    q = consumer_flows(ts, dist.load_powers, params)
    tc = ts - dist.load_powers / (params.cp * q)
    return PlantOutput(state.return_temp, float(q.sum()), ts.copy(), tc, q)


def plant_step(state: PlantState, u: float, dist: Disturbance, params: PlantParams):
    """Advance one sampling period.

    Returns ``(next_state, output)`` where ``output`` is the output at the
    current (pre-step) state.
    """
    if not state.is_finite() or not np.isfinite(u):
        raise InvalidInputError("plant_step received a non-finite state or input")
    if state.n_loads != params.n_loads or dist.load_powers.size != params.n_loads:
        raise ConfigurationError("state/disturbance dimension does not match params.n_loads")
    out = plant_output(state, dist, params)
    u_eff = u + params.actuation_offset
    ts = state.supply_temps
    drop = params.loss_supply + params.supply_heat_loss * (ts - params.ground_temp) / (params.cp * out.consumer_flows)
    ts_next = ts + (params.dt / params.tau_supply) * (u_eff - drop - ts)
    t_mix = float(np.dot(out.consumer_flows, out.consumer_temps)) / out.station_flow - params.loss_return
    tr_next = state.return_temp + (params.dt / params.tau_return) * (t_mix - state.return_temp)
    return PlantState(ts_next, tr_next), out


def station_power(params: PlantParams, station_flow, supply_temp, return_temp):
    """Generated thermal power c_p * q0 * (T0s - T0r) [W]."""
    return params.cp * station_flow * (supply_temp - return_temp)


# ---------------------------------------------------------------------------
# Disturbances
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DisturbanceConfig:
    """Daily-periodic disturbance shapes.

    ``nominal_loads`` are per-consumer peak powers [W]; the daily shape has a
    morning and an evening peak. Prices [currency/Wh] peak in the morning and
    the evening. Lower temperature bounds are relaxed during the night.
    """

    steps_per_day: int = 288
    nominal_loads: tuple = (8.5e5, 8.5e5, 8.5e5)
    load_floor: float = 0.7
    load_peaks: tuple = ((0.30, 0.07, 0.30), (0.78, 0.08, 0.24))
    load_noise: float = 0.0
    scale_range: tuple = (0.6, 1.4)
    smooth_scale: bool = True
    price_base: float = 1.0e-8
    price_peaks: tuple = ((0.33, 0.06, 1.5), (0.80, 0.06, 1.5))
    night: tuple = (0.0, 0.25)
    supply_lb_day: float = 70.0
    supply_lb_night: float = 66.0
    return_lb_day: float = 40.0
    return_lb_night: float = 35.0

    def __post_init__(self):
        if self.steps_per_day < 2:
            raise ConfigurationError("steps_per_day must be >= 2")
        lo, hi = self.scale_range
        if not 0 <= lo <= hi:
            raise ConfigurationError("scale_range must satisfy 0 <= lo <= hi")
        for v in (self.supply_lb_day, self.supply_lb_night, self.return_lb_day, self.return_lb_night):
            if not 0.0 <= v <= 100.0:
                raise ConfigurationError("temperature lower bounds must lie in [0, 100] degC")


@dataclass(frozen=True)
class DisturbanceProfile:
    load_powers: np.ndarray  # (T, n_loads)
    elec_price: np.ndarray  # (T,)
    return_temp_lb: np.ndarray
    supply_temp_lb: np.ndarray
    day_scale: np.ndarray  # (T,) per-step copy of the daily factor a

    def __len__(self):
        return self.elec_price.size

    def at(self, k: int) -> Disturbance:
        return Disturbance(self.load_powers[k], self.elec_price[k], self.return_temp_lb[k], self.supply_temp_lb[k])

    def slice(self, start: int, stop: int) -> "DisturbanceProfile":
        s = np.s_[start:stop]
        return DisturbanceProfile(
            self.load_powers[s], self.elec_price[s], self.return_temp_lb[s], self.supply_temp_lb[s], self.day_scale[s]
        )

    def as_matrix(self) -> np.ndarray:
        """Rows [P_1..P_n, c_elec, T0r_lb, Ts_lb] per step."""
        return np.column_stack([self.load_powers, self.elec_price, self.return_temp_lb, self.supply_temp_lb])


def _bumps(s, peaks):
    out = np.zeros_like(s)
    for center, width, height in peaks:
        # periodic distance on the unit circle of the day
        d = (s - center + 0.5) % 1.0 - 0.5
        out += height * np.exp(-((d / width) ** 2))
    return out


def day_scale_factor(seed: int, day: int, cfg: DisturbanceConfig) -> float:
    rng = np.random.default_rng([int(seed), int(day), 0])
    return float(rng.uniform(*cfg.scale_range))


def generate_disturbance_profile(
    day_seed: int,
    scenario,
    horizon: int,
    cfg: DisturbanceConfig = DisturbanceConfig(),
    shifts: ScenarioShifts = ScenarioShifts(),
    change_day: int = 0,
    start_step: int = 0,
) -> DisturbanceProfile:
    """Deterministic disturbance sequence for steps ``start_step .. start_step+horizon``.

    The daily load factor ``a ~ U[scale_range]`` and the optional intra-day load
    noise are drawn from generators keyed on ``(day_seed, day)``, so a step's
    disturbance does not depend on ``start_step`` or ``horizon``. The
    scenario's load scaling applies from ``change_day`` on.
    """
    if horizon < 1:
        raise ConfigurationError("horizon must be >= 1")
    scenario = Scenario.parse(scenario)
    spd = cfg.steps_per_day
    steps = np.arange(start_step, start_step + horizon)
    days = steps // spd
    s = (steps % spd) / spd

    nominal = np.asarray(cfg.nominal_loads, dtype=float)
    n = nominal.size
    shape = cfg.load_floor + _bumps(s, cfg.load_peaks)
    shifted_scale = np.broadcast_to(
        np.asarray(apply_scenario(PlantParams(n_loads=n), scenario, shifts).load_scale), (n,)
    )

    loads = np.empty((horizon, n))
    a = np.empty(horizon)
    for day in np.unique(days):
        idx = np.nonzero(days == day)[0]
        a_day = day_scale_factor(day_seed, day, cfg)
        if cfg.smooth_scale:
            # linear between the factors of neighbouring days, anchored at noon
            sd = s[idx]
            a_prev = day_scale_factor(day_seed, max(day - 1, 0), cfg)
            a_next = day_scale_factor(day_seed, day + 1, cfg)
            a[idx] = np.where(sd < 0.5, a_prev + (sd + 0.5) * (a_day - a_prev),
                              a_day + (sd - 0.5) * (a_next - a_day))
        else:
            a[idx] = a_day
        noise = _day_noise(day_seed, day, n, cfg)[steps[idx] % spd]
        scale = shifted_scale if day >= change_day else 1.0
        loads[idx] = a[idx, None] * shape[idx, None] * nominal[None, :] * scale * noise

    lo, hi = cfg.night
    night = ((s >= lo) & (s < hi)) if lo <= hi else ((s >= lo) | (s < hi))
    price = cfg.price_base * (1.0 + _bumps(s, cfg.price_peaks))
    supply_lb = np.where(night, cfg.supply_lb_night, cfg.supply_lb_day)
    return_lb = np.where(night, cfg.return_lb_night, cfg.return_lb_day)
    return DisturbanceProfile(loads, price, return_lb, supply_lb, a)


def _day_noise(seed, day, n, cfg: DisturbanceConfig) -> np.ndarray:
    """Smooth multiplicative load noise for one day, shape (steps_per_day, n)."""
    spd = cfg.steps_per_day
    if cfg.load_noise == 0:
        return np.ones((spd, n))
    rng = np.random.default_rng([int(seed), int(day), 1])
    raw = rng.standard_normal((spd, n))
    width = max(1, spd // 48)
    kernel = np.ones(2 * width + 1) / np.sqrt(2 * width + 1)
    smooth = np.stack([np.convolve(np.pad(raw[:, j], width, mode="wrap"), kernel, mode="valid") for j in range(n)], 1)
    return 1.0 + cfg.load_noise * smooth
