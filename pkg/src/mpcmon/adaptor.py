"""Temporal-difference updates of the MPC parameters.

The MPC optimal value ``J`` plays the role of the action-value function.
Each closed-loop step yields the TD error
``delta = C_k + gamma * J_{k+1} - J_k`` and the parameter step
``theta - beta * delta * g`` where ``g`` is the (optionally RMS-normalised)
sensitivity of ``J_k``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import ConfigurationError
from .mpc import ThetaParams, TuningParams, n_tuning_vector
from .monitor import violation_measure
from .plant import Disturbance, PlantOutput, PlantParams, station_power

log = logging.getLogger(__name__)


def stage_cost(output: PlantOutput, u: float, dist: Disturbance, params: PlantParams,
               flow_lb: float = 10.0) -> float:
    """Realised stage cost dt * c * P_b + violation measure.

    ``u`` is the commanded station temperature; the realised one includes the
    plant's actuation offset.
    """
    t0s = u + params.actuation_offset
    pb = station_power(params, output.station_flow, t0s, output.return_temp)
    econ = params.dt * dist.elec_price * pb
    return float(econ + violation_measure(output.station_flow, dist.supply_temp_lb, output.supply_temps, flow_lb))


def tuning_bounds(n_loads: int, linear=0.05, quadratic=1e-4, terminal_weight=1.0, terminal_temp=(0.0, 85.0),
                  flow_backoff=5.0, temp_backoff=5.0):
    """Default box for the tuning vector, as (lower, upper) arrays."""
    n_v = n_tuning_vector(n_loads)
    lo = np.concatenate([np.full(n_v, -linear), np.zeros(n_v), [0.0, terminal_temp[0], 0.0, 0.0]])
    hi = np.concatenate([np.full(n_v, linear), np.full(n_v, quadratic),
                         [terminal_weight, terminal_temp[1], flow_backoff, temp_backoff]])
    return lo, hi


UPDATE_SETS = ("tuning", "model", "all")


@dataclass(frozen=True)
class TdUpdateConfig:
    """Learning rate, discount, box and the updated subset of theta.

    ``lower``/``upper`` cover the tuning vector only; model components are
    unbounded. ``update_set`` is one of ``tuning``, ``model``, ``all`` or a
    boolean mask over the full theta vector. ``tuning_mask`` optionally
    restricts which tuning components learn.
    """

    beta: float = 0.1
    gamma: float = 0.99
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    update_set: object = "tuning"
    tuning_mask: Optional[np.ndarray] = None
    normalize: bool = True
    rms_clip: tuple = (1e-3, 1e3)
    updates_per_step: int = 1

    def __post_init__(self):
        if not self.beta > 0:
            raise ConfigurationError("beta must be > 0")
        if not 0 < self.gamma <= 1:
            raise ConfigurationError("gamma must satisfy 0 < gamma <= 1")
        if isinstance(self.update_set, str) and self.update_set not in UPDATE_SETS:
            raise ConfigurationError(f"update_set must be one of {UPDATE_SETS} or a mask")
        if self.updates_per_step < 1:
            raise ConfigurationError("updates_per_step must be >= 1")
        if self.lower is not None and self.upper is not None and np.any(np.asarray(self.lower) > np.asarray(self.upper)):
            raise ConfigurationError("box bounds must satisfy lower <= upper")

    def mask(self, theta: ThetaParams) -> np.ndarray:
        n_m, n_t = theta.model.size, theta.tuning.size
        if not isinstance(self.update_set, str):
            m = np.asarray(self.update_set, dtype=bool)
            if m.size != n_m + n_t:
                raise ConfigurationError("update_set mask has the wrong length")
            return m
        m = np.zeros(n_m + n_t, dtype=bool)
        if self.update_set in ("model", "all"):
            m[:n_m] = True
        if self.update_set in ("tuning", "all"):
            m[n_m:] = True if self.tuning_mask is None else np.asarray(self.tuning_mask, dtype=bool)
        return m

    def box(self, theta: ThetaParams):
        n_m = theta.model.size
        lo_t, hi_t = tuning_bounds(theta.model.n_loads)
        lo_t = lo_t if self.lower is None else np.asarray(self.lower, dtype=float)
        hi_t = hi_t if self.upper is None else np.asarray(self.upper, dtype=float)
        lo = np.concatenate([np.full(n_m, -np.inf), lo_t])
        hi = np.concatenate([np.full(n_m, np.inf), hi_t])
        return lo, hi


@dataclass(frozen=True)
class TdStep:
    stage_cost: float
    value: float
    next_value: float
    gradient: np.ndarray
    td_error: float

    @classmethod
    def make(cls, stage_cost: float, value: float, next_value: float, gradient, gamma: float) -> "TdStep":
        delta = stage_cost + gamma * next_value - value
        return cls(float(stage_cost), float(value), float(next_value), np.asarray(gradient, dtype=float), float(delta))


def project(vec, lower, upper) -> np.ndarray:
    return np.minimum(np.maximum(vec, lower), upper)


def td_update(theta: ThetaParams, step: TdStep, cfg: TdUpdateConfig) -> ThetaParams:
    """theta - beta * delta * gradient on the update set, projected on the box.

    A non-finite gradient or TD error leaves theta unchanged (the caller logs
    the skip).
    """
    vec = theta.to_vector()
    g = np.asarray(step.gradient, dtype=float)
    if g.size != vec.size:
        raise ConfigurationError(f"gradient has length {g.size}, theta has {vec.size}")
    if not (np.all(np.isfinite(g)) and np.isfinite(step.td_error)):
        log.warning("non-finite TD step, update skipped")
        return theta
    m = cfg.mask(theta)
    new = vec.copy()
    new[m] = vec[m] - cfg.beta * step.td_error * g[m]
    lo, hi = cfg.box(theta)
    new[m] = project(new[m], lo[m], hi[m])
    return ThetaParams.from_vector(new, theta.model.n_loads)


class GradientScaler:
    """Per-component running RMS of the sensitivity, clipped to ``clip``."""

    def __init__(self, size: int, clip=(1e-3, 1e3)):
        self.sum_sq = np.zeros(size)
        self.count = 0
        self.clip = clip

    def __call__(self, g) -> np.ndarray:
        g = np.asarray(g, dtype=float)
        if not np.all(np.isfinite(g)):
            return g
        self.sum_sq += g * g
        self.count += 1
        rms = np.clip(np.sqrt(self.sum_sq / self.count), *self.clip)
        return g / rms


@dataclass
class AdaptionReport:
    td_errors: list = field(default_factory=list)
    thetas: list = field(default_factory=list)
    skipped: int = 0

    def mean_abs_td(self, trailing: int = 144) -> float:
        tail = np.abs(np.asarray(self.td_errors[-trailing:], dtype=float))
        return float(tail.mean()) if tail.size else float("nan")


def run_adaption_phase(loop, budget: int, cfg: TdUpdateConfig = TdUpdateConfig(),
                       trailing: int = 144) -> AdaptionReport:
    """Drive ``loop`` for ``budget`` steps with TD learning.

    ``loop`` is an object with ``theta`` (ThetaParams, read/write),
    ``solve(theta, previous=False)``, which returns the MPC solution at the
    current (or the previous) state or ``None`` on failure, and
    ``advance(solution)``, which applies the input and returns the realised
    stage cost. The orchestrator's closed loop implements this.
    """
    if budget < 1:
        raise ConfigurationError("budget must be >= 1")
    report = AdaptionReport()
    scaler = GradientScaler(loop.theta.size, cfg.rms_clip)
    for _ in range(budget):
        step_td(loop, cfg, scaler, report)
    report.td_errors = report.td_errors[-trailing:] if trailing else report.td_errors
    return report


def step_td(loop, cfg: TdUpdateConfig, scaler: GradientScaler, report: AdaptionReport):
    """One learning step of the adaption phase (act, observe, update)."""
    sol = loop.solve(loop.theta)
    cost = loop.advance(sol)
    if sol is None or not sol.success:
        report.skipped += 1
        report.thetas.append(loop.theta)
        return None
    value, grad = sol.optimal_value, sol.sensitivity
    for j in range(cfg.updates_per_step):
        if j > 0:
            again = loop.solve(loop.theta, previous=True)
            if again is None:
                break
            value, grad = again.optimal_value, again.sensitivity
        nxt = loop.solve(loop.theta)
        if nxt is None:
            report.skipped += 1
            break
        g = scaler(grad) if cfg.normalize else grad
        step = TdStep.make(cost, value, nxt.optimal_value, g, cfg.gamma)
        if not (np.all(np.isfinite(g)) and np.isfinite(step.td_error)):
            report.skipped += 1
            break
        loop.theta = td_update(loop.theta, step, cfg)
        report.td_errors.append(step.td_error)
    report.thetas.append(loop.theta)
    return report.td_errors[-1] if report.td_errors else None
