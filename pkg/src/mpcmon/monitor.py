"""Closed-loop performance monitoring with a Hotelling T^2 statistic.

Per-step signals are the station efficiency, the economic stage cost, the
constraint-violation measure and the total load. A window of ``W`` steps is
summarised by the mean and the unbiased variance of each signal, giving an
eight-dimensional feature vector that is scored against a baseline dataset
of windows recorded during acceptable operation.
"""

from __future__ import annotations

import csv
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.special import gammainc

from .errors import ConfigurationError, DegenerateBaselineError, InsufficientDataError, InvalidInputError

N_SIGNALS = 4
N_FEATURES = 2 * N_SIGNALS
SIGNAL_NAMES = ("efficiency", "cost", "violation", "load")
FEATURE_NAMES = tuple(f"f{i + 1}" for i in range(N_FEATURES))
MIN_SAMPLES_PER_DIM = 10
FLOW_LB = 10.0
REG_SCALE = 1e-8
# correlation matrices better conditioned than this are inverted unregularised
COND_LIMIT = 1e8


# ---------------------------------------------------------------------------
# Signals and features
# ---------------------------------------------------------------------------


def violation_measure(station_flow, supply_temp_lb, supply_temps, flow_lb: float = FLOW_LB) -> float:
    """max(0, flow_lb - q0) + sum_i max(0, T_lb - T_i^s)."""
    ts = np.asarray(supply_temps, dtype=float)
    return float(max(0.0, flow_lb - station_flow) + np.maximum(supply_temp_lb - ts, 0.0).sum())


def step_signals(station_power, load_powers, elec_price, station_flow, supply_temp_lb, supply_temps,
                 dt: float, flow_lb: float = FLOW_LB):
    """The four per-step signals and a degenerate-load flag.

    ``station_power`` is in W, prices per Wh-equivalent as used by the MPC
    stage cost, so the cost signal is ``dt * c * P_b``.
    """
    total = float(np.abs(np.asarray(load_powers, dtype=float)).sum())
    degenerate = total == 0.0
    eff = 0.0 if degenerate else station_power / total
    cost = dt * elec_price * station_power
    zeta = violation_measure(station_flow, supply_temp_lb, supply_temps, flow_lb)
    return np.array([eff, cost, zeta, total]), degenerate


@dataclass(frozen=True)
class FeatureVector:
    """Window means (f1..f4) and unbiased variances (f5..f8) of the signals."""

    values: np.ndarray
    degenerate: bool = False

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float).reshape(-1)
        if v.size != N_FEATURES:
            raise ConfigurationError(f"feature vector needs {N_FEATURES} entries")
        object.__setattr__(self, "values", v)

    @property
    def means(self) -> np.ndarray:
        return self.values[:N_SIGNALS]

    @property
    def variances(self) -> np.ndarray:
        return self.values[N_SIGNALS:]


def compute_features(signals, degenerate=None) -> FeatureVector:
    """Features of one window from a ``(W, 4)`` signal array.

    ``degenerate`` is an optional per-step flag array; any flagged step marks
    the whole window.
    """
    s = np.asarray(signals, dtype=float)
    if s.ndim != 2 or s.shape[1] != N_SIGNALS:
        raise ConfigurationError(f"signals must have shape (W, {N_SIGNALS})")
    if s.shape[0] < 2:
        raise InsufficientDataError("a feature window needs at least 2 steps")
    mean = s.mean(axis=0)
    var = s.var(axis=0, ddof=1)
    flag = bool(np.any(degenerate)) if degenerate is not None else False
    return FeatureVector(np.concatenate([mean, var]), flag)


def window_features(signals, window: int, starts, degenerate=None) -> tuple[np.ndarray, np.ndarray]:
    """Feature matrix for windows beginning at ``starts``; returns (Z, flags)."""
    s = np.asarray(signals, dtype=float)
    deg = np.zeros(len(s), dtype=bool) if degenerate is None else np.asarray(degenerate, dtype=bool)
    Z = np.empty((len(starts), N_FEATURES))
    flags = np.zeros(len(starts), dtype=bool)
    for j, k in enumerate(starts):
        fv = compute_features(s[k : k + window], deg[k : k + window])
        Z[j], flags[j] = fv.values, fv.degenerate
    return Z, flags


# ---------------------------------------------------------------------------
# Baseline dataset and T^2
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class BaselineDataset:
    """Feature samples of acceptable operation with their moments.

    The covariance is regularised on the scale of the per-feature standard
    deviations: with ``S = diag(std)`` the inverse used for scoring is
    ``S^-1 (R + lam I)^-1 S^-1`` where ``R`` is the correlation matrix.
    ``lam`` is zero while the condition number of ``R`` stays below
    ``COND_LIMIT`` and ``reg_scale * trace(R) / 8`` otherwise. Features with
    zero spread keep a unit scale so that their regularised variance stays
    tiny.
    """

    samples: np.ndarray
    mean: np.ndarray
    cov: np.ndarray
    inv: np.ndarray
    reg: float
    meta: dict = field(default_factory=dict)

    @property
    def n_samples(self) -> int:
        return self.samples.shape[0]

    @classmethod
    def from_samples(cls, samples, reg_scale: float = REG_SCALE, meta=None, min_samples: int | None = None):
        Z = np.asarray(samples, dtype=float)
        if Z.ndim != 2 or Z.shape[1] != N_FEATURES:
            raise ConfigurationError(f"samples must have shape (n, {N_FEATURES})")
        need = MIN_SAMPLES_PER_DIM * N_FEATURES if min_samples is None else min_samples
        if Z.shape[0] < max(need, 2):
            raise InsufficientDataError(f"baseline needs at least {need} samples, got {Z.shape[0]}")
        if not np.all(np.isfinite(Z)):
            raise InvalidInputError("non-finite baseline samples")
        mean = Z.mean(axis=0)
        cov = np.cov(Z, rowvar=False, ddof=1)
        return cls.from_moments(mean, cov, reg_scale, samples=Z, meta=meta)

    @classmethod
    def from_moments(cls, mean, cov, reg_scale: float = REG_SCALE, samples=None, meta=None):
        mean = np.asarray(mean, dtype=float).reshape(-1)
        cov = np.asarray(cov, dtype=float)
        cov = 0.5 * (cov + cov.T)
        std = np.sqrt(np.clip(np.diag(cov), 0.0, None))
        scale = np.where(std > 0, std, 1.0)
        corr = cov / np.outer(scale, scale)
        eig = np.linalg.eigvalsh(corr)
        lam = 0.0 if eig[0] * COND_LIMIT >= eig[-1] > 0 else reg_scale * np.trace(corr) / N_FEATURES
        reg = corr + lam * np.eye(mean.size)
        eig = np.linalg.eigvalsh(reg)
        if eig[0] <= 0 or eig[-1] / eig[0] > 1e14:
            raise DegenerateBaselineError(_collinear_message(corr))
        inv = np.linalg.inv(reg) / np.outer(scale, scale)
        inv = 0.5 * (inv + inv.T)
        Z = np.empty((0, mean.size)) if samples is None else np.asarray(samples, dtype=float)
        return cls(Z, mean, cov, inv, float(lam), dict(meta or {}))

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Write the samples as a delimited table plus a JSON sidecar."""
        path = Path(path)
        with path.open("w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(FEATURE_NAMES)
            for row in self.samples:
                w.writerow([repr(float(v)) for v in row])
        sidecar(path).write_text(json.dumps(self.meta, indent=2, sort_keys=True) + "\n")

    @classmethod
    def load(cls, path, reg_scale: float = REG_SCALE) -> "BaselineDataset":
        path = Path(path)
        with path.open(newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or tuple(rows[0]) != FEATURE_NAMES:
            raise ConfigurationError(f"{path}: expected header {','.join(FEATURE_NAMES)}")
        Z = np.array([[float(v) for v in r] for r in rows[1:]])
        meta_path = sidecar(path)
        meta = json.loads(meta_path.read_text()) if meta_path.exists() else {}
        return cls.from_samples(Z, reg_scale, meta)


def sidecar(path) -> Path:
    path = Path(path)
    return path.with_name(path.stem + ".meta.json")


def _collinear_message(corr) -> str:
    c = np.abs(np.nan_to_num(corr, nan=0.0) - np.diag(np.diag(corr)))
    i, j = np.unravel_index(np.argmax(c), c.shape)
    return (f"baseline covariance is singular; features {FEATURE_NAMES[i]} and {FEATURE_NAMES[j]} "
            f"are collinear (|corr| = {c[i, j]:.6f})")


def build_baseline(signals, window: int, num_samples: int, rng_seed: int, degenerate=None,
                   reg_scale: float = REG_SCALE, meta=None) -> BaselineDataset:
    """Sample window starts uniformly over the run and fit the baseline moments.

    Windows containing degenerate-load steps are dropped before fitting.
    """
    s = np.asarray(signals, dtype=float)
    n_start = len(s) - window + 1
    if window < 2 or n_start < 1:
        raise InsufficientDataError("run is shorter than one feature window")
    need = MIN_SAMPLES_PER_DIM * N_FEATURES
    if num_samples < need:
        raise InsufficientDataError(f"num_samples must be >= {need}")
    rng = np.random.default_rng(rng_seed)
    starts = rng.integers(0, n_start, size=num_samples)
    Z, flags = window_features(s, window, starts, degenerate)
    info = {"seed": int(rng_seed), "window": int(window), "num_samples": int(num_samples),
            "dropped_degenerate": int(flags.sum())}
    info.update(meta or {})
    return BaselineDataset.from_samples(Z[~flags], reg_scale, info)


def t2_score(z, baseline: BaselineDataset) -> float:
    """(z - mu)^T Sigma^-1 (z - mu) with the regularised inverse."""
    v = z.values if isinstance(z, FeatureVector) else np.asarray(z, dtype=float).reshape(-1)
    if not np.all(np.isfinite(v)):
        raise InvalidInputError("non-finite feature vector")
    d = v - baseline.mean
    return float(max(d @ baseline.inv @ d, 0.0))


def threshold_alpha(dim: int = N_FEATURES, confidence: float = 0.95, tol: float = 1e-12) -> float:
    """Chi-squared quantile by bisection on the regularised lower incomplete gamma."""
    if not 0.0 < confidence < 1.0:
        raise ConfigurationError("confidence must lie in (0, 1)")
    if dim < 1:
        raise ConfigurationError("dim must be >= 1")
    k = 0.5 * dim
    lo, hi = 0.0, max(1.0, float(dim))
    while gammainc(k, 0.5 * hi) < confidence:
        hi *= 2.0
    while hi - lo > tol * max(1.0, hi):
        mid = 0.5 * (lo + hi)
        if gammainc(k, 0.5 * mid) < confidence:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


@dataclass(frozen=True)
class MonitorVerdict:
    t2_score: float = 0.0
    alpha: float = 0.0
    acceptable: bool = True
    consecutive_violations: int = 0


def update_verdict(prev: MonitorVerdict, t2: float, alpha: float) -> MonitorVerdict:
    ok = t2 <= alpha
    count = 0 if ok else prev.consecutive_violations + 1
    return MonitorVerdict(float(t2), float(alpha), bool(ok), count)
