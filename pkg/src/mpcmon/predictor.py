"""Affine prediction model, its smooth output map, and least-squares sysID."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import casadi as ca
import numpy as np

from .errors import ConfigurationError, IllConditionedError, InsufficientDataError
from .plant import DisturbanceProfile, PlantParams, PlantState, plant_step

# Loads enter the model in MW so that all coefficients are O(1).
LOAD_UNIT = 1.0e6
TEMP_SMOOTHING = 0.5
FLOW_SMOOTHING = 0.05


@dataclass(frozen=True)
class PredictionModel:
    """x+ = A x + B u + E (P / 1 MW) + b, with x = [T_1^s..T_n^s, T0r]."""

    A: np.ndarray
    B: np.ndarray
    E: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        A = np.array(self.A, dtype=float, ndmin=2)
        n_x = A.shape[0]
        B = np.array(self.B, dtype=float).reshape(-1)
        E = np.array(self.E, dtype=float, ndmin=2)
        b = np.array(self.b, dtype=float).reshape(-1)
        if A.shape != (n_x, n_x) or B.shape != (n_x,) or b.shape != (n_x,) or E.shape[0] != n_x:
            raise ConfigurationError("inconsistent prediction model dimensions")
        if E.shape[1] != n_x - 1:
            raise ConfigurationError("E must have n_x - 1 = n_loads columns")
        if not all(np.all(np.isfinite(m)) for m in (A, B, E, b)):
            raise ConfigurationError("prediction model has non-finite entries")
        for name, val in zip("ABEb", (A, B, E, b)):
            val.setflags(write=False)
            object.__setattr__(self, name, val)

    @property
    def n_x(self) -> int:
        return self.A.shape[0]

    @property
    def n_loads(self) -> int:
        return self.E.shape[1]

    @property
    def size(self) -> int:
        return self.n_x * (self.n_x + 1 + self.n_loads + 1)

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.A.ravel(), self.B, self.E.ravel(), self.b])

    @classmethod
    def from_vector(cls, vec, n_loads: int) -> "PredictionModel":
        vec = np.asarray(vec, dtype=float)
        n_x = n_loads + 1
        i = 0
        A = vec[i : i + n_x * n_x].reshape(n_x, n_x)
        i += n_x * n_x
        B = vec[i : i + n_x]
        i += n_x
        E = vec[i : i + n_x * n_loads].reshape(n_x, n_loads)
        i += n_x * n_loads
        b = vec[i : i + n_x]
        if i + n_x != vec.size:
            raise ConfigurationError("model vector has the wrong length")
        return cls(A, B, E, b)

    def names(self) -> list:
        n_x, n_l = self.n_x, self.n_loads
        out = [f"A[{i},{j}]" for i in range(n_x) for j in range(n_x)]
        out += [f"B[{i}]" for i in range(n_x)]
        out += [f"E[{i},{j}]" for i in range(n_x) for j in range(n_l)]
        out += [f"b[{i}]" for i in range(n_x)]
        return out

    @classmethod
    def identity(cls, n_loads: int) -> "PredictionModel":
        n_x = n_loads + 1
        return cls(np.eye(n_x), np.zeros(n_x), np.zeros((n_x, n_loads)), np.zeros(n_x))

    @classmethod
    def from_plant(cls, params: PlantParams) -> "PredictionModel":
        """Exact supply-temperature channels; return temperature relaxes to setpoint - loss."""
        n = params.n_loads
        a = params.dt / params.tau_supply
        ar = params.dt / params.tau_return
        A = np.zeros((n + 1, n + 1))
        A[:n, :n] = np.diag(1.0 - a)
        A[n, n] = 1.0 - ar
        B = np.append(a, 0.0)
        b = np.append(a * (params.actuation_offset - params.loss_supply),
                      ar * (params.consumer_setpoint - params.loss_return))
        return cls(A, B, np.zeros((n + 1, n)), b)

    # -- persistence -------------------------------------------------------

    def save(self, path) -> None:
        """Write a flat text file: a dimension header then row-major blocks."""
        lines = [f"# prediction-model n_x={self.n_x} n_loads={self.n_loads}"]
        for name, mat in (("A", self.A), ("B", self.B[None, :]), ("E", self.E), ("b", self.b[None, :])):
            lines.append(f"{name} {mat.shape[0]} {mat.shape[1]}")
            lines.extend(" ".join(repr(float(v)) for v in row) for row in mat)
        Path(path).write_text("\n".join(lines) + "\n")

    @classmethod
    def load(cls, path) -> "PredictionModel":
        rows = [ln.split() for ln in Path(path).read_text().splitlines() if ln.strip() and not ln.startswith("#")]
        blocks, i = {}, 0
        while i < len(rows):
            name, r, c = rows[i][0], int(rows[i][1]), int(rows[i][2])
            blocks[name] = np.array([[float(v) for v in row] for row in rows[i + 1 : i + 1 + r]]).reshape(r, c)
            i += 1 + r
        try:
            return cls(blocks["A"], blocks["B"].ravel(), blocks["E"], blocks["b"].ravel())
        except KeyError as exc:
            raise ConfigurationError(f"model file {path} lacks block {exc}") from None


@dataclass(frozen=True)
class TransitionRecord:
    x: np.ndarray
    u: float
    loads: np.ndarray
    x_next: np.ndarray


def predict_state(model: PredictionModel, x, u, d) -> PlantState:
    """One-step prediction. ``x``: PlantState or vector; ``d``: Disturbance or load vector."""
    xv = x.as_vector() if isinstance(x, PlantState) else np.asarray(x, dtype=float)
    loads = getattr(d, "load_powers", d)
    loads = np.asarray(loads, dtype=float).reshape(-1)
    if xv.size != model.n_x or loads.size != model.n_loads:
        raise ConfigurationError("state or disturbance dimension does not match the model")
    return PlantState.from_vector(model.A @ xv + model.B * u + model.E @ (loads / LOAD_UNIT) + model.b)


# ---------------------------------------------------------------------------
# Smooth output map (numpy or casadi expressions)
# ---------------------------------------------------------------------------


def _softplus(z, sym: bool):
    if sym:
        return ca.fmax(z, 0) + ca.log1p(ca.exp(-ca.fabs(z)))
    return np.logaddexp(0.0, z)


def smooth_floor(a, floor, width, sym=False):
    return floor + width * _softplus((a - floor) / width, sym)


def smooth_clip(q, lo, hi, width, sym=False):
    q = lo + width * _softplus((q - lo) / width, sym)
    return hi - width * _softplus((hi - q) / width, sym)


def output_terms(supply_temps, return_temp, loads, params: PlantParams, sym=False):
    """Return ``(T0r, q0, T^s, T^c, q^c)`` of the smoothed output map.

    Works elementwise on numpy arrays or on casadi column vectors.
    """
    dtemp = smooth_floor(supply_temps - params.consumer_setpoint, params.temp_floor, TEMP_SMOOTHING, sym)
    raw = loads / (params.cp * dtemp)
    lo, hi = params.flow_min, params.flow_max
    if sym:
        lo, hi = ca.DM(lo), ca.DM(hi)
    q = smooth_clip(raw, lo, hi, FLOW_SMOOTHING, sym)
    tc = supply_temps - loads / (params.cp * q)
    q0 = ca.sum1(q) if sym else float(np.sum(q))
    return return_temp, q0, supply_temps, tc, q


def predict_output(model: PredictionModel, x, u, d, params: PlantParams):
    """Smooth counterpart of the plant's algebraic output map."""
    from .plant import PlantOutput

    xv = x.as_vector() if isinstance(x, PlantState) else np.asarray(x, dtype=float)
    if not np.all(np.isfinite(xv)):
        from .errors import InvalidInputError

        raise InvalidInputError("predict_output received a non-finite state")
    loads = np.asarray(getattr(d, "load_powers", d), dtype=float).reshape(-1)
    tr, q0, ts, tc, q = output_terms(xv[:-1], xv[-1], loads, params)
    return PlantOutput(float(tr), float(q0), np.array(ts), np.asarray(tc), np.asarray(q))


def output_jacobian(x, loads, params: PlantParams) -> np.ndarray:
    """Analytic Jacobian of the stacked output vector with respect to the state."""
    n = params.n_loads
    xs = ca.SX.sym("x", n + 1)
    tr, q0, ts, tc, q = output_terms(xs[:n], xs[n], ca.DM(np.asarray(loads, float)), params, sym=True)
    y = ca.vertcat(tr, q0, ts, tc, q)
    f = ca.Function("dy", [xs], [ca.jacobian(y, xs)])
    return np.array(f(np.asarray(x, float)))


# ---------------------------------------------------------------------------
# System identification
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SysIdResult:
    model: PredictionModel
    rmse: np.ndarray  # per state channel
    condition_number: float


def _regressors(records):
    X = np.array([np.concatenate([r.x, [r.u], np.asarray(r.loads) / LOAD_UNIT, [1.0]]) for r in records])
    Y = np.array([r.x_next for r in records])
    return X, Y


def one_step_rmse(model: PredictionModel, records) -> np.ndarray:
    X, Y = _regressors(records)
    theta = np.hstack([model.A, model.B[:, None], model.E, model.b[:, None]])
    return np.sqrt(np.mean((X @ theta.T - Y) ** 2, axis=0))


def sysid_fit(records, ridge: float = 1e-6) -> SysIdResult:
    """Ridge least squares for ``(A, B, E, b)`` from transition records."""
    records = list(records)
    if not records:
        raise InsufficientDataError("no records")
    n_x = np.asarray(records[0].x).size
    n_l = np.asarray(records[0].loads).size
    n_reg = n_x + 1 + n_l + 1
    if len(records) < n_reg:
        raise InsufficientDataError(f"need at least {n_reg} records, got {len(records)}")
    if ridge < 0:
        raise ConfigurationError("ridge must be >= 0")
    X, Y = _regressors(records)
    if not (np.all(np.isfinite(X)) and np.all(np.isfinite(Y))):
        raise ConfigurationError("non-finite transition records")
    Xa = np.vstack([X, np.sqrt(ridge) * np.eye(n_reg)]) if ridge > 0 else X
    Ya = np.vstack([Y, np.zeros((n_reg, n_x))]) if ridge > 0 else Y
    sv = np.linalg.svd(Xa, compute_uv=False)
    cond = float(sv[0] / sv[-1]) if sv[-1] > 0 else np.inf
    if not np.isfinite(cond) or cond > 1e12:
        raise IllConditionedError(f"regressor matrix is rank deficient (condition number {cond:.3g})")
    theta, *_ = np.linalg.lstsq(Xa, Ya, rcond=None)
    theta = theta.T
    model = PredictionModel(theta[:, :n_x], theta[:, n_x], theta[:, n_x + 1 : n_x + 1 + n_l], theta[:, -1])
    rmse = np.sqrt(np.mean((X @ theta.T - Y) ** 2, axis=0))
    return SysIdResult(model, rmse, cond)


def multilevel_signal(duration: int, amplitude: float, center: float = 75.0, bounds=(65.0, 85.0),
                      hold: int = 3, levels: int = 5, seed: int = 0) -> np.ndarray:
    """Pseudo-random multilevel input held for ``hold`` steps per level, clipped to ``bounds``."""
    rng = np.random.default_rng(seed)
    n_blocks = -(-duration // hold)
    grid = np.linspace(-1.0, 1.0, levels) if levels > 1 else np.zeros(1)
    u = center + amplitude * np.repeat(rng.choice(grid, n_blocks), hold)[:duration]
    return np.clip(u, *bounds)


def collect_excitation(state: PlantState, params: PlantParams, profile: DisturbanceProfile, duration: int,
                       amplitude: float = 10.0, start_step: int = 0, seed: int = 0, bounds=(65.0, 85.0)):
    """Run the plant under a multilevel input and log transitions.

    Returns ``(records, final_state, inputs, outputs)``.
    """
    if duration < 1:
        raise ConfigurationError("duration must be >= 1")
    center = 0.5 * (bounds[0] + bounds[1])
    u_seq = multilevel_signal(duration, amplitude, center, bounds, seed=seed)
    records, outputs = [], []
    x = state
    for j, u in enumerate(u_seq):
        dist = profile.at(start_step + j)
        x_next, out = plant_step(x, float(u), dist, params)
        records.append(TransitionRecord(x.as_vector(), float(u), dist.load_powers.copy(), x_next.as_vector()))
        outputs.append(out)
        x = x_next
    return records, x, u_seq, outputs
