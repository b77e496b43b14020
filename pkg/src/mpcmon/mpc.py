"""Parameterized economic MPC and its parametric sensitivity.

The NLP is built once per controller with casadi; the state, the
disturbance forecast and the full parameter ``theta = [model, tuning]`` are
NLP parameters, so one compiled solver serves every closed-loop step.
Decision variables are the inputs ``u_0..u_N``, predicted states
``x_1..x_N`` and one nonnegative slack per softened scalar constraint per
predicted stage.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional

import casadi as ca
import numpy as np

from .errors import ConfigurationError, InvalidInputError, SolverError
from .plant import PlantParams, PlantState
from .predictor import LOAD_UNIT, PredictionModel, output_terms

log = logging.getLogger(__name__)

# P_b enters the tuning vector v in MW.
POWER_UNIT = 1.0e6


def n_outputs(n_loads: int) -> int:
    return 2 + 3 * n_loads


def n_tuning_vector(n_loads: int) -> int:
    """Length of v = [u, y, P_b]."""
    return 1 + n_outputs(n_loads) + 1


@dataclass(frozen=True)
class TuningParams:
    """Learnable cost and constraint additions; all terms vanish at zero."""

    linear: np.ndarray
    quadratic: np.ndarray
    terminal_weight: float = 0.0
    terminal_temp: float = 0.0
    flow_backoff: float = 0.0
    temp_backoff: float = 0.0

    def __post_init__(self):
        lin = np.array(self.linear, dtype=float).reshape(-1)
        quad = np.array(self.quadratic, dtype=float).reshape(-1)
        if lin.shape != quad.shape:
            raise ConfigurationError("linear and quadratic penalties must have equal length")
        vals = np.concatenate([lin, quad, [self.terminal_weight, self.terminal_temp, self.flow_backoff, self.temp_backoff]])
        if not np.all(np.isfinite(vals)):
            raise ConfigurationError("tuning parameters must be finite")
        if np.any(quad < 0) or self.terminal_weight < 0 or self.flow_backoff < 0 or self.temp_backoff < 0:
            raise ConfigurationError("quadratic penalties, terminal weight and back-offs must be >= 0")
        lin.setflags(write=False)
        quad.setflags(write=False)
        object.__setattr__(self, "linear", lin)
        object.__setattr__(self, "quadratic", quad)
        for name in ("terminal_weight", "terminal_temp", "flow_backoff", "temp_backoff"):
            object.__setattr__(self, name, float(getattr(self, name)))

    @classmethod
    def zeros(cls, n_loads: int) -> "TuningParams":
        n_v = n_tuning_vector(n_loads)
        return cls(np.zeros(n_v), np.zeros(n_v))

    @property
    def size(self) -> int:
        return 2 * self.linear.size + 4

    def to_vector(self) -> np.ndarray:
        return np.concatenate(
            [self.linear, self.quadratic, [self.terminal_weight, self.terminal_temp, self.flow_backoff, self.temp_backoff]]
        )

    @classmethod
    def from_vector(cls, vec) -> "TuningParams":
        vec = np.asarray(vec, dtype=float)
        n_v = (vec.size - 4) // 2
        if 2 * n_v + 4 != vec.size:
            raise ConfigurationError("tuning vector has the wrong length")
        return cls(vec[:n_v], vec[n_v : 2 * n_v], *vec[2 * n_v :])

    @staticmethod
    def names(n_loads: int) -> list:
        v = ["u", "T0r", "q0"] + [f"Ts{i + 1}" for i in range(n_loads)] + [f"Tc{i + 1}" for i in range(n_loads)]
        v += [f"qc{i + 1}" for i in range(n_loads)] + ["Pb"]
        return [f"f_{s}" for s in v] + [f"Q_{s}" for s in v] + ["omega", "T_term", "dq", "dT"]

    def is_zero(self) -> bool:
        return not np.any(self.to_vector())


@dataclass(frozen=True)
class ThetaParams:
    model: PredictionModel
    tuning: TuningParams

    @property
    def size(self) -> int:
        return self.model.size + self.tuning.size

    def to_vector(self) -> np.ndarray:
        return np.concatenate([self.model.to_vector(), self.tuning.to_vector()])

    @classmethod
    def from_vector(cls, vec, n_loads: int) -> "ThetaParams":
        vec = np.asarray(vec, dtype=float)
        n_m = (n_loads + 1) * (n_loads + 1 + 1 + n_loads + 1)
        return cls(PredictionModel.from_vector(vec[:n_m], n_loads), TuningParams.from_vector(vec[n_m:]))

    def names(self) -> list:
        return self.model.names() + TuningParams.names(self.model.n_loads)

    def with_tuning(self, tuning: TuningParams) -> "ThetaParams":
        return replace(self, tuning=tuning)


@dataclass(frozen=True)
class MpcConfig:
    horizon: int = 72
    slack_penalty: float = 1.0e4
    input_bounds: tuple = (65.0, 85.0)
    station_flow_bounds: tuple = (10.0, 25.0)
    return_temp_ub: float = 75.0
    supply_temp_ub: float = 85.0
    supply_margin: float = 0.1
    tol: float = 1.0e-9
    kkt_tol: float = 1.0e-6
    max_iter: int = 200
    parameterized: bool = True
    trace_path: Optional[str] = None

    def __post_init__(self):
        if self.horizon < 1:
            raise ConfigurationError("horizon must be >= 1")
        if self.slack_penalty <= 0:
            raise ConfigurationError("slack_penalty must be > 0")
        lo, hi = self.input_bounds
        if not lo < hi:
            raise ConfigurationError("input bounds must satisfy lo < hi")
        if self.supply_margin < 0:
            raise ConfigurationError("supply_margin must be >= 0")


@dataclass(frozen=True)
class WarmStart:
    w: np.ndarray
    lam_g: np.ndarray
    lam_x: np.ndarray


@dataclass(frozen=True)
class MpcSolution:
    applied_input: float
    optimal_value: float
    sensitivity: np.ndarray
    kkt_residual: float
    slack_total: float
    states: np.ndarray  # (N+1, n_x), row 0 is the measured state
    outputs: np.ndarray  # (N+1, n_y)
    inputs: np.ndarray  # (N+1,)
    iterations: int
    success: bool
    w: np.ndarray
    lam_g: np.ndarray
    lam_x: np.ndarray
    p: np.ndarray
    horizon: int
    warnings: tuple = ()

    @property
    def warm(self) -> WarmStart:
        return WarmStart(self.w, self.lam_g, self.lam_x)


def _scaled_comp(lam, gap):
    lam = np.abs(lam)
    return lam * np.abs(gap) / np.maximum(1.0, lam)


class MpcController:
    """Compiled NLP for one plant size and horizon; solve() is re-entrant per instance."""

    def __init__(self, plant: PlantParams, cfg: MpcConfig = MpcConfig()):
        self.plant = plant
        self.cfg = cfg
        self.n_loads = n = plant.n_loads
        self.n_x = n + 1
        self.n_y = n_outputs(n)
        self.n_v = n_tuning_vector(n)
        self.n_h = 4 + 2 * n
        self.n_d = n + 3
        self.n_model = self.n_x * (self.n_x + 1 + n + 1)
        self.n_tuning = 2 * self.n_v + 4
        self.n_theta = self.n_model + self.n_tuning
        self._build()

    # -- construction ------------------------------------------------------

    def _build(self):
        cfg, n, N = self.cfg, self.n_loads, self.cfg.horizon
        n_x, n_h = self.n_x, self.n_h
        dt, cp = self.plant.dt, self.plant.cp

        U = ca.SX.sym("u", N + 1)
        X = ca.SX.sym("x", n_x, N)
        S = ca.SX.sym("s", n_h, N)
        x0 = ca.SX.sym("x0", n_x)
        D = ca.SX.sym("d", self.n_d, N + 1)
        th = ca.SX.sym("theta", self.n_theta)

        i = 0
        A = ca.reshape(th[i : i + n_x * n_x], n_x, n_x).T
        i += n_x * n_x
        B = th[i : i + n_x]
        i += n_x
        E = ca.reshape(th[i : i + n_x * n], n, n_x).T
        i += n_x * n
        bias = th[i : i + n_x]
        i += n_x
        f_lin = th[i : i + self.n_v]
        i += self.n_v
        q_diag = th[i : i + self.n_v]
        i += self.n_v
        omega, t_term, dq, dT = th[i], th[i + 1], th[i + 2], th[i + 3]

        states = ca.horzcat(x0, X)
        cost = 0
        g_dyn, g_soft, outs = [], [], []
        for k in range(N + 1):
            xk = states[:, k]
            loads = D[:n, k]
            price, tr_lb, ts_lb = D[n, k], D[n + 1, k], D[n + 2, k]
            tr, q0, ts, tc, qc = output_terms(xk[:n], xk[n], loads, self.plant, sym=True)
            pb = cp * q0 * (U[k] - tr)
            y = ca.vertcat(tr, q0, ts, tc, qc)
            outs.append(y)
            cost += dt * price * pb
            if cfg.parameterized:
                v = ca.vertcat(U[k], y, pb / POWER_UNIT)
                cost += ca.dot(f_lin, v) + ca.dot(q_diag, v * v)
            if k < N:
                g_dyn.append(X[:, k] - (A @ xk + B * U[k] + E @ (loads / LOAD_UNIT) + bias))
            if k >= 1:
                q_lo, q_hi = cfg.station_flow_bounds
                bo_q = dq if cfg.parameterized else 0
                bo_t = dT if cfg.parameterized else 0
                h = [q_lo - q0 + bo_q, q0 - q_hi + bo_q, tr - cfg.return_temp_ub, tr_lb - tr]
                for j in range(n):
                    h += [ts[j] - cfg.supply_temp_ub + bo_t, ts_lb - ts[j] + bo_t + cfg.supply_margin]
                g_soft.append(ca.vertcat(*h) - S[:, k - 1])
        cost += cfg.slack_penalty * ca.sum1(ca.vec(S))
        if cfg.parameterized:
            term = states[:n, N] - t_term
            cost += omega * ca.dot(term, term)

        w = ca.vertcat(U, ca.vec(X), ca.vec(S))
        g = ca.vertcat(*g_dyn, *g_soft)
        p = ca.vertcat(x0, ca.vec(D), th)
        self.n_w = w.numel()
        self.n_g = g.numel()
        self.n_eq = n_x * N
        self.n_p = p.numel()

        lo, hi = cfg.input_bounds
        self.lbw = np.concatenate([np.full(N + 1, lo), np.full(n_x * N, -np.inf), np.zeros(n_h * N)])
        self.ubw = np.concatenate([np.full(N + 1, hi), np.full(n_x * N, np.inf), np.full(n_h * N, np.inf)])
        self.lbg = np.concatenate([np.zeros(self.n_eq), np.full(n_h * N, -np.inf)])
        self.ubg = np.zeros(self.n_g)

        nlp = {"x": w, "p": p, "f": cost, "g": g}
        base = {
            "print_time": False,
            "ipopt.print_level": 0,
            "ipopt.sb": "yes",
            "ipopt.tol": cfg.tol,
            "ipopt.constr_viol_tol": cfg.tol,
            "ipopt.compl_inf_tol": cfg.tol,
            "ipopt.dual_inf_tol": cfg.tol,
            "ipopt.max_iter": cfg.max_iter,
            "ipopt.mu_strategy": "adaptive",
        }
        warm = dict(base)
        warm.update({
            "ipopt.warm_start_init_point": "yes",
            "ipopt.warm_start_bound_push": 1e-9,
            "ipopt.warm_start_bound_frac": 1e-9,
            "ipopt.warm_start_slack_bound_push": 1e-9,
            "ipopt.warm_start_slack_bound_frac": 1e-9,
            "ipopt.warm_start_mult_bound_push": 1e-9,
            "ipopt.mu_init": 1e-7,
        })
        self._cold = ca.nlpsol("mpc_cold", "ipopt", nlp, base)
        self._warm = ca.nlpsol("mpc_warm", "ipopt", nlp, warm)

        lam_g = ca.SX.sym("lam_g", self.n_g)
        lagr = cost + ca.dot(lam_g, g)
        self._sens = ca.Function("sens", [w, lam_g, p], [ca.gradient(lagr, th)])
        lam_x = ca.SX.sym("lam_x", self.n_w)
        self._kkt_parts = ca.Function(
            "kkt", [w, lam_g, lam_x, p], [ca.gradient(cost, w) + ca.mtimes(ca.jacobian(g, w).T, lam_g) + lam_x, g]
        )
        self._jac_g = ca.Function("jac_g", [w, p], [ca.jacobian(g, w)])
        self._out = ca.Function("outs", [w, p], [ca.horzcat(*outs).T])
        self._cost = ca.Function("cost", [w, p], [cost])

    # -- helpers -----------------------------------------------------------

    def pack_parameters(self, x, forecast, theta: ThetaParams) -> np.ndarray:
        xv = x.as_vector() if isinstance(x, PlantState) else np.asarray(x, dtype=float).reshape(-1)
        d = forecast.as_matrix() if hasattr(forecast, "as_matrix") else np.asarray(forecast, dtype=float)
        N = self.cfg.horizon
        if d.shape != (N + 1, self.n_d):
            raise ConfigurationError(f"forecast must have shape ({N + 1}, {self.n_d}), got {d.shape}")
        if xv.size != self.n_x:
            raise ConfigurationError("state dimension mismatch")
        tv = theta.to_vector()
        if tv.size != self.n_theta:
            raise ConfigurationError("theta dimension mismatch")
        p = np.concatenate([xv, d.ravel(), tv])
        if not np.all(np.isfinite(p)):
            raise InvalidInputError("non-finite state, forecast or parameters")
        return p

    def initial_guess(self, p: np.ndarray) -> np.ndarray:
        N, n_x = self.cfg.horizon, self.n_x
        x0 = p[:n_x]
        u0 = np.clip(x0[:-1].mean() + 1.0, *self.cfg.input_bounds)
        return np.concatenate([np.full(N + 1, u0), np.tile(x0, N), np.zeros(self.n_h * N)])

    def kkt_residual(self, w, lam_g, lam_x, p) -> float:
        stat, g = self._kkt_parts(w, lam_g, lam_x, p)
        stat = np.array(stat).ravel()
        g = np.array(g).ravel()
        viol_g = np.maximum(self.lbg - g, 0) + np.maximum(g - self.ubg, 0)
        viol_w = np.maximum(self.lbw - w, 0) + np.maximum(w - self.ubw, 0)
        ineq = np.isinf(self.lbg)
        # complementarity |lambda * gap| scaled by max(1, |lambda|)
        comp_g = _scaled_comp(lam_g[ineq], g[ineq] - self.ubg[ineq])
        lam_x = np.asarray(lam_x)
        with np.errstate(invalid="ignore"):
            dist_w = np.where(lam_x > 0, self.ubw - w, w - self.lbw)
        comp_w = np.where(np.isfinite(dist_w), _scaled_comp(lam_x, np.where(np.isfinite(dist_w), dist_w, 0.0)), 0.0)
        # dual feasibility: sign-correct multipliers on inequality sides
        dual = np.concatenate([np.maximum(-lam_g[ineq], 0), np.where(np.isinf(self.ubw), np.maximum(lam_x, 0), 0),
                               np.where(np.isinf(self.lbw), np.maximum(-lam_x, 0), 0)])
        parts = [np.abs(stat), viol_g, viol_w, comp_g, comp_w, dual]
        return float(max(np.max(a) if a.size else 0.0 for a in parts))

    def _unpack(self, w, p):
        N, n_x = self.cfg.horizon, self.n_x
        u = w[: N + 1]
        xs = w[N + 1 : N + 1 + n_x * N].reshape(N, n_x)
        states = np.vstack([p[:n_x], xs])
        slack = w[N + 1 + n_x * N :]
        outputs = np.array(self._out(w, p))
        return u, states, slack, outputs

    # -- solving -----------------------------------------------------------

    def solve(self, x, forecast, theta: ThetaParams, warm_start: Optional[WarmStart] = None) -> MpcSolution:
        p = self.pack_parameters(x, forecast, theta)
        return self.solve_packed(p, warm_start)

    def solve_packed(self, p: np.ndarray, warm_start: Optional[WarmStart] = None) -> MpcSolution:
        args = dict(p=p, lbx=self.lbw, ubx=self.ubw, lbg=self.lbg, ubg=self.ubg)
        if warm_start is not None:
            solver = self._warm
            args.update(x0=warm_start.w, lam_g0=warm_start.lam_g, lam_x0=warm_start.lam_x)
        else:
            solver = self._cold
            args.update(x0=self.initial_guess(p))
        res = solver(**args)
        stats = solver.stats()
        w = np.array(res["x"]).ravel()
        lam_g = np.array(res["lam_g"]).ravel()
        lam_x = np.array(res["lam_x"]).ravel()
        kkt = self.kkt_residual(w, lam_g, lam_x, p)
        u, states, slack, outputs = self._unpack(w, p)
        u_applied = float(np.clip(u[0], *self.cfg.input_bounds))
        grad = np.array(self._sens(w, lam_g, p)).ravel()
        ok = bool(stats.get("success", False)) and kkt <= self.cfg.kkt_tol
        sol = MpcSolution(
            applied_input=u_applied,
            optimal_value=float(res["f"]),
            sensitivity=grad,
            kkt_residual=kkt,
            slack_total=float(np.sum(np.maximum(slack, 0.0))),
            states=states,
            outputs=outputs,
            inputs=np.clip(u, *self.cfg.input_bounds),
            iterations=int(stats.get("iter_count", -1)),
            success=ok,
            w=w,
            lam_g=lam_g,
            lam_x=lam_x,
            p=p,
            horizon=self.cfg.horizon,
        )
        if self.cfg.trace_path:
            self._trace(sol, stats)
        if not ok:
            raise SolverError(
                f"MPC solve failed: {stats.get('return_status')} after {sol.iterations} iterations (kkt={kkt:.2e})",
                best=sol,
            )
        return sol

    def _trace(self, sol: MpcSolution, stats):
        with open(self.cfg.trace_path, "a") as fh:
            fh.write(
                f"status={stats.get('return_status')}\titer={sol.iterations}\tJ={sol.optimal_value!r}"
                f"\tkkt={sol.kkt_residual:.3e}\tslack={sol.slack_total:.3e}\tu0={sol.applied_input!r}\n"
            )

    # -- sensitivity -------------------------------------------------------

    def value_and_sensitivity(self, sol: MpcSolution, theta: Optional[ThetaParams] = None, check: bool = True):
        """Return ``(J, dJ/dtheta)`` from the Lagrangian at the primal-dual point.

        With ``check`` the active-set Jacobian is tested for rank deficiency
        (non-unique multipliers); the gradient is still returned, with a
        ``RuntimeWarning`` naming the problem.
        """
        p = sol.p
        if theta is not None:
            p = p.copy()
            p[self.n_p - self.n_theta :] = theta.to_vector()
        grad = np.array(self._sens(sol.w, sol.lam_g, p)).ravel()
        value = float(self._cost(sol.w, p))
        if check:
            reason = self.degeneracy(sol)
            if reason:
                warnings.warn(f"sensitivity unreliable: {reason}", RuntimeWarning, stacklevel=2)
        return value, grad

    def active_set(self, sol: MpcSolution, tol: float = 1e-6):
        g = np.array(self._kkt_parts(sol.w, sol.lam_g, sol.lam_x, sol.p)[1]).ravel()
        act_g = np.zeros(self.n_g, dtype=bool)
        act_g[: self.n_eq] = True
        act_g[self.n_eq :] = np.abs(g[self.n_eq :] - self.ubg[self.n_eq :]) <= tol
        act_w = (np.abs(sol.w - self.lbw) <= tol) | (np.abs(sol.w - self.ubw) <= tol)
        return act_g, act_w, g

    def degeneracy(self, sol: MpcSolution, tol: float = 1e-6, mult_tol: float = 1e-9) -> str:
        """Empty string for a non-degenerate KKT point, else a description."""
        act_g, act_w, _ = self.active_set(sol, tol)
        jac = np.array(ca.densify(self._jac_g(sol.w, sol.p)))
        rows = [jac[act_g]]
        if act_w.any():
            rows.append(np.eye(self.n_w)[act_w])
        M = np.vstack(rows)
        rank = np.linalg.matrix_rank(M, tol=1e-9 * max(1.0, np.abs(M).max()))
        if rank < M.shape[0]:
            return f"active constraints are linearly dependent (rank {rank} < {M.shape[0]})"
        weak_g = act_g[self.n_eq :] & (np.abs(sol.lam_g[self.n_eq :]) <= mult_tol)
        weak_w = act_w & (np.abs(sol.lam_x) <= mult_tol)
        if weak_g.any() or weak_w.any():
            return f"{int(weak_g.sum() + weak_w.sum())} weakly active constraint(s) (zero multiplier)"
        return ""


def shift_warm_start(previous, steps: int = 1) -> WarmStart:
    """Shift primal trajectories ``steps`` stages ahead, repeating the last stage."""
    if isinstance(previous, MpcSolution):
        N, w = previous.horizon, previous.w
        lam_g, lam_x = previous.lam_g, previous.lam_x
    else:
        raise ConfigurationError("shift_warm_start needs a previous MpcSolution")
    if steps < 0:
        raise ConfigurationError("steps must be >= 0")
    n_x = previous.states.shape[1]
    n_h = (w.size - (N + 1) - n_x * N) // N

    def shift(blocks):
        if steps == 0:
            return blocks
        k = min(steps, blocks.shape[0])
        return np.vstack([blocks[k:], np.repeat(blocks[-1:], k, axis=0)])

    def split(vec):
        u = vec[: N + 1].reshape(N + 1, 1)
        x = vec[N + 1 : N + 1 + n_x * N].reshape(N, n_x)
        s = vec[N + 1 + n_x * N :].reshape(N, n_h)
        return u, x, s

    def join(u, x, s):
        return np.concatenate([u.ravel(), x.ravel(), s.ravel()])

    w_new = join(*(shift(b) for b in split(w)))
    lx_new = join(*(shift(b) for b in split(lam_x)))
    n_eq = n_x * N
    lg_dyn = shift(lam_g[:n_eq].reshape(N, n_x)).ravel()
    lg_soft = shift(lam_g[n_eq:].reshape(N, n_h)).ravel()
    return WarmStart(w_new, np.concatenate([lg_dyn, lg_soft]), lx_new)


_CONTROLLERS: dict = {}


def get_controller(plant: PlantParams, cfg: MpcConfig) -> MpcController:
    key = (plant.n_loads, plant.dt, plant.cp, plant.consumer_setpoint, plant.temp_floor,
           tuple(plant.flow_min), tuple(plant.flow_max), cfg)
    ctrl = _CONTROLLERS.get(key)
    if ctrl is None:
        ctrl = _CONTROLLERS[key] = MpcController(plant, cfg)
    return ctrl


def solve_mpc(x, dist_forecast, theta: ThetaParams, warm_start=None, plant: PlantParams = PlantParams(),
              cfg: MpcConfig = MpcConfig()) -> MpcSolution:
    """Functional entry point over a cached controller."""
    if isinstance(warm_start, MpcSolution):
        warm_start = warm_start.warm
    return get_controller(plant, cfg).solve(x, dist_forecast, theta, warm_start)


def value_and_sensitivity(solution: MpcSolution, theta: ThetaParams, plant: PlantParams = PlantParams(),
                          cfg: Optional[MpcConfig] = None):
    cfg = cfg or MpcConfig(horizon=solution.horizon)
    return get_controller(plant, cfg).value_and_sensitivity(solution, theta)
