"""Independent reference computations shared by the unit and acceptance tests."""

import numpy as np

from mpcmon.errors import SolverError
from mpcmon.mpc import ThetaParams, TuningParams, n_tuning_vector
from mpcmon.plant import PlantState, generate_disturbance_profile


def random_tuning(rng, n_loads=3) -> TuningParams:
    """Strictly interior tuning parameters (every sign-constrained entry > 0)."""
    n_v = n_tuning_vector(n_loads)
    return TuningParams(rng.uniform(-0.02, 0.02, n_v), rng.uniform(1e-6, 5e-5, n_v), rng.uniform(0.01, 0.5),
                        rng.uniform(60, 80), rng.uniform(0.1, 2.0), rng.uniform(0.1, 2.0))


def random_instance(rng, ctrl, model, dist_cfg, tuning=True):
    """A random state, forecast window and theta for ``ctrl``."""
    prof = generate_disturbance_profile(int(rng.integers(0, 1000)), "baseline", 4 * dist_cfg.steps_per_day, dist_cfg)
    k = int(rng.integers(0, 3 * dist_cfg.steps_per_day))
    x = PlantState(rng.uniform(68, 80, model.n_loads), rng.uniform(40, 50))
    tun = random_tuning(rng, model.n_loads) if tuning else TuningParams.zeros(model.n_loads)
    return x, prof.slice(k, k + ctrl.cfg.horizon + 1), ThetaParams(model, tun)


def fd_gradient(ctrl, sol, rel_step=1e-7) -> np.ndarray:
    """Central differences of the optimal value in every theta component."""
    n_th = ctrl.n_theta
    off = sol.p.size - n_th
    fd = np.empty(n_th)
    for i in range(n_th):
        h = rel_step * max(1.0, abs(sol.p[off + i]))
        plus, minus = sol.p.copy(), sol.p.copy()
        plus[off + i] += h
        minus[off + i] -= h
        fd[i] = (ctrl.solve_packed(plus, sol.warm).optimal_value - ctrl.solve_packed(minus, sol.warm).optimal_value) / (2 * h)
    return fd


def gradient_check(ctrl, model, dist_cfg, count=20, seed=0, max_tries=300):
    """Relative errors ||g - g_fd|| / ||g_fd|| on ``count`` non-degenerate random instances."""
    rng = np.random.default_rng(seed)
    errors, tried = [], 0
    while len(errors) < count and tried < max_tries:
        tried += 1
        x, fc, theta = random_instance(rng, ctrl, model, dist_cfg)
        try:
            sol = ctrl.solve(x, fc, theta)
        except SolverError:
            continue
        if ctrl.degeneracy(sol):
            continue
        fd = fd_gradient(ctrl, sol)
        errors.append(float(np.linalg.norm(sol.sensitivity - fd) / max(np.linalg.norm(fd), 1e-12)))
    return errors, tried
