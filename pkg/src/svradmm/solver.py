"""Variance-reduced stochastic ADMM engine.

Implements the per-iteration updates (y prox step, exact or linearized x
step, dual ascent), the once-per-stage snapshot full gradient, the dual
initialization through the transpose pseudo-solve, and the three drivers:

  solve_strongly_convex : per-stage outputs restart the next stage and the
                          dual is re-initialized from the snapshot gradient;
  solve_general_convex  : stages continue from last iterates, the reported
                          solution is the ergodic average of stage averages;
  solve_nonconvex       : stages continue from last iterates, the output is
                          a uniformly random inner iterate (reservoir).

A short OPG warm start (plain mini-batch gradient, decaying stepsize) is
available for initialization.
"""

import time
from dataclasses import dataclass, field, replace

import numpy as np
import scipy.linalg

from . import kernels
from .matspec import min_norm_transpose_solve
from .problems import ConstrainedProblem, SmoothSum, full_gradient

VARIANTS = ("strongly_convex", "general_convex", "nonconvex")
UPDATE_MODES = ("exact", "linearized")
AVERAGING = ("stage_average", "last_iterate")


class ConfigError(ValueError):
    pass


class DivergenceError(RuntimeError):
    """A non-finite iterate appeared; carries the partial result."""

    def __init__(self, message, result=None):
        super().__init__(message)
        self.result = result


@dataclass
class SolverConfig:
    eta: float
    rho: float
    m: int
    b: int
    stages: int
    variant: str = "general_convex"
    update_mode: str = "linearized"
    gamma: float | None = None          # None: use gamma_min (theory mode)
    averaging: str = "last_iterate"
    seed: int = 0
    warm_start: int = 0                 # OPG iterations before the main run

    def validate(self, n=None):
        if self.eta <= 0 or self.rho <= 0:
            raise ConfigError("eta and rho must be positive")
        if self.m < 0 or self.stages < 0 or self.b < 1:
            raise ConfigError("m, stages must be >= 0 and b >= 1")
        if n is not None and self.b > n:
            raise ConfigError(f"mini-batch size {self.b} exceeds n = {n}")
        if self.variant not in VARIANTS:
            raise ConfigError(f"variant must be one of {VARIANTS}")
        if self.update_mode not in UPDATE_MODES:
            raise ConfigError(f"update_mode must be one of {UPDATE_MODES}")
        if self.averaging not in AVERAGING:
            raise ConfigError(f"averaging must be one of {AVERAGING}")
        if self.update_mode == "linearized" and self.gamma is not None and self.gamma < 1:
            raise ConfigError("linearized mode needs gamma >= 1")
        if self.warm_start < 0:
            raise ConfigError("warm_start iterations must be >= 0")


@dataclass
class SolverState:
    x: np.ndarray
    y: np.ndarray
    u: np.ndarray
    x_snapshot: np.ndarray
    z_snapshot: np.ndarray
    stage: int = 0
    iter_in_stage: int = 0
    rng: np.random.Generator = None
    aux_rng: np.random.Generator = None
    epochs: float = 0.0


@dataclass
class RunResult:
    x_out: np.ndarray
    y_out: np.ndarray
    u_out: np.ndarray
    stage_points: list = field(default_factory=list)  # per-stage reported (x, y)
    trace: list = field(default_factory=list)
    reservoir_index: int | None = None  # 0-based over all S*m inner iterates
    wall_time: float = 0.0
    total_epochs: float = 0.0


def resolve_gamma(cfg: SolverConfig, p: ConstrainedProblem):
    """Linearization scalar: gamma_min when unset; user value otherwise.

    Returns (gamma, practical) where practical flags a gamma below the
    G >= I threshold (the gamma = 1 benchmarking mode).
    """
    if cfg.update_mode == "exact":
        return None, False
    gmin = cfg.eta * cfg.rho * p.spectra.norm_AtA + 1.0
    if cfg.gamma is None:
        return gmin, False
    return float(cfg.gamma), cfg.gamma < gmin * (1.0 - 1e-12)


def vr_gradient(f: SmoothSum, state: SolverState, batch):
    """Mini-batch variance-reduced gradient around the stage snapshot."""
    batch = np.asarray(batch)
    if len(np.unique(batch)) != len(batch):
        raise ConfigError("mini-batch indices must be distinct")
    return kernels.vr_gradient(f.data.features, f.data.labels, f.code,
                               f.l2_strength, state.x, state.x_snapshot,
                               state.z_snapshot, batch)


def y_update(p: ConstrainedProblem, x_prev, u_prev, rho):
    """Exact minimizer of g(y) + rho/2 ||A x_prev + By - c + u_prev||^2."""
    if rho <= 0:
        raise ConfigError("rho must be positive")
    a = p.apply_A(x_prev) - p.c + u_prev
    if p.B_form == "neg_identity":
        return p.g.prox(a, 1.0 / rho)
    return p.g.prox(-a, 1.0 / rho)


def exact_step_factor(p: ConstrainedProblem, eta, rho):
    """Cholesky factor of I/eta + rho A^T A, computed once per run."""
    M = np.eye(p.d) / eta + rho * (p.A.entries.T @ p.A.entries)
    return scipy.linalg.cho_factor(M)


def x_update_exact(p, x_prev, grad_hat, y_t, u_prev, eta, rho, factor=None):
    """Closed-form minimizer of the G = I subproblem.

    Solves (I/eta + rho A^T A) x = x_prev/eta - grad_hat - rho A^T(By - c + u);
    the minus sign is the one consistent with the subproblem's optimality
    condition and with the linearized update.
    """
    if factor is None:
        factor = exact_step_factor(p, eta, rho)
    rhs = x_prev / eta - grad_hat - rho * p.apply_At(p.apply_B(y_t) - p.c + u_prev)
    return scipy.linalg.cho_solve(factor, rhs)


def x_update_linearized(p, x_prev, grad_hat, y_t, u_prev, eta, rho, gamma):
    """Inexact-Uzawa step with G = gamma I - eta rho A^T A."""
    r = p.apply_A(x_prev) + p.apply_B(y_t) - p.c + u_prev
    return x_prev - (eta / gamma) * (grad_hat + rho * p.apply_At(r))


def u_update(u_prev, x_t, y_t, p: ConstrainedProblem):
    """Scaled dual ascent on the constraint residual."""
    return u_prev + p.residual(x_t, y_t)


def dual_init(p: ConstrainedProblem, x_tilde, rho, grad=None):
    """u = -(1/rho) (A^T)^+ grad f(x_tilde)."""
    if rho <= 0:
        raise ConfigError("rho must be positive")
    if grad is None:
        grad = full_gradient(p.f, x_tilde)
    return -min_norm_transpose_solve(p.A, grad) / rho


def _draw_batch(rng, n, b):
    if b == n:
        return np.arange(n)
    return rng.choice(n, size=b, replace=False)


def _check_finite(result, *vecs):
    for v in vecs:
        if not np.all(np.isfinite(v)):
            raise DivergenceError("non-finite iterate encountered", result)


class _Reservoir:
    """Single-slot uniform sample over a stream of iterates."""

    def __init__(self, rng):
        self.rng = rng
        self.count = 0
        self.index = None
        self.value = None

    def offer(self, value):
        self.count += 1
        if self.rng.random() < 1.0 / self.count:
            self.index = self.count - 1
            self.value = tuple(np.copy(v) for v in value)


def run_stage(p, cfg, state, gamma=None, factor=None, observer=None,
              reservoir=None, result=None):
    """Execute m inner iterations; returns (sum_x, sum_y) for averaging.

    The snapshot (x_snapshot, z_snapshot) must be current for this stage.
    """
    n = p.f.n
    sum_x = np.zeros(p.d)
    sum_y = np.zeros(p.m_rows)
    for t in range(1, cfg.m + 1):
        batch = _draw_batch(state.rng, n, cfg.b)
        y_t = y_update(p, state.x, state.u, cfg.rho)
        grad_hat = vr_gradient(p.f, state, batch)
        if cfg.update_mode == "exact":
            x_t = x_update_exact(p, state.x, grad_hat, y_t, state.u,
                                 cfg.eta, cfg.rho, factor)
        else:
            x_t = x_update_linearized(p, state.x, grad_hat, y_t, state.u,
                                      cfg.eta, cfg.rho, gamma)
        u_t = u_update(state.u, x_t, y_t, p)
        state.x, state.y, state.u = x_t, y_t, u_t
        state.iter_in_stage = t
        state.epochs += cfg.b / n
        _check_finite(result, x_t, y_t, u_t)
        sum_x += x_t
        sum_y += y_t
        if reservoir is not None:
            reservoir.offer((x_t, y_t, u_t))
        if observer is not None:
            observer(state.stage, t, state.epochs, x_t, y_t, u_t)
    return sum_x, sum_y


def opg_warmstart(p: ConstrainedProblem, cfg: SolverConfig, iterations,
                  rng=None, decay=True, observer=None):
    """OPG-ADMM initialization: plain mini-batch gradient, no variance
    reduction, stepsize eta/sqrt(t) (or constant with decay=False).

    Returns (x, y, u, epochs_used).  Draws batches from the supplied rng so
    a subsequent main run shares one deterministic stream.
    """
    if iterations < 0:
        raise ConfigError("warm start iterations must be >= 0")
    if rng is None:
        rng = np.random.default_rng(cfg.seed)
    n = p.f.n
    x = np.zeros(p.d)
    u = np.zeros(p.m_rows)
    y = y_update(p, x, u, cfg.rho)
    epochs = 0.0
    for t in range(1, iterations + 1):
        batch = _draw_batch(rng, n, cfg.b)
        eta_t = cfg.eta / np.sqrt(t) if decay else cfg.eta
        y = y_update(p, x, u, cfg.rho)
        grad = kernels.batch_gradient(p.f.data.features, p.f.data.labels,
                                      p.f.code, p.f.l2_strength, x, batch)
        if cfg.update_mode == "exact":
            x = x_update_exact(p, x, grad, y, u, eta_t, cfg.rho)
        else:
            if cfg.gamma is not None:
                g = float(cfg.gamma)
            else:
                g = eta_t * cfg.rho * p.spectra.norm_AtA + 1.0
            x = x_update_linearized(p, x, grad, y, u, eta_t, cfg.rho, g)
        u = u_update(u, x, y, p)
        epochs += cfg.b / n
        _check_finite(None, x, y, u)
        if observer is not None:
            observer(0, t, epochs, x, y, u)
    return x, y, u, epochs


def _init_run(p, cfg, x0, y0, u0):
    cfg.validate(p.f.n)
    ss = np.random.SeedSequence(cfg.seed)
    child = ss.spawn(2)
    rng = np.random.default_rng(child[0])
    aux_rng = np.random.default_rng(child[1])
    epochs = 0.0
    if cfg.warm_start > 0:
        x, y, u, epochs = opg_warmstart(p, cfg, cfg.warm_start, rng=rng)
    else:
        x = np.zeros(p.d) if x0 is None else np.array(x0, dtype=float)
        u = np.zeros(p.m_rows) if u0 is None else np.array(u0, dtype=float)
        y = y_update(p, x, u, cfg.rho) if y0 is None else np.array(y0, dtype=float)
    state = SolverState(x=x, y=y, u=u, x_snapshot=x.copy(),
                        z_snapshot=np.zeros(p.d), rng=rng, aux_rng=aux_rng,
                        epochs=epochs)
    return state


def solve_strongly_convex(p: ConstrainedProblem, cfg: SolverConfig,
                          observer=None, x0=None, y0=None) -> RunResult:
    """Linear-rate driver: stage outputs restart the next stage and the
    dual is re-initialized from the per-stage snapshot gradient."""
    if cfg.variant != "strongly_convex":
        raise ConfigError("config variant must be strongly_convex")
    if p.f.lambda_f <= 0:
        raise ConfigError("f has no strong convexity (lambda_f = 0); "
                          "use the general_convex variant")
    t0 = time.monotonic()
    gamma, _ = resolve_gamma(cfg, p)
    factor = exact_step_factor(p, cfg.eta, cfg.rho) if cfg.update_mode == "exact" else None
    state = _init_run(p, cfg, x0, y0, None)
    result = RunResult(x_out=state.x, y_out=state.y, u_out=state.u)

    # One full gradient per stage boundary serves both the dual
    # re-initialization at x_tilde and the next stage's snapshot.
    grad_tilde = full_gradient(p.f, state.x)
    state.epochs += 1.0
    state.u = dual_init(p, state.x, cfg.rho, grad=grad_tilde)
    if observer is not None:
        observer(0, 0, state.epochs, state.x, state.y, state.u)
    x_tilde, y_tilde = state.x.copy(), state.y.copy()
    for s in range(1, cfg.stages + 1):
        state.stage = s
        state.x = x_tilde.copy()
        state.y = y_tilde.copy()
        state.x_snapshot = x_tilde.copy()
        state.z_snapshot = grad_tilde
        sum_x, sum_y = run_stage(p, cfg, state, gamma=gamma, factor=factor,
                                 observer=observer, result=result)
        if cfg.averaging == "stage_average" and cfg.m > 0:
            x_tilde = sum_x / cfg.m
            y_tilde = sum_y / cfg.m
        else:
            x_tilde, y_tilde = state.x.copy(), state.y.copy()
        grad_tilde = full_gradient(p.f, x_tilde)
        state.epochs += 1.0
        state.u = dual_init(p, x_tilde, cfg.rho, grad=grad_tilde)
        result.stage_points.append((x_tilde.copy(), y_tilde.copy()))
    result.x_out, result.y_out, result.u_out = x_tilde, y_tilde, state.u
    result.wall_time = time.monotonic() - t0
    result.total_epochs = state.epochs
    return result


def solve_general_convex(p: ConstrainedProblem, cfg: SolverConfig,
                         observer=None, x0=None, y0=None, u0=None) -> RunResult:
    """O(1/s) driver: stages continue from last iterates; the reported
    solution is the running ergodic average of the stage averages."""
    if cfg.variant != "general_convex":
        raise ConfigError("config variant must be general_convex")
    t0 = time.monotonic()
    gamma, _ = resolve_gamma(cfg, p)
    factor = exact_step_factor(p, cfg.eta, cfg.rho) if cfg.update_mode == "exact" else None
    state = _init_run(p, cfg, x0, y0, u0)
    result = RunResult(x_out=state.x, y_out=state.y, u_out=state.u)
    if observer is not None:
        observer(0, 0, state.epochs, state.x, state.y, state.u)
    x_tilde = state.x.copy()
    bar_x = np.zeros(p.d)
    bar_y = np.zeros(p.m_rows)
    for s in range(1, cfg.stages + 1):
        state.stage = s
        state.x_snapshot = x_tilde.copy()
        state.z_snapshot = full_gradient(p.f, x_tilde)
        state.epochs += 1.0
        sum_x, sum_y = run_stage(p, cfg, state, gamma=gamma, factor=factor,
                                 observer=observer, result=result)
        if cfg.averaging == "stage_average" and cfg.m > 0:
            x_tilde = sum_x / cfg.m
            y_tilde = sum_y / cfg.m
        else:
            x_tilde, y_tilde = state.x.copy(), state.y.copy()
        bar_x += (x_tilde - bar_x) / s
        bar_y += (y_tilde - bar_y) / s
        result.stage_points.append((bar_x.copy(), bar_y.copy()))
    if cfg.stages > 0:
        result.x_out, result.y_out = bar_x, bar_y
        result.u_out = state.u
    result.wall_time = time.monotonic() - t0
    result.total_epochs = state.epochs
    return result


def solve_nonconvex(p: ConstrainedProblem, cfg: SolverConfig,
                    observer=None, x0=None, y0=None, u0=None) -> RunResult:
    """O(1/T) driver for nonconvex f: stages continue from last iterates and
    the output iterate is drawn uniformly over all S*m inner iterates."""
    if cfg.variant != "nonconvex":
        raise ConfigError("config variant must be nonconvex")
    if p.g.kind not in ("l1", "zero"):
        raise ConfigError("nonconvex driver requires a convex g with a prox")
    t0 = time.monotonic()
    gamma, _ = resolve_gamma(cfg, p)
    factor = exact_step_factor(p, cfg.eta, cfg.rho) if cfg.update_mode == "exact" else None
    state = _init_run(p, cfg, x0, y0, u0)
    result = RunResult(x_out=state.x, y_out=state.y, u_out=state.u)
    reservoir = _Reservoir(state.aux_rng)
    if observer is not None:
        observer(0, 0, state.epochs, state.x, state.y, state.u)
    for s in range(1, cfg.stages + 1):
        state.stage = s
        state.x_snapshot = state.x.copy()
        state.z_snapshot = full_gradient(p.f, state.x)
        state.epochs += 1.0
        run_stage(p, cfg, state, gamma=gamma, factor=factor,
                  observer=observer, reservoir=reservoir, result=result)
        result.stage_points.append((state.x.copy(), state.y.copy()))
    if reservoir.value is not None:
        result.x_out, result.y_out, result.u_out = reservoir.value
        result.reservoir_index = reservoir.index
    else:
        result.x_out, result.y_out, result.u_out = state.x, state.y, state.u
    result.wall_time = time.monotonic() - t0
    result.total_epochs = state.epochs
    return result


_DRIVERS = {
    "strongly_convex": solve_strongly_convex,
    "general_convex": solve_general_convex,
    "nonconvex": solve_nonconvex,
}


def solve(p: ConstrainedProblem, cfg: SolverConfig, **kwargs) -> RunResult:
    """Dispatch to the driver selected by cfg.variant."""
    return _DRIVERS[cfg.variant](p, cfg, **kwargs)
