"""Convergence and stationarity diagnostics.

Bregman-type suboptimality R, the shifted objective J, the augmented
Lagrangian and its proximal-gradient stationarity measure, the empirical
variance of the reduced gradient, trace collection, and the high-accuracy
batch reference solve that R and J depend on.
"""

import itertools
import math
from dataclasses import dataclass

import numpy as np

from . import solver
from .problems import (ConstrainedProblem, full_gradient, loss_total,
                       objective)


class MetricsError(ValueError):
    pass


@dataclass
class ReferenceSolution:
    """High-accuracy (x*, y*, u*) with the subgradient of g at y*.

    quality is the worst optimality-condition residual (constraint,
    x-gradient, y prox residual) at the point.
    """

    x_star: np.ndarray
    y_star: np.ndarray
    u_star: np.ndarray
    rho: float
    g_subgrad_at_ystar: np.ndarray
    quality: float

    def check(self, p: ConstrainedProblem, feas_tol=1e-8, grad_tol=1e-6):
        feas = np.linalg.norm(p.residual(self.x_star, self.y_star))
        if feas > feas_tol:
            raise MetricsError(f"reference infeasible: ||r|| = {feas:.3e}")
        gx = full_gradient(p.f, self.x_star) + self.rho * p.apply_At(self.u_star)
        if np.linalg.norm(gx) > grad_tol:
            raise MetricsError(
                f"reference x-optimality residual {np.linalg.norm(gx):.3e}")
        gy = self.g_subgrad_at_ystar + self.rho * p.B_sign * self.u_star
        if np.linalg.norm(gy) > grad_tol:
            raise MetricsError(
                f"reference y-optimality residual {np.linalg.norm(gy):.3e}")
        lam = p.g.weight
        if p.g.kind == "l1" and lam > 0:
            if np.any(np.abs(self.g_subgrad_at_ystar) > lam * (1 + 1e-9)):
                raise MetricsError("g subgradient outside lambda * [-1, 1]")
            active = np.abs(self.y_star) > 1e-7
            sign_err = np.abs(self.g_subgrad_at_ystar[active]
                              - lam * np.sign(self.y_star[active]))
            if active.any() and sign_err.max() > 1e-5 * max(lam, 1.0):
                raise MetricsError("g subgradient inconsistent with sign(y*)")


@dataclass
class TraceRecord:
    stage: int
    iter: int
    epochs: float
    time_s: float
    objective: float
    feasibility: float
    R: float | None = None
    prox_grad_sq: float | None = None
    test_loss: float | None = None


def R_metric(p: ConstrainedProblem, ref: ReferenceSolution, x, y):
    """Bregman suboptimality of (x, y) against the reference; >= 0."""
    gx_star = full_gradient(p.f, ref.x_star)
    fx = loss_total(p.f, x)
    fxs = loss_total(p.f, ref.x_star)
    r = fx - fxs - float(gx_star @ (np.asarray(x) - ref.x_star))
    r += (p.g.value(y) - p.g.value(ref.y_star)
          - float(ref.g_subgrad_at_ystar @ (np.asarray(y) - ref.y_star)))
    return r


def J_metric(p: ConstrainedProblem, ref: ReferenceSolution, x):
    """Shifted objective f(x) + rho u*^T A x from the variance bound."""
    return loss_total(p.f, x) + ref.rho * float(ref.u_star @ p.apply_A(x))


def aug_lagrangian(p: ConstrainedProblem, x, y, u, rho):
    """f + g + rho u^T r + rho/2 ||r||^2 with r the constraint residual."""
    r = p.residual(x, y)
    return (loss_total(p.f, x) + p.g.value(y)
            + rho * float(u @ r) + 0.5 * rho * float(r @ r))


def prox_grad_norm_sq(p: ConstrainedProblem, x, y, u, rho):
    """Squared norm of the three-block stationarity measure.

    Blocks: x-gradient of the augmented Lagrangian; the y prox-mapping
    residual y - prox_g(y - rho B^T (r + u)); the constraint residual.
    Zero exactly at KKT points.
    """
    r = p.residual(x, y)
    gx = full_gradient(p.f, x) + rho * p.apply_At(u) + rho * p.apply_At(r)
    q = y - rho * p.B_sign * (r + u)
    y_res = y - p.g.prox(q)
    return float(gx @ gx) + float(y_res @ y_res) + float(r @ r)


def empirical_vr_variance(p: ConstrainedProblem, x, x_snap, b,
                          exhaustive=True, draws=10000, seed=0):
    """E ||grad_hat(x) - grad f(x)||^2 over uniform b-subsets.

    Exhaustive mode enumerates all C(n, b) mini-batches (capped at 1e5);
    otherwise a seeded Monte Carlo estimate over `draws` subsets.
    """
    f = p.f
    n = f.n
    z_snap = full_gradient(f, x_snap)
    g_full = full_gradient(f, x)
    state = solver.SolverState(x=np.asarray(x, float), y=None, u=None,
                               x_snapshot=np.asarray(x_snap, float),
                               z_snapshot=z_snap)
    if exhaustive:
        if math.comb(n, b) > 100_000:
            raise MetricsError(
                f"C({n},{b}) too large for exhaustive mode; use Monte Carlo")
        batches = itertools.combinations(range(n), b)
        total, count = 0.0, 0
        for batch in batches:
            d = solver.vr_gradient(f, state, np.array(batch)) - g_full
            total += float(d @ d)
            count += 1
        return total / count
    rng = np.random.default_rng(seed)
    total = 0.0
    for _ in range(draws):
        batch = rng.choice(n, size=b, replace=False)
        d = solver.vr_gradient(f, state, batch) - g_full
        total += float(d @ d)
    return total / draws


def reference_solve(p: ConstrainedProblem, rho, tol=1e-9, max_iter=500_000,
                    eta=None, check_every=25) -> ReferenceSolution:
    """High-accuracy batch solve (b = n, exact x-update) for (x*, y*, u*).

    Iterates until the worst optimality residual is below tol; the g
    subgradient at y* is recovered as -rho B^T u* and clipped into
    lambda * [-1, 1] so downstream Bregman terms stay nonnegative.
    """
    f = p.f
    if eta is None:
        eta = 1.0 / f.L_f_bound
    factor = solver.exact_step_factor(p, eta, rho)
    x = np.zeros(p.d)
    u = np.zeros(p.m_rows)
    y = solver.y_update(p, x, u, rho)
    quality = np.inf
    for it in range(1, max_iter + 1):
        y = solver.y_update(p, x, u, rho)
        grad = full_gradient(f, x)
        x = solver.x_update_exact(p, x, grad, y, u, eta, rho, factor)
        u = solver.u_update(u, x, y, p)
        if it % check_every == 0 or it == max_iter:
            quality = _opt_residual(p, x, y, u, rho)
            if quality <= tol:
                break
    g_sub = -rho * p.B_sign * u
    if p.g.kind == "l1" and p.g.weight > 0:
        g_sub = np.clip(g_sub, -p.g.weight, p.g.weight)
    elif p.g.kind == "zero" or p.g.weight == 0:
        g_sub = np.zeros_like(u)
    ref = ReferenceSolution(x_star=x, y_star=y, u_star=u, rho=rho,
                            g_subgrad_at_ystar=g_sub, quality=quality)
    if quality <= tol:
        ref.check(p)
    return ref


def _opt_residual(p, x, y, u, rho):
    r = p.residual(x, y)
    gx = full_gradient(p.f, x) + rho * p.apply_At(u) + rho * p.apply_At(r)
    q = y - rho * p.B_sign * (r + u)
    y_res = y - p.g.prox(q)
    return max(np.linalg.norm(r), np.linalg.norm(gx), np.linalg.norm(y_res))


class TraceCollector:
    """Observer for the solver drivers; accumulates TraceRecords.

    cadence "iter" records every inner iteration, "stage" only at t = m
    (and always the initialization row).
    """

    def __init__(self, p, ref=None, test_set=None, rho=None, cadence="iter",
                 m=None, track_prox_grad=False):
        if cadence not in ("iter", "stage"):
            raise MetricsError("cadence must be 'iter' or 'stage'")
        self.p = p
        self.ref = ref
        self.test_set = test_set
        self.rho = rho
        self.cadence = cadence
        self.m = m
        self.track_prox_grad = track_prox_grad
        self.records = []
        import time
        self._clock = time.monotonic
        self._t0 = self._clock()

    def __call__(self, stage, it, epochs, x, y, u):
        if self.cadence == "stage" and not (stage == 0 or it == self.m):
            return
        rec = TraceRecord(
            stage=stage, iter=it, epochs=epochs,
            time_s=self._clock() - self._t0,
            objective=objective(self.p, x),
            feasibility=float(np.linalg.norm(self.p.residual(x, y))))
        if self.ref is not None:
            rec.R = R_metric(self.p, self.ref, x, y)
        if self.track_prox_grad and self.rho is not None:
            rec.prox_grad_sq = prox_grad_norm_sq(self.p, x, y, u, self.rho)
        if self.test_set is not None:
            rec.test_loss = mean_test_loss(self.p.f, self.test_set, x)
        self.records.append(rec)


def mean_test_loss(f, test_set, x):
    """Mean unregularized per-sample loss on a holdout set."""
    from . import kernels
    return kernels.total_loss(test_set.features, test_set.labels, f.code,
                              0.0, np.ascontiguousarray(x, dtype=float))
