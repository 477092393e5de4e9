"""Hyperparameter theory: variance factor, linearization threshold, the
convergence factor kappa and its optimal penalty, the stepsize/inner-loop
schedule, stage counts, the sublinear and batch bounds, and the nonconvex
feasibility condition with its constants.

All formulas are closed-form; the only iteration anywhere is the caller's
own grid scans.
"""

import math
from dataclasses import dataclass

import numpy as np

from .problems import ConstrainedProblem, strong_convexity_modulus


class AdvisorError(ValueError):
    pass


@dataclass(frozen=True)
class ProblemConditioning:
    """Constants the advisor consumes.

    sigma_min_AAt must be positive: for stacked tall constraint matrices
    pass the smallest nonzero eigenvalue (the constraint is injective on x
    there and the dual solve lands in range(A)).
    """

    L_f: float
    lambda_f: float
    L_max: float
    sigma_max_AAt: float
    sigma_min_AAt: float
    n: int

    def __post_init__(self):
        if self.L_f <= 0 or self.L_max <= 0:
            raise AdvisorError("L_f and L_max must be positive")
        if self.sigma_max_AAt <= 0 or self.sigma_min_AAt <= 0:
            raise AdvisorError("sigma_max and sigma_min must be positive")
        if self.n < 1:
            raise AdvisorError("n must be >= 1")
        if self.lambda_f < 0:
            raise AdvisorError("lambda_f must be >= 0")

    @property
    def h_f(self):
        if self.lambda_f <= 0:
            raise AdvisorError("h_f undefined: lambda_f = 0")
        return self.L_f / self.lambda_f

    @property
    def h_A(self):
        return math.sqrt(self.sigma_max_AAt / self.sigma_min_AAt)

    @property
    def h_Q(self):
        if self.lambda_f <= 0:
            raise AdvisorError("h_Q undefined: lambda_f = 0")
        return self.L_max / self.lambda_f


def conditioning_from_problem(p: ConstrainedProblem) -> ProblemConditioning:
    """Read the advisor constants off a constructed problem."""
    lam_f = p.f.lambda_f if p.f.lambda_f > 0 else strong_convexity_modulus(p.f)
    smin = p.spectra.sigma_min_AAt
    if smin <= 0:
        smin = p.spectra.sigma_min_pos_AAt
    return ProblemConditioning(
        L_f=p.f.L_f_bound, lambda_f=lam_f, L_max=p.f.L_max,
        sigma_max_AAt=p.spectra.sigma_max_AAt, sigma_min_AAt=smin, n=p.f.n)


def beta(b, n):
    """Without-replacement mini-batch variance factor (n-b)/(b(n-1))."""
    if n < 1 or not 1 <= b <= n:
        raise AdvisorError(f"need 1 <= b <= n, got b={b}, n={n}")
    if n == 1:
        return 0.0
    return (n - b) / (b * (n - 1))


def gamma_min(eta, rho, norm_AtA):
    """Smallest linearization scalar keeping G = gamma I - eta rho A^T A >= I."""
    if eta <= 0 or rho <= 0 or norm_AtA < 0:
        raise AdvisorError("eta, rho must be positive and ||A^T A|| >= 0")
    return eta * rho * norm_AtA + 1.0


def rho_star(c: ProblemConditioning):
    """Penalty minimizing the convergence factor (same as the batch optimum)."""
    if c.lambda_f <= 0:
        raise AdvisorError("rho_star requires strong convexity (lambda_f > 0)")
    return math.sqrt(c.L_f * c.lambda_f / (c.sigma_max_AAt * c.sigma_min_AAt))


def _eta_cap(c, b, factor=4.0):
    bb = beta(b, c.n)
    cap = 1.0 / c.L_f
    if bb > 0:
        cap = min(cap, 1.0 / (factor * c.L_max * bb))
    return cap


def _eta_ok(c, eta, b, factor=4.0):
    # eta = 1/L_f itself is admitted (the large-batch schedule sits there);
    # the variance cap must stay strict so the 1 - factor*L_max*eta*beta
    # denominator is positive.
    bb = beta(b, c.n)
    if eta <= 0 or eta > 1.0 / c.L_f * (1.0 + 1e-12):
        return False
    if bb > 0 and eta >= 1.0 / (factor * c.L_max * bb):
        return False
    return True


def g_plus_norm(c: ProblemConditioning, eta, rho, update_mode="linearized",
                gamma=None):
    """||G + eta rho A^T A|| for the two update modes.

    Linearized: G + eta rho A^T A = gamma I, so exactly gamma (gamma_min by
    default).  Exact (G = I): 1 + eta rho sigma_max(AA^T).
    """
    if update_mode == "exact":
        return 1.0 + eta * rho * c.sigma_max_AAt
    if gamma is None:
        gamma = gamma_min(eta, rho, c.sigma_max_AAt)
    return gamma


def kappa(c: ProblemConditioning, eta, rho, b, m, update_mode="linearized",
          gamma=None):
    """Per-stage contraction factor of the strongly convex driver."""
    if c.lambda_f <= 0:
        raise AdvisorError("kappa requires lambda_f > 0")
    if m < 1:
        raise AdvisorError("m must be >= 1")
    if rho <= 0:
        raise AdvisorError("rho must be positive")
    bb = beta(b, c.n)
    if not _eta_ok(c, eta, b):
        raise AdvisorError(
            f"eta must lie in (0, {_eta_cap(c, b):.6g}] for this (b, n)")
    denom = 1.0 - 4.0 * c.L_max * eta * bb
    gnorm = g_plus_norm(c, eta, rho, update_mode, gamma)
    term1 = gnorm / (c.lambda_f * eta * denom * m)
    term2 = 4.0 * c.L_max * eta * bb * (m + 1) / (denom * m)
    term3 = c.L_f / (rho * denom * c.sigma_min_AAt * m)
    return term1 + term2 + term3


def kappa_min(c: ProblemConditioning, eta, b, m):
    """Contraction factor at rho = rho_star with gamma = gamma_min."""
    bb = beta(b, c.n)
    if not _eta_ok(c, eta, b):
        raise AdvisorError("eta out of the admissible range")
    denom = 1.0 - 4.0 * c.L_max * eta * bb
    return (1.0 / (c.lambda_f * eta * denom * m)
            + 4.0 * c.L_max * eta * bb * (m + 1) / (denom * m)
            + 2.0 * c.h_A * math.sqrt(c.h_f) / (denom * m))


def batch_threshold(c: ProblemConditioning, kappa_target):
    """Mini-batch size b_star separating the two (eta_star, m_star) regimes."""
    if not 0 < kappa_target < 1:
        raise AdvisorError("kappa_target must lie in (0, 1)")
    kt = kappa_target
    h_A, h_f = c.h_A, c.h_f
    M = (kt * h_f * c.L_f / c.L_max) / (
        8.0 * ((1.0 + kt) * (h_f + h_A * math.sqrt(h_f)) + kt / 2.0))
    return c.n / (M * (c.n - 1) + 1.0) if c.n > 1 else 1.0


def eta_m_star(c: ProblemConditioning, kappa_target, b):
    """Stepsize and minimal inner-iteration count reaching kappa_target at
    rho = rho_star.

    Returns (eta_star, m_star, regime).  The small-batch branch uses the
    delta-shifted root stepsize; at and beyond b_star (in particular at
    b = n where the variance factor vanishes) the cap 1/L_f is optimal.
    """
    if not 0 < kappa_target < 1:
        raise AdvisorError("kappa_target must lie in (0, 1)")
    kt = kappa_target
    bb = beta(b, c.n)
    h_A, h_f, h_Q = c.h_A, c.h_f, c.h_Q
    b_star = batch_threshold(c, kt)
    if bb > 0 and b <= b_star:
        delta = 1.0 / (4.0 * c.L_max * c.lambda_f * bb
                       * (1.0 + 2.0 * (1.0 + 1.0 / kt) * h_A * math.sqrt(h_f)))
        a = (1.0 + kt) / (kt * c.lambda_f
                          + 2.0 * (1.0 + kt) * math.sqrt(c.L_f * c.lambda_f) * h_A)
        eta_star = math.sqrt(a * a + delta) - a
        root = math.sqrt((1.0 + kt) ** 2
                         + kt * kt / (16.0 * bb * bb * c.L_max ** 2 * delta))
        m_star = (8.0 * bb * h_Q / (kt * kt)) * (root + 1.0 + kt) \
            + 2.0 * h_A * math.sqrt(h_f) / kt
        regime = "small_batch"
    else:
        eta_star = 1.0 / c.L_f
        ratio = 4.0 * bb * c.L_max / c.L_f
        denom = kt - (1.0 + kt) * ratio
        if denom <= 0:
            raise AdvisorError("kappa_target unreachable at this batch size")
        m_star = (h_f + ratio + 2.0 * h_A * math.sqrt(h_f)) / denom
        regime = "large_batch"
    if m_star < 1.0:
        m_star = 1.0
    floor = kappa_min_over_m(c, eta_star, b, m_star)
    if floor > kt * (1.0 + 1e-9):
        raise AdvisorError(
            f"target kappa {kt} below the reachable minimum {floor:.6g}")
    return eta_star, m_star, regime


def kappa_min_over_m(c, eta, b, m):
    """kappa at rho_star for the given (eta, m); helper for feasibility."""
    return kappa_min(c, eta, b, m)


def stages_needed(R0, epsilon, kappa_value, delta_prob=None):
    """Stage count for an epsilon-accurate output, in expectation or with
    probability 1 - delta_prob."""
    if not 0 < kappa_value < 1:
        raise AdvisorError("kappa must lie in (0, 1)")
    if R0 <= 0 or epsilon <= 0:
        raise AdvisorError("R0 and epsilon must be positive")
    target = R0 / epsilon
    if delta_prob is not None:
        if not 0 < delta_prob < 1:
            raise AdvisorError("delta_prob must lie in (0, 1)")
        target /= delta_prob
    if target <= 1.0:
        return 0
    return math.ceil(math.log(target) / math.log(1.0 / kappa_value))


def convex_bound(c: ProblemConditioning, eta, rho, b, m, s, bregman0,
                 xdist0_sq_weighted, udist0_sq, zeta=1.0):
    """Right-hand side of the O(1/s) bound for the general convex driver.

    bregman0 is f(x0) - f(x*) - grad f(x*)^T (x0 - x*);
    xdist0_sq_weighted is ||x0 - x*||^2 in the G + eta rho A^T A metric.
    """
    bb = beta(b, c.n)
    if not _eta_ok(c, eta, b, factor=8.0):
        raise AdvisorError(
            f"eta must lie in (0, {_eta_cap(c, b, factor=8.0):.6g}]")
    if m < 1 or s < 1:
        raise AdvisorError("m and s must be >= 1")
    denom = 1.0 - 8.0 * c.L_max * eta * bb
    t1 = 4.0 * c.L_max * eta * bb * (m + 1) / (denom * m * s) * bregman0
    t2 = (xdist0_sq_weighted / (2.0 * eta)
          + rho * (udist0_sq + zeta * zeta / (rho * rho))) / (denom * m * s)
    return t1 + t2


def batch_bound(eta, rho, m, s, xdist0_sq_weighted, udist0_sq, zeta=1.0):
    """Batch (b = n) specialization of the sublinear bound."""
    return (xdist0_sq_weighted / (2.0 * eta * m * s)
            + rho / (m * s) * (udist0_sq + zeta * zeta / (rho * rho)))


def g_norm(c: ProblemConditioning, eta, rho, update_mode="linearized",
           gamma=None):
    """||G|| for the nonconvex condition.

    Exact mode: 1.  Linearized with gamma >= gamma_min: gamma (attained at
    the zero eigenvalue of A^T A when A is square-or-tall, and in any case
    an upper bound).  Practical gamma below gamma_min: largest |gamma -
    eta rho sigma| over the known extreme eigenvalues.
    """
    if update_mode == "exact":
        return 1.0
    if gamma is None:
        return gamma_min(eta, rho, c.sigma_max_AAt)
    gm = gamma_min(eta, rho, c.sigma_max_AAt)
    if gamma >= gm:
        return float(gamma)
    return max(abs(gamma - eta * rho * c.sigma_max_AAt),
               abs(gamma - eta * rho * c.sigma_min_AAt),
               abs(gamma))


def nc_condition_check(c: ProblemConditioning, eta, rho, m, b,
                       update_mode="linearized", gamma=None):
    """Feasibility of (eta, rho) for the nonconvex rate guarantee.

    Returns (feasible, lhs) where lhs is the value that must not exceed 1;
    feasibility also requires eta < 1/(2 L_f) and rho >= 4 L_f / sigma_min.
    """
    if eta <= 0 or rho <= 0 or m < 1 or b < 1:
        raise AdvisorError("eta, rho, m, b must be positive")
    bb = beta(b, c.n)
    Gn = g_norm(c, eta, rho, update_mode, gamma)
    smin = c.sigma_min_AAt
    Lm = c.L_max
    lhs = (8.0 * Lm * Lm * m * m * bb * eta * eta
           + Lm * eta
           + 36.0 * Gn / (eta * rho * smin)
           + 36.0 * Lm * math.sqrt(Gn) / (rho * smin)
           + (288.0 * Lm * Lm * m * m / smin
              + 216.0 * Lm * Lm * (m + 1) / smin
              + 18.0 * Lm * Lm / smin) * (eta / rho))
    feasible = (lhs <= 1.0
                and eta < 1.0 / (2.0 * c.L_f)
                and rho >= 4.0 * c.L_f / smin)
    return feasible, lhs


def nc_constants(c: ProblemConditioning, eta, rho, update_mode="linearized",
                 gamma=None, norm_B=1.0):
    """(C1, C2, C) controlling the nonconvex O(1/T) bound.

    B is +-I here, so ||B|| = ||B^T A|| / ||A|| = 1.
    """
    if eta <= 0 or rho <= 0:
        raise AdvisorError("eta and rho must be positive")
    if eta >= 1.0 / (2.0 * c.L_f):
        raise AdvisorError("eta must be below 1/(2 L_f) so C2 > 0")
    norm_A = math.sqrt(c.sigma_max_AAt)
    norm_AtA = c.sigma_max_AAt
    # ||G - eta rho A^T A|| over the known extreme eigenvalues of A^T A
    # (including 0 when A is a tall stack).
    if update_mode == "exact":
        # G = I: G - eta rho A^T A has eigenvalues 1 - eta rho sigma.
        g_shift = max(abs(1.0 - eta * rho * s) for s in
                      (0.0, c.sigma_min_AAt, c.sigma_max_AAt))
    else:
        if gamma is None:
            gamma = gamma_min(eta, rho, c.sigma_max_AAt)
        g_shift = max(abs(gamma - 2.0 * eta * rho * s) for s in
                      (0.0, c.sigma_min_AAt, c.sigma_max_AAt))
    C1 = max(3.0 * (c.L_f + rho * norm_AtA) ** 2
             + 2.0 * rho * rho * (norm_B * norm_A) ** 2,
             3.0 / (eta * eta) * g_shift * g_shift,
             3.0 * rho * rho * norm_A * norm_A
             + 2.0 * rho * rho * norm_B * norm_B + 1.0)
    C2 = min(1.0 / (2.0 * eta) - c.L_f, 1.0 / (4.0 * eta), rho / 2.0)
    if C2 <= 0:
        raise AdvisorError("C2 <= 0: eta too large")
    return C1, C2, C1 / C2
