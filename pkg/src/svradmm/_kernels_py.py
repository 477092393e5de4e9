"""Pure-numpy gradient kernels (fallback backend).

These are the hot inner-loop primitives of the stochastic solver: per-sample
loss/gradient sums over a mini-batch or the full data set.  The compiled
backend in ``_kernels_c`` implements the same contracts; ``kernels`` picks
one at import time.

Loss codes: 0 = logistic, 1 = squared, 2 = sigmoid.  All losses are written
in margin form t = z_i^T x:

    logistic: log(1 + exp(-o t))
    squared : (o - t)^2 / 2
    sigmoid : 1 / (1 + exp(o t))
"""

import numpy as np
from scipy.special import expit

LOGISTIC = 0
SQUARED = 1
SIGMOID = 2

BACKEND = "python"


def _margin_coeff(kind, t, o):
    """Derivative of the per-sample loss w.r.t. the margin t."""
    if kind == LOGISTIC:
        return -o * expit(-o * t)
    if kind == SQUARED:
        return t - o
    if kind == SIGMOID:
        s = expit(o * t)
        return -o * s * (1.0 - s)
    raise ValueError(f"unknown loss code {kind}")


def _margin_value(kind, t, o):
    """Per-sample loss value at margin t."""
    if kind == LOGISTIC:
        return np.logaddexp(0.0, -o * t)
    if kind == SQUARED:
        return 0.5 * (o - t) ** 2
    if kind == SIGMOID:
        return expit(-o * t)
    raise ValueError(f"unknown loss code {kind}")


def full_gradient(Z, o, kind, mu, x):
    """(1/n) sum_i grad f_i(x), with the optional mu/2 ||x||^2 term."""
    n = Z.shape[0]
    coeff = _margin_coeff(kind, Z @ x, o)
    return Z.T @ coeff / n + mu * x


def batch_gradient(Z, o, kind, mu, x, idx):
    """Mean gradient over the rows listed in idx."""
    Zb = Z[idx]
    coeff = _margin_coeff(kind, Zb @ x, o[idx])
    return Zb.T @ coeff / len(idx) + mu * x


def vr_gradient(Z, o, kind, mu, x, x_snap, z_snap, idx):
    """Variance-reduced estimate: batch correction around the snapshot."""
    Zb = Z[idx]
    ob = o[idx]
    coeff = _margin_coeff(kind, Zb @ x, ob)
    coeff_snap = _margin_coeff(kind, Zb @ x_snap, ob)
    g = Zb.T @ (coeff - coeff_snap) / len(idx)
    return g + mu * (x - x_snap) + z_snap


def total_loss(Z, o, kind, mu, x):
    """(1/n) sum_i f_i(x), including the mu/2 ||x||^2 term."""
    vals = _margin_value(kind, Z @ x, o)
    return float(np.mean(vals)) + 0.5 * mu * float(x @ x)
