import itertools

import numpy as np
import pytest
import scipy.optimize

from svradmm import problems, solver
from svradmm.problems import (SampleSet, SmoothSum, build_lasso, build_ggfl,
                              full_gradient, loss_total)
from svradmm.solver import (ConfigError, SolverConfig, SolverState,
                            dual_init, opg_warmstart, run_stage, solve,
                            u_update, vr_gradient, x_update_exact,
                            x_update_linearized, y_update)
from conftest import make_classification, make_regression


def _state_for(p, x, seed=0):
    z = full_gradient(p.f, x)
    return SolverState(x=x.copy(), y=np.zeros(p.m_rows),
                       u=np.zeros(p.m_rows), x_snapshot=x.copy(),
                       z_snapshot=z, rng=np.random.default_rng(seed))


# ---- vr_gradient ---------------------------------------------------------

def test_vr_gradient_at_snapshot_returns_z(small_lasso):
    p = small_lasso
    x = np.random.default_rng(0).standard_normal(p.d)
    st = _state_for(p, x)
    g = vr_gradient(p.f, st, [0, 3, 5])
    assert np.allclose(g, st.z_snapshot, atol=1e-14)


def test_vr_gradient_full_batch_is_full_gradient(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(1)
    st = _state_for(p, rng.standard_normal(p.d))
    st.x = rng.standard_normal(p.d)
    g = vr_gradient(p.f, st, np.arange(p.f.n))
    assert np.allclose(g, full_gradient(p.f, st.x), atol=1e-12)


def test_vr_gradient_exhaustive_unbiased_small():
    data = make_classification(5, 3, seed=2)
    p = build_lasso(data, "logistic", 0.01, l2_strength=0.05)
    rng = np.random.default_rng(3)
    st = _state_for(p, rng.standard_normal(3))
    st.x = rng.standard_normal(3)
    acc = np.zeros(3)
    for i in range(5):
        acc += vr_gradient(p.f, st, [i])
    assert np.allclose(acc / 5, full_gradient(p.f, st.x), atol=1e-12)


def test_vr_gradient_rejects_duplicates(small_lasso):
    st = _state_for(small_lasso, np.zeros(small_lasso.d))
    with pytest.raises(ConfigError):
        vr_gradient(small_lasso.f, st, [1, 1])


# ---- y_update ------------------------------------------------------------

def test_y_update_zero_regularizer():
    data = make_classification(6, 3, seed=4)
    p = problems.ConstrainedProblem(
        f=SmoothSum(kind="logistic", data=data, l2_strength=0.1),
        g=problems.Regularizer("zero", 0.0),
        A=problems.ConstraintMatrix(np.eye(3)))
    x = np.array([0.1, -0.2, 0.3])
    u = np.array([0.5, 0.0, -0.5])
    assert np.allclose(y_update(p, x, u, 2.0), p.apply_A(x) + u)


def test_y_update_soft_threshold_values():
    data = SampleSet(features=np.eye(2), labels=np.ones(2))
    p = build_lasso(data, "squared", 0.5)
    x = np.array([2.0, -0.3])
    y = y_update(p, x, np.zeros(2), 1.0)
    assert np.allclose(y, [1.5, 0.0])


def test_y_update_random_search_optimality(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(5)
    x = rng.standard_normal(p.d)
    u = rng.standard_normal(p.m_rows)
    rho = 1.7
    y = y_update(p, x, u, rho)
    obj = lambda yy: (p.g.value(yy)
                      + 0.5 * rho * np.sum((p.apply_A(x) + p.apply_B(yy)
                                            - p.c + u) ** 2))
    base = obj(y)
    for _ in range(1000):
        assert base <= obj(y + 0.1 * rng.standard_normal(p.m_rows)) + 1e-12


# ---- x updates -----------------------------------------------------------

def _subproblem_obj(p, x_prev, grad_hat, y_t, u_prev, eta, rho, G):
    def obj(x):
        r = p.apply_A(x) + p.apply_B(y_t) - p.c + u_prev
        dx = x - x_prev
        return (grad_hat @ x + 0.5 * rho * np.sum(r ** 2)
                + 0.5 * dx @ (G @ dx) / eta)
    return obj


def test_x_update_exact_fixed_point(small_lasso):
    p = small_lasso
    x_prev = np.random.default_rng(6).standard_normal(p.d)
    y_t = p.apply_A(x_prev)  # residual zero with u = 0, c = 0, B = -I
    x_t = x_update_exact(p, x_prev, np.zeros(p.d), y_t, np.zeros(p.m_rows),
                         0.5, 2.0)
    assert np.allclose(x_t, x_prev, atol=1e-10)


def test_x_update_exact_scalar_hand_solve():
    data = SampleSet(features=np.ones((1, 1)), labels=np.ones(1))
    p = build_lasso(data, "squared", 0.0)
    x_t = x_update_exact(p, np.zeros(1), np.ones(1), np.zeros(1),
                         np.zeros(1), 1.0, 1.0)
    assert x_t[0] == pytest.approx(-0.5, abs=1e-12)


def test_x_update_exact_quadratic_minimizer_oracle(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(7)
    x_prev = rng.standard_normal(p.d)
    grad_hat = rng.standard_normal(p.d)
    y_t = rng.standard_normal(p.m_rows)
    u_prev = rng.standard_normal(p.m_rows)
    eta, rho = 0.3, 1.2
    x_t = x_update_exact(p, x_prev, grad_hat, y_t, u_prev, eta, rho)
    obj = _subproblem_obj(p, x_prev, grad_hat, y_t, u_prev, eta, rho,
                          np.eye(p.d))
    res = scipy.optimize.minimize(obj, x_prev, method="BFGS",
                                  options={"gtol": 1e-12})
    assert np.allclose(x_t, res.x, atol=1e-6)
    # first-order optimality with G = I
    opt = (grad_hat + rho * p.apply_At(p.apply_A(x_t) + p.apply_B(y_t)
                                       - p.c + u_prev)
           + (x_t - x_prev) / eta)
    assert np.linalg.norm(opt) <= 1e-8


def test_x_update_linearized_fixed_point_and_gamma_limit(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(8)
    x_prev = rng.standard_normal(p.d)
    y_t = p.apply_A(x_prev)
    x_t = x_update_linearized(p, x_prev, np.zeros(p.d), y_t,
                              np.zeros(p.m_rows), 0.5, 2.0, 3.0)
    assert np.allclose(x_t, x_prev)
    x_big = x_update_linearized(p, x_prev, rng.standard_normal(p.d),
                                rng.standard_normal(p.m_rows),
                                np.zeros(p.m_rows), 0.5, 2.0, 1e12)
    assert np.allclose(x_big, x_prev, atol=1e-9)


def test_x_update_linearized_stationarity_residual(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(9)
    x_prev = rng.standard_normal(p.d)
    grad_hat = rng.standard_normal(p.d)
    y_t = rng.standard_normal(p.m_rows)
    u_prev = rng.standard_normal(p.m_rows)
    eta, rho = 0.2, 1.5
    gamma = eta * rho * p.spectra.norm_AtA + 1.0
    x_t = x_update_linearized(p, x_prev, grad_hat, y_t, u_prev, eta, rho,
                              gamma)
    AtA = p.A.entries.T @ p.A.entries
    G = gamma * np.eye(p.d) - eta * rho * AtA
    opt = (grad_hat + rho * p.apply_At(p.apply_A(x_t) + p.apply_B(y_t)
                                       - p.c + u_prev)
           + G @ (x_t - x_prev) / eta)
    assert np.linalg.norm(opt) <= 1e-8


# ---- u_update / dual_init ------------------------------------------------

def test_u_update_trivial_cases(small_lasso):
    p = small_lasso
    x = np.random.default_rng(10).standard_normal(p.d)
    y = p.apply_A(x)
    u = np.random.default_rng(11).standard_normal(p.m_rows)
    assert np.allclose(u_update(u, x, y, p), u)
    y2 = np.random.default_rng(12).standard_normal(p.m_rows)
    assert np.allclose(u_update(np.zeros(p.m_rows), x, y2, p),
                       p.residual(x, y2))


def test_u_update_telescoping(small_lasso):
    p = small_lasso
    rng = np.random.default_rng(13)
    u = np.zeros(p.m_rows)
    total = np.zeros(p.m_rows)
    for _ in range(10):
        x = rng.standard_normal(p.d)
        y = rng.standard_normal(p.m_rows)
        u = u_update(u, x, y, p)
        total += p.residual(x, y)
    assert np.allclose(u, total, atol=1e-12)


def test_dual_init_identity_A():
    data = make_classification(10, 3, seed=14)
    p = build_lasso(data, "logistic", 0.01, l2_strength=0.1)
    x = np.random.default_rng(15).standard_normal(3)
    v = full_gradient(p.f, x)
    assert np.allclose(dual_init(p, x, 2.0), -v / 2.0, atol=1e-12)


def test_dual_init_least_squares_oracle():
    data = make_classification(10, 4, seed=16)
    p = build_ggfl(data, [(1, 2), (3, 4)], "logistic", 0.01, l2_strength=0.1)
    x = np.random.default_rng(17).standard_normal(4)
    rho = 1.3
    u = dual_init(p, x, rho)
    grad = full_gradient(p.f, x)
    base = np.linalg.norm(p.apply_At(u) + grad / rho)
    rng = np.random.default_rng(18)
    for _ in range(200):
        w = u + rng.standard_normal(p.m_rows)
        assert base <= np.linalg.norm(p.apply_At(w) + grad / rho) + 1e-12


# ---- run_stage / batch equivalence ---------------------------------------

def _batch_admm_linearized(p, x0, y0, u0, eta, rho, gamma, iters):
    """Independent plain batch ADMM (full gradient), linearized x-step."""
    x, u = x0.copy(), u0.copy()
    out = []
    for _ in range(iters):
        q = p.apply_A(x) - p.c + u
        if p.B_form == "neg_identity":
            y = problems.soft_threshold(q, p.g.weight / rho) \
                if p.g.kind == "l1" and p.g.weight > 0 else q.copy()
        else:
            y = -q
        g = full_gradient(p.f, x)
        r = p.apply_A(x) + p.apply_B(y) - p.c + u
        x = x - (eta / gamma) * (g + rho * p.apply_At(r))
        u = u + p.apply_A(x) + p.apply_B(y) - p.c
        out.append((x.copy(), y.copy(), u.copy()))
    return out


def test_run_stage_m0_noop(small_lasso):
    p = small_lasso
    cfg = SolverConfig(eta=0.1, rho=1.0, m=0, b=2, stages=1, seed=0)
    st = _state_for(p, np.zeros(p.d))
    x_before = st.x.copy()
    run_stage(p, cfg, st, gamma=2.0)
    assert np.array_equal(st.x, x_before)


def test_run_stage_deterministic(small_lasso):
    p = small_lasso
    cfg = SolverConfig(eta=0.1, rho=1.0, m=8, b=3, stages=1, seed=7)
    outs = []
    for _ in range(2):
        st = _state_for(p, np.zeros(p.d), seed=7)
        run_stage(p, cfg, st, gamma=2.0)
        outs.append((st.x.copy(), st.y.copy(), st.u.copy()))
    for a, b in zip(outs[0], outs[1]):
        assert np.array_equal(a, b)


def test_batch_equivalence_b_equals_n(small_lasso):
    p = small_lasso
    n = p.f.n
    eta, rho = 0.4, 1.1
    gamma = eta * rho * p.spectra.norm_AtA + 1.0
    cfg = SolverConfig(eta=eta, rho=rho, m=3, b=n, stages=1, seed=0)
    st = _state_for(p, np.zeros(p.d))
    st.u = np.zeros(p.m_rows)
    traj = []
    run_stage(p, cfg, st, gamma=gamma,
              observer=lambda s, t, e, x, y, u: traj.append((x.copy(),
                                                             y.copy(),
                                                             u.copy())))
    oracle = _batch_admm_linearized(p, np.zeros(p.d), np.zeros(p.m_rows),
                                    np.zeros(p.m_rows), eta, rho, gamma, 3)
    for (x1, y1, u1), (x2, y2, u2) in zip(traj, oracle):
        assert np.allclose(x1, x2, atol=1e-10)
        assert np.allclose(y1, y2, atol=1e-10)
        assert np.allclose(u1, u2, atol=1e-10)


def test_full_batch_seed_independent(small_lasso):
    p = small_lasso
    n = p.f.n
    results = []
    for seed in (0, 99):
        cfg = SolverConfig(eta=0.2, rho=1.0, m=4, b=n, stages=3,
                           variant="general_convex", seed=seed)
        results.append(solve(p, cfg).x_out)
    assert np.array_equal(results[0], results[1])


# ---- drivers -------------------------------------------------------------

def test_strongly_convex_ridge_closed_form():
    data = make_regression(30, 4, seed=19)
    mu = 0.1
    f = problems._make_smooth("squared", data, mu, None)
    p = problems.ConstrainedProblem(
        f=f, g=problems.Regularizer("zero", 0.0),
        A=problems.ConstraintMatrix(np.eye(4), full_row_rank=True))
    Z, o = data.features, data.labels
    x_star = np.linalg.solve(Z.T @ Z / 30 + mu * np.eye(4), Z.T @ o / 30)
    cfg = SolverConfig(eta=1.0 / f.L_f_bound, rho=1.0, m=60, b=30, stages=30,
                       variant="strongly_convex", averaging="stage_average",
                       seed=0)
    res = solve(p, cfg)
    assert np.linalg.norm(res.x_out - x_star) <= 1e-6


def test_strongly_convex_requires_lambda_f():
    data = make_classification(10, 3, seed=20)
    p = build_lasso(data, "logistic", 0.01)  # no l2: lambda_f = 0
    cfg = SolverConfig(eta=0.1, rho=1.0, m=5, b=2, stages=2,
                       variant="strongly_convex")
    with pytest.raises(ConfigError, match="general_convex"):
        solve(p, cfg)


def test_strongly_convex_zero_stages_returns_init(small_lasso):
    cfg = SolverConfig(eta=0.1, rho=1.0, m=5, b=2, stages=0,
                       variant="strongly_convex", seed=0)
    res = solve(small_lasso, cfg)
    assert np.array_equal(res.x_out, np.zeros(small_lasso.d))


def test_general_convex_degenerate_single_step(small_lasso):
    p = small_lasso
    n = p.f.n
    cfg = SolverConfig(eta=0.2, rho=1.0, m=1, b=n, stages=1,
                       variant="general_convex", averaging="stage_average",
                       seed=0)
    res = solve(p, cfg)
    gamma = 0.2 * 1.0 * p.spectra.norm_AtA + 1.0
    oracle = _batch_admm_linearized(p, np.zeros(p.d), np.zeros(p.m_rows),
                                    np.zeros(p.m_rows), 0.2, 1.0, gamma, 1)
    assert np.allclose(res.x_out, oracle[0][0], atol=1e-12)


def test_general_convex_deterministic(small_lasso):
    cfg = SolverConfig(eta=0.1, rho=1.0, m=10, b=3, stages=4,
                       variant="general_convex", seed=5)
    r1 = solve(small_lasso, cfg)
    r2 = solve(small_lasso, cfg)
    assert np.array_equal(r1.x_out, r2.x_out)
    assert np.array_equal(r1.u_out, r2.u_out)


def test_nonconvex_single_iterate_output():
    data = make_classification(20, 4, seed=21)
    p = build_lasso(data, "sigmoid", 0.01)
    cfg = SolverConfig(eta=0.05, rho=2.0, m=1, b=5, stages=1,
                       variant="nonconvex", seed=0)
    res = solve(p, cfg)
    assert res.reservoir_index == 0
    assert np.array_equal(res.x_out, res.stage_points[-1][0])


def test_nonconvex_reservoir_uniform_3sigma():
    data = make_classification(12, 3, seed=22)
    p = build_lasso(data, "sigmoid", 0.01)
    cfg = SolverConfig(eta=0.02, rho=2.0, m=4, b=12, stages=3,
                       variant="nonconvex", seed=0)
    counts = np.zeros(12)
    reps = 2000
    for seed in range(reps):
        cfg2 = SolverConfig(**{**cfg.__dict__, "seed": seed})
        counts[solve(p, cfg2).reservoir_index] += 1
    expect = reps / 12
    sigma = np.sqrt(reps * (1 / 12) * (11 / 12))
    assert np.all(np.abs(counts - expect) <= 3.2 * sigma)


def test_divergence_raises_with_partial_result():
    data = make_regression(10, 3, seed=23)
    p = problems.build_lasso(data, "squared", 0.01)
    # gamma = 1 practical mode with an absurd stepsize diverges
    cfg = SolverConfig(eta=1e6, rho=10.0, m=50, b=10, stages=5,
                       variant="general_convex", gamma=1.0, seed=0)
    with np.errstate(over="ignore", invalid="ignore"):
        with pytest.raises(solver.DivergenceError):
            solve(p, cfg)


# ---- warm start ----------------------------------------------------------

def test_opg_warmstart_zero_iterations(small_lasso):
    p = small_lasso
    cfg = SolverConfig(eta=0.1, rho=1.0, m=5, b=2, stages=1, seed=0)
    x, y, u, epochs = opg_warmstart(p, cfg, 0)
    assert np.array_equal(x, np.zeros(p.d))
    assert np.array_equal(u, np.zeros(p.m_rows))
    assert np.array_equal(y, y_update(p, x, u, cfg.rho))
    assert epochs == 0.0


def test_opg_warmstart_deterministic(small_lasso):
    cfg = SolverConfig(eta=0.1, rho=1.0, m=5, b=3, stages=1, seed=11)
    a = opg_warmstart(small_lasso, cfg, 7)
    b = opg_warmstart(small_lasso, cfg, 7)
    for va, vb in zip(a[:3], b[:3]):
        assert np.array_equal(va, vb)


def test_opg_constant_step_full_batch_is_batch_admm(small_lasso):
    p = small_lasso
    n = p.f.n
    eta, rho = 0.3, 1.0
    gamma = eta * rho * p.spectra.norm_AtA + 1.0
    cfg = SolverConfig(eta=eta, rho=rho, m=1, b=n, stages=1, gamma=gamma,
                       seed=0)
    x, y, u, _ = opg_warmstart(p, cfg, 6, decay=False)
    oracle = _batch_admm_linearized(p, np.zeros(p.d), np.zeros(p.m_rows),
                                    np.zeros(p.m_rows), eta, rho, gamma, 6)
    assert np.allclose(x, oracle[-1][0], atol=1e-10)
    assert np.allclose(u, oracle[-1][2], atol=1e-10)


# ---- config validation ---------------------------------------------------

def test_config_validation_errors():
    bad = [dict(eta=0.0, rho=1.0, m=1, b=1, stages=1),
           dict(eta=0.1, rho=-1.0, m=1, b=1, stages=1),
           dict(eta=0.1, rho=1.0, m=1, b=0, stages=1),
           dict(eta=0.1, rho=1.0, m=1, b=1, stages=1, variant="bogus"),
           dict(eta=0.1, rho=1.0, m=1, b=1, stages=1, gamma=0.5),
           dict(eta=0.1, rho=1.0, m=1, b=1, stages=1, warm_start=-1)]
    for kw in bad:
        with pytest.raises(ConfigError):
            SolverConfig(**kw).validate()
    with pytest.raises(ConfigError):
        SolverConfig(eta=0.1, rho=1.0, m=1, b=100, stages=1).validate(n=10)
