import numpy as np
import pytest

from svradmm import matspec
from svradmm.matspec import (ConstraintMatrix, MatSpecError, SingularityError,
                             min_norm_transpose_solve, spectral_extremes)


def test_identity_spectrum():
    s = spectral_extremes(ConstraintMatrix(np.eye(3)))
    assert s.sigma_max_AAt == pytest.approx(1.0)
    assert s.sigma_min_AAt == pytest.approx(1.0)
    assert s.norm_AtA == pytest.approx(1.0)


def test_diagonal_spectrum():
    s = spectral_extremes(ConstraintMatrix(np.diag([1.0, 2.0])))
    assert s.sigma_max_AAt == pytest.approx(4.0)
    assert s.sigma_min_AAt == pytest.approx(1.0)
    assert s.norm_AtA == pytest.approx(4.0)


def test_spectrum_matches_eigendecomposition():
    rng = np.random.default_rng(0)
    A = rng.standard_normal((3, 5))
    s = spectral_extremes(ConstraintMatrix(A))
    evals = np.linalg.eigvalsh(A @ A.T)
    assert s.sigma_max_AAt == pytest.approx(evals.max(), abs=1e-8)
    assert s.sigma_min_AAt == pytest.approx(evals.min(), abs=1e-8)
    assert s.norm_AtA == pytest.approx(np.linalg.eigvalsh(A.T @ A).max(),
                                       abs=1e-8)


def test_spectrum_row_permutation_invariant():
    rng = np.random.default_rng(1)
    A = rng.standard_normal((4, 6))
    s1 = spectral_extremes(ConstraintMatrix(A))
    s2 = spectral_extremes(ConstraintMatrix(A[rng.permutation(4)]))
    assert s1.sigma_max_AAt == pytest.approx(s2.sigma_max_AAt)
    assert s1.sigma_min_AAt == pytest.approx(s2.sigma_min_AAt)


def test_norm_AtA_power_iteration_consistency():
    rng = np.random.default_rng(2)
    A = rng.standard_normal((4, 7))
    s = spectral_extremes(ConstraintMatrix(A))
    best = 0.0
    M = A.T @ A
    for _ in range(100):
        x = rng.standard_normal(7)
        x /= np.linalg.norm(x)
        best = max(best, np.linalg.norm(M @ x))
    assert best <= s.norm_AtA + 1e-6


def test_nonfinite_entries_rejected():
    with pytest.raises(MatSpecError):
        ConstraintMatrix(np.array([[1.0, np.inf]]))


def test_full_row_rank_flag_rejects_deficient():
    A = np.array([[1.0, 2.0], [2.0, 4.0]])
    with pytest.raises(MatSpecError):
        ConstraintMatrix(A, full_row_rank=True)


def test_transpose_solve_identity():
    v = np.array([1.0, -2.0, 3.0])
    u = min_norm_transpose_solve(ConstraintMatrix(np.eye(3)), v)
    assert np.allclose(u, v)


def test_transpose_solve_scaling():
    v = np.array([2.0, 4.0])
    u = min_norm_transpose_solve(ConstraintMatrix(2.0 * np.eye(2)), v)
    assert np.allclose(u, v / 2.0)


def test_transpose_solve_normal_equations_oracle():
    rng = np.random.default_rng(3)
    A = rng.standard_normal((3, 6))
    v = rng.standard_normal(6)
    u = min_norm_transpose_solve(ConstraintMatrix(A), v)
    oracle = np.linalg.solve(A @ A.T, A @ v)
    assert np.allclose(u, oracle, atol=1e-8)


def test_transpose_solve_least_squares_property():
    rng = np.random.default_rng(4)
    A = rng.standard_normal((3, 6))
    v = rng.standard_normal(6)
    u = min_norm_transpose_solve(ConstraintMatrix(A), v)
    base = np.linalg.norm(A.T @ u - v)
    for _ in range(100):
        w = u + rng.standard_normal(3)
        assert base <= np.linalg.norm(A.T @ w - v) + 1e-12
    # u is orthogonal to null(AA^T) (trivial here: AA^T full rank)
    evals, vecs = np.linalg.eigh(A @ A.T)
    null = vecs[:, evals < 1e-10 * evals.max()]
    assert np.linalg.norm(null.T @ u) <= 1e-8


def test_transpose_solve_rank_deficient_raises():
    A = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0]])
    with pytest.raises(SingularityError):
        min_norm_transpose_solve(ConstraintMatrix(A), np.array([1.0, 0.0, 0.0]))


def test_tall_stack_has_positive_gram_eigenvalue():
    # A = [G; I] has full column rank: sigma_min(AA^T) = 0 but the smallest
    # positive eigenvalue is recorded for conditioning purposes.
    G = np.array([[1.0, -1.0, 0.0]])
    A = np.vstack([G, np.eye(3)])
    s = spectral_extremes(ConstraintMatrix(A))
    assert s.sigma_min_AAt == pytest.approx(0.0, abs=1e-10)
    assert s.sigma_min_pos_AAt > 0
    evals = np.linalg.eigvalsh(A @ A.T)
    pos = evals[evals > 1e-10 * evals.max()]
    assert s.sigma_min_pos_AAt == pytest.approx(pos.min(), abs=1e-8)
