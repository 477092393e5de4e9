"""Spectral and least-squares utilities for the constraint matrix.

Extreme eigenvalues of A A^T feed the penalty/stepsize advisor; the
minimum-norm transpose solve implements the (A^T)^+ application used by the
dual initialization.  Everything is dense: at desk scale an exact symmetric
eigendecomposition beats iterative methods.
"""

from dataclasses import dataclass, field

import numpy as np

# Relative threshold below which sigma_min(AA^T) is treated as zero.
RANK_RTOL = 1e-10


class MatSpecError(ValueError):
    pass


class SingularityError(MatSpecError):
    """Raised when a solve requires rank the matrix does not have."""


@dataclass(frozen=True)
class SpectralSummary:
    """Extreme eigenvalues of AA^T plus the operator norm of A^T A.

    sigma_min_pos_AAt is the smallest *nonzero* eigenvalue; for a
    full-row-rank A it equals sigma_min_AAt.  Stacked penalty matrices like
    [G; I] have more rows than columns, so sigma_min_AAt is exactly 0 there
    while the constraint still acts injectively on x; the advisor uses the
    positive value in that case.
    """

    sigma_max_AAt: float
    sigma_min_AAt: float
    norm_AtA: float
    sigma_min_pos_AAt: float

    def __post_init__(self):
        if not (self.sigma_max_AAt >= self.sigma_min_AAt >= 0.0):
            raise MatSpecError("eigenvalue ordering violated")


@dataclass(frozen=True)
class ConstraintMatrix:
    """Dense constraint matrix A with optional sparsity hint.

    The nonzero-coordinate list is an optimization hint only; all numerics
    use the dense entries.
    """

    entries: np.ndarray
    full_row_rank: bool = False
    nonzeros: list | None = field(default=None, compare=False)

    def __post_init__(self):
        arr = np.asarray(self.entries, dtype=float)
        if arr.ndim != 2 or arr.shape[0] < 1 or arr.shape[1] < 1:
            raise MatSpecError(f"A must be a 2-d matrix, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise MatSpecError("A has non-finite entries")
        object.__setattr__(self, "entries", np.ascontiguousarray(arr))
        if self.full_row_rank:
            s = spectral_extremes(self)
            if s.sigma_min_AAt <= RANK_RTOL * s.sigma_max_AAt:
                raise SingularityError(
                    "matrix flagged full-row-rank but sigma_min(AA^T) is "
                    f"{s.sigma_min_AAt:.3e} vs sigma_max {s.sigma_max_AAt:.3e}"
                )

    @property
    def rows(self):
        return self.entries.shape[0]

    @property
    def cols(self):
        return self.entries.shape[1]


def spectral_extremes(A: ConstraintMatrix) -> SpectralSummary:
    """Largest/smallest eigenvalues of AA^T and the operator norm of A^T A.

    Uses the smaller Gram matrix; when rows > cols the spectrum of AA^T is
    that of A^T A padded with rows - cols zeros.
    """
    M = A.entries
    r, c = M.shape
    if r <= c:
        w = np.linalg.eigvalsh(M @ M.T)
        w = np.clip(w, 0.0, None)
        lo, hi = float(w[0]), float(w[-1])
    else:
        w = np.linalg.eigvalsh(M.T @ M)
        w = np.clip(w, 0.0, None)
        hi = float(w[-1])
        lo = 0.0
    tol = RANK_RTOL * hi
    pos = w[w > tol]
    lo_pos = float(pos[0]) if pos.size else 0.0
    if lo <= tol:
        lo = 0.0
    return SpectralSummary(
        sigma_max_AAt=hi, sigma_min_AAt=lo, norm_AtA=hi, sigma_min_pos_AAt=lo_pos
    )


def min_norm_transpose_solve(A: ConstraintMatrix, v: np.ndarray) -> np.ndarray:
    """Minimum-norm least-squares solution u of A^T u = v, i.e. (A^T)^+ v.

    For a full-row-rank A this is (AA^T)^{-1} A v.  Genuinely rank-deficient
    matrices (rank below min(rows, cols)) are rejected; tall full-column-rank
    stacks such as [G; I] are fine, the solve then lands in range(A).
    """
    v = np.asarray(v, dtype=float)
    if v.shape != (A.cols,):
        raise MatSpecError(f"v must have length {A.cols}, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise MatSpecError("v has non-finite entries")
    u, _, rank, sv = np.linalg.lstsq(A.entries.T, v, rcond=RANK_RTOL)
    if rank < min(A.rows, A.cols):
        raise SingularityError(
            f"A is rank deficient (rank {rank} < {min(A.rows, A.cols)})"
        )
    return u
