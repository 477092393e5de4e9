"""Composite problem family  min f(x) + g(y)  s.t.  Ax + By = c.

Holds the finite-sum smooth losses (logistic / squared / sigmoid margin
losses, optionally with an l2 term folded into every f_i), the l1
regularizer with its closed-form prox, builders for the fused-lasso and
total-variation benchmark problems, and LIBSVM-format ingestion.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .matspec import ConstraintMatrix, SpectralSummary, spectral_extremes

_LOSS_CODES = {"logistic": kernels.LOGISTIC, "squared": kernels.SQUARED,
               "sigmoid": kernels.SIGMOID}

# 1/(6 sqrt(3)): the sigmoid's largest second-derivative magnitude, hence a
# per-sample curvature bound of ||z_i||^2 / (6 sqrt(3)).
_SIGMOID_CURV = 1.0 / (6.0 * np.sqrt(3.0))


class ProblemError(ValueError):
    pass


class ParseError(ProblemError):
    def __init__(self, message, line_no=None):
        if line_no is not None:
            message = f"line {line_no}: {message}"
        super().__init__(message)
        self.line_no = line_no


@dataclass(frozen=True)
class SampleSet:
    """Feature matrix (n x d) plus labels; classification labels are +-1."""

    features: np.ndarray
    labels: np.ndarray
    classification: bool = False

    def __post_init__(self):
        Z = np.ascontiguousarray(np.asarray(self.features, dtype=float))
        o = np.ascontiguousarray(np.asarray(self.labels, dtype=float))
        if Z.ndim != 2 or Z.shape[0] < 1 or Z.shape[1] < 1:
            raise ProblemError(f"features must be n x d with n,d >= 1, got {Z.shape}")
        if o.shape != (Z.shape[0],):
            raise ProblemError("labels length must match sample count")
        if not (np.all(np.isfinite(Z)) and np.all(np.isfinite(o))):
            raise ProblemError("non-finite feature or label values")
        if self.classification and not np.all(np.isin(o, (-1.0, 1.0))):
            raise ProblemError("classification labels must be in {-1, +1}")
        object.__setattr__(self, "features", Z)
        object.__setattr__(self, "labels", o)

    @property
    def n(self):
        return self.features.shape[0]

    @property
    def d(self):
        return self.features.shape[1]


@dataclass(frozen=True)
class SmoothSum:
    """Finite-sum smooth part f = (1/n) sum f_i, plus smoothness constants.

    l2_strength mu adds mu/2 ||x||^2 to every f_i.  lambda_f is the strong
    convexity modulus (0 when unknown); for the squared loss it can be
    derived from the data via strong_convexity_modulus().
    """

    kind: str
    data: SampleSet
    l2_strength: float = 0.0
    lambda_f: float = 0.0
    per_sample_L: np.ndarray = field(init=False, compare=False)
    L_max: float = field(init=False, compare=False)
    L_f_bound: float = field(init=False, compare=False)

    def __post_init__(self):
        if self.kind not in _LOSS_CODES:
            raise ProblemError(f"unknown loss kind {self.kind!r}")
        if self.l2_strength < 0:
            raise ProblemError("l2_strength must be >= 0")
        if self.lambda_f < 0:
            raise ProblemError("lambda_f must be >= 0")
        if self.kind == "sigmoid" and self.lambda_f > 0 and self.l2_strength == 0:
            raise ProblemError("sigmoid loss is nonconvex; lambda_f requires l2_strength > 0")
        Li, L_max, L_bar = lipschitz_constants(self.kind, self.data, self.l2_strength)
        object.__setattr__(self, "per_sample_L", Li)
        object.__setattr__(self, "L_max", L_max)
        object.__setattr__(self, "L_f_bound", L_bar)
        if self.lambda_f > self.L_f_bound + 1e-12:
            raise ProblemError("lambda_f exceeds the smoothness bound L_f")

    @property
    def n(self):
        return self.data.n

    @property
    def d(self):
        return self.data.d

    @property
    def code(self):
        return _LOSS_CODES[self.kind]


def lipschitz_constants(kind, data: SampleSet, mu=0.0):
    """Per-sample gradient Lipschitz constants and the derived bounds.

    L_f is bounded by the mean of the L_i, which never exceeds max_i L_i.
    """
    sq = np.einsum("ij,ij->i", data.features, data.features)
    if kind == "logistic":
        Li = sq / 4.0 + mu
    elif kind == "squared":
        Li = sq + mu
    elif kind == "sigmoid":
        Li = sq * _SIGMOID_CURV + mu
    else:
        raise ProblemError(f"unknown loss kind {kind!r}")
    return Li, float(np.max(Li)), float(np.mean(Li))


def loss_value_grad(f: SmoothSum, x, i):
    """Value and gradient of the i-th per-sample loss (0-based index)."""
    x = np.asarray(x, dtype=float)
    if x.shape != (f.d,):
        raise ProblemError(f"x must have length {f.d}")
    if not 0 <= i < f.n:
        raise ProblemError(f"sample index {i} out of range [0, {f.n})")
    z = f.data.features[i]
    o = f.data.labels[i]
    t = float(z @ x)
    mu = f.l2_strength
    if f.kind == "logistic":
        val = float(np.logaddexp(0.0, -o * t))
        coeff = -o * _expit(-o * t)
    elif f.kind == "squared":
        val = 0.5 * (o - t) ** 2
        coeff = t - o
    else:
        s = _expit(o * t)
        val = 1.0 - s
        coeff = -o * s * (1.0 - s)
    return val + 0.5 * mu * float(x @ x), coeff * z + mu * x


def _expit(s):
    if s >= 0:
        return 1.0 / (1.0 + np.exp(-s))
    e = np.exp(s)
    return e / (1.0 + e)


def full_gradient(f: SmoothSum, x):
    """(1/n) sum_i grad f_i(x)."""
    x = np.ascontiguousarray(x, dtype=float)
    if x.shape != (f.d,):
        raise ProblemError(f"x must have length {f.d}")
    return kernels.full_gradient(f.data.features, f.data.labels, f.code,
                                 f.l2_strength, x)


def loss_total(f: SmoothSum, x):
    """f(x) = (1/n) sum_i f_i(x)."""
    x = np.ascontiguousarray(x, dtype=float)
    return kernels.total_loss(f.data.features, f.data.labels, f.code,
                              f.l2_strength, x)


def strong_convexity_modulus(f: SmoothSum):
    """lambda_f implied by the data: curvature of the quadratic part + mu.

    Only the squared loss has data-level curvature; logistic and sigmoid
    rely entirely on the l2 term.
    """
    if f.kind == "squared":
        Z = f.data.features
        w = np.linalg.eigvalsh(Z.T @ Z)
        return max(float(w[0]), 0.0) / f.n + f.l2_strength
    return f.l2_strength


def soft_threshold(v, tau):
    """Prox of tau * ||.||_1: elementwise shrink toward zero by tau."""
    if tau < 0:
        raise ProblemError("tau must be >= 0")
    v = np.asarray(v, dtype=float)
    return np.sign(v) * np.maximum(np.abs(v) - tau, 0.0)


@dataclass(frozen=True)
class Regularizer:
    """g = weight * ||.||_1, or identically zero."""

    kind: str = "l1"
    weight: float = 0.0

    def __post_init__(self):
        if self.kind not in ("l1", "zero"):
            raise ProblemError(f"unknown regularizer kind {self.kind!r}")
        if self.weight < 0:
            raise ProblemError("regularizer weight must be >= 0")
        if self.kind == "zero" and self.weight != 0:
            raise ProblemError("zero regularizer must have weight 0")

    def value(self, y):
        if self.kind == "zero" or self.weight == 0.0:
            return 0.0
        return self.weight * float(np.sum(np.abs(y)))

    def prox(self, q, scale=1.0):
        """argmin_y g(y) + 1/(2 scale) ||y - q||^2."""
        if self.kind == "zero" or self.weight == 0.0:
            return np.asarray(q, dtype=float).copy()
        return soft_threshold(q, self.weight * scale)


@dataclass(frozen=True)
class ConstrainedProblem:
    """min f(x) + g(y) subject to Ax + By = c with B = +-I."""

    f: SmoothSum
    g: Regularizer
    A: ConstraintMatrix
    B_form: str = "neg_identity"
    c: np.ndarray | None = None
    spectra: SpectralSummary = field(init=False, compare=False)

    def __post_init__(self):
        if self.B_form not in ("neg_identity", "identity"):
            raise ProblemError(f"unsupported B_form {self.B_form!r}")
        if self.A.cols != self.f.d:
            raise ProblemError(
                f"A has {self.A.cols} columns but the data dimension is {self.f.d}")
        c = self.c
        if c is None:
            c = np.zeros(self.A.rows)
        c = np.asarray(c, dtype=float)
        if c.shape != (self.A.rows,):
            raise ProblemError(f"c must have length {self.A.rows}")
        object.__setattr__(self, "c", c)
        object.__setattr__(self, "spectra", spectral_extremes(self.A))

    @property
    def d(self):
        return self.f.d

    @property
    def m_rows(self):
        return self.A.rows

    @property
    def B_sign(self):
        return -1.0 if self.B_form == "neg_identity" else 1.0

    def apply_A(self, x):
        return self.A.entries @ x

    def apply_At(self, v):
        return self.A.entries.T @ v

    def apply_B(self, y):
        return self.B_sign * y

    def residual(self, x, y):
        return self.apply_A(x) + self.apply_B(y) - self.c


def objective(p: ConstrainedProblem, x):
    """f(x) + g(Ax): the objective reported at the feasible lift y = Ax.

    Only meaningful for the B = -I, c = 0 formulation.
    """
    if p.B_form != "neg_identity" or np.any(p.c != 0):
        raise ProblemError("objective reporting requires B = -I, c = 0")
    x = np.asarray(x, dtype=float)
    return loss_total(p.f, x) + p.g.value(p.apply_A(x))


def build_ggfl(data: SampleSet, graph_edges, loss_kind, lam, l2_strength=0.0,
               lambda_f=None) -> ConstrainedProblem:
    """Graph-guided fused lasso: A stacks the edge-difference matrix over I.

    Edges are 1-based (i, j) feature pairs; each contributes a row with +1
    at i and -1 at j, so ||Ax||_1 = sum_edges |x_i - x_j| + ||x||_1.
    """
    d = data.d
    seen = set()
    G = np.zeros((len(graph_edges), d))
    for k, (i, j) in enumerate(graph_edges):
        if not (1 <= i <= d and 1 <= j <= d):
            raise ProblemError(f"edge ({i}, {j}) out of range 1..{d}")
        if i == j:
            raise ProblemError(f"self-loop edge ({i}, {j})")
        key = (min(i, j), max(i, j))
        if key in seen:
            raise ProblemError(f"duplicate edge ({i}, {j})")
        seen.add(key)
        G[k, i - 1] = 1.0
        G[k, j - 1] = -1.0
    A = np.vstack([G, np.eye(d)]) if len(graph_edges) else np.eye(d)
    f = _make_smooth(loss_kind, data, l2_strength, lambda_f)
    return ConstrainedProblem(f=f, g=Regularizer("l1", lam),
                              A=ConstraintMatrix(A), B_form="neg_identity")


def build_tv(data: SampleSet, lam, l2_strength=0.0, lambda_f=None) -> ConstrainedProblem:
    """Total-variation regression: squared loss with the upper-bidiagonal
    difference matrix (A_ii = 1, A_{i,i+1} = -1)."""
    d = data.d
    if d < 2:
        raise ProblemError("TV regression needs d >= 2")
    A = np.eye(d)
    A[np.arange(d - 1), np.arange(1, d)] = -1.0
    f = _make_smooth("squared", data, l2_strength, lambda_f)
    return ConstrainedProblem(f=f, g=Regularizer("l1", lam),
                              A=ConstraintMatrix(A, full_row_rank=True),
                              B_form="neg_identity")


def build_lasso(data: SampleSet, loss_kind, lam, l2_strength=0.0,
                lambda_f=None) -> ConstrainedProblem:
    """Plain lasso: A = I, so g(Ax) = lam ||x||_1."""
    f = _make_smooth(loss_kind, data, l2_strength, lambda_f)
    return ConstrainedProblem(f=f, g=Regularizer("l1", lam),
                              A=ConstraintMatrix(np.eye(data.d), full_row_rank=True),
                              B_form="neg_identity")


def _make_smooth(kind, data, mu, lambda_f):
    if lambda_f is None:
        probe = SmoothSum(kind=kind, data=data, l2_strength=mu, lambda_f=0.0)
        lambda_f = 0.0 if kind == "sigmoid" and mu == 0 else strong_convexity_modulus(probe)
    return SmoothSum(kind=kind, data=data, l2_strength=mu, lambda_f=lambda_f)


def graph_from_correlation(data: SampleSet, threshold):
    """Edges (i, j), 1-based, where |Pearson correlation| >= threshold.

    Constant feature columns are skipped (their correlation is undefined).
    Substitutes for a sparse inverse covariance fit; the solver does not
    care how the graph was produced.
    """
    if not 0.0 < threshold < 1.0:
        raise ProblemError("threshold must be in (0, 1)")
    if data.n < 2:
        raise ProblemError("need at least 2 samples for correlations")
    Z = data.features
    sd = Z.std(axis=0)
    ok = sd > 0
    C = np.zeros((data.d, data.d))
    if ok.sum() >= 2:
        C_ok = np.corrcoef(Z[:, ok], rowvar=False)
        C[np.ix_(ok, ok)] = C_ok
    edges = []
    for i in range(data.d):
        for j in range(i + 1, data.d):
            if ok[i] and ok[j] and abs(C[i, j]) >= threshold:
                edges.append((i + 1, j + 1))
    return edges


def gen_tv_data(n, d, seed):
    """Synthetic TV-regression data: unit-norm Gaussian rows, a
    piecewise-constant ground truth (10 alternating 0/1 blocks), unit noise.

    Returns (SampleSet, ground_truth_x).
    """
    if n < 1 or d < 1:
        raise ProblemError("n and d must be >= 1")
    rng = np.random.default_rng(seed)
    Z = rng.standard_normal((n, d))
    Z /= np.linalg.norm(Z, axis=1, keepdims=True)
    x_true = np.zeros(d)
    n_blocks = min(10, d)
    bounds = np.linspace(0, d, n_blocks + 1).astype(int)
    for k in range(n_blocks):
        if k % 2 == 1:
            x_true[bounds[k]:bounds[k + 1]] = 1.0
    o = Z @ x_true + rng.standard_normal(n)
    return SampleSet(features=Z, labels=o), x_true


def parse_libsvm(stream, d=None, relabel=True):
    """Parse LIBSVM text ("<label> <index>:<value> ...", 1-based indices).

    Indices must be strictly increasing per line.  With exactly two distinct
    labels (and relabel=True) they are mapped to {-1, +1} in sorted order.
    """
    rows, labels = [], []
    max_idx = 0
    n_lines = 0
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        n_lines += 1
        parts = line.split()
        try:
            label = float(parts[0])
        except ValueError:
            raise ParseError(f"bad label {parts[0]!r}", line_no)
        entries = []
        prev = 0
        for tok in parts[1:]:
            try:
                idx_s, val_s = tok.split(":", 1)
                idx = int(idx_s)
                val = float(val_s)
            except ValueError:
                raise ParseError(f"malformed token {tok!r}", line_no)
            if idx <= prev:
                raise ParseError(f"indices not strictly increasing at {tok!r}", line_no)
            prev = idx
            entries.append((idx, val))
        max_idx = max(max_idx, prev)
        rows.append(entries)
        labels.append(label)
    if n_lines == 0:
        raise ParseError("empty file", None)
    dim = d if d is not None else max_idx
    if max_idx > dim:
        raise ParseError(f"index {max_idx} exceeds declared dimension {dim}", None)
    Z = np.zeros((len(rows), dim))
    for r, entries in enumerate(rows):
        for idx, val in entries:
            Z[r, idx - 1] = val
    o = np.array(labels)
    uniq = np.unique(o)
    classification = False
    if relabel and uniq.size == 2:
        o = np.where(o == uniq[0], -1.0, 1.0)
        classification = True
    return SampleSet(features=Z, labels=o, classification=classification)


def write_libsvm(data: SampleSet, stream, precision=17):
    """Write a SampleSet in LIBSVM text form (zeros omitted)."""
    for i in range(data.n):
        row = data.features[i]
        toks = [f"{data.labels[i]:.{precision}g}"]
        for j in np.nonzero(row)[0]:
            toks.append(f"{j + 1}:{row[j]:.{precision}g}")
        stream.write(" ".join(toks) + "\n")


def parse_edge_list(stream):
    """Edge-list file: one "i j" pair per line, 1-based."""
    edges = []
    for line_no, line in enumerate(stream, start=1):
        line = line.strip()
        if not line or line.startswith("#"):
            continue
        parts = line.split()
        if len(parts) != 2:
            raise ParseError(f"expected 'i j', got {line!r}", line_no)
        try:
            edges.append((int(parts[0]), int(parts[1])))
        except ValueError:
            raise ParseError(f"non-integer endpoints in {line!r}", line_no)
    return edges
