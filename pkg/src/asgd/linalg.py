"""Dense vector/operator kernel shared by all modules.

Vectors are 1-D float64 numpy arrays; symmetric operators are wrapped in
:class:`SymOperator`.  Everything here is a pure function on immutable
inputs, safe to call concurrently.  Storage is dense only: experiment
dimensions stay in the hundreds.
"""

from __future__ import annotations

import numpy as np

from .errors import DimensionMismatch, NoConvergence, NonFiniteInput

_SYM_RTOL = 1e-12


def as_vector(a, name: str = "vector") -> np.ndarray:
    """Coerce to a finite 1-D float64 array."""
    v = np.asarray(a, dtype=np.float64)
    if v.ndim != 1 or v.size == 0:
        raise DimensionMismatch(f"{name} must be a nonempty 1-D array, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise NonFiniteInput(f"{name} contains non-finite entries")
    return v


def _check_same_dim(a: np.ndarray, b: np.ndarray) -> None:
    if a.shape[0] != b.shape[0]:
        raise DimensionMismatch(f"dimension mismatch: {a.shape[0]} vs {b.shape[0]}")


class SymOperator:
    """Dense symmetric operator; symmetry validated at construction."""

    __slots__ = ("matrix",)

    def __init__(self, matrix):
        m = np.asarray(matrix, dtype=np.float64)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise DimensionMismatch(f"operator must be square, got shape {m.shape}")
        if not np.all(np.isfinite(m)):
            raise NonFiniteInput("operator contains non-finite entries")
        scale = float(np.max(np.abs(m))) or 1.0
        if float(np.max(np.abs(m - m.T))) > _SYM_RTOL * scale:
            raise DimensionMismatch("operator is not symmetric to 1e-12 relative tolerance")
        # exact symmetry simplifies everything downstream
        self.matrix = 0.5 * (m + m.T)

    @property
    def dim(self) -> int:
        return self.matrix.shape[0]


def inner(a, b) -> float:
    """Euclidean inner product <a, b>."""
    va, vb = as_vector(a, "a"), as_vector(b, "b")
    _check_same_dim(va, vb)
    return float(np.dot(va, vb))


def norm(a) -> float:
    """Euclidean norm sqrt(<a, a>)."""
    va = as_vector(a, "a")
    return float(np.sqrt(np.dot(va, va)))


def axpy(alpha: float, x, y) -> np.ndarray:
    """y + alpha * x, as a new vector."""
    vx, vy = as_vector(x, "x"), as_vector(y, "y")
    _check_same_dim(vx, vy)
    return vy + float(alpha) * vx


def apply_rank_one_sum(op, v) -> np.ndarray:
    """Apply a symmetric operator (typically a mean of rank-one projectors)."""
    mat = op.matrix if isinstance(op, SymOperator) else SymOperator(op).matrix
    vv = as_vector(v, "v")
    if mat.shape[1] != vv.shape[0]:
        raise DimensionMismatch(f"operator dim {mat.shape[1]} vs vector dim {vv.shape[0]}")
    return mat @ vv


_START_RNG_SEED = 0x5EED1E57


def _power_iter(mat: np.ndarray, v: np.ndarray, tol: float, max_iter: int) -> float:
    """Power iteration from one start; returns the converged eigenvalue.

    Converges to the eigenvalue of whatever eigenspace dominates the start's
    expansion, so callers must try more than one start.
    """
    resid = np.inf
    for _ in range(max_iter):
        w = mat @ v
        lam = float(v @ w)  # Rayleigh quotient
        resid = float(np.linalg.norm(w - lam * v))
        if resid <= tol * max(1.0, abs(lam)):
            return lam
        nw = float(np.linalg.norm(w))
        if nw == 0.0:
            return 0.0  # start lies in the kernel and stays there
        v = w / nw
    raise NoConvergence(
        f"power iteration: residual {resid:.3e} > tol {tol:.3e} after {max_iter} iterations"
    )


def _dominant_eig(mat: np.ndarray, tol: float, max_iter: int) -> float:
    """Signed dominant-magnitude eigenvalue of a symmetric matrix.

    Runs from a deterministic all-ones start and from one seeded random
    start, keeping the larger magnitude: either start alone can sit exactly
    on a non-dominant eigenvector (zero residual, wrong answer).  Exact ties
    in the top eigenspace are fine: any vector in it is a valid eigenvector.
    """
    d = mat.shape[0]
    if float(np.max(np.abs(mat))) == 0.0:
        return 0.0  # zero operator: every vector is a 0-eigenvector
    rng = np.random.default_rng(_START_RNG_SEED)
    v = rng.standard_normal(d)
    starts = [np.full(d, 1.0 / np.sqrt(d)), v / np.linalg.norm(v)]
    lams = []
    failure = None
    for v0 in starts:
        try:
            lams.append(_power_iter(mat, v0, tol, max_iter))
        except NoConvergence as e:
            failure = e
    if not lams:
        raise failure
    return max(lams, key=abs)


def extreme_eigenvalues(op, tol: float = 1e-12, max_iter: int = 100_000) -> tuple[float, float]:
    """(lambda_max, lambda_min) of a symmetric operator via power iteration.

    The dominant-magnitude eigenvalue is found first; a shift makes the
    spectrum nonnegative when it is negative.  lambda_min comes from power
    iteration on (lambda_max*I - op), shifted back.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    mat = op.matrix if isinstance(op, SymOperator) else SymOperator(op).matrix
    d = mat.shape[0]

    lam1 = _dominant_eig(mat, tol, max_iter)
    if lam1 >= 0:
        lam_max = lam1
    else:
        shift = abs(lam1)
        lam_max = _dominant_eig(mat + shift * np.eye(d), tol, max_iter) - shift

    lam_min = lam_max - _dominant_eig(lam_max * np.eye(d) - mat, tol, max_iter)
    return lam_max, lam_min
