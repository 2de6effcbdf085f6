"""Stochastic objectives: sample losses, per-sample gradients, batch means.

Four objectives share one duck-typed surface:

* quadratic           g(x, h) = 0.5 ||h - x||^2           (validation objective)
* geometric quantile  g(x, h) = ||x - h|| + <x - h, v>,   ||v|| < 1
* cosh regression     g((x, y), h) = log cosh(y - <x, h>)
* logistic            g((x, y), h) = log(1 + exp(-y <x, h>))

with labels y in {-1, +1}.  Per-sample gradients drive the streaming
recursion; batch means (plain arithmetic means, numpy pairwise summation)
drive the deterministic oracles and the finite-difference tests.  Loss values
exist for line search and testing only; the recursion touches gradients
alone.  Objectives are immutable and all operations are pure.
"""

from __future__ import annotations

import numpy as np

from .errors import AllDegenerate, DimensionMismatch
from .linalg import SymOperator, as_vector

# Kernel dispatch ids; must stay in sync with kernels/_ckernels.pyx and
# kernels/_pykernels.py.
KIND_QUADRATIC = 0
KIND_GEOMETRIC_QUANTILE = 1
KIND_COSH = 2
KIND_LOGISTIC = 3

# Collision guard for ||x - h||: exact collisions have probability zero under
# the non-concentration assumptions, so this only protects floating point.
DEGENERACY_ETA = 1e-12

# Saturation clamp for tanh/sigmoid arguments; heavy-tailed covariates can
# produce huge inner products.
SATURATION_CLAMP = 40.0


def _sigmoid(t):
    t = np.clip(t, -SATURATION_CLAMP, SATURATION_CLAMP)
    return 1.0 / (1.0 + np.exp(-t))


def _log_cosh(t):
    # log cosh(t) = |t| + log1p(exp(-2|t|)) - log 2, stable for any t
    a = np.abs(t)
    return a + np.log1p(np.exp(-2.0 * a)) - np.log(2.0)


def _check_labels(y) -> np.ndarray:
    y = np.asarray(y, dtype=np.float64)
    if not np.all(np.abs(y) == 1.0):
        raise ValueError("labels must be in {-1, +1}")
    return y


def _clipped_sample(x: np.ndarray, clip_radius: float) -> np.ndarray:
    # keep-or-zero rule: the sample itself inside the ball, else the origin
    if float(np.linalg.norm(x)) <= clip_radius:
        return x.copy()
    return np.zeros_like(x)


class QuadraticObjective:
    """Validation objective with everything available in closed form.

    Samples are x = m_true + sigma * noise, so the mean gradient at h is
    exactly h - m_true and the Hessian is the identity.
    """

    kind = KIND_QUADRATIC
    labeled = False

    def __init__(self, m_true, sigma: float = 1.0):
        self.m_true = as_vector(m_true, "m_true")
        self.sigma = float(sigma)
        if not np.isfinite(self.sigma) or self.sigma <= 0:
            raise ValueError("sigma must be finite and positive")
        self.dim = self.m_true.shape[0]

    def stochastic_gradient(self, x, h) -> np.ndarray:
        x, h = self._pair(x, h)
        return h - x

    def loss(self, x, h) -> float:
        x, h = self._pair(x, h)
        return 0.5 * float(np.dot(h - x, h - x))

    def batch_gradient(self, X, h) -> np.ndarray:
        return np.asarray(h, dtype=np.float64) - np.mean(X, axis=0)

    def batch_loss(self, X, h) -> float:
        diff = np.asarray(h, dtype=np.float64)[None, :] - X
        return 0.5 * float(np.mean(np.einsum("nd,nd->n", diff, diff)))

    def gradient_norms(self, X, y, h):
        diff = np.asarray(h, dtype=np.float64)[None, :] - X
        return np.sqrt(np.einsum("nd,nd->n", diff, diff)), 0

    def population_gradient(self, h) -> np.ndarray:
        return as_vector(h, "h") - self.m_true

    def hessian(self) -> SymOperator:
        return SymOperator(np.eye(self.dim))

    def initial_iterate(self, first_sample, clip_radius: float) -> np.ndarray:
        return _clipped_sample(as_vector(first_sample, "sample"), clip_radius)

    def _pair(self, x, h):
        x, h = as_vector(x, "x"), as_vector(h, "h")
        if x.shape != h.shape:
            raise DimensionMismatch(f"sample dim {x.shape[0]} vs iterate dim {h.shape[0]}")
        return x, h


class GeometricQuantileObjective:
    """Geometric quantile of a direction v (the median when v = 0).

    The per-sample gradient -(x - h)/||x - h|| - v has norm at most
    1 + ||v|| < 2; samples colliding with the iterate are reported as
    degenerate and the caller skips the gradient step.
    """

    kind = KIND_GEOMETRIC_QUANTILE
    labeled = False

    def __init__(self, dim: int, direction=None):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if direction is None:
            self.direction = np.zeros(self.dim)
        else:
            self.direction = as_vector(direction, "direction")
            if self.direction.shape[0] != self.dim:
                raise DimensionMismatch("direction dim does not match objective dim")
        if float(np.linalg.norm(self.direction)) >= 1.0:
            raise ValueError("direction must have norm strictly below 1")

    @property
    def is_median(self) -> bool:
        return not self.direction.any()

    def stochastic_gradient(self, x, h):
        """Per-sample gradient, or None when ||x - h|| is below the guard."""
        x, h = self._pair(x, h)
        diff = x - h
        dist = float(np.linalg.norm(diff))
        if dist < DEGENERACY_ETA:
            return None
        return -diff / dist - self.direction

    def loss(self, x, h) -> float:
        x, h = self._pair(x, h)
        diff = x - h
        return float(np.linalg.norm(diff)) + float(np.dot(diff, self.direction))

    def batch_gradient(self, X, h) -> np.ndarray:
        grad, _ = self.population_gradient_mc(h, X)
        return grad

    def population_gradient_mc(self, h, X) -> tuple[np.ndarray, int]:
        """Mean per-sample gradient over a sample set; degenerate rows skipped.

        Returns (gradient, number of skipped samples).
        """
        X = np.asarray(X, dtype=np.float64)
        h = as_vector(h, "h")
        diff = X - h[None, :]
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        keep = dist >= DEGENERACY_ETA
        n_keep = int(np.count_nonzero(keep))
        if n_keep == 0:
            raise AllDegenerate("every sample coincides with the evaluation point")
        units = diff[keep] / dist[keep, None]
        return -np.mean(units, axis=0) - self.direction, X.shape[0] - n_keep

    def hessian_mc(self, h, X) -> SymOperator:
        """Empirical mean of (1/||x-h||)(I - u u^T); symmetric PSD."""
        X = np.asarray(X, dtype=np.float64)
        h = as_vector(h, "h")
        diff = X - h[None, :]
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        keep = dist >= DEGENERACY_ETA
        n_keep = int(np.count_nonzero(keep))
        if n_keep == 0:
            raise AllDegenerate("every sample coincides with the evaluation point")
        u = diff[keep] / dist[keep, None]
        inv = 1.0 / dist[keep]
        d = h.shape[0]
        mean_inv = float(np.mean(inv))
        outer = np.einsum("n,ni,nj->ij", inv, u, u) / n_keep
        mat = mean_inv * np.eye(d) - outer
        return SymOperator(0.5 * (mat + mat.T))

    def batch_loss(self, X, h) -> float:
        X = np.asarray(X, dtype=np.float64)
        h = as_vector(h, "h")
        diff = X - h[None, :]
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        return float(np.mean(dist)) + float(np.dot(np.mean(diff, axis=0), self.direction))

    def gradient_norms(self, X, y, h):
        X = np.asarray(X, dtype=np.float64)
        h = as_vector(h, "h")
        diff = X - h[None, :]
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        keep = dist >= DEGENERACY_ETA
        n_keep = int(np.count_nonzero(keep))
        if n_keep == 0:
            raise AllDegenerate("every sample coincides with the evaluation point")
        grads = -diff[keep] / dist[keep, None] - self.direction[None, :]
        return np.sqrt(np.einsum("nd,nd->n", grads, grads)), X.shape[0] - n_keep

    def initial_iterate(self, first_sample, clip_radius: float) -> np.ndarray:
        return _clipped_sample(as_vector(first_sample, "sample"), clip_radius)

    def _pair(self, x, h):
        x, h = as_vector(x, "x"), as_vector(h, "h")
        if x.shape[0] != self.dim or h.shape[0] != self.dim:
            raise DimensionMismatch("sample/iterate dim does not match objective dim")
        return x, h


class _LabeledObjective:
    """Shared plumbing for the two regression objectives."""

    labeled = True

    def __init__(self, dim: int, init_mode: str = "zero"):
        self.dim = int(dim)
        if self.dim < 1:
            raise ValueError("dim must be >= 1")
        if init_mode not in ("zero", "clipped_sample"):
            raise ValueError("init_mode must be 'zero' or 'clipped_sample'")
        self.init_mode = init_mode

    def initial_iterate(self, first_sample, clip_radius: float) -> np.ndarray:
        x, _ = first_sample
        x = as_vector(x, "sample")
        if self.init_mode == "clipped_sample":
            return _clipped_sample(x, clip_radius)
        return np.zeros_like(x)

    def _margin(self, X, y, h):
        X = np.asarray(X, dtype=np.float64)
        y = _check_labels(y)
        h = as_vector(h, "h")
        return X, y, h, X @ h


class CoshLogisticObjective(_LabeledObjective):
    """Robust regression with the log-cosh link: g = log cosh(y - <x, h>)."""

    kind = KIND_COSH

    def stochastic_gradient(self, x, y, h) -> np.ndarray:
        x, h = as_vector(x, "x"), as_vector(h, "h")
        y = float(_check_labels([y])[0])
        t = np.clip(y - float(np.dot(x, h)), -SATURATION_CLAMP, SATURATION_CLAMP)
        return -float(np.tanh(t)) * x

    def loss(self, x, y, h) -> float:
        x, h = as_vector(x, "x"), as_vector(h, "h")
        return float(_log_cosh(float(y) - float(np.dot(x, h))))

    def batch_gradient(self, X, h, y=None) -> np.ndarray:
        X, y, h, xh = self._margin(X, y, h)
        t = np.clip(y - xh, -SATURATION_CLAMP, SATURATION_CLAMP)
        return -(np.tanh(t)[:, None] * X).mean(axis=0)

    def batch_loss(self, X, h, y=None) -> float:
        X, y, h, xh = self._margin(X, y, h)
        return float(np.mean(_log_cosh(y - xh)))

    def gradient_norms(self, X, y, h):
        X, y, h, xh = self._margin(X, y, h)
        t = np.clip(y - xh, -SATURATION_CLAMP, SATURATION_CLAMP)
        xn = np.sqrt(np.einsum("nd,nd->n", X, X))
        return np.abs(np.tanh(t)) * xn, 0

    def hessian_mc(self, h, X, y) -> SymOperator:
        """Empirical mean of sech^2(y - <x,h>) x x^T."""
        X, y, h, xh = self._margin(X, y, h)
        w = 1.0 / np.cosh(np.clip(y - xh, -SATURATION_CLAMP, SATURATION_CLAMP)) ** 2
        mat = np.einsum("n,ni,nj->ij", w, X, X) / X.shape[0]
        return SymOperator(0.5 * (mat + mat.T))


class LogisticObjective(_LabeledObjective):
    """Plain logistic regression: g = log(1 + exp(-y <x, h>))."""

    kind = KIND_LOGISTIC

    def stochastic_gradient(self, x, y, h) -> np.ndarray:
        x, h = as_vector(x, "x"), as_vector(h, "h")
        y = float(_check_labels([y])[0])
        s = float(_sigmoid(-y * float(np.dot(x, h))))
        return -s * y * x

    def loss(self, x, y, h) -> float:
        x, h = as_vector(x, "x"), as_vector(h, "h")
        return float(np.logaddexp(0.0, -float(y) * float(np.dot(x, h))))

    def batch_gradient(self, X, h, y=None) -> np.ndarray:
        X, y, h, xh = self._margin(X, y, h)
        s = _sigmoid(-y * xh)
        return -((s * y)[:, None] * X).mean(axis=0)

    def batch_loss(self, X, h, y=None) -> float:
        X, y, h, xh = self._margin(X, y, h)
        return float(np.mean(np.logaddexp(0.0, -y * xh)))

    def gradient_norms(self, X, y, h):
        X, y, h, xh = self._margin(X, y, h)
        s = _sigmoid(-y * xh)
        xn = np.sqrt(np.einsum("nd,nd->n", X, X))
        return s * xn, 0

    def hessian_mc(self, h, X, y) -> SymOperator:
        """Empirical mean of sigma(t)(1 - sigma(t)) x x^T at t = y <x,h>."""
        X, y, h, xh = self._margin(X, y, h)
        s = _sigmoid(y * xh)
        w = s * (1.0 - s)
        mat = np.einsum("n,ni,nj->ij", w, X, X) / X.shape[0]
        return SymOperator(0.5 * (mat + mat.T))


def gradient_at(objective, sample, h):
    """Per-sample gradient for a raw sample (x or (x, y)); None if degenerate."""
    if objective.labeled:
        x, y = sample
        return objective.stochastic_gradient(x, y, h)
    return objective.stochastic_gradient(sample, h)


def _split(objective, dataset):
    if hasattr(dataset, "x"):
        X, y = dataset.x, dataset.y
    elif objective.labeled:
        X, y = dataset
    else:
        X, y = dataset, None
    if objective.labeled:
        if y is None:
            raise ValueError("labeled objective needs a labeled dataset")
        return np.asarray(X, dtype=np.float64), _check_labels(y)
    return np.asarray(X, dtype=np.float64), None


def empirical_batch_gradient(objective, h, dataset) -> np.ndarray:
    """Arithmetic mean of per-sample gradients over a dataset.

    Degenerate samples are skipped for the geometric quantile; an all-degenerate
    dataset raises AllDegenerate.
    """
    X, y = _split(objective, dataset)
    if X.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if objective.labeled:
        return objective.batch_gradient(X, h, y)
    return objective.batch_gradient(X, h)


def empirical_loss(objective, h, dataset) -> float:
    """Mean per-sample loss over a dataset (test/line-search helper)."""
    X, y = _split(objective, dataset)
    if X.shape[0] == 0:
        raise ValueError("dataset must be nonempty")
    if objective.labeled:
        return objective.batch_loss(X, h, y)
    return objective.batch_loss(X, h)
