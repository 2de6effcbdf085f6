"""Deterministic batch solvers for ground truth at desk scale.

Two routes to the empirical minimizer: the Weiszfeld fixed point (geometric
median/quantile only) and full-gradient descent with Armijo backtracking
(any objective).  Rate experiments compare streaming estimates against these,
so both solvers are deliberately boring and tight-toleranced; the two routes
cross-check each other on median problems.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import streams
from .datagen import DistributionSpec, freeze
from .errors import (ConfigError, DegenerateDataset, NoConvergence,
                     NonFiniteInput)
from .linalg import as_vector
from .objectives import (DEGENERACY_ETA, GeometricQuantileObjective,
                         QuadraticObjective, empirical_batch_gradient,
                         empirical_loss)

DEFAULT_TOL = 1e-10
DEFAULT_MAX_ITER = 10 ** 5

# distributions symmetric about their center, where the geometric median is
# the center in closed form
_CENTRALLY_SYMMETRIC = ("gaussian", "student_t", "sphere_uniform", "kl_brownian")


@dataclass
class OracleResult:
    m_hat: np.ndarray
    iterations: int
    final_gradient_norm: float
    converged: bool
    tol: float
    method: str

    def to_dict(self) -> dict:
        return {
            "m_hat": [float(v) for v in self.m_hat],
            "iterations": self.iterations,
            "final_gradient_norm": self.final_gradient_norm,
            "converged": self.converged,
            "tol": self.tol,
            "method": self.method,
        }

    def to_json(self, **extra) -> str:
        d = self.to_dict()
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def weiszfeld(points, direction=None, tol: float = DEFAULT_TOL,
              max_iter: int = DEFAULT_MAX_ITER) -> OracleResult:
    """Empirical geometric quantile of a point cloud by fixed-point iteration.

    Iterates h <- (sum_i x_i/||x_i - h|| + v * N_eff) / sum_i 1/||x_i - h||
    over the points not coinciding with h; stops once the empirical gradient
    (mean over non-coincident points of -(x-h)/||x-h|| - v) has norm <= tol.
    An iterate landing on a data point that is not optimal is nudged by
    1e-9 * (1 + ||h||) along a fixed direction and iteration continues.
    """
    X = np.asarray(points, dtype=np.float64)
    if X.ndim != 2 or X.shape[0] < 2:
        raise DegenerateDataset("need at least 2 points in an (n, d) array")
    if not np.all(np.isfinite(X)):
        raise NonFiniteInput("points contain non-finite values")
    d = X.shape[1]
    if direction is None:
        v = np.zeros(d)
    else:
        v = as_vector(direction, "direction")
        if float(np.linalg.norm(v)) >= 1.0:
            raise ValueError("direction must have norm strictly below 1")
    if not (tol > 0):
        raise ValueError("tol must be positive")
    if np.all(np.abs(X - X[0]) < 1e-300):
        raise DegenerateDataset("all points identical")

    nudge = np.full(d, 1.0 / np.sqrt(d))
    h = X.mean(axis=0)
    for it in range(1, int(max_iter) + 1):
        diff = X - h
        dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
        keep = dist >= DEGENERACY_ETA
        n_eff = int(np.count_nonzero(keep))
        if n_eff == 0:
            raise DegenerateDataset("all points identical")
        units = diff[keep] / dist[keep, None]
        grad = -units.mean(axis=0) - v
        gnorm = float(np.linalg.norm(grad))
        if gnorm <= tol:
            return OracleResult(h, it, gnorm, True, tol, "weiszfeld")
        if n_eff < X.shape[0]:
            h = h + 1e-9 * (1.0 + float(np.linalg.norm(h))) * nudge
            continue
        w = 1.0 / dist
        h = (w @ X + v * X.shape[0]) / float(w.sum())
    diff = X - h
    dist = np.sqrt(np.einsum("nd,nd->n", diff, diff))
    keep = dist >= DEGENERACY_ETA
    units = diff[keep] / dist[keep, None]
    gnorm = float(np.linalg.norm(-units.mean(axis=0) - v))
    raise NoConvergence(f"weiszfeld: gradient norm {gnorm:.3e} > tol {tol:.3e} "
                        f"after {max_iter} iterations")


_ARMIJO_SLOPE = 1e-4
_BACKTRACK = 0.5
_MIN_STEP = 1e-18
# below this, the Armijo decrease is smaller than the float resolution of the
# loss itself and cannot be certified; the gradient is still accurate, so the
# step is taken at the last certified size
_F_RESOLUTION = 64 * np.finfo(np.float64).eps


def batch_gd(objective, dataset, tol: float = DEFAULT_TOL,
             max_iter: int = DEFAULT_MAX_ITER, h0=None) -> OracleResult:
    """Full-gradient descent with Armijo backtracking on the empirical risk."""
    if not (tol > 0):
        raise ValueError("tol must be positive")
    if h0 is None:
        h = np.zeros(objective.dim)
    else:
        h = as_vector(h0, "h0").copy()
    f = empirical_loss(objective, h, dataset)
    t_good = 1.0
    for it in range(1, int(max_iter) + 1):
        g = empirical_batch_gradient(objective, h, dataset)
        gnorm = float(np.linalg.norm(g))
        if gnorm <= tol:
            return OracleResult(h, it, gnorm, True, tol, "batch_gd")
        gsq = gnorm * gnorm
        f_res = _F_RESOLUTION * max(1.0, abs(f))
        t = t_good
        while True:
            h_try = h - t * g
            f_try = empirical_loss(objective, h_try, dataset)
            if f_try <= f - _ARMIJO_SLOPE * t * gsq:
                t_good = min(1.0, 2.0 * t)
                break
            if _ARMIJO_SLOPE * t * gsq <= f_res and f_try <= f + f_res:
                break
            t *= _BACKTRACK
            if t < _MIN_STEP:
                raise NoConvergence(f"batch_gd: line search stalled at iteration {it} "
                                    f"(gradient norm {gnorm:.3e})")
        h, f = h_try, f_try
    g = empirical_batch_gradient(objective, h, dataset)
    gnorm = float(np.linalg.norm(g))
    raise NoConvergence(f"batch_gd: gradient norm {gnorm:.3e} > tol {tol:.3e} "
                        f"after {max_iter} iterations")


@dataclass
class GroundTruth:
    """Resolved target m plus provenance for reports."""

    m: np.ndarray
    mode: str
    oracle: Optional[OracleResult]
    n_oracle: int
    seed: int

    def provenance(self) -> dict:
        out = {"mode": self.mode, "m": [float(v) for v in self.m]}
        if self.mode == "empirical":
            out["n_oracle"] = self.n_oracle
            out["oracle_seed"] = self.seed
            out["oracle"] = self.oracle.to_dict()
        return out


def oracle_dataset_seed(seed: int) -> int:
    """Seed of the dedicated oracle dataset stream under a base seed."""
    return streams.mix64(int(seed), streams.PURPOSE_ORACLE)


def ground_truth(objective, spec: Optional[DistributionSpec], mode: str,
                 n_oracle: int = 10 ** 6, seed: int = 0, tol: float = DEFAULT_TOL,
                 max_iter: int = DEFAULT_MAX_ITER) -> GroundTruth:
    """Resolve the target m either in closed form or from a frozen sample.

    Closed forms exist for the quadratic objective (its own center) and for
    the geometric median of a distribution symmetric about its center.  The
    empirical mode freezes n_oracle draws from a dedicated stream and runs
    weiszfeld (geometric quantile) or batch_gd (everything else).
    """
    if mode == "analytic":
        if isinstance(objective, QuadraticObjective):
            return GroundTruth(objective.m_true.copy(), "analytic", None, 0, int(seed))
        if (isinstance(objective, GeometricQuantileObjective) and objective.is_median
                and spec is not None and spec.family in _CENTRALLY_SYMMETRIC):
            return GroundTruth(spec.center.copy(), "analytic", None, 0, int(seed))
        raise ConfigError(
            "no closed-form target for this objective/distribution pair; "
            "use ground_truth.mode = empirical")
    if mode != "empirical":
        raise ConfigError(f"ground-truth mode must be 'analytic' or 'empirical', got {mode!r}")
    if spec is None:
        raise ConfigError("empirical ground truth needs a distribution spec")
    ds = freeze(spec, n_oracle, oracle_dataset_seed(seed))
    if isinstance(objective, GeometricQuantileObjective):
        res = weiszfeld(ds.x, objective.direction, tol=tol, max_iter=max_iter)
    else:
        res = batch_gd(objective, ds, tol=tol, max_iter=max_iter)
    return GroundTruth(res.m_hat.copy(), "empirical", res, int(n_oracle), int(seed))
