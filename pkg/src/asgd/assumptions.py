"""Numerical checks of the conditions the convergence rates rest on.

Three checks around a resolved target m:

* strong convexity   min over probes h of <grad G(h), h - m> / ||h - m||^2
* Taylor remainder   max over probes of ||grad G(h) - Gamma_m (h - m)|| / ||h - m||^2
* gradient moments   E ||grad g(X, h)||^(2q) per probe, with the fitted
                     growth exponent of moment versus ||h - m||

Gradients are exact where the objective provides a closed form (the
quadratic) and Monte Carlo means otherwise, always with standard errors.
Probes sit on spheres of log-spaced radii; each radius gets an orthonormal
direction frame, the first one deterministic (signed identity columns) and
the rest randomly rotated.  Checks only report numbers; thresholds live in
the test suite and the shipped configs.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import streams
from .datagen import DistributionSpec, SampleStream
from .errors import InsufficientPoints
from .linalg import SymOperator, as_vector, extreme_eigenvalues
from .objectives import GeometricQuantileObjective, QuadraticObjective


def _mc_sample(spec: DistributionSpec, n_mc: int, seed: int):
    """Frozen MC sample shared by every probe of one check (common randoms)."""
    st = SampleStream(spec, seed, (streams.PURPOSE_MOMENT_MC,))
    return st.block(int(n_mc))


def _haar_rotation(rng: np.random.Generator, d: int) -> np.ndarray:
    a = rng.standard_normal((d, d))
    q, r = np.linalg.qr(a)
    return q * np.sign(np.diag(r))


def probe_points(m, radius: float, n_probes: int, seed: int):
    """Probe list [(h, r)] on spheres around m with log-spaced radii.

    Radii span [1e-3 * radius, radius]; 2d directions per radius (signed
    frame columns), frames after the first rotated by Haar rotations drawn
    from the probe stream.
    """
    m = as_vector(m, "m")
    if not (radius > 0 and np.isfinite(radius)):
        raise ValueError("radius must be finite and positive")
    n_probes = int(n_probes)
    if n_probes < 1:
        raise ValueError("n_probes must be >= 1")
    d = m.shape[0]
    n_dir = min(2 * d, n_probes)
    n_rad = max(2, math.ceil(n_probes / n_dir)) if n_probes > 1 else 1
    radii = np.geomspace(1e-3 * radius, radius, n_rad)
    rng = streams.stream(seed, streams.PURPOSE_PROBE)
    probes = []
    for i, r in enumerate(radii):
        frame = np.eye(d) if i == 0 else _haar_rotation(rng, d)
        dirs = np.concatenate([frame.T, -frame.T], axis=0)
        for u in dirs[:n_dir]:
            probes.append((m + float(r) * u, float(r)))
            if len(probes) == n_probes:
                return probes
    return probes


def _diff_projections(objective, X, y, h, m, w):
    """Per-sample values <grad g(x_j, h) - grad g(x_j, m), w>.

    The population gradient vanishes at the target m, so differencing against
    the same samples at m leaves the estimand unchanged while cancelling the
    O(1) per-sample noise; without it the ratio estimate at probe radius r
    carries a standard error growing like 1/r.
    """
    X = np.asarray(X, dtype=np.float64)
    if isinstance(objective, QuadraticObjective):
        return np.full(X.shape[0], float(np.dot(h - m, w)))
    if isinstance(objective, GeometricQuantileObjective):
        dh = X - h[None, :]
        dm = X - m[None, :]
        nh = np.sqrt(np.einsum("nd,nd->n", dh, dh))
        nm = np.sqrt(np.einsum("nd,nd->n", dm, dm))
        keep = (nh >= 1e-12) & (nm >= 1e-12)
        return (dm[keep] @ w) / nm[keep] - (dh[keep] @ w) / nh[keep]
    xw = X @ w
    if objective.kind == 2:
        th = np.clip(y - X @ h, -40.0, 40.0)
        tm = np.clip(y - X @ m, -40.0, 40.0)
        return (np.tanh(tm) - np.tanh(th)) * xw
    th = np.clip(-y * (X @ h), -40.0, 40.0)
    tm = np.clip(-y * (X @ m), -40.0, 40.0)
    sh = 1.0 / (1.0 + np.exp(-th))
    sm = 1.0 / (1.0 + np.exp(-tm))
    return (sm - sh) * y * xw


def _mean_gradient(objective, X, y, h):
    if objective.labeled:
        return objective.batch_gradient(X, h, y)
    return objective.batch_gradient(X, h)


@dataclass
class ProbeValue:
    radius: float
    value: float
    stderr: float


@dataclass
class RatioResult:
    ratio_min: float
    stderr: float
    probes: list


def check_strong_convexity(objective, spec: Optional[DistributionSpec], m, radius: float,
                           n_probes: int = 24, n_mc: int = 10 ** 5,
                           seed: int = 0) -> RatioResult:
    """Minimum over probes of <grad G(h), h - m> / ||h - m||^2, with stderr.

    Exact gradients when the objective has them (quadratic: the ratio is 1
    with zero error at every probe); Monte Carlo on a frozen sample otherwise.
    """
    m = as_vector(m, "m")
    probes = probe_points(m, radius, n_probes, seed)
    exact = hasattr(objective, "population_gradient")
    if not exact:
        if spec is None:
            raise ValueError("Monte Carlo gradient check needs a distribution spec")
        X, y = _mc_sample(spec, n_mc, seed)
    out = []
    for h, r in probes:
        u = h - m
        usq = float(np.dot(u, u))
        if exact:
            diff = objective.population_gradient(h) - objective.population_gradient(m)
            ratio = float(np.dot(diff, u)) / usq
            se = 0.0
        else:
            proj = _diff_projections(objective, X, y, h, m, u)
            ratio = float(np.mean(proj)) / usq
            se = float(np.std(proj, ddof=1)) / np.sqrt(proj.shape[0]) / usq
        out.append(ProbeValue(r, ratio, se))
    worst = min(out, key=lambda p: p.value)
    return RatioResult(worst.value, worst.stderr, out)


@dataclass
class RemainderResult:
    remainder_max: float
    probes: list


def hessian_at(objective, spec: Optional[DistributionSpec], m, n_mc: int = 10 ** 5,
               seed: int = 0) -> SymOperator:
    """Hessian of the mean objective at m: exact if available, else MC."""
    m = as_vector(m, "m")
    if hasattr(objective, "hessian"):
        return objective.hessian()
    if spec is None:
        raise ValueError("Monte Carlo Hessian needs a distribution spec")
    X, y = _mc_sample(spec, n_mc, seed)
    if objective.labeled:
        return objective.hessian_mc(m, X, y)
    return objective.hessian_mc(m, X)


def check_taylor_remainder(objective, spec: Optional[DistributionSpec], m, radius: float,
                           n_probes: int = 24, n_mc: int = 10 ** 5,
                           seed: int = 0) -> RemainderResult:
    """Max over probes of ||grad G(h) - grad G(m) - Gamma_m (h - m)|| / ||h - m||^2.

    In the MC branch the two gradients and Gamma_m are estimated from one
    shared sample, so the empirical Taylor expansion cancels to second order
    at small radii instead of drowning in 1/r^2-amplified sample noise; the
    subtracted term is zero in expectation at the target.
    """
    m = as_vector(m, "m")
    gamma = hessian_at(objective, spec, m, n_mc=n_mc, seed=seed).matrix
    probes = probe_points(m, radius, n_probes, seed)
    exact = hasattr(objective, "population_gradient")
    if not exact:
        X, y = _mc_sample(spec, n_mc, seed)
        grad_m = _mean_gradient(objective, X, y, m)
    out = []
    for h, r in probes:
        u = h - m
        grad = (objective.population_gradient(h) - objective.population_gradient(m)
                if exact else _mean_gradient(objective, X, y, h) - grad_m)
        rem = float(np.linalg.norm(grad - gamma @ u)) / float(np.dot(u, u))
        out.append(ProbeValue(r, rem, 0.0))
    return RemainderResult(max(p.value for p in out), out)


@dataclass
class MomentResult:
    q: int
    probes: list
    growth_exponent: Optional[float]
    moment_max: float


def check_gradient_moments(objective, spec: Optional[DistributionSpec], m, q: int,
                           n_mc: int = 10 ** 5, n_probes: int = 24,
                           radius: float = 1.0, seed: int = 0) -> MomentResult:
    """MC estimates of E ||grad g(X, h)||^(2q) on the probe grid.

    Also fits the growth exponent of the moment against ||h - m|| by least
    squares on logs (needs >= 2 distinct radii with positive moments).
    """
    q = int(q)
    if q < 1:
        raise ValueError("q must be >= 1")
    m = as_vector(m, "m")
    if spec is None:
        raise ValueError("moment check needs a distribution spec")
    X, y = _mc_sample(spec, n_mc, seed)
    probes = probe_points(m, radius, n_probes, seed)
    out = []
    for h, r in probes:
        norms, _skipped = objective.gradient_norms(X, y, h)
        vals = norms ** (2 * q)
        mhat = float(np.mean(vals))
        se = float(np.std(vals, ddof=1)) / np.sqrt(vals.shape[0])
        out.append(ProbeValue(r, mhat, se))
    rs = np.array([p.radius for p in out])
    ms = np.array([p.value for p in out])
    ok = (rs > 0) & (ms > 0)
    growth = None
    if np.unique(rs[ok]).size >= 2:
        slope, _ = np.polyfit(np.log(rs[ok]), np.log(ms[ok]), 1)
        growth = float(slope)
    return MomentResult(q, out, growth, float(ms.max()))


@dataclass
class ConvexityReport:
    """Bundle of all checks for one objective/distribution pair."""

    lambda_min_hat: float
    lambda_max_hat: float
    ratio_min: float
    ratio_min_stderr: float
    remainder_max: float
    probe_count: int
    n_mc: int
    radius: float
    moments: dict

    def to_json(self, **extra) -> str:
        d = {
            "lambda_min_hat": self.lambda_min_hat,
            "lambda_max_hat": self.lambda_max_hat,
            "ratio_min": self.ratio_min,
            "ratio_min_stderr": self.ratio_min_stderr,
            "remainder_max": self.remainder_max,
            "probe_count": self.probe_count,
            "n_mc": self.n_mc,
            "radius": self.radius,
            "moments": self.moments,
        }
        d.update(extra)
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def run_all_checks(objective, spec: Optional[DistributionSpec], m, radius: float,
                   n_probes: int = 24, n_mc: int = 10 ** 5, seed: int = 0,
                   moment_orders=(1,)) -> ConvexityReport:
    """Compose the three checks plus extreme Hessian eigenvalues at m."""
    if int(n_probes) < 1:
        raise InsufficientPoints("need at least one probe")
    gamma = hessian_at(objective, spec, m, n_mc=n_mc, seed=seed)
    lam_max, lam_min = extreme_eigenvalues(gamma)
    ratio = check_strong_convexity(objective, spec, m, radius, n_probes, n_mc, seed)
    rem = check_taylor_remainder(objective, spec, m, radius, n_probes, n_mc, seed)
    moments = {}
    for q in moment_orders:
        mr = check_gradient_moments(objective, spec, m, q, n_mc, n_probes, radius, seed)
        moments[str(int(q))] = {
            "max": mr.moment_max,
            "growth_exponent": mr.growth_exponent,
            "probes": [[p.radius, p.value, p.stderr] for p in mr.probes],
        }
    return ConvexityReport(
        lambda_min_hat=float(lam_min),
        lambda_max_hat=float(lam_max),
        ratio_min=ratio.ratio_min,
        ratio_min_stderr=ratio.stderr,
        remainder_max=rem.remainder_max,
        probe_count=len(ratio.probes),
        n_mc=int(n_mc),
        radius=float(radius),
        moments=moments,
    )
