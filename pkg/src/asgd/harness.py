"""Monte Carlo replication engine and rate-slope fitting.

Runs R independent streaming-estimator trajectories (replicate r draws from
the stream keyed by (seed, replicate, r)), estimates E||Z_n - m||^(2p) and
E||Zbar_n - m||^(2p) across a geometric checkpoint grid, and fits ordinary
least squares slopes on log-log axes.  The expected exponents are -p*alpha
for the raw iterate and -p for the average; acceptance tolerances live in
the test suite.

Replicates execute in chunks, each chunk advanced in lockstep by the
selected kernel backend; chunks may run on several threads.  All reductions
happen on assembled per-replicate arrays in replicate order, so results do
not depend on chunking or thread count.
"""

from __future__ import annotations

import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from types import SimpleNamespace
from typing import Optional

import numpy as np

from . import kernels, streams
from .datagen import DistributionSpec, SampleStream
from .errors import (ConfigError, InsufficientPoints, NonFiniteIterate,
                     NonPositiveMoment, TooManyFailures)
from .estimator import DEFAULT_CLIP_RADIUS, StepSchedule
from .objectives import KIND_GEOMETRIC_QUANTILE
from .oracle import GroundTruth, ground_truth

DEFAULT_PER_DECADE = 12
DEFAULT_BURN_IN = 0.5
MAX_FAILURE_FRACTION = 0.01

# per-chunk sample buffer budget, in doubles
_BLOCK_BUDGET = 3_000_000
_MAX_CHUNK_REPLICATES = 256

_DUMMY_YS = np.zeros((1, 1))


def geometric_checkpoints(n_max: int, first: int = 1000,
                          per_decade: int = DEFAULT_PER_DECADE) -> np.ndarray:
    """Geometric grid first ... n_max, per_decade points per decade, n_max kept."""
    n_max, first = int(n_max), int(first)
    if first < 2 or n_max <= first:
        raise ConfigError("need 2 <= first < n_max for a checkpoint grid")
    k0, k1 = math.log10(first), math.log10(n_max)
    count = int(math.floor((k1 - k0) * per_decade + 1e-9)) + 1
    exps = k0 + np.arange(count) / per_decade
    ns = np.unique(np.rint(10.0 ** exps).astype(np.int64))
    ns = ns[ns <= n_max]
    if ns[-1] != n_max:
        ns = np.append(ns, n_max)
    return ns


@dataclass
class ExperimentConfig:
    """Everything one rate experiment needs; validated on construction."""

    objective: object
    spec: DistributionSpec
    schedule: StepSchedule
    n_max: int
    n_replicates: int
    checkpoints: Optional[np.ndarray] = None
    p_orders: tuple = (1,)
    seed: int = 0
    gt_mode: str = "analytic"
    n_oracle: int = 10 ** 6
    oracle_tol: float = 1e-10
    clip_radius: float = DEFAULT_CLIP_RADIUS
    burn_in_fraction: float = DEFAULT_BURN_IN
    config_hash: str = field(default="", repr=False)

    def __post_init__(self):
        self.n_max = int(self.n_max)
        self.n_replicates = int(self.n_replicates)
        if self.n_replicates < 2:
            raise ConfigError("need at least 2 replicates")
        if self.objective.dim != self.spec.dim:
            raise ConfigError("objective and distribution dimensions differ")
        if self.objective.labeled != self.spec.labeled:
            raise ConfigError("objective and distribution disagree about labels")
        self.p_orders = tuple(int(p) for p in self.p_orders)
        if not self.p_orders or any(p not in (1, 2) for p in self.p_orders):
            raise ConfigError("moment orders must be a nonempty subset of {1, 2}")
        if self.checkpoints is None:
            self.checkpoints = geometric_checkpoints(self.n_max)
        self.checkpoints = np.asarray(self.checkpoints, dtype=np.int64)
        cps = self.checkpoints
        if cps.size < 2 or np.any(np.diff(cps) <= 0) or cps[0] < 1 or cps[-1] > self.n_max:
            raise ConfigError("checkpoints must be increasing, >= 1 and <= n_max")
        decades = math.log10(cps[-1] / cps[0])
        if decades > 0 and (cps.size - 1) / decades < 8 - 1e-9:
            raise ConfigError("checkpoint grid must have at least 8 points per decade")
        if not (0.0 <= self.burn_in_fraction < 1.0):
            raise ConfigError("burn_in_fraction must lie in [0, 1)")
        if not (self.clip_radius > 0):
            raise ConfigError("clip_radius must be positive")
        self.seed = int(self.seed)


def _init_chunk(cfg: ExperimentConfig, r_indices):
    d = cfg.objective.dim
    rc = len(r_indices)
    strs = [SampleStream(cfg.spec, cfg.seed, streams.replicate_path(r)) for r in r_indices]
    z = np.empty((rc, d))
    for i, st in enumerate(strs):
        xs, ys = st.block(1)
        sample = xs[0] if ys is None else (xs[0], float(ys[0]))
        z[i] = cfg.objective.initial_iterate(sample, cfg.clip_radius)
    return strs, z, z.copy()


def _run_chunk(cfg: ExperimentConfig, r_indices, backend):
    """Advance one chunk of replicates to n_max; returns per-chunk arrays."""
    obj = cfg.objective
    d = obj.dim
    rc = len(r_indices)
    labeled = obj.labeled
    cps = cfg.checkpoints
    n_cp = cps.size
    v = obj.direction if obj.kind == KIND_GEOMETRIC_QUANTILE else np.zeros(d)

    strs, z, zbar = _init_chunk(cfg, r_indices)
    active = np.ones(rc, dtype=np.uint8)
    fail_n = np.zeros(rc, dtype=np.int64)
    degen = np.zeros(rc, dtype=np.int64)
    out_z = np.empty((n_cp, rc, d))
    out_zbar = np.empty((n_cp, rc, d))
    if cps[0] == 1:
        out_z[0] = z
        out_zbar[0] = zbar

    b_max = max(128, min(8192, _BLOCK_BUDGET // max(1, rc * d)))
    n_cur = 1
    while n_cur < cfg.n_max:
        b = min(b_max, cfg.n_max - n_cur)
        xs = np.empty((rc, b, d))
        ys = np.empty((rc, b)) if labeled else _DUMMY_YS
        for i, st in enumerate(strs):
            bx, by = st.block(b)
            xs[i] = bx
            if labeled:
                ys[i] = by
        gam = cfg.schedule.step_sizes(n_cur, b)
        wavg = 1.0 / np.arange(n_cur + 1, n_cur + b + 1, dtype=np.float64)
        lo = int(np.searchsorted(cps, n_cur, side="right"))
        hi = int(np.searchsorted(cps, n_cur + b, side="right"))
        cp_pos = (cps[lo:hi] - n_cur - 1).astype(np.int64)
        backend.advance_block(obj.kind, v, z, zbar, n_cur, gam, wavg, xs, ys,
                              cp_pos, out_z[lo:hi], out_zbar[lo:hi],
                              active, fail_n, degen)
        n_cur += b
    return out_z, out_zbar, fail_n, degen


@dataclass
class ReplicateRuns:
    """Checkpointed trajectories of all replicates, plus failure bookkeeping."""

    checkpoints: np.ndarray
    z: np.ndarray        # (n_cp, R, d)
    zbar: np.ndarray     # (n_cp, R, d)
    fail_n: np.ndarray   # (R,) 0 = never failed
    degenerate: np.ndarray

    @property
    def n_failed(self) -> int:
        return int(np.count_nonzero(self.fail_n))


def run_replicates(cfg: ExperimentConfig, threads: int = 1,
                   backend=None) -> ReplicateRuns:
    """Run all replicates; raises TooManyFailures above the 1% abort budget."""
    backend = backend or kernels
    r_total = cfg.n_replicates
    d = cfg.objective.dim
    n_cp = cfg.checkpoints.size
    z = np.empty((n_cp, r_total, d))
    zbar = np.empty((n_cp, r_total, d))
    fail_n = np.zeros(r_total, dtype=np.int64)
    degen = np.zeros(r_total, dtype=np.int64)

    chunk = min(_MAX_CHUNK_REPLICATES, r_total)
    spans = [(lo, min(lo + chunk, r_total)) for lo in range(0, r_total, chunk)]

    def work(span):
        lo, hi = span
        oz, ozb, f, dg = _run_chunk(cfg, range(lo, hi), backend)
        z[:, lo:hi] = oz
        zbar[:, lo:hi] = ozb
        fail_n[lo:hi] = f
        degen[lo:hi] = dg

    threads = max(1, int(threads))
    if threads == 1 or len(spans) == 1:
        for s in spans:
            work(s)
    else:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            list(pool.map(work, spans))

    runs = ReplicateRuns(cfg.checkpoints, z, zbar, fail_n, degen)
    if runs.n_failed > MAX_FAILURE_FRACTION * r_total:
        raise TooManyFailures(
            f"{runs.n_failed} of {r_total} replicates aborted with a non-finite iterate")
    return runs


def single_run(cfg: ExperimentConfig, replicate: int, backend=None):
    """One extra trajectory (outside the replicate budget): final (z, zbar)."""
    backend = backend or kernels
    oz, ozb, fail, _ = _run_chunk(cfg, [int(replicate)], backend)
    if fail[0]:
        raise NonFiniteIterate(int(fail[0]))
    return oz[-1, 0].copy(), ozb[-1, 0].copy()


def stream_run(objective, spec: DistributionSpec, schedule: StepSchedule, seed: int,
               replicate: int, n: int, clip_radius: float = DEFAULT_CLIP_RADIUS,
               backend=None):
    """Run one trajectory for exactly n samples; returns final (z, zbar)."""
    n = int(n)
    if n < 1:
        raise ConfigError("n must be >= 1")
    cfg = SimpleNamespace(
        objective=objective, spec=spec, schedule=schedule, seed=int(seed),
        clip_radius=float(clip_radius), n_max=n,
        checkpoints=np.array([n], dtype=np.int64))
    oz, ozb, fail, _ = _run_chunk(cfg, [int(replicate)], backend or kernels)
    if fail[0]:
        raise NonFiniteIterate(int(fail[0]))
    return oz[0, 0].copy(), ozb[0, 0].copy()


def moment_table(runs: ReplicateRuns, m, p_orders) -> dict:
    """Replicate-mean moments per (estimator, p, checkpoint), failures excluded.

    Returns {(estimator, p): array of (n, moment, stderr, replicates)} rows.
    """
    m = np.asarray(m, dtype=np.float64)
    include = runs.fail_n == 0
    count = int(np.count_nonzero(include))
    if count < 2:
        raise TooManyFailures("fewer than 2 surviving replicates")
    tables = {}
    for est, arr in (("raw", runs.z), ("averaged", runs.zbar)):
        diff = arr[:, include, :] - m
        sumsq = np.einsum("krd,krd->kr", diff, diff)
        for p in p_orders:
            vals = sumsq if p == 1 else sumsq ** p
            mean = vals.mean(axis=1)
            stderr = vals.std(axis=1, ddof=1) / np.sqrt(count)
            tables[(est, int(p))] = np.column_stack(
                [runs.checkpoints.astype(np.float64), mean, stderr,
                 np.full(runs.checkpoints.size, count, dtype=np.float64)])
    return tables


def fit_loglog_slope(ns, moments, burn_in_fraction: float = DEFAULT_BURN_IN,
                     min_points: int = 8):
    """OLS of ln(moment) on ln(n) over the last (1 - burn_in) of the log-range.

    Returns (slope, slope_stderr, intercept).
    """
    ns = np.asarray(ns, dtype=np.float64)
    moments = np.asarray(moments, dtype=np.float64)
    if ns.ndim != 1 or ns.shape != moments.shape or ns.size < 2:
        raise InsufficientPoints("need matching 1-D arrays with >= 2 points")
    if np.any(moments <= 0) or not np.all(np.isfinite(moments)):
        raise NonPositiveMoment("moments must be finite and positive for a log fit")
    if not (0.0 <= burn_in_fraction < 1.0):
        raise ValueError("burn_in_fraction must lie in [0, 1)")
    ln_n = np.log(ns)
    cut = ln_n[0] + burn_in_fraction * (ln_n[-1] - ln_n[0])
    keep = ln_n >= cut - 1e-12
    if int(np.count_nonzero(keep)) < min_points:
        raise InsufficientPoints(
            f"{int(np.count_nonzero(keep))} checkpoints after burn-in, need {min_points}")
    x = ln_n[keep]
    y = np.log(moments[keep])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    resid = y - (intercept + slope * x)
    dof = max(x.size - 2, 1)
    stderr = float(np.sqrt(np.sum(resid ** 2) / dof / sxx))
    return slope, stderr, intercept


@dataclass
class RateReport:
    """Fitted slopes and moment tables for one experiment."""

    entries: dict                  # (estimator, p) -> dict
    ground: GroundTruth
    n_replicates: int
    n_included: int
    failures: int
    burn_in_fraction: float
    seed: int
    n_max: int
    config_hash: str
    backend: str

    def moments_csv(self) -> str:
        lines = ["estimator,p,n,moment,stderr,replicates"]
        for est in ("raw", "averaged"):
            for (e, p), entry in sorted(self.entries.items(), key=lambda kv: kv[0][1]):
                if e != est:
                    continue
                for n, mom, se, reps in entry["table"]:
                    lines.append(f"{est},{p},{int(n)},{mom:.17g},{se:.17g},{int(reps)}")
        return "\n".join(lines) + "\n"

    def to_json(self) -> str:
        entries = {}
        for (est, p), entry in self.entries.items():
            entries[f"{est}_p{p}"] = {
                "slope": entry["slope"],
                "slope_stderr": entry["slope_stderr"],
                "intercept": entry["intercept"],
                "target_slope": entry["target_slope"],
                "n_fit_points": entry["n_fit_points"],
            }
        doc = {
            "entries": entries,
            "ground_truth": self.ground.provenance(),
            "n_replicates": self.n_replicates,
            "n_included": self.n_included,
            "failures": self.failures,
            "burn_in_fraction": self.burn_in_fraction,
            "seed": self.seed,
            "n_max": self.n_max,
            "config_hash": self.config_hash,
        }
        return json.dumps(doc, indent=2, sort_keys=True) + "\n"


def rate_experiment(cfg: ExperimentConfig, threads: int = 1,
                    backend=None) -> RateReport:
    """Resolve ground truth, run replicates, fit slopes for every (estimator, p)."""
    gt = ground_truth(cfg.objective, cfg.spec, cfg.gt_mode,
                      n_oracle=cfg.n_oracle, seed=cfg.seed, tol=cfg.oracle_tol)
    runs = run_replicates(cfg, threads=threads, backend=backend)
    tables = moment_table(runs, gt.m, cfg.p_orders)
    entries = {}
    included = 0
    for (est, p), table in tables.items():
        ns, moms = table[:, 0], table[:, 1]
        slope, se, intercept = fit_loglog_slope(ns, moms, cfg.burn_in_fraction)
        ln_n = np.log(ns)
        cut = ln_n[0] + cfg.burn_in_fraction * (ln_n[-1] - ln_n[0])
        entries[(est, p)] = {
            "table": table,
            "slope": slope,
            "slope_stderr": se,
            "intercept": intercept,
            "target_slope": (-p * cfg.schedule.alpha) if est == "raw" else float(-p),
            "n_fit_points": int(np.count_nonzero(ln_n >= cut - 1e-12)),
        }
        included = int(table[0, 3])
    return RateReport(
        entries=entries,
        ground=gt,
        n_replicates=cfg.n_replicates,
        n_included=included,
        failures=runs.n_failed,
        burn_in_fraction=cfg.burn_in_fraction,
        seed=cfg.seed,
        n_max=cfg.n_max,
        config_hash=cfg.config_hash,
        backend=kernels.BACKEND_NAME if backend is None else "custom",
    )
