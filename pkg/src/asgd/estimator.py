"""Streaming estimator: stochastic gradient recursion plus running average.

With iterates indexed from 1, the recursion consumes one fresh sample per
step:

    Z_{n+1} = Z_n - gamma_n * grad g(X_{n+1}, Z_n)
    Zbar_{n+1} = Zbar_n + (Z_{n+1} - Zbar_n) / (n + 1)

with gamma_n = c_gamma * n^(-alpha) and Z_1 the first sample kept as-is if it
lies inside a ball of radius clip_radius, replaced by the origin otherwise.
A degenerate sample (geometric quantile hitting the iterate exactly) skips the
gradient but still advances the index and the average.

This module is the scalar reference path, one sample at a time; the batched
kernels under asgd.kernels replicate it bit for bit and are what the Monte
Carlo harness actually runs.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import NonFiniteIterate
from .objectives import gradient_at

DEFAULT_CLIP_RADIUS = 1e4


@dataclass(frozen=True)
class StepSchedule:
    """Step sizes gamma_n = c_gamma * n^(-alpha), alpha in (1/2, 1].

    alpha = 1 is only sound when c_gamma clears a constant tied to the local
    curvature, which the caller cannot generally know; it therefore requires
    allow_alpha_one=True and emits a RuntimeWarning.
    """

    c_gamma: float
    alpha: float
    allow_alpha_one: bool = False

    def __post_init__(self):
        if not np.isfinite(self.c_gamma) or self.c_gamma <= 0.0:
            raise ValueError("c_gamma must be finite and positive")
        if not (0.5 < self.alpha <= 1.0):
            raise ValueError("alpha must lie in (1/2, 1]")
        if self.alpha == 1.0:
            if not self.allow_alpha_one:
                raise ValueError(
                    "alpha = 1 requires allow_alpha_one=True; the averaged rate "
                    "then depends on c_gamma exceeding an unknown curvature constant"
                )
            warnings.warn(
                "alpha = 1: convergence requires c_gamma above a curvature "
                "constant that is not checked here",
                RuntimeWarning,
                stacklevel=2,
            )

    def step_size(self, n: int) -> float:
        if n < 1:
            raise ValueError("step index starts at 1")
        return self.c_gamma * float(n) ** (-self.alpha)

    def step_sizes(self, n0: int, count: int) -> np.ndarray:
        """gamma_{n0}, ..., gamma_{n0+count-1} as one array."""
        if n0 < 1:
            raise ValueError("step index starts at 1")
        idx = np.arange(n0, n0 + count, dtype=np.float64)
        return self.c_gamma * np.power(idx, -self.alpha)


class EstimatorState:
    """Mutable recursion state: iterate, running average, sample count."""

    __slots__ = ("z", "zbar", "n", "n_degenerate")

    def __init__(self, z: np.ndarray, zbar: np.ndarray, n: int, n_degenerate: int = 0):
        self.z = z
        self.zbar = zbar
        self.n = n
        self.n_degenerate = n_degenerate

    @property
    def dim(self) -> int:
        return self.z.shape[0]


def init_state(objective, first_sample, clip_radius: float = DEFAULT_CLIP_RADIUS) -> EstimatorState:
    """Consume the first sample: Z_1 = Zbar_1 = clipped sample (or zero init)."""
    z = objective.initial_iterate(first_sample, clip_radius)
    return EstimatorState(z=z, zbar=z.copy(), n=1)


def step(state: EstimatorState, objective, schedule: StepSchedule, sample) -> EstimatorState:
    """Advance the recursion by one sample, in place."""
    grad = gradient_at(objective, sample, state.z)
    if grad is None:
        state.n_degenerate += 1
    else:
        # overflow surfaces as NonFiniteIterate below, not as a warning
        with np.errstate(over="ignore", invalid="ignore"):
            state.z = state.z - schedule.step_size(state.n) * grad
    state.n += 1
    if not np.all(np.isfinite(state.z)):
        raise NonFiniteIterate(state.n)
    state.zbar = state.zbar + (state.z - state.zbar) / state.n
    return state


class RunRecord:
    """Final state plus any checkpointed iterates from run_stream."""

    __slots__ = ("z", "zbar", "n", "n_degenerate", "checkpoints", "z_at", "zbar_at")

    def __init__(self, state: EstimatorState, checkpoints, z_at, zbar_at):
        self.z = state.z
        self.zbar = state.zbar
        self.n = state.n
        self.n_degenerate = state.n_degenerate
        self.checkpoints = checkpoints
        self.z_at = z_at
        self.zbar_at = zbar_at


def run_stream(objective, schedule: StepSchedule, samples, clip_radius: float = DEFAULT_CLIP_RADIUS,
               checkpoints=None) -> RunRecord:
    """Run the recursion over an iterable of samples (the first one initializes).

    checkpoints, if given, is an increasing sequence of sample counts n at
    which (Z_n, Zbar_n) are recorded.
    """
    cps = None if checkpoints is None else np.asarray(checkpoints, dtype=np.int64)
    if cps is not None and (cps.size == 0 or np.any(np.diff(cps) <= 0) or cps[0] < 1):
        raise ValueError("checkpoints must be increasing sample counts >= 1")
    z_at: list[np.ndarray] = []
    zbar_at: list[np.ndarray] = []
    next_cp = 0
    state = None
    for sample in samples:
        if state is None:
            state = init_state(objective, sample, clip_radius)
        else:
            step(state, objective, schedule, sample)
        if cps is not None and next_cp < cps.size and state.n == int(cps[next_cp]):
            z_at.append(state.z.copy())
            zbar_at.append(state.zbar.copy())
            next_cp += 1
    if state is None:
        raise ValueError("sample stream is empty")
    if cps is not None and next_cp != cps.size:
        raise ValueError("sample stream ended before the last checkpoint")
    return RunRecord(state, cps, z_at, zbar_at)
