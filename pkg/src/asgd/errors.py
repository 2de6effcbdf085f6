"""Exception taxonomy shared across the package."""


class AsgdError(Exception):
    """Base class for all package errors."""


class DimensionMismatch(AsgdError, ValueError):
    """Operands have incompatible dimensions."""


class NonFiniteInput(AsgdError, ValueError):
    """An input vector or matrix contains NaN or Inf."""


class NoConvergence(AsgdError, RuntimeError):
    """An iterative solver hit its iteration cap with residual above tolerance."""


class NonFiniteIterate(AsgdError, RuntimeError):
    """A recursion iterate left the finite floats; the replicate is aborted.

    ``n`` is the sample count at which the first non-finite coordinate appeared.
    """

    def __init__(self, n: int, message: str = ""):
        self.n = int(n)
        super().__init__(message or f"iterate became non-finite at n={n}")


class AllDegenerate(AsgdError, RuntimeError):
    """Every sample in a batch hit the degeneracy guard (sample == iterate)."""


class DegenerateDataset(AsgdError, ValueError):
    """Batch solver input is unusable (e.g. all points identical)."""


class TooManyFailures(AsgdError, RuntimeError):
    """More than 1% of Monte Carlo replicates aborted with NonFiniteIterate."""


class InsufficientPoints(AsgdError, ValueError):
    """Too few checkpoints remain after burn-in to fit a slope."""


class NonPositiveMoment(AsgdError, ValueError):
    """A moment estimate is not strictly positive, so its log is undefined."""


class ConfigError(AsgdError, ValueError):
    """Config file failed to parse or validate."""
