"""Exception types shared across the package."""


class ConfigError(ValueError):
    """A scenario configuration failed to parse or validate."""


class ResonanceError(RuntimeError):
    """The shifted system matrix is numerically singular (driving frequency
    sits on or too close to a resonance of the discretized body)."""

    def __init__(self, message: str, rcond: float):
        super().__init__(message)
        self.rcond = rcond


class SingularSystemError(RuntimeError):
    """The system is structurally singular (e.g. no Dirichlet boundary and
    zero frequency, leaving rigid body modes in the kernel)."""


class InfeasibleSweepError(RuntimeError):
    """No count threshold separates inside from outside test voxels."""
