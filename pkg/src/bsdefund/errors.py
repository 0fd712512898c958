"""Exception hierarchy shared by every module."""


class BsdeFundError(Exception):
    """Base class for all package errors."""


class InvalidInputError(BsdeFundError, ValueError):
    """Non-finite or otherwise malformed numerical input."""


class NotPSDError(InvalidInputError):
    """Matrix has an eigenvalue below the PSD clamp tolerance."""


class SingularMatrixError(InvalidInputError):
    """Matrix is (numerically) singular where an inverse is required."""


class InvalidConfigError(BsdeFundError, ValueError):
    """Simulation or solver settings that cannot be honoured."""


class SolverError(BsdeFundError, RuntimeError):
    """Hard failure inside the backward solver (e.g. NaN propagation)."""

    def __init__(self, message, step=None):
        super().__init__(message)
        self.step = step
