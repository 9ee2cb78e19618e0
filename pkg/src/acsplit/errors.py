"""Exception hierarchy shared by the simulation modules."""


class AcsplitError(Exception):
    """Base class for all package errors."""


class ConfigurationError(AcsplitError, ValueError):
    """Inconsistent sizes, misaligned time grids or malformed configs.

    ``key`` names the offending configuration entry when there is one.
    """

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key


class DomainError(AcsplitError, ValueError):
    """Argument outside the mathematical domain of an operation."""


class ResourceError(AcsplitError, MemoryError):
    """Requested allocation exceeds the configured cap."""


class FitError(AcsplitError, ValueError):
    """Regression data too degenerate to fit a rate."""


class ExperimentError(AcsplitError, RuntimeError):
    """A Monte Carlo experiment could not produce a trustworthy result."""
