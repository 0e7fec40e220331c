"""Exception types raised across the package."""


class NumericalFailure(RuntimeError):
    """A numerical routine could not produce a usable result.

    ``trace`` carries the partial solver trace when raised from a run.
    """

    def __init__(self, message, trace=None):
        super().__init__(message)
        self.trace = trace


class ConfigError(ValueError):
    """Invalid experiment configuration."""
