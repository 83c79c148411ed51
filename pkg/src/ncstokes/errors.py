"""Exception types shared across the package."""


class ConfigurationError(ValueError):
    """Inconsistent inputs: incompatible element pair, bad sizes, invalid options."""


class SolverError(RuntimeError):
    """Linear solve failed; ``pivot`` is the offending pivot index when known."""

    def __init__(self, message, pivot=None):
        super().__init__(message)
        self.pivot = pivot
