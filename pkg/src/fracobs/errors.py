"""Exception types shared across the package."""

__all__ = [
    "FracobsError",
    "ValidationError",
    "NumericalError",
    "ConvergenceError",
]


class FracobsError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(FracobsError):
    """Invalid user input (configuration, parameters, file contents).

    ``problems`` collects every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class NumericalError(FracobsError):
    """A computation produced values outside its guaranteed range
    (non-finite entries, loss of positivity, failed invariant)."""


class ConvergenceError(FracobsError):
    """An iterative solver exhausted its budget without meeting its
    tolerance.  Carries the last iterate for post-mortem inspection."""

    def __init__(self, message, iterate=None, residual=None):
        super().__init__(message)
        self.iterate = iterate
        self.residual = residual
