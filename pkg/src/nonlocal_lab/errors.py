"""Exception types shared across the package."""


class DomainError(ValueError):
    """Argument outside the domain where a function is defined."""


class EvaluationError(ArithmeticError):
    """A numerical evaluation produced a non-finite value."""


class ResolutionError(ValueError):
    """The grid is too coarse for the requested kernel."""


class PeriodizationError(ValueError):
    """A convolution power would wrap around the periodic grid.

    The offending wrap-around estimate is kept in ``estimate``.
    """

    def __init__(self, message, estimate=None, k_max=None):
        super().__init__(message)
        self.estimate = estimate
        self.k_max = k_max


class FitError(ValueError):
    """A regression could not be carried out on the supplied data."""


class CostError(ValueError):
    """The requested computation is too expensive for the chosen method."""
