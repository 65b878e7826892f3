"""Exception types shared across the package."""


class DiffLabError(Exception):
    """Base class for all package-specific errors."""


class ArgumentOrderError(DiffLabError):
    """Interval endpoints were passed in reversed order."""


class InvalidGridError(DiffLabError):
    """A discretization grid could not be constructed as requested."""


class InvalidParameterError(DiffLabError):
    """A parameter is outside its admissible range."""


class DegenerateGridError(DiffLabError):
    """A quantity requiring an early-stopped grid was requested with t0 = 0."""


class NoDensityError(DiffLabError):
    """The distribution has no density at the queried time/point."""


class InvalidInputError(DiffLabError):
    """An input matrix or vector violates a structural requirement."""


class FitFailureError(DiffLabError):
    """A least-squares fit could not be completed."""


class UnsupportedModelError(DiffLabError):
    """The score model does not support the requested operation."""


class ConfigError(DiffLabError):
    """An experiment configuration is missing or inconsistent."""
