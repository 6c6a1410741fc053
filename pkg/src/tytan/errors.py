"""Exception types shared across the package."""


class TytanError(Exception):
    """Base class for all domain errors raised by this package."""


class BoundsError(TytanError, ValueError):
    """A count or size argument is outside its allowed range."""


class DomainError(TytanError, ValueError):
    """An input value is outside the domain of an operation (e.g. NaN)."""


class UnderdeterminedError(TytanError, ValueError):
    """Not enough independent observations to fit a model."""
