"""Exception and warning types raised across the package."""


class CtrwError(Exception):
    """Base class for all package errors."""


class DomainError(CtrwError, ValueError):
    """A parameter lies outside the domain where the model is defined."""


class PreconditionError(CtrwError, ValueError):
    """An input field violates a precondition of a numerical operator."""


class ConfigurationError(CtrwError, ValueError):
    """Inconsistent grids, step sizes or run configuration."""


class HorizonError(CtrwError):
    """A query time lies beyond the sampled portion of a path."""


class UnsupportedModelError(CtrwError):
    """The requested operation is not available for this model class."""


class StabilityError(CtrwError):
    """An explicit time step violates its stability restriction.

    ``suggested_dt`` carries a step that satisfies the restriction.
    """

    def __init__(self, message: str, suggested_dt: float):
        super().__init__(message)
        self.suggested_dt = suggested_dt


class NegativityError(CtrwError):
    """A computed probability measure went negative beyond tolerance."""


class ConvergenceWarning(UserWarning):
    """A refinement sweep did not behave monotonically."""


class HorizonWarning(UserWarning):
    """Some sampled paths did not clear the requested horizon."""


class LeakageWarning(UserWarning):
    """Mass escaping through truncated spatial boundaries exceeded its tolerance."""
