"""Exception types shared across the package."""


class RenegeFluidError(Exception):
    """Base class for all package errors."""


class ConfigError(RenegeFluidError):
    """Invalid scenario, distribution or initial-condition specification."""


class DomainError(RenegeFluidError):
    """A distribution was evaluated outside the support of its density."""


class MassExceeded(RenegeFluidError):
    """A quantile or mass integral was requested beyond the total mass."""


class NoConvergence(RenegeFluidError):
    """The fixed-point iteration of the fluid solver failed to converge."""


class HorizonExceeded(RenegeFluidError):
    """A waiting-time level was not reached before the end of the horizon."""
