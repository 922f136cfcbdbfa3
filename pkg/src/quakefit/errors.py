"""Exception types raised across the package."""


class QuakefitError(Exception):
    """Base class for all package errors."""


class InvalidStartError(QuakefitError):
    """Objective not finite at the optimizer's starting point."""


class IntegrationError(QuakefitError):
    """Quadrature hit a non-finite integrand sample or failed to converge."""


class CatalogError(QuakefitError):
    """Malformed catalog input."""


class ExplosionError(QuakefitError):
    """Simulation refused: expected offspring per event >= 1 on the horizon."""
