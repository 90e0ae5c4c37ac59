"""Exception types raised across the package."""


class OssFieldError(Exception):
    """Base class for every error raised by ossfield."""


class DomainError(OssFieldError, ValueError):
    """An argument lies outside the domain of the operation."""


class NotInQError(DomainError):
    """An operator was required to have eigenvalues with positive real parts."""


class KernelNotPositiveError(DomainError):
    """A kernel returned a nonpositive value on the unit sphere."""


class SingularityError(OssFieldError, ArithmeticError):
    """An integrand evaluated to a non-finite value inside a quadrature cell."""


class FieldNotDefinedError(OssFieldError):
    """The integrability diagnostic diverged at an evaluation point."""


class ConfigError(OssFieldError, ValueError):
    """A run configuration violates a documented invariant."""
