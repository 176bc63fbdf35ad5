"""Exception hierarchy shared by the library and the command line."""


class NVError(Exception):
    """Base class for all errors raised by :mod:`nvtheta`."""


class PhysicsDomainError(NVError, ValueError):
    """Input outside the physically meaningful domain of an operation."""


class SingularFieldError(PhysicsDomainError):
    """Field magnitude too close to the zero-field-splitting field."""


class InaccessibleFieldError(PhysicsDomainError):
    """Requested field vector lies outside the accessible coil region."""


class InaccessibleAxisError(PhysicsDomainError):
    """Candidate NV axis cannot be probed within the accessible region."""


class FitError(NVError, RuntimeError):
    """Least-squares problem could not be solved."""


class ConfigError(NVError, ValueError):
    """Invalid run configuration."""
