"""Exception types raised across the package."""


class MhdLabError(Exception):
    """Base class for all package errors."""


class NonPositivePressure(MhdLabError):
    pass


class HyperbolicityViolated(MhdLabError):
    pass


class DegenerateJacobian(MhdLabError):
    pass


class InvalidSupport(MhdLabError):
    pass


class NotADiffeomorphism(MhdLabError):
    pass


class ConstraintViolated(MhdLabError):
    pass


class StabilityViolated(MhdLabError):
    pass


class SingularFrontSystem(MhdLabError):
    pass


class CflViolated(MhdLabError):
    pass


class NanDetected(MhdLabError):
    pass


class ConfigError(MhdLabError):
    pass
