"""Exception types raised across the package."""


class FedbanError(Exception):
    """Base class for all package errors."""


class ConfigError(FedbanError, ValueError):
    """Invalid configuration. ``errors`` lists every violation found."""

    def __init__(self, errors):
        if isinstance(errors, str):
            errors = [errors]
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class EmptyMechanismError(FedbanError, ValueError):
    pass


class NumericalFault(FedbanError, ArithmeticError):
    """A non-finite value reached a place where it must not appear."""

    def __init__(self, message, agent=None, arm=None):
        self.agent = agent
        self.arm = arm
        super().__init__(message)


class SpectralGapError(FedbanError, ValueError):
    pass


class GraphValidationError(FedbanError, ValueError):
    pass


class InvariantViolation(FedbanError, AssertionError):
    pass


class PrivacyViolation(FedbanError, PermissionError):
    """Raw (non-private) reward accumulators were read while sealed."""


class TraceIntegrityError(FedbanError, ValueError):
    """A trace file's recorded config hash does not match its config."""
