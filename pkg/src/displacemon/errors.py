"""Exception types shared across the package."""


class DisplacemonError(Exception):
    """Base class for all package errors."""


class NumericsError(DisplacemonError):
    """A numerical guard tripped (truncation, resolution, convergence)."""


class TruncationRisk(NumericsError):
    pass


class ZeroProbability(NumericsError):
    pass


class NotConverged(NumericsError):
    pass


class StepTooLarge(NumericsError):
    pass


class GridTooSmall(NumericsError):
    pass


class UnderResolved(NumericsError):
    pass


class InvalidGeometry(DisplacemonError, ValueError):
    pass


class SingularBias(NumericsError):
    """Coupling diverges at the flux point where |cos(pi*dPhi/2Phi0)| -> 0."""


class ConfigError(DisplacemonError, ValueError):
    """Bad scenario configuration; ``key`` holds the dotted path when known."""

    def __init__(self, message, key=None):
        super().__init__(message)
        self.key = key
