class GreendynError(Exception):
    """Base class for all library errors."""


class DimensionMismatch(GreendynError, ValueError):
    pass


class IndeterminatePoint(GreendynError, ValueError):
    """All components of the map vanish at the point."""


class OrbitHitsIndeterminacy(GreendynError):
    def __init__(self, index: int, message: str = ""):
        self.index = index
        super().__init__(message or f"orbit hits indeterminacy at step {index}")


class ResourceLimitError(GreendynError):
    pass


class CalibrationError(GreendynError, ValueError):
    pass


class PositiveDimensionalLocus(GreendynError):
    pass


class PrecisionBudgetExceeded(GreendynError):
    pass


class InsufficientData(GreendynError, ValueError):
    pass


class VerificationError(GreendynError):
    """A claimed closed form failed an independent check."""
