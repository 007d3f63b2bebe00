"""Exception types shared across the toolkit."""


class FieldError(ValueError):
    """Base class for errors raised by field-level operations."""


class AllZeroField(FieldError):
    pass


class NegativeValue(FieldError):
    pass


class ZeroVariance(FieldError):
    pass


class FieldTooSmall(FieldError):
    pass


class DimensionMismatch(FieldError):
    pass


class NonFiniteValue(FieldError):
    pass


class MalformedHeader(FieldError):
    pass


class EmptyRegion(FieldError):
    pass


class DegenerateMask(FieldError):
    pass


class EmptyFixationSet(FieldError):
    pass


class TimeOutOfRange(FieldError):
    pass


class NonFiniteLoss(RuntimeError):
    """Raised when an optimization step produces a non-finite loss."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class NonFiniteState(RuntimeError):
    """Raised when numerical integration produces a non-finite state."""

    def __init__(self, t_index: int, tau_index: int | None = None):
        self.t_index = t_index
        self.tau_index = tau_index
        where = f"t step {t_index}" + ("" if tau_index is None else f", tau step {tau_index}")
        super().__init__(f"non-finite state at {where}")


class PlacementFailure(RuntimeError):
    """Raised when rejection sampling cannot place targets in the grid."""


class UnknownCategory(KeyError):
    pass


class OracleUnavailable(RuntimeError):
    pass


class InconsistentAttributes(ValueError):
    pass


class AlreadyDecided(ValueError):
    pass


class ConfigError(ValueError):
    pass
