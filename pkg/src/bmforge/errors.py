"""Exception hierarchy."""


class BMForgeError(Exception):
    """Base class for all errors raised by this package."""


class DimensionMismatch(BMForgeError, ValueError):
    pass


class NotRegular(BMForgeError):
    """The constraint differential is not surjective at the given point."""


class NotFirstOrderCritical(BMForgeError):
    pass


class ThresholdError(BMForgeError, ValueError):
    """A family construction was requested outside its dimension threshold."""


class SearchExhausted(BMForgeError):
    pass


class ProjectionDiverged(BMForgeError):
    pass


class DependentColumns(BMForgeError):
    pass


class SystemInconsistent(BMForgeError):
    pass


class G3NotNegDef(BMForgeError):
    pass


class ShiftNotPD(BMForgeError):
    pass


class PreconditionError(BMForgeError):
    """A forge precondition failed.

    ``stage`` names the failing check (``"dimension"``, ``"extreme"``,
    ``"regular"``, ``"min_secant"``, ...).
    """

    def __init__(self, stage, message, **details):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
        self.details = details


class ForgeError(BMForgeError):
    """A pipeline stage failed after the preconditions passed."""

    def __init__(self, stage, message):
        super().__init__(f"[{stage}] {message}")
        self.stage = stage
