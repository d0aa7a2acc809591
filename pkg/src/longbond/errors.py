"""Exception types raised across the package."""


class LongBondError(ValueError):
    """Base class for all model and validation errors."""


class EmptyData(LongBondError):
    pass


class NonMonotoneData(LongBondError):
    pass


class HorizonMismatch(LongBondError):
    pass


class InvalidParameter(LongBondError):
    pass


class UnboundedDensity(LongBondError):
    pass


class NotAbsolutelyContinuous(LongBondError):
    pass


class OffGridTime(LongBondError):
    pass


class MaturityBeyondHorizon(LongBondError):
    pass


class BadMaturityOrder(LongBondError):
    pass


class NonPositiveInitial(LongBondError):
    pass


class NonPositiveX(LongBondError):
    pass


class NonStrictCurve(LongBondError):
    pass


class MaturityNotInModel(LongBondError):
    pass


class PrerequisiteFailed(LongBondError):
    pass


class ConfigError(LongBondError):
    pass
