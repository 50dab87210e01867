"""Exception hierarchy for the package."""


class ZOError(Exception):
    """Base class for every error raised by zo_residual."""


class InvalidDimensionError(ZOError, ValueError):
    pass


class InvalidBatchError(ZOError, ValueError):
    pass


class NonFiniteValueError(ZOError, ArithmeticError):
    """An objective query returned NaN or an infinity."""

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class UnsupportedModeError(ZOError):
    """The objective cannot serve the requested query pattern."""


class ScheduleUnderspecifiedError(ZOError, ValueError):
    def __init__(self, regime, symbol):
        super().__init__(f"regime {regime!r} needs {symbol}, which is missing")
        self.regime = regime
        self.symbol = symbol


class HorizonTooSmallError(ZOError, ValueError):
    pass


class InsufficientTraceError(ZOError):
    pass


class UnstabilizableError(ZOError):
    """Riccati iteration failed to converge for the generated system."""


class ConfigError(ZOError, ValueError):
    pass


class IncompatibleComparisonError(ZOError, ValueError):
    pass
