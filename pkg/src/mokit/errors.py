"""Exception types shared across the toolkit."""


class MokitError(Exception):
    """Base class for toolkit errors."""


class InvalidParameter(MokitError, ValueError):
    """A Φ-function or operator parameter is outside its admissible range."""

    def __init__(self, message, point=None):
        super().__init__(message if point is None else f"{message} (at x={point})")
        self.point = point


class ExpressionError(MokitError, ValueError):
    pass


class PhiOverflow(MokitError, ArithmeticError):
    """Evaluation left the floating point range (e.g. exp(s^p) for large s)."""


class UnboundedConjugate(MokitError, ArithmeticError):
    """sup_t {st - M(x,t)} kept increasing up to the growth cap."""


class OutOfRange(MokitError, ArithmeticError):
    """A generalized inverse could not be bracketed."""


class SurrogateFailed(MokitError):
    """The Amemiya-type minimization found no interior minimum."""


class ConfigError(MokitError):
    def __init__(self, message, line=None, column=None):
        loc = ""
        if line is not None:
            loc = f" (line {line}" + (f", column {column}" if column is not None else "") + ")"
        super().__init__(message + loc)
        self.reason = message
        self.line = line
        self.column = column
