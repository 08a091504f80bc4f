"""Exception hierarchy shared by the library and the CLI."""


class LtBracketError(Exception):
    """Base class for all errors raised by ltbracket."""


class DataError(LtBracketError, ValueError):
    """Malformed input or a dataset that fails validation."""


class EstimationError(LtBracketError, ArithmeticError):
    """An estimator is undefined on the given data (empty cell, ill-posed fit, ...)."""


class InferenceError(EstimationError):
    """Bootstrap or testing machinery could not produce a usable result."""


class SpecError(LtBracketError, ValueError):
    """Invalid simulation or configuration parameters."""
