"""Exception hierarchy shared by the whole package.

The CLI maps these onto exit codes, so user-facing failures should raise
one of the classes below rather than a bare ValueError.
"""


class TwoGraphError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(TwoGraphError):
    """Operand dimensions do not match the operation's contract."""


class ValidationError(TwoGraphError):
    """An object would violate its structural invariants."""


class EmptySelectionError(ValidationError):
    """A node/row selection that must be non-empty is empty."""


class ParameterError(TwoGraphError):
    """An argument value is outside the accepted domain."""


class ConfigError(TwoGraphError):
    """A run configuration is inconsistent or incomplete."""


class ParseError(TwoGraphError):
    """A data file could not be parsed."""


class NumericError(TwoGraphError):
    """A numeric routine failed (non-finite values, no convergence)."""
