"""Exception types raised by atomcpd.

The CLI maps these onto exit codes: :class:`ConfigError` -> 2,
:class:`NumericalError` -> 3.
"""


class ConfigError(ValueError):
    """Invalid parameters, shapes or input files."""


class CsvFormatError(ConfigError):
    """Malformed CPD-CSV input. ``line`` is 1-based."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CapabilityError(ConfigError):
    """The regularizer does not support the requested operation."""


class NumericalError(ArithmeticError):
    """A numerical kernel failed (e.g. SVD did not converge)."""

    def __init__(self, message, **diagnostics):
        self.diagnostics = diagnostics
        super().__init__(message)
