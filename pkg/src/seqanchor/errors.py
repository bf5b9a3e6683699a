"""Exception types shared across the package.

The CLI maps each family onto an exit code, so raise the narrowest one.
"""


class SeqAnchorError(Exception):
    """Base class for every error raised by this package."""

    code = "error"


class ConfigError(SeqAnchorError, ValueError):
    code = "config_error"


class DimensionError(SeqAnchorError, ValueError):
    code = "dimension_mismatch"


class NumericalError(SeqAnchorError, FloatingPointError):
    code = "numeric_failure"


class DataFormatError(SeqAnchorError, ValueError):
    """Malformed input file; carries row/column coordinates when known."""

    code = "data_format"

    def __init__(self, message, row=None, column=None):
        super().__init__(message)
        self.row = row
        self.column = column
