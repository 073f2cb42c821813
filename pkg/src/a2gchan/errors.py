"""Exception hierarchy shared by all modules.

The three top-level families map onto distinct CLI exit codes, so callers can
tell a bad parameter file from a corrupt capture or a degenerate numeric case.
Every error carries the name of the module that raised it.
"""


class A2GError(Exception):
    """Base class for every error raised by this package."""

    exit_code = 1
    default_module = "a2gchan"

    def __init__(self, message, *, module=None):
        super().__init__(message)
        self.module = module or self.default_module

    def __str__(self):
        return f"[{self.module}] {super().__str__()}"


class ConfigError(A2GError, ValueError):
    """Invalid parameters, config files or scene descriptions."""

    exit_code = 2


class DataError(A2GError, ValueError):
    """Malformed or inconsistent input data (files, tensors, logs)."""

    exit_code = 3


class NumericError(A2GError, ArithmeticError):
    """A computation is undefined for the given input (zero power, zero norm...)."""

    exit_code = 4


class CsiFormatError(DataError):
    default_module = "csi-model"


class FixedPointRangeError(DataError):
    default_module = "csi-model"

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class GeometryError(ConfigError):
    default_module = "geo-channel"


class SyncError(NumericError):
    default_module = "sounder-sim"
