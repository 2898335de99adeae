"""Exception taxonomy shared by the library and the CLI exit codes."""


class WadaptError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WadaptError):
    """Invalid configuration or incompatible shapes/specs (CLI exit code 2)."""


class InputError(WadaptError):
    """An operation rejected its input (precondition violation, exit code 2)."""


class DataError(WadaptError):
    """Dataset ingestion failure: bad manifest row, corrupt file (exit code 3)."""


class NumericError(WadaptError):
    """Non-finite values where finite ones are required (exit code 4)."""

    def __init__(self, message, history=None):
        super().__init__(message)
        self.history = history
