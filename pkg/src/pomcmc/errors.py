"""Exception hierarchy shared by the library and the CLI."""


class PomcmcError(Exception):
    exit_code = 1


class ConfigError(PomcmcError, ValueError):
    """Invalid or contradictory parameters."""

    exit_code = 2


class DataFormatError(PomcmcError, ValueError):
    """Malformed input file (ragged rows, missing values, bad schema)."""

    exit_code = 2


class ResourceCapError(PomcmcError):
    """A configured size cap would be exceeded."""

    exit_code = 3

    def __init__(self, message, required=None):
        super().__init__(message)
        self.required = required
