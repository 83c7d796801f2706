"""Exception hierarchy shared across the toolkit.

Two top-level families matter for callers: configuration problems
(bad parameters, malformed experiment configs) and data problems
(missing/corrupt files, dimension mismatches, empty inputs). The CLI
maps them to exit codes 2 and 3; the service maps them to HTTP 400
and 422.
"""


class AshkitError(Exception):
    """Base class for all toolkit errors."""


class ConfigError(AshkitError):
    """Invalid parameter or experiment configuration."""


class DataError(AshkitError):
    """Invalid, missing, or inconsistent input data."""


class TensorFormatError(DataError):
    """Malformed tensor file (bad magic, version, truncation, ...)."""
