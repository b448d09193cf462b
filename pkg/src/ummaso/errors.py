"""Exception hierarchy shared across the package.

The CLI maps these onto process exit codes: config/format problems -> 2,
I/O problems (plain OSError) -> 3, numerical aborts -> 4.
"""


class UmmasoError(Exception):
    """Base class for all package-specific errors."""


class DataFormatError(UmmasoError):
    """A file or value does not match the expected schema."""


class ConfigError(UmmasoError):
    """A configuration document is invalid (unknown key, bad value)."""


class NumericalError(UmmasoError):
    """A computation produced non-finite values and was aborted."""


class StageError(UmmasoError):
    """A pipeline stage failed; carries the stage name, chains the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
