"""Exception types shared across the package."""


class CaldError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CaldError):
    """Invalid configuration or command-line usage."""


class DataFormatError(CaldError):
    """Malformed or inconsistent input data.

    ``line`` carries the 1-based line number of the offending record when
    the error originates from a line-delimited stream.
    """

    def __init__(self, message: str, line: int | None = None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class MappingDegenerateError(CaldError):
    """Box mapping produced a zero-width or zero-height box after clipping."""


class EmptyScoreError(CaldError):
    """Score vector sums to zero and cannot be normalized."""


class InvalidDistributionError(CaldError):
    """Input is not a valid probability vector."""


class EmptyPoolError(CaldError):
    """Labeled pool contains no object instances."""


class InsufficientCandidatesError(CaldError):
    """Budget exceeds the number of available candidates."""


class IncompleteInputError(CaldError):
    """Predictions are missing for one or more images.

    ``missing`` lists the offending image ids.
    """

    def __init__(self, message: str, missing: list[str]):
        super().__init__(message)
        self.missing = list(missing)
