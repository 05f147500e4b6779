"""Exception hierarchy shared by every rosvd module.

Each error that the CLI maps to a dedicated exit status carries it as
``exit_code``; everything else falls through to the generic status 1.
"""

from __future__ import annotations


class RosvdError(Exception):
    exit_code = 1


class ConfigError(RosvdError, ValueError):
    exit_code = 2


class EnvironmentRangeError(RosvdError, ValueError):
    pass


class IngestionError(RosvdError, ValueError):
    def __init__(self, message: str, row: int | None = None, col: int | None = None):
        if row is not None:
            where = f"row {row}" + (f", column {col}" if col is not None else "")
            message = f"{message} ({where})"
        super().__init__(message)
        self.row = row
        self.col = col


class FormatError(RosvdError, ValueError):
    pass


class NumericInputError(RosvdError, ValueError):
    pass


class TruncationError(RosvdError, ValueError):
    pass


class DegenerateTailError(RosvdError, ValueError):
    pass


class AnalysisError(RosvdError, ValueError):
    pass


class InsufficientBitsError(RosvdError, ValueError):
    pass


class LedgerError(RosvdError):
    pass


class DuplicateRegistrationError(LedgerError):
    exit_code = 3


class NotRegisteredError(LedgerError):
    pass


class BudgetExhaustedError(LedgerError):
    exit_code = 4


class JournalParseError(LedgerError):
    def __init__(self, message: str, offset: int, index: int | None = None):
        super().__init__(f"{message} at byte offset {offset}")
        self.offset = offset
        self.index = index


class JournalWriteError(LedgerError):
    pass


class WatermarkError(RosvdError, ValueError):
    pass


class PayloadTooLargeError(WatermarkError):
    pass


class ImageFormatError(WatermarkError):
    pass


class IntegrityError(RosvdError):
    exit_code = 5


class TraceMissError(RosvdError):
    exit_code = 6
