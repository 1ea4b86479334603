"""Exception hierarchy. Each family maps to one CLI exit code."""


class ClinBPError(Exception):
    exit_code = 1


class DataError(ClinBPError):
    """Input data is malformed or violates a data contract."""

    exit_code = 1


class ParseError(DataError):
    def __init__(self, message, row=None):
        self.row = row
        if row is not None:
            message = f"row {row}: {message}"
        super().__init__(message)


class EmptyCohortError(DataError):
    pass


class SchemaMismatchError(DataError):
    pass


class SelectionError(DataError):
    pass


class ImputationError(DataError):
    pass


class ConfigError(ClinBPError):
    exit_code = 2


class InvariantError(ClinBPError):
    """A logic fault: an internal post-condition failed."""

    exit_code = 3


class ConvergenceError(ClinBPError):
    def __init__(self, message, gap=None):
        self.gap = gap
        super().__init__(message)
