"""Exception hierarchy. Each class carries the CLI exit code it maps to."""


class GenderLeakError(Exception):
    exit_code = 3


class UsageError(GenderLeakError):
    exit_code = 1


class DataError(GenderLeakError):
    """Malformed or semantically invalid input data."""

    exit_code = 2


class LexiconError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class CorpusError(DataError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class TrainingError(GenderLeakError):
    exit_code = 2


class InvariantError(GenderLeakError):
    """An internal consistency check failed."""

    exit_code = 3
