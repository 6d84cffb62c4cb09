"""Exception hierarchy shared by every lobvol module."""


class LobvolError(Exception):
    """Base class for all errors raised by lobvol."""


class ParameterError(LobvolError, ValueError):
    """An argument is outside its admissible range."""


class FormatError(LobvolError):
    """Input bytes do not decode under the declared file format."""

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class OrderingError(FormatError):
    """Snapshot timestamps are not strictly increasing."""


class ValidationError(LobvolError):
    """A snapshot violates a book invariant (crossed book, bad volume, ...)."""

    def __init__(self, message, line=None, timestamp=None):
        self.line = line
        self.timestamp = timestamp
        self.reason = message
        where = []
        if line is not None:
            where.append(f"line {line}")
        if timestamp is not None:
            where.append(f"timestamp {timestamp}")
        if where:
            message = f"{', '.join(where)}: {message}"
        super().__init__(message)


class InsufficientDataError(LobvolError):
    """Not enough valid observations for the requested statistic."""


class AlignmentError(LobvolError):
    """Two series that must share a slot grid do not."""


class UndefinedCorrelationError(LobvolError):
    """A correlation is undefined because one subsample has zero variance."""


class DegeneracyError(LobvolError):
    """Durbin-Levinson recursion hit a non positive-definite sequence."""

    def __init__(self, lag, message=None):
        self.lag = lag
        super().__init__(message or f"non positive-definite autocorrelation sequence at lag {lag}")


class UnderdeterminedError(LobvolError):
    """A fit segment has fewer usable points than parameters need."""


class UndefinedTestError(LobvolError):
    """A test statistic is undefined for this sample (e.g. zero variance)."""
