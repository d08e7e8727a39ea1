"""Exception types raised by qbeat."""


class QBeatError(Exception):
    """Base class for all qbeat errors."""


class DomainError(QBeatError, ValueError):
    """A physical quantity was requested outside its domain of definition."""


class InvalidArgument(QBeatError, ValueError):
    pass


class ConvergenceError(QBeatError, RuntimeError):
    """No local refinement of the multi-start search converged."""


class ProfileError(QBeatError, RuntimeError):
    """A chi-squared profile did not bracket its target level."""


class ValidationError(QBeatError, ValueError):
    pass


class ParseError(QBeatError, ValueError):
    """Malformed dataset file. Carries the 1-based line and column."""

    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column}")
        prefix = f"{', '.join(where)}: " if where else ""
        super().__init__(prefix + message)
