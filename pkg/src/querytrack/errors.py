"""Exception hierarchy shared by every module.

The CLI maps these onto exit codes: usage/input problems exit 2, bad data
files exit 3, numeric failures exit 4.
"""


class QueryTrackError(Exception):
    """Base class for all package errors."""


class InputError(QueryTrackError, ValueError):
    """An argument violates an operation's preconditions."""


class FormatError(QueryTrackError, ValueError):
    """A serialized artifact is malformed, truncated or of the wrong version."""


class DataError(QueryTrackError):
    """Inputs are individually valid but inconsistent with each other."""


class NumericError(QueryTrackError, ArithmeticError):
    """A computation produced a non-finite value."""


class TrainingError(NumericError):
    """Training diverged.

    ``iteration`` holds the index of the iteration whose loss went non-finite.
    """

    def __init__(self, message, iteration):
        super().__init__(f"{message} (iteration {iteration})")
        self.iteration = iteration


class GenerationError(QueryTrackError):
    """A synthetic scenario could not be realized within the retry budget."""
