"""Exception hierarchy shared by all modules.

Two broad families matter for the CLI exit codes: ``DataError`` (malformed or
inconsistent inputs, exit code 2) and ``NumericError`` (a computation that
cannot proceed or has diverged, exit code 3).
"""


class TopicDistillError(Exception):
    """Base class for all package-specific errors."""


class DataError(TopicDistillError):
    """Input data is malformed, inconsistent, or missing."""


class NumericError(TopicDistillError):
    """A numeric computation failed or left its valid domain."""


class ParseError(DataError):
    """A corpus or config file could not be parsed.

    Carries the 1-based line number when one is known.
    """

    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnknownSplitError(DataError):
    """A document declares a split name outside the configured ones."""


class EmptyVocabularyError(DataError):
    """No token survived the frequency threshold."""


class DimensionMismatchError(DataError):
    """Vector or matrix dimensions do not line up with the model."""


class LengthMismatchError(DataError):
    """Two aligned sequences have different lengths."""


class SingleClassError(DataError):
    """Classifier training needs at least two distinct labels."""


class DomainError(NumericError):
    """An argument is outside the mathematical domain of the operation."""


class DegenerateTopicError(NumericError):
    """A topic received zero mass during re-estimation (smoothing bug)."""


class DivergenceError(NumericError):
    """Training produced a non-finite loss."""
