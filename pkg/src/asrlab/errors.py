"""Exception hierarchy for asrlab.

Every error raised on purpose by the library derives from :class:`AsrLabError`
so callers (and the CLI) can catch the whole family in one place.
"""


class AsrLabError(Exception):
    pass


# frontend
class SignalTooShort(AsrLabError, ValueError):
    pass


class SingularToeplitz(AsrLabError, ArithmeticError):
    pass


# shared shape check
class DimensionMismatch(AsrLabError, ValueError):
    pass


# som
class InsufficientData(AsrLabError, ValueError):
    pass


# mlp
class LabelOutOfRange(AsrLabError, ValueError):
    pass


# decoder
class EmptyLabels(AsrLabError, ValueError):
    pass


class ZeroPrior(AsrLabError, ValueError):
    pass


class AllPathsImpossible(AsrLabError, ArithmeticError):
    pass


class EmptySequence(AsrLabError, ValueError):
    pass


# ga
class InvalidChromosome(AsrLabError, ValueError):
    pass


# corpus
class ParseError(AsrLabError, ValueError):
    def __init__(self, message, line=None, column=None):
        self.line = line
        self.column = column
        where = []
        if line is not None:
            where.append(f"line {line}")
        if column is not None:
            where.append(f"column {column!r}")
        if where:
            message = f"{message} ({', '.join(where)})"
        super().__init__(message)


class InconsistentVocabulary(ParseError):
    pass


class TooFewRepetitions(AsrLabError, ValueError):
    pass


# eval
class InvalidCounts(AsrLabError, ValueError):
    pass


class UnknownUtterance(AsrLabError, KeyError):
    def __str__(self):
        return Exception.__str__(self)


class MismatchedSpeakers(AsrLabError, ValueError):
    pass


# model files
class FormatError(AsrLabError, ValueError):
    pass


# pipeline
class StageError(AsrLabError, RuntimeError):
    """Wraps any failure inside a pipeline stage with the stage's name."""

    def __init__(self, stage, cause):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {type(cause).__name__}: {cause}")
