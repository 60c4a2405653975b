"""Exception hierarchy shared by the library, the CLI and the API"""

from enum import Enum


class ToolkitError(Exception):
    """Base class for every error raised on purpose by this package"""

    exit_code: int = 1


class InvalidInputError(ToolkitError, ValueError):
    """A caller passed arguments that violate an operation's preconditions"""

    exit_code = 2


class ShapeMismatchError(InvalidInputError):
    """Two operands (or two files) disagree on shape"""

    def __init__(self, what: str, expected, actual):
        self.expected = tuple(expected) if isinstance(expected, (list, tuple)) else expected
        self.actual = tuple(actual) if isinstance(actual, (list, tuple)) else actual
        super().__init__(f"{what}: shape {self.expected} does not match {self.actual}")


class NumericalError(ToolkitError, ArithmeticError):
    """NaN losses, negative eigenvalues and similar numeric failures"""

    exit_code = 3


class ConvergenceError(NumericalError):
    """An iterative routine hit its sweep limit without converging"""


class FormatIssue(str, Enum):
    """Distinct ways a binary artifact can be malformed"""

    BAD_MAGIC = "bad magic"
    TRUNCATED_HEADER = "truncated header"
    TRUNCATED_PAYLOAD = "truncated payload"
    SHAPE_MISMATCH = "shape mismatch"
    UNSUPPORTED_VERSION = "unsupported version"


class ArtifactError(ToolkitError, OSError):
    """Reading or writing an on-disk artifact failed"""

    exit_code = 4

    def __init__(self, issue: FormatIssue, path, detail: str = ""):
        self.issue = issue
        self.path = str(path)
        message = f"{self.path}: {issue.value}"
        if detail:
            message = f"{message} ({detail})"
        super().__init__(message)


class DatasetFormatError(ArtifactError):
    """Malformed CHM1 channel dataset file"""


class CheckpointFormatError(ArtifactError):
    """Malformed or incompatible CKP1 checkpoint file"""
