"""Exception hierarchy shared by every featcomp module."""


class FeatcompError(Exception):
    """Base class for all library errors."""


class ShapeError(FeatcompError, ValueError):
    """Operand dimensions do not agree."""


class DomainError(FeatcompError, ValueError):
    """An argument lies outside the operation's domain."""


class NumericError(FeatcompError, ArithmeticError):
    """A computation produced NaN or Inf."""


class DataError(FeatcompError, ValueError):
    """The corpus or batch cannot support the requested operation."""


class EvaluationError(DataError):
    """No query could be scored."""


class FormatError(FeatcompError, ValueError):
    """A binary or text file is malformed.

    ``offset`` is the byte offset (or, for text files, the line number)
    at which the problem was detected.
    """

    def __init__(self, message: str, offset: int):
        super().__init__(f"{message} (at offset {offset})")
        self.offset = offset


class VersionError(FormatError):
    """A file was written by an incompatible format version."""

    def __init__(self, kind: str, found: int, supported: int, offset: int = 4):
        super().__init__(
            f"unsupported {kind} version {found} (reader supports {supported})", offset
        )
        self.found = found
        self.supported = supported
