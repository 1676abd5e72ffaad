"""Exception hierarchy shared by every layer of the engine."""

from __future__ import annotations


class GhdJoinError(Exception):
    """Base class for all engine errors."""


# -- frontend ---------------------------------------------------------------

class QuerySyntaxError(GhdJoinError, SyntaxError):
    def __init__(self, msg: str, line: int, column: int, text: str = ""):
        self.msg = msg
        self.lineno = line
        self.offset = column
        self.text = text
        self.filename = "<query>"
        Exception.__init__(self, f"{msg} (line {line}, column {column})")

    @property
    def line(self) -> int:
        return self.lineno

    @property
    def column(self) -> int:
        return self.offset

    def __str__(self) -> str:
        return f"{self.msg} (line {self.lineno}, column {self.offset})"


class ValidationError(GhdJoinError):
    pass


class UnknownRelation(ValidationError):
    pass


class ArityMismatch(ValidationError):
    pass


class UnsafeHeadVariable(ValidationError):
    pass


class TypeMismatch(ValidationError):
    pass


# -- storage ----------------------------------------------------------------

class IoError(GhdJoinError, OSError):
    pass


class RowArityMismatch(GhdJoinError):
    def __init__(self, line: int, expected: int, got: int, path: str = ""):
        self.line = line
        self.expected = expected
        self.got = got
        self.path = path
        where = f"{path}:{line}" if path else f"line {line}"
        super().__init__(f"{where}: expected {expected} fields, got {got}")


class Overflow(GhdJoinError):
    pass


class AnnotationConflict(GhdJoinError):
    pass


class OrderViolation(GhdJoinError):
    pass


class DegenerateDistribution(GhdJoinError):
    pass


class SnapshotError(GhdJoinError):
    pass


# -- setkernel --------------------------------------------------------------

class ElementAbsent(GhdJoinError, KeyError):
    pass


# -- planner ----------------------------------------------------------------

class Infeasible(GhdJoinError):
    pass


class QueryTooLarge(GhdJoinError):
    pass


# -- executor ---------------------------------------------------------------

class MissingIndex(GhdJoinError):
    pass


class EvalError(GhdJoinError):
    pass


class NonMonotoneAggregate(GhdJoinError):
    pass
