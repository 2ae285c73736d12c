"""Exception and warning types shared across the package."""

from __future__ import annotations


class DiagramError(Exception):
    """Base class for every validation error raised by this package.

    ``location`` is an optional ``(line, column)`` pair pointing into the
    source text the error was found in.
    """

    def __init__(self, message: str, location: tuple[int, int] | None = None):
        self.message = message
        self.location = location
        super().__init__(message)

    def __str__(self) -> str:
        if self.location is None:
            return self.message
        return f"{self.location[0]}:{self.location[1]}: {self.message}"


# graph structure
class DuplicateLabel(DiagramError):
    pass


class UnknownEndpoint(DiagramError):
    pass


class CycleDetected(DiagramError):
    pass


class PolarityViolation(DiagramError):
    pass


class NotParallel(DiagramError):
    pass


# semantics
class MissingAssignment(DiagramError):
    pass


class ShapeMismatch(DiagramError):
    pass


class DatasetOnNonIndexing(DiagramError):
    pass


class NoDatasetOnIndexing(DiagramError):
    pass


class SharedKeySpecMismatch(DiagramError):
    pass


class DomainError(DiagramError):
    pass


# training
class NoTrainableParams(DiagramError):
    pass


class UnknownKey(DiagramError):
    pass


class NonScalarOutput(DiagramError):
    pass


class PreconditionViolated(DiagramError):
    pass


# composition
class ActionShapeMismatch(DiagramError):
    pass


class SemanticMismatch(DiagramError):
    pass


class CycleCreated(CycleDetected):
    pass


# io
class DslSyntaxError(DiagramError):
    def __init__(self, message: str, location: tuple[int, int], expected: str = ""):
        self.expected = expected
        super().__init__(message, location)


class SchemaError(DiagramError):
    pass


class NoLossTerms(UserWarning):
    """The diagram has no admissible parallel pair; its loss is constantly 0."""


class IncomparablePaths(UserWarning):
    """Two admissible parallel paths are unordered, so no loss term is emitted."""
