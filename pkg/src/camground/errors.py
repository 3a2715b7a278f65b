"""Typed errors raised by the evaluation engine.

Every loader failure carries a message naming the offending record or frame,
so a broken bundle can be traced to one file without re-running anything.
"""


class CamgroundError(Exception):
    """Base class for all engine errors."""


class MissingFile(CamgroundError):
    pass


class ShapeMismatch(CamgroundError):
    pass


class NonFiniteValue(CamgroundError):
    pass


class SchemaViolation(CamgroundError):
    pass


class BoxOutOfBounds(CamgroundError):
    pass


class IoFailure(CamgroundError):
    pass


class GridMismatch(CamgroundError):
    pass


class EmptyVocabulary(CamgroundError):
    pass


class DuplicateLabel(CamgroundError):
    pass


class LengthMismatch(CamgroundError):
    pass


class UnknownVerb(CamgroundError):
    pass


class TaskMismatch(CamgroundError):
    pass


class WorklistMismatch(CamgroundError):
    pass


class EmptyInput(CamgroundError):
    pass


class MissingImage(CamgroundError):
    pass
