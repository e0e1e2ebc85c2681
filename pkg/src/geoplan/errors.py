"""Exception hierarchy shared across the package."""

from __future__ import annotations


class GeoPlanError(Exception):
    """Base class for every error raised by geoplan."""


class DegeneratePointCloud(GeoPlanError, ValueError):
    """A cloud has too few points or zero spread for the requested geometry."""


class OutOfRange(GeoPlanError, ValueError):
    pass


class ParseError(GeoPlanError, ValueError):
    """Raised by the plan DSL parser.

    ``offset`` is the byte offset into the offending line (or text) where the
    problem was detected.
    """

    def __init__(self, reason: str, offset: int = 0, line: str | None = None):
        self.reason = reason
        self.offset = offset
        self.line = line
        super().__init__(f"{reason} (at byte {offset})")


class ValidationError(GeoPlanError, ValueError):
    pass


class UnknownComponent(GeoPlanError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown component"


class UnknownObject(GeoPlanError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown object"


class NoHistory(GeoPlanError, LookupError):
    pass


class DoubleGrasp(GeoPlanError, RuntimeError):
    pass


class NotGrasping(GeoPlanError, RuntimeError):
    pass


class CardinalityMismatch(GeoPlanError, ValueError):
    pass


class UncompilableRelation(GeoPlanError, ValueError):
    pass


class NoConvergence(GeoPlanError, RuntimeError):
    """The solver could not bring the residual below tolerance.

    Carries the best pose found, its residual and (for path planning) the
    index of the failing control point.
    """

    def __init__(self, message: str, pose=None, residual: float = float("inf"), index: int | None = None):
        super().__init__(message)
        self.pose = pose
        self.residual = residual
        self.index = index


class OracleFailure(GeoPlanError, RuntimeError):
    pass


class NoCandidates(GeoPlanError, ValueError):
    pass


class EmptyProcessedMask(GeoPlanError, ValueError):
    pass


class InsufficientDepth(GeoPlanError, ValueError):
    pass


class SpecError(GeoPlanError, ValueError):
    pass


class UnknownTask(GeoPlanError, KeyError):
    def __str__(self) -> str:
        return str(self.args[0]) if self.args else "unknown task"


class BackendUnavailable(GeoPlanError, RuntimeError):
    pass


class UnparseablePlan(GeoPlanError, ValueError):
    def __init__(self, message: str, raw_text: str = ""):
        super().__init__(message)
        self.raw_text = raw_text
