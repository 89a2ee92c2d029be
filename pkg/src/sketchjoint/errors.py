"""Domain error types shared by the engine, service, and CLI.

Every error carries a stable machine-readable ``code`` so the HTTP layer
can map it to a 422 payload and the CLI to exit code 2.
"""

from __future__ import annotations


class DomainError(Exception):
    """Base class for recoverable, user-facing errors."""

    code = "domain-error"

    def __init__(self, message: str, **details):
        super().__init__(message)
        self.details = details


class InvalidInputError(DomainError):
    code = "invalid-input"


class RangeViolationError(DomainError):
    code = "range-violation"


class MeshParseError(DomainError):
    code = "parse-error"

    def __init__(self, message: str, line: int | None = None):
        super().__init__(message, line=line)
        self.line = line


class DegenerateGeometryError(DomainError):
    code = "degenerate-geometry"


class AmbiguousSketchError(DomainError):
    code = "ambiguous-sketch"

    def __init__(self, message: str, candidates=()):
        super().__init__(message, candidates=list(candidates))
        self.candidates = list(candidates)


class NoSurfaceError(DomainError):
    code = "no-surface"


class CoverageError(DomainError):
    code = "insufficient-coverage"


class EmptyMaskError(DomainError):
    code = "empty-mask"


class NoPartFoundError(DomainError):
    code = "no-part-found"

    def __init__(self, message: str, candidates=()):
        super().__init__(message, candidates=list(candidates))
        self.candidates = list(candidates)


class EmptyPartError(DomainError):
    code = "empty-part"


class BlockedJointError(DomainError):
    code = "blocked-joint"


class AdapterError(DomainError):
    code = "adapter-failure"


class SeparationError(DomainError):
    code = "separation-failed"


class EmptyGridError(DomainError):
    code = "empty-grid"


class TensorFormatError(DomainError):
    code = "tensor-format"
