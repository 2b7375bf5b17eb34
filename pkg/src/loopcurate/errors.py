"""Exception hierarchy shared across the package.

Every error a caller is expected to handle derives from LoopcurateError so the
CLI and HTTP layers can map them to exit code 1 / HTTP 4xx uniformly.
"""

from __future__ import annotations


class LoopcurateError(Exception):
    """Base class for all domain errors."""

    code = "error"


class DomainError(LoopcurateError):
    """A precondition or invariant of an operation was violated."""

    code = "domain_error"


class ValidationError(LoopcurateError):
    """Parsed or supplied data violates a type invariant.

    ``location`` is a human-readable pointer (element name, record index,
    line/column) when one is known.
    """

    code = "validation_error"

    def __init__(self, message: str, location: str | None = None):
        super().__init__(message)
        self.location = location


class ParseError(LoopcurateError):
    """Input bytes could not be parsed at all."""

    code = "parse_error"

    def __init__(self, message: str, line: int | None = None, column: int | None = None):
        loc = f" (line {line}, column {column})" if line is not None else ""
        super().__init__(message + loc)
        self.line = line
        self.column = column


class NotFoundError(LoopcurateError):
    """A referenced id/path does not exist."""

    code = "not_found"


class ConflictError(LoopcurateError):
    """Optimistic concurrency check failed (stale revision)."""

    code = "conflict"


class FormatError(LoopcurateError):
    """A file container is not in a recognized format."""

    code = "format_error"


class DetectorError(LoopcurateError):
    """An external or builtin detector run failed."""

    code = "detector_error"


class ParseWarning(UserWarning):
    """Non-fatal oddity while parsing (unknown attribute, skipped region)."""
