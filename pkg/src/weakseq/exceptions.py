"""Exception hierarchy used across the package."""


class WeakseqError(Exception):
    """Base class for all package errors."""


class ParseError(WeakseqError, ValueError):
    """Malformed input file (carries the offending line number when known)."""

    def __init__(self, message, line=None):
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)
        self.line = line


class SchemeError(WeakseqError, ValueError):
    """A label or tag that does not belong to the active label scheme."""


class SpanError(WeakseqError, ValueError):
    """Invalid span set, e.g. overlapping or out-of-bounds spans."""


class SchemaVersionError(WeakseqError, ValueError):
    """An artifact was written with an incompatible schema version."""


class InvariantError(WeakseqError, RuntimeError):
    """An internal invariant was breached, e.g. EM log-likelihood decreased."""
