"""Exception hierarchy shared across the package."""


class GraphCompleteError(Exception):
    """Base class for all package errors."""


class EmptyCorpusError(GraphCompleteError):
    """Raised when a repository contains no source files of the target language."""


class DecodeError(GraphCompleteError):
    """Raised when a persisted artifact is corrupt or has the wrong version."""


class ConfigError(GraphCompleteError):
    """Raised on invalid configuration (unknown keys, dimension mismatches)."""


class TransportError(GraphCompleteError):
    """Raised when a remote backend is unreachable after retries."""


class GraphInvariantError(GraphCompleteError):
    """Raised when a CodeGraph violates one of its structural invariants."""


class CursorError(GraphCompleteError):
    """Raised when a cursor position falls outside the addressed file."""
