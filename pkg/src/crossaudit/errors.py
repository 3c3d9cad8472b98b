"""Exception hierarchy shared by all crossaudit modules."""

from __future__ import annotations


class CrossAuditError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(CrossAuditError):
    """Invalid or incomplete run configuration."""


class ParseError(CrossAuditError):
    """Structurally malformed input that prevents parsing altogether.

    Per-record anomalies do not raise; they go to the caller-visible
    reject list instead.
    """

    def __init__(self, message: str, *, location: str | None = None):
        super().__init__(message if location is None else f"{message} ({location})")
        self.location = location


class TransportError(CrossAuditError):
    """Network-level failure after all retries were exhausted."""


class ProtocolError(CrossAuditError):
    """Unexpected, non-retryable HTTP status from a remote endpoint."""

    def __init__(self, status: int, message: str = ""):
        super().__init__(f"HTTP {status}" + (f": {message}" if message else ""))
        self.status = status


class DomainError(CrossAuditError):
    """Operation invoked outside its mathematical or contractual domain."""
