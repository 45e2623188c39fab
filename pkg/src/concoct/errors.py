"""Exception types shared across the package."""

from __future__ import annotations


class ConcoctError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ConcoctError):
    """Raised when an input value violates a documented precondition."""


class FormatError(ConcoctError):
    """Raised when a reply or file does not match the expected format."""


class BackendError(ConcoctError):
    """Raised when a chat, embedding, or compare backend fails."""


class ReplayMissError(BackendError):
    """Raised when a replay cassette has no entry for a request digest."""

    def __init__(self, digest: str) -> None:
        super().__init__(f"no cassette entry for request digest {digest}")
        self.digest = digest


class ConfigError(ConcoctError):
    """Raised when CLI or config-file settings are invalid."""
