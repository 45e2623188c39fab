"""Exception types shared across the package."""

from __future__ import annotations


class ServiceError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(ServiceError):
    """Raised when an input value violates a documented precondition."""


class DataError(ServiceError):
    """Raised when a pairs file or checkpoint does not match the expected format."""


class TrainError(ServiceError):
    """Raised when training cannot continue, e.g. the loss went non-finite."""
