"""Shared exception types."""


class GdcapError(Exception):
    """Base class for all package errors."""


class EmptyMaskError(GdcapError):
    """A mask with no pixels reached an operation that needs one."""


class OverlapResolutionError(GdcapError):
    """Overlap elimination failed to converge (degenerate geometry)."""


class UndefinedCorrelationError(GdcapError):
    """Correlation requested on a constant or too-short sequence."""


class InsufficientDataError(GdcapError):
    """Not enough pairable values for an agreement coefficient."""


class CaptionerError(GdcapError):
    """Transport or protocol failure talking to the caption generator."""


class RefinementError(GdcapError):
    """Every refinement attempt failed; carries the attempt log."""

    def __init__(self, message: str, attempts=None):
        super().__init__(message)
        self.attempts = list(attempts or [])


class StoreError(GdcapError):
    """Base class for record-store failures."""


class NotFoundError(StoreError):
    """Requested record does not exist."""


class ConflictError(StoreError):
    """Compare-and-swap failed: the record moved past the expected revision."""


class CorruptRecordError(StoreError):
    """Stored record failed its checksum."""


class IngestError(StoreError):
    """Label map / legend pair failed validation."""
