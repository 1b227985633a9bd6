"""Exception types shared across the package."""

from __future__ import annotations


class EngagementError(Exception):
    """Base class for every error raised by this package."""


class IngestionError(EngagementError):
    """Corpus loading or validation failed."""


class EmbeddingError(EngagementError):
    """Vocabulary, embedding, or reducer operation failed."""


class ExternalEmbedderError(EmbeddingError):
    """The external embedding endpoint failed or returned a bad payload."""


class ClassifierError(EngagementError):
    """Classifier training or inference failed."""


class ScoringError(EngagementError):
    """Event scoring or ledger accumulation failed."""


class FingerprintMismatch(ScoringError):
    """An event or store was produced under a different model fingerprint."""


class AllocationError(EngagementError):
    """Revenue allocation, waitlist, or item scoring failed."""


class StoreError(EngagementError):
    """The durable event log or a snapshot is unusable."""
