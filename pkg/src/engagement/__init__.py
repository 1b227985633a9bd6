"""Engagement scoring and revenue attribution for AI tool data providers.

Every user prompt is scored against the provider classes behind the tool
(calibrated classifier probabilities plus embedding similarity), the scores
accumulate in a durable ledger, and the ledger's normalized shares drive
exact integer revenue splits, waitlist scoring, and per-item payouts.
"""

from .allocate import (
    Allocation,
    ItemScore,
    ItemScoreAccumulator,
    MultitaskItemScore,
    WaitlistEntry,
    allocate_revenue,
    allocate_with_waitlist,
    combine_modalities,
    event_sim_shares,
    export_allocation_csv,
    largest_remainder,
    read_allocation_csv,
    score_item,
    score_item_multitask,
    score_waitlist,
    split_item_share,
    waitlist_similarity_row,
)
from .classify import (
    ClassMetrics,
    EvalReport,
    LinearClassifier,
    ProbVector,
    TrainConfig,
    TrainResult,
    evaluate,
    load_classifier,
    loss_and_grad,
    predict_proba,
    save_classifier,
    train,
)
from .config import HOME_ENV_VAR, RunConfig, resolve_home
from .corpus import (
    Corpus,
    Document,
    ProviderClass,
    derive_combined_class,
    load_manifest,
    partition_by_provider,
    save_manifest,
    truncate_documents,
)
from .datasets import load_newsgroup20, load_reuters21578
from .embed import (
    CentroidSet,
    ClassCentroid,
    EmbeddingVector,
    InternalEmbedder,
    ReducedBasis,
    Vocabulary,
    class_centroid,
    cosine,
    fit_reducer,
    fit_vocabulary,
    load_centroids,
    load_embedder,
    save_centroids,
    save_embedder,
    tfidf_matrix,
    tfidf_transform,
)
from .errors import (
    AllocationError,
    ClassifierError,
    EmbeddingError,
    EngagementError,
    ExternalEmbedderError,
    FingerprintMismatch,
    IngestionError,
    ScoringError,
    StoreError,
)
from .external import ExternalEmbedder, external_embed
from .ledger_store import EventLog, load_snapshot, replay, snapshot
from .score import (
    EngagementReport,
    EventScore,
    PromptEvent,
    ScoreLedger,
    ScoringEngine,
    brute_force_similarity,
    ingest,
    normalize,
    score_event_probability,
    score_event_similarity,
)
from .text import count_tokens, tokenize

__version__ = "0.1.0"
