"""End-to-end wiring: config -> corpus -> artifacts -> scoring engine.

The CLI and the HTTP service both run on top of this; the library pieces
stay independently usable. A "home" directory holds everything one
deployment needs: config.json, embedder.npz, classifier.npz,
centroids.npz, events.log, and optional snapshot.json.
"""

from __future__ import annotations

import json
import logging
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import datasets
from .classify import LinearClassifier, TrainConfig, TrainResult, load_classifier, save_classifier, train
from .config import RunConfig
from .corpus import Corpus, load_manifest, truncate_documents
from .embed import (
    CentroidSet,
    EmbeddingVector,
    InternalEmbedder,
    Vocabulary,
    fit_reducer,
    fit_vocabulary,
    load_centroids,
    load_embedder,
    save_centroids,
    save_embedder,
    tfidf_matrix,
)
from .errors import EngagementError
from .external import ExternalEmbedder
from .score import PromptEvent, ScoringEngine

log = logging.getLogger(__name__)

EMBEDDER_FILE = "embedder.npz"
CLASSIFIER_FILE = "classifier.npz"
CENTROIDS_FILE = "centroids.npz"
CONFIG_FILE = "config.json"
LOG_FILE = "events.log"
SNAPSHOT_FILE = "snapshot.json"


def load_corpus(config: RunConfig, split: str = "train") -> Corpus:
    if not config.corpus_path:
        raise EngagementError("config has no corpus_path")
    if config.corpus_kind == "manifest":
        corpus = load_manifest(config.corpus_path, split)
    elif config.corpus_kind == "newsgroup20":
        corpus = datasets.load_newsgroup20(config.corpus_path, split)
    else:
        corpus = datasets.load_reuters21578(config.corpus_path, split)
    if config.truncate_tokens is not None:
        corpus = truncate_documents(corpus, config.truncate_tokens)
    return corpus


def _external_embedder(config: RunConfig) -> ExternalEmbedder:
    return ExternalEmbedder(
        name=config.external_name,
        url=config.external_url,
        dims=config.external_dims,
        cache_dir=Path(config.external_cache_dir) if config.external_cache_dir else None,
    )


@dataclass
class BuiltArtifacts:
    config: RunConfig
    classifier: LinearClassifier
    centroids: CentroidSet
    internal_embedder: InternalEmbedder | None
    vocab: Vocabulary
    train_result: TrainResult


def build_artifacts(config: RunConfig, corpus: Corpus) -> BuiltArtifacts:
    """Fit vocabulary, basis, classifier, and centroids from a training corpus.

    The reduced dimension is capped at what the corpus can support
    (min(n_docs, vocab size)); asking for more than the data has is a
    config-level convenience, not an error, and the cap is logged.
    """
    bodies = [d.body for d in corpus.documents if d.body]
    if not bodies:
        raise EngagementError("training corpus has no text documents")
    labels = [d.class_id for d in corpus.documents if d.body]
    vocab = fit_vocabulary(corpus, min_df=config.min_df, max_features=config.max_features)
    X = tfidf_matrix(bodies, vocab)

    internal: InternalEmbedder | None = None
    if config.uses_external_embedder:
        embedder = _external_embedder(config)
        doc_vectors = [embedder.embed(b).values for b in bodies]
        dense = np.array(doc_vectors)
        sim_vectors = [EmbeddingVector(v, embedder.source_tag) for v in doc_vectors]
    else:
        k = min(config.reduced_dims, min(X.shape))
        if k < config.reduced_dims:
            log.info("reduced_dims capped at %d by corpus size", k)
        basis = fit_reducer(
            X,
            k,
            seed=config.reducer_seed,
            oversample=config.reducer_oversample,
            power_iterations=config.reducer_power_iterations,
        )
        internal = InternalEmbedder(vocab, basis)
        sim_vectors = [internal.embed(b) for b in bodies]
        dense = None

    if config.feature_space == "tfidf-sparse":
        features = X
    else:
        if dense is None:
            dense = np.stack([v.values for v in sim_vectors])
        features = dense

    train_config = TrainConfig(
        epochs=config.epochs,
        learning_rate=config.learning_rate,
        l2_penalty=config.l2_penalty,
        batch_size=config.batch_size,
        holdout_fraction=config.holdout_fraction,
        lr_decay=config.lr_decay,
        seed=config.train_seed,
    )
    result = train(features, labels, train_config, feature_space=config.feature_space)

    by_class: dict[str, list[EmbeddingVector]] = {}
    for label, vec in zip(labels, sim_vectors):
        by_class.setdefault(label, []).append(vec)
    centroids = CentroidSet.from_vectors(by_class)
    return BuiltArtifacts(config, result.model, centroids, internal, vocab, result)


def make_engine(built: BuiltArtifacts) -> ScoringEngine:
    embedder = built.internal_embedder
    if embedder is None:
        embedder = _external_embedder(built.config)
    return ScoringEngine(
        classifier=built.classifier,
        embedder=embedder,
        centroids=built.centroids,
        source_mode=built.config.source_mode,
        vocab=built.vocab,
    )


def save_bundle(home: str | Path, built: BuiltArtifacts) -> Path:
    home = Path(home)
    home.mkdir(parents=True, exist_ok=True)
    built.config.save(home / CONFIG_FILE)
    save_classifier(built.classifier, home / CLASSIFIER_FILE)
    save_centroids(built.centroids, home / CENTROIDS_FILE)
    if built.internal_embedder is not None:
        save_embedder(built.internal_embedder, home / EMBEDDER_FILE)
    return home


@dataclass
class Bundle:
    home: Path
    config: RunConfig
    engine: ScoringEngine

    @property
    def log_path(self) -> Path:
        return self.home / LOG_FILE

    @property
    def snapshot_path(self) -> Path:
        return self.home / SNAPSHOT_FILE


def load_bundle(home: str | Path) -> Bundle:
    home = Path(home)
    config_path = home / CONFIG_FILE
    if not config_path.is_file():
        raise EngagementError(f"no trained bundle under {home} (missing {CONFIG_FILE})")
    config = RunConfig.from_file(config_path)
    classifier = load_classifier(home / CLASSIFIER_FILE)
    centroids = load_centroids(home / CENTROIDS_FILE)
    vocab = None
    if config.uses_external_embedder:
        embedder = _external_embedder(config)
    else:
        internal = load_embedder(home / EMBEDDER_FILE)
        embedder = internal
        vocab = internal.vocab
    engine = ScoringEngine(
        classifier=classifier,
        embedder=embedder,
        centroids=centroids,
        source_mode=config.source_mode,
        vocab=vocab,
    )
    return Bundle(home, config, engine)


def item_profiles_from_text(
    engine: ScoringEngine, body: str
) -> tuple[dict[str, float], dict[str, float] | None]:
    """Classify a catalog item's own text into (prob profile, sim profile).

    The probability profile is the classifier simplex; the similarity
    profile is the clamped-and-normalized centroid row, or None when the
    text embeds to zero or nothing positive remains.
    """
    if not body or not body.strip():
        raise EngagementError("item body is empty")
    event = PromptEvent(event_id="__item__", prompt=body)
    prob = engine.score_probability(event, "prompt").as_dict()
    sims = engine.score_similarity(event, "prompt")
    sim = None
    if sims is not None:
        clamped = np.maximum(sims, 0.0)
        total = clamped.sum()
        if total > 0:
            sim = {c: float(s) for c, s in zip(engine.class_ids, clamped / total)}
    return prob, sim


def parse_event(record: dict, where: str = "event") -> PromptEvent:
    if not isinstance(record, dict):
        raise EngagementError(f"{where}: event must be a JSON object")
    for key in ("event_id", "prompt"):
        if key not in record:
            raise EngagementError(f"{where}: missing key {key!r}")
    unknown = sorted(set(record) - {"event_id", "prompt", "response", "weight", "timestamp"})
    if unknown:
        raise EngagementError(f"{where}: unknown keys {unknown}")
    return PromptEvent(
        event_id=str(record["event_id"]),
        prompt=record["prompt"] if isinstance(record["prompt"], str) else "",
        response=str(record.get("response", "") or ""),
        weight=record.get("weight", 1.0),
        timestamp=record.get("timestamp"),
    )


def parse_events_file(path: str | Path) -> list[PromptEvent]:
    """Read a JSONL events file: {event_id, prompt, response?, weight?, timestamp?}."""
    path = Path(path)
    if not path.is_file():
        raise EngagementError(f"events file not found: {path}")
    events: list[PromptEvent] = []
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line:
                continue
            try:
                record = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EngagementError(f"{path}:{lineno}: invalid JSON ({exc})") from exc
            events.append(parse_event(record, where=f"{path}:{lineno}"))
    if not events:
        raise EngagementError(f"{path}: no events found")
    return events
