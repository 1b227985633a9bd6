"""Per-event scoring and the accumulating score ledger.

Every prompt event is scored two ways against the provider classes: a
probability simplex from the classifier, and a per-class mean-cosine
similarity against class centroids. The ledger is a linear fold of those
scores: per-class running sums, weighted by the event weight, plus event
counts. Shares are computed only at normalize time; raw sums (including
negative similarity) stay untouched in the ledger.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from datetime import datetime, timezone
from typing import Mapping, Sequence

import numpy as np

from .classify import LinearClassifier, ProbVector
from .embed import CentroidSet, EmbeddingVector, InternalEmbedder, Vocabulary, cosine
from .errors import FingerprintMismatch, ScoringError
from .hashing import digest_parts

SOURCE_MODES = ("prompt", "response", "concat", "mean")


@dataclass(frozen=True)
class PromptEvent:
    event_id: str
    prompt: str
    response: str = ""
    weight: float = 1.0
    timestamp: str | None = None

    def __post_init__(self) -> None:
        if not self.event_id:
            raise ScoringError("event has an empty event_id")
        if not isinstance(self.prompt, str) or not self.prompt.strip():
            raise ScoringError(f"event {self.event_id!r} has an empty prompt")
        if not (isinstance(self.weight, (int, float)) and np.isfinite(self.weight) and self.weight > 0):
            raise ScoringError(f"event {self.event_id!r} weight must be a positive finite number")
        if isinstance(self.timestamp, datetime):
            ts = self.timestamp.astimezone(timezone.utc).isoformat()
            object.__setattr__(self, "timestamp", ts)


def _float_pair(x: float) -> list[str]:
    # Hex is the authoritative encoding (exact round trip); decimal is for eyes.
    return [float(x).hex(), repr(float(x))]


def _from_pair(pair: object, what: str) -> float:
    if not (isinstance(pair, (list, tuple)) and len(pair) == 2 and isinstance(pair[0], str)):
        raise ScoringError(f"{what}: expected a [hex, decimal] float pair")
    try:
        return float.fromhex(pair[0])
    except ValueError as exc:
        raise ScoringError(f"{what}: bad hex float {pair[0]!r}") from exc


@dataclass(frozen=True, eq=False)
class EventScore:
    """The stored outcome of scoring one event; ledger replay folds these."""

    event_id: str
    prob: ProbVector
    sims: np.ndarray | None  # aligned to prob.class_ids; None when flagged
    weight: float
    source_mode: str

    def __post_init__(self) -> None:
        if not self.event_id:
            raise ScoringError("event score has an empty event_id")
        if not (np.isfinite(self.weight) and self.weight > 0):
            raise ScoringError("event score weight must be positive and finite")
        if self.source_mode not in SOURCE_MODES:
            raise ScoringError(f"unknown source_mode {self.source_mode!r}")
        if self.sims is not None:
            sims = np.ascontiguousarray(self.sims, dtype=np.float64)
            if sims.shape != (len(self.prob.class_ids),):
                raise ScoringError("similarity row length does not match class count")
            if not np.all(np.isfinite(sims)):
                raise ScoringError("similarity scores contain non-finite values")
            if np.any(np.abs(sims) > 1.0 + 1e-9):
                raise ScoringError("similarity scores must lie in [-1, 1]")
            object.__setattr__(self, "sims", sims)

    @property
    def flagged(self) -> bool:
        """True when the event produced no usable similarity (zero prompt vector)."""
        return self.sims is None

    def to_record(self) -> dict:
        classes = self.prob.class_ids
        rec: dict = {
            "event_id": self.event_id,
            "weight": _float_pair(self.weight),
            "source_mode": self.source_mode,
            "prob": {c: _float_pair(p) for c, p in zip(classes, self.prob.values)},
            "sim": None
            if self.sims is None
            else {c: _float_pair(s) for c, s in zip(classes, self.sims)},
        }
        return rec

    @classmethod
    def from_record(cls, rec: Mapping) -> "EventScore":
        for key in ("event_id", "weight", "source_mode", "prob"):
            if key not in rec:
                raise ScoringError(f"event score record lacks {key!r}")
        prob_map = rec["prob"]
        if not isinstance(prob_map, Mapping) or not prob_map:
            raise ScoringError("event score record has no probabilities")
        classes = tuple(sorted(prob_map))
        prob = ProbVector(
            classes, np.array([_from_pair(prob_map[c], f"prob[{c}]") for c in classes])
        )
        sims = None
        sim_map = rec.get("sim")
        if sim_map is not None:
            if not isinstance(sim_map, Mapping) or set(sim_map) != set(classes):
                raise ScoringError("similarity map classes do not match probability classes")
            sims = np.array([_from_pair(sim_map[c], f"sim[{c}]") for c in classes])
        return cls(
            event_id=str(rec["event_id"]),
            prob=prob,
            sims=sims,
            weight=_from_pair(rec["weight"], "weight"),
            source_mode=str(rec["source_mode"]),
        )


# ------------------------------------------------------------------- engine


class ScoringEngine:
    """Wires classifier, embedder, and centroids into per-event scoring."""

    def __init__(
        self,
        classifier: LinearClassifier,
        embedder=None,
        centroids: CentroidSet | None = None,
        source_mode: str = "concat",
        vocab: Vocabulary | None = None,
    ) -> None:
        if source_mode not in SOURCE_MODES:
            raise ScoringError(f"source_mode must be one of {SOURCE_MODES}, got {source_mode!r}")
        if vocab is None and isinstance(embedder, InternalEmbedder):
            vocab = embedder.vocab
        if classifier.feature_space == "tfidf-sparse":
            if vocab is None:
                raise ScoringError("tfidf-sparse classifier needs a vocabulary")
            if len(vocab) != classifier.n_features:
                raise ScoringError(
                    f"vocabulary size {len(vocab)} does not match classifier features "
                    f"{classifier.n_features}"
                )
        else:
            if embedder is None:
                raise ScoringError(f"{classifier.feature_space} classifier needs an embedder")
            if embedder.dims != classifier.n_features:
                raise ScoringError(
                    f"embedder dims {embedder.dims} do not match classifier features "
                    f"{classifier.n_features}"
                )
        if centroids is not None:
            if embedder is None:
                raise ScoringError("similarity scoring needs an embedder")
            if centroids.source_tag != embedder.source_tag:
                raise ScoringError(
                    f"centroid space {centroids.source_tag!r} does not match embedder "
                    f"{embedder.source_tag!r}"
                )
            if centroids.dims != embedder.dims:
                raise ScoringError("centroid dims do not match embedder dims")
            if centroids.class_ids != classifier.class_ids:
                raise ScoringError("centroid classes do not match classifier classes")
        self.classifier = classifier
        self.embedder = embedder
        self.centroids = centroids
        self.source_mode = source_mode
        self.vocab = vocab

    @property
    def class_ids(self) -> tuple[str, ...]:
        return self.classifier.class_ids

    @property
    def fingerprint(self) -> str:
        # Artifacts pin everything that makes scores incomparable. The
        # source mode is per-event provenance (stored on every EventScore),
        # not part of the fingerprint, so one ledger can mix modes.
        return digest_parts(
            "engine",
            self.classifier.digest(),
            self.embedder.digest() if self.embedder is not None else "",
            self.centroids.digest() if self.centroids is not None else "",
        )

    def _mode(self, override: str | None) -> str:
        if override is None:
            return self.source_mode
        if override not in SOURCE_MODES:
            raise ScoringError(f"unknown source_mode {override!r}")
        return override

    def _side_texts(self, event: PromptEvent, mode: str) -> list[str]:
        if mode == "prompt":
            texts = [event.prompt]
        elif mode == "response":
            texts = [event.response]
        elif mode == "concat":
            texts = [event.prompt + "\n" + event.response if event.response else event.prompt]
        else:  # mean
            texts = [event.prompt, event.response]
        for text in texts:
            if not text.strip():
                raise ScoringError(
                    f"event {event.event_id!r} has no usable text under source_mode {mode!r}"
                )
        return texts

    def _features(self, text: str):
        if self.classifier.feature_space == "tfidf-sparse":
            return self.vocab.transform(text)
        return self.embedder.embed(text).values

    def score_probability(self, event: PromptEvent, source_mode: str | None = None) -> ProbVector:
        mode = self._mode(source_mode)
        texts = self._side_texts(event, mode)
        probs = [self.classifier.predict_proba(self._features(t)).values for t in texts]
        if len(probs) == 1:
            values = probs[0]
        else:
            values = np.mean(probs, axis=0)
            values = values / values.sum()
        return ProbVector(self.class_ids, values)

    def score_similarity(self, event: PromptEvent, source_mode: str | None = None) -> np.ndarray | None:
        """Per-class mean-cosine row, or None when every side embeds to zero."""
        if self.centroids is None:
            return None
        mode = self._mode(source_mode)
        rows = []
        for text in self._side_texts(event, mode):
            vec = self.embedder.embed(text)
            if not vec.is_zero:
                rows.append(self.centroids.similarity_scores(vec))
        if not rows:
            return None
        return rows[0] if len(rows) == 1 else np.mean(rows, axis=0)

    def score_event(self, event: PromptEvent, source_mode: str | None = None) -> EventScore:
        mode = self._mode(source_mode)
        return EventScore(
            event_id=event.event_id,
            prob=self.score_probability(event, mode),
            sims=self.score_similarity(event, mode),
            weight=float(event.weight),
            source_mode=mode,
        )


def score_event_probability(
    event: PromptEvent, engine: ScoringEngine, source_mode: str | None = None
) -> ProbVector:
    return engine.score_probability(event, source_mode)


def score_event_similarity(
    event: PromptEvent, engine: ScoringEngine, source_mode: str | None = None
) -> np.ndarray | None:
    return engine.score_similarity(event, source_mode)


def brute_force_similarity(
    vector: EmbeddingVector, vectors_by_class: Mapping[str, Sequence[EmbeddingVector]]
) -> dict[str, float]:
    """Oracle for the centroid fast path: literal mean of member cosines.

    Zero member vectors are skipped (they have no direction), matching the
    centroid's member count. Kept deliberately naive; tests compare the
    engine's one-matvec path against this.
    """
    out: dict[str, float] = {}
    for class_id in sorted(vectors_by_class):
        members = [v for v in vectors_by_class[class_id] if not v.is_zero]
        if not members:
            raise ScoringError(f"class {class_id!r} has no nonzero vectors")
        out[class_id] = sum(cosine(vector, m) for m in members) / len(members)
    return out


# ------------------------------------------------------------------- ledger


@dataclass
class ScoreLedger:
    """Running per-class sums over ingested events; a pure fold, no shares."""

    class_ids: tuple[str, ...]
    fingerprint: str
    prob_sums: np.ndarray = field(init=False)
    sim_sums: np.ndarray = field(init=False)
    total_events: int = field(default=0, init=False)
    sim_events: int = field(default=0, init=False)
    total_weight: float = field(default=0.0, init=False)
    last_sequence_no: int = field(default=0, init=False)

    def __post_init__(self) -> None:
        self.class_ids = tuple(self.class_ids)
        if list(self.class_ids) != sorted(self.class_ids):
            raise ScoringError("ledger class_ids must be sorted")
        self.prob_sums = np.zeros(len(self.class_ids))
        self.sim_sums = np.zeros(len(self.class_ids))
        self._scores: dict[str, EventScore | None] = {}

    def __contains__(self, event_id: str) -> bool:
        return event_id in self._scores

    def stored_score(self, event_id: str) -> EventScore | None:
        """The score recorded for an id; None if the id was folded from a
        snapshot (ids survive snapshots, full scores do not)."""
        return self._scores.get(event_id)

    @property
    def event_ids(self) -> tuple[str, ...]:
        return tuple(self._scores)

    def ingest_score(self, score: EventScore, sequence_no: int | None = None) -> bool:
        """Fold one event score; returns False (and changes nothing) on a duplicate."""
        if score.event_id in self._scores:
            return False
        if score.prob.class_ids != self.class_ids:
            raise ScoringError(
                f"event {score.event_id!r} classes do not match the ledger's classes"
            )
        self.prob_sums += score.weight * score.prob.values
        if score.sims is not None:
            self.sim_sums += score.weight * score.sims
            self.sim_events += 1
        self.total_events += 1
        self.total_weight += score.weight
        self._scores[score.event_id] = score
        if sequence_no is not None:
            self.last_sequence_no = sequence_no
        return True

    def restore_applied_ids(self, event_ids: Sequence[str]) -> None:
        """Mark ids as already folded (snapshot restore); scores are not retained."""
        for event_id in event_ids:
            self._scores.setdefault(event_id, None)


def ingest(ledger: ScoreLedger, event: PromptEvent, engine: ScoringEngine) -> EventScore | None:
    """Score and fold one event; idempotent by event_id.

    A duplicate returns the originally stored score (None if that score was
    absorbed into a snapshot) and leaves the ledger untouched. A fingerprint
    mismatch between ledger and engine is a hard error: scores from
    different models must never mix.
    """
    if ledger.fingerprint != engine.fingerprint:
        raise FingerprintMismatch(
            f"ledger fingerprint {ledger.fingerprint[:12]}... does not match engine "
            f"{engine.fingerprint[:12]}..."
        )
    if event.event_id in ledger:
        return ledger.stored_score(event.event_id)
    score = engine.score_event(event)
    ledger.ingest_score(score)
    return score


# ------------------------------------------------------------------- report


@dataclass(frozen=True, eq=False)
class EngagementReport:
    """Normalized shares computed from a ledger at a point in time."""

    class_ids: tuple[str, ...]
    prob_sums: np.ndarray
    sim_sums: np.ndarray
    prob_shares: np.ndarray
    sim_shares: np.ndarray | None  # None when similarity mass is all non-positive
    total_events: int
    sim_events: int
    total_weight: float
    fingerprint: str

    @property
    def flagged_events(self) -> int:
        return self.total_events - self.sim_events

    def prob_share(self, class_id: str) -> float:
        return float(self.prob_shares[self.class_ids.index(class_id)])

    def sim_share(self, class_id: str) -> float:
        if self.sim_shares is None:
            raise ScoringError("similarity shares are undefined for this report")
        return float(self.sim_shares[self.class_ids.index(class_id)])

    def top_prob(self, n: int) -> list[tuple[str, float]]:
        order = sorted(zip(self.class_ids, self.prob_shares), key=lambda cp: (-cp[1], cp[0]))
        return [(c, float(p)) for c, p in order[:n]]

    def as_dict(self) -> dict:
        return {
            "fingerprint": self.fingerprint,
            "total_events": self.total_events,
            "sim_events": self.sim_events,
            "flagged_events": self.flagged_events,
            "total_weight": self.total_weight,
            "classes": {
                c: {
                    "prob_sum": float(self.prob_sums[i]),
                    "prob_share": float(self.prob_shares[i]),
                    "sim_sum": float(self.sim_sums[i]),
                    "sim_share": None
                    if self.sim_shares is None
                    else float(self.sim_shares[i]),
                }
                for i, c in enumerate(self.class_ids)
            },
        }


def normalize(ledger: ScoreLedger) -> EngagementReport:
    """Turn raw sums into shares.

    Probability shares always exist (weights are positive and simplexes sum
    to 1). Similarity sums are clamped at zero before normalizing; if
    nothing positive remains, similarity shares are undefined (None), and
    the raw sums still say why.
    """
    if ledger.total_events == 0:
        raise ScoringError("cannot normalize an empty ledger")
    prob_total = float(ledger.prob_sums.sum())
    prob_shares = ledger.prob_sums / prob_total
    sim_shares = None
    if ledger.sim_events:
        clamped = np.maximum(ledger.sim_sums, 0.0)
        sim_total = float(clamped.sum())
        if sim_total > 0.0:
            sim_shares = clamped / sim_total
    return EngagementReport(
        class_ids=ledger.class_ids,
        prob_sums=ledger.prob_sums.copy(),
        sim_sums=ledger.sim_sums.copy(),
        prob_shares=prob_shares,
        sim_shares=sim_shares,
        total_events=ledger.total_events,
        sim_events=ledger.sim_events,
        total_weight=ledger.total_weight,
        fingerprint=ledger.fingerprint,
    )
