"""Turning shares into money and scoring entities outside the trained classes.

Revenue is apportioned in integer minor units by the largest-remainder
method: every class gets the floor of its ideal amount, and the leftover
units go to the largest fractional remainders (ties to the smaller
class_id). The total is conserved exactly; no class is ever more than one
unit away from its ideal.

Waitlisted providers (not yet classifier classes) are scored by mixing the
ledger's probability shares through their similarity rows; items inside a
provider's catalog are scored by weighting per-event shares with the item's
own profile.
"""

from __future__ import annotations

import csv
import hashlib
import io
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping, Sequence

import numpy as np

from .embed import CentroidSet, EmbeddingVector
from .errors import AllocationError
from .score import EngagementReport, EventScore

_BASIS_ALIASES = {
    "prob": "probability",
    "probability": "probability",
    "sim": "similarity",
    "similarity": "similarity",
    "blend": "blend",
}


def _check_scores(scores: Mapping[str, float], what: str) -> dict[str, float]:
    if not scores:
        raise AllocationError(f"{what}: no entries to allocate over")
    out: dict[str, float] = {}
    for key in scores:
        value = float(scores[key])
        if not np.isfinite(value) or value < 0:
            raise AllocationError(f"{what}: score for {key!r} must be finite and >= 0")
        out[key] = value
    if sum(out.values()) <= 0:
        raise AllocationError(f"{what}: scores sum to zero; nothing to apportion")
    return out


def largest_remainder(total: int, scores: Mapping[str, float]) -> dict[str, int]:
    """Apportion `total` integer units proportionally to `scores`.

    Returns floor-of-ideal per key plus one extra unit to the largest
    fractional remainders; ties go to the smaller key. The values sum to
    `total` exactly.
    """
    if isinstance(total, bool) or not isinstance(total, (int, np.integer)):
        raise AllocationError(f"total must be an integer count of minor units, got {total!r}")
    if total < 0:
        raise AllocationError(f"total must be >= 0, got {total}")
    clean = _check_scores(scores, "largest_remainder")
    keys = sorted(clean)
    shares = np.array([clean[k] for k in keys])
    shares = shares / shares.sum()
    ideal = total * shares
    floors = np.floor(ideal).astype(np.int64)
    remainder = int(total - floors.sum())
    if remainder < 0 or remainder > len(keys):
        raise AllocationError(f"apportionment lost units (remainder {remainder})")
    fractions = ideal - floors
    order = sorted(range(len(keys)), key=lambda i: (-fractions[i], keys[i]))
    for i in order[:remainder]:
        floors[i] += 1
    return {k: int(v) for k, v in zip(keys, floors)}


@dataclass(frozen=True)
class Allocation:
    total_minor_units: int
    basis: str  # "probability" | "similarity" | "blend" | "waitlist"
    alpha: float | None
    scores: dict[str, float]  # normalized basis scores, keyed by provider/class
    shares: dict[str, int]  # integer minor units, sum == total


def _basis_scores(
    report: EngagementReport, basis: str, alpha: float | None
) -> tuple[str, np.ndarray]:
    try:
        canonical = _BASIS_ALIASES[basis]
    except KeyError:
        raise AllocationError(
            f"basis must be one of {sorted(set(_BASIS_ALIASES))}, got {basis!r}"
        ) from None
    if canonical == "probability":
        return canonical, report.prob_shares
    if report.sim_shares is None:
        raise AllocationError(
            "similarity shares are undefined for this ledger (no positive similarity mass); "
            "use the probability basis"
        )
    if canonical == "similarity":
        return canonical, report.sim_shares
    if alpha is None or not 0.0 <= alpha <= 1.0:
        raise AllocationError(f"blend basis needs alpha in [0, 1], got {alpha!r}")
    return canonical, alpha * report.prob_shares + (1.0 - alpha) * report.sim_shares


def allocate_revenue(
    total_minor_units: int,
    report: EngagementReport,
    basis: str = "probability",
    alpha: float | None = None,
) -> Allocation:
    """Exact integer allocation of a revenue total across the report's classes."""
    canonical, shares = _basis_scores(report, basis, alpha)
    scores = {c: float(s) for c, s in zip(report.class_ids, shares)}
    amounts = largest_remainder(total_minor_units, scores)
    return Allocation(
        total_minor_units=int(total_minor_units),
        basis=canonical,
        alpha=alpha if canonical == "blend" else None,
        scores=scores,
        shares=amounts,
    )


def export_allocation_csv(allocation: Allocation, path: str | Path) -> None:
    """Write `provider_id,basis,score,amount_minor_units` rows plus a checksum row.

    Rows are sorted by provider_id. The final row has provider_id
    `__checksum__`, a `sha256:<hex>` digest of every preceding line
    (newlines included), the sum of the score column, and the grand total.
    """
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["provider_id", "basis", "score", "amount_minor_units"])
    for provider_id in sorted(allocation.shares):
        writer.writerow(
            [
                provider_id,
                allocation.basis,
                repr(allocation.scores[provider_id]),
                allocation.shares[provider_id],
            ]
        )
    body = buf.getvalue()
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    writer.writerow(
        [
            "__checksum__",
            f"sha256:{digest}",
            repr(float(sum(allocation.scores.values()))),
            allocation.total_minor_units,
        ]
    )
    Path(path).write_text(buf.getvalue(), encoding="utf-8")


def read_allocation_csv(path: str | Path) -> Allocation:
    """Read an exported allocation back, verifying the checksum row."""
    text = Path(path).read_text(encoding="utf-8")
    rows = list(csv.reader(io.StringIO(text)))
    if len(rows) < 2 or rows[0] != ["provider_id", "basis", "score", "amount_minor_units"]:
        raise AllocationError(f"{path}: not an allocation export")
    *body_rows, check = rows
    if check[0] != "__checksum__" or not check[1].startswith("sha256:"):
        raise AllocationError(f"{path}: checksum row missing")
    body = "".join(",".join(r) + "\n" for r in body_rows)
    digest = hashlib.sha256(body.encode("utf-8")).hexdigest()
    if f"sha256:{digest}" != check[1]:
        raise AllocationError(f"{path}: checksum mismatch; file was altered")
    scores = {r[0]: float(r[2]) for r in body_rows[1:]}
    shares = {r[0]: int(r[3]) for r in body_rows[1:]}
    bases = {r[1] for r in body_rows[1:]}
    return Allocation(
        total_minor_units=int(check[3]),
        basis=bases.pop() if len(bases) == 1 else "mixed",
        alpha=None,
        scores=scores,
        shares=shares,
    )


# ------------------------------------------------------------------ waitlist


@dataclass(frozen=True)
class WaitlistEntry:
    provider_id: str
    score: float  # mix of engagement shares through the provider's similarity row
    similarity_row: dict[str, float]


def _check_simplex(values: Mapping[str, float], what: str, tol: float = 1e-9) -> None:
    total = 0.0
    for key, value in values.items():
        if not np.isfinite(value) or value < 0:
            raise AllocationError(f"{what}: entry {key!r} must be finite and >= 0")
        total += float(value)
    if abs(total - 1.0) > tol:
        raise AllocationError(
            f"{what}: entries sum to {total!r}, not 1; normalize before calling "
            "(inputs are never renormalized silently)"
        )


def score_waitlist(
    report: EngagementReport | Mapping[str, float],
    similarity_rows: Mapping[str, Mapping[str, float]],
) -> dict[str, WaitlistEntry]:
    """Score providers that are not yet classes of their own.

    Each provider brings a normalized similarity row over the report's
    classes; its score mixes the report's probability shares through that
    row. Every score therefore lies between the smallest and largest
    probability share. Rows and shares must arrive normalized; anything
    else is an error, never silently fixed.
    """
    if isinstance(report, EngagementReport):
        prob_shares = {c: float(p) for c, p in zip(report.class_ids, report.prob_shares)}
    else:
        prob_shares = {c: float(p) for c, p in report.items()}
    _check_simplex(prob_shares, "probability shares")
    if not similarity_rows:
        raise AllocationError("no waitlist providers to score")
    class_set = set(prob_shares)
    out: dict[str, WaitlistEntry] = {}
    for provider_id in sorted(similarity_rows):
        row = {c: float(s) for c, s in similarity_rows[provider_id].items()}
        if set(row) != class_set:
            raise AllocationError(
                f"waitlist provider {provider_id!r}: similarity row classes do not match "
                "the report's classes"
            )
        _check_simplex(row, f"waitlist provider {provider_id!r} similarity row")
        score = sum(prob_shares[c] * row[c] for c in prob_shares)
        out[provider_id] = WaitlistEntry(provider_id, score, row)
    return out


def waitlist_similarity_row(
    documents: Sequence[str] | Sequence[EmbeddingVector],
    centroids: CentroidSet,
    embedder=None,
) -> dict[str, float]:
    """Normalized similarity row for a candidate provider's document sample.

    Each document is embedded (or taken as a vector), scored against the
    class centroids, and the rows averaged; negatives are clamped at zero
    before normalizing. All-nonpositive similarity leaves the row
    undefined, which is an error here.
    """
    if len(documents) == 0:
        raise AllocationError("waitlist provider supplied no documents")
    rows = []
    for doc in documents:
        if isinstance(doc, EmbeddingVector):
            vec = doc
        else:
            if embedder is None:
                raise AllocationError("text documents need an embedder")
            vec = embedder.embed(doc)
        if vec.is_zero:
            continue
        rows.append(centroids.similarity_scores(vec))
    if not rows:
        raise AllocationError("every supplied document embedded to the zero vector")
    mean = np.mean(rows, axis=0)
    clamped = np.maximum(mean, 0.0)
    total = clamped.sum()
    if total <= 0:
        raise AllocationError(
            "similarity row is undefined: no class has positive mean similarity"
        )
    shares = clamped / total
    return {c: float(s) for c, s in zip(centroids.class_ids, shares)}


def allocate_with_waitlist(
    total_minor_units: int,
    report: EngagementReport,
    entries: Mapping[str, WaitlistEntry],
    pool_fraction: float,
    basis: str = "probability",
    alpha: float | None = None,
) -> tuple[Allocation, Allocation]:
    """Split the total into a main pool and a waitlist side pool, allocate both.

    The split itself is a largest-remainder apportionment, so the two pools
    sum to the total exactly.
    """
    if not 0.0 <= pool_fraction < 1.0:
        raise AllocationError(f"pool_fraction must lie in [0, 1), got {pool_fraction!r}")
    if not entries and pool_fraction > 0.0:
        raise AllocationError("pool_fraction is positive but there are no waitlist entries")
    if pool_fraction == 0.0:
        main = allocate_revenue(total_minor_units, report, basis, alpha)
        side = Allocation(0, "waitlist", None, {p: e.score for p, e in entries.items()}, {p: 0 for p in entries})
        return main, side
    split = largest_remainder(
        int(total_minor_units), {"main": 1.0 - pool_fraction, "waitlist": pool_fraction}
    )
    main = allocate_revenue(split["main"], report, basis, alpha)
    wait_scores = {p: e.score for p, e in entries.items()}
    side = Allocation(
        total_minor_units=split["waitlist"],
        basis="waitlist",
        alpha=None,
        scores=wait_scores,
        shares=largest_remainder(split["waitlist"], wait_scores),
    )
    return main, side


# ---------------------------------------------------------------- item scores


@dataclass(frozen=True)
class ItemScore:
    item_id: str
    prob_score: float
    sim_score: float | None
    event_count: int
    sim_event_count: int


def _check_profile(profile: Mapping[str, float], what: str) -> dict[str, float]:
    if not profile:
        raise AllocationError(f"{what} is empty")
    out = {}
    for key, value in profile.items():
        value = float(value)
        if not np.isfinite(value) or value < 0:
            raise AllocationError(f"{what}: entry {key!r} must be finite and >= 0")
        out[key] = value
    return out


def event_sim_shares(score: EventScore) -> dict[str, float] | None:
    """Per-event normalized similarity shares (clamp negatives, then normalize).

    None when the event is flagged or nothing positive remains.
    """
    if score.sims is None:
        return None
    clamped = np.maximum(score.sims, 0.0)
    total = clamped.sum()
    if total <= 0:
        return None
    return {c: float(s) for c, s in zip(score.prob.class_ids, clamped / total)}


def score_item(
    item_prob: Mapping[str, float],
    item_sim: Mapping[str, float] | None,
    events: Iterable[tuple[str, Mapping[str, float], Mapping[str, float] | None]],
    item_id: str = "item",
) -> ItemScore:
    """Accumulate an item's engagement across events.

    Per event, the item's probability profile is dotted with the event's
    per-class probabilities (likewise for similarity when both sides have
    one). Profiles must cover exactly the same classes as the event rows;
    values need only be finite and non-negative, so callers can pass
    normalized shares or indicator profiles.
    """
    prob_profile = _check_profile(item_prob, "item probability profile")
    sim_profile = _check_profile(item_sim, "item similarity profile") if item_sim else None
    if sim_profile is not None and set(sim_profile) != set(prob_profile):
        raise AllocationError("item profiles cover different class sets")
    classes = set(prob_profile)
    prob_total = 0.0
    sim_total = 0.0
    seen = 0
    sim_seen = 0
    for event_id, prob_map, sim_map in events:
        if set(prob_map) != classes:
            raise AllocationError(
                f"event {event_id!r} classes do not match the item profile"
            )
        prob_total += sum(prob_profile[c] * float(prob_map[c]) for c in classes)
        seen += 1
        if sim_profile is not None and sim_map is not None:
            if set(sim_map) != classes:
                raise AllocationError(
                    f"event {event_id!r} similarity classes do not match the item profile"
                )
            sim_total += sum(sim_profile[c] * float(sim_map[c]) for c in classes)
            sim_seen += 1
    return ItemScore(
        item_id=item_id,
        prob_score=prob_total,
        sim_score=sim_total if sim_profile is not None else None,
        event_count=seen,
        sim_event_count=sim_seen,
    )


class ItemScoreAccumulator:
    """Streaming, idempotent item scoring with simplex-checked profiles.

    The one-shot `score_item` trusts its caller; this is the ledger-facing
    variant: profiles must be normalized shares, and an event_id is folded
    at most once.
    """

    def __init__(
        self,
        item_id: str,
        item_prob: Mapping[str, float],
        item_sim: Mapping[str, float] | None = None,
    ) -> None:
        self.item_id = item_id
        self.item_prob = _check_profile(item_prob, "item probability profile")
        _check_simplex(self.item_prob, "item probability profile")
        self.item_sim = None
        if item_sim is not None:
            self.item_sim = _check_profile(item_sim, "item similarity profile")
            _check_simplex(self.item_sim, "item similarity profile")
            if set(self.item_sim) != set(self.item_prob):
                raise AllocationError("item profiles cover different class sets")
        self._seen: set[str] = set()
        self._prob_total = 0.0
        self._sim_total = 0.0
        self._sim_seen = 0

    def ingest_score(self, score: EventScore) -> bool:
        """Fold one event score; returns False on a duplicate event_id."""
        if score.event_id in self._seen:
            return False
        classes = set(self.item_prob)
        if set(score.prob.class_ids) != classes:
            raise AllocationError(
                f"event {score.event_id!r} classes do not match the item profile"
            )
        prob_map = score.prob.as_dict()
        self._prob_total += sum(self.item_prob[c] * prob_map[c] for c in classes)
        if self.item_sim is not None:
            shares = event_sim_shares(score)
            if shares is not None:
                self._sim_total += sum(self.item_sim[c] * shares[c] for c in classes)
                self._sim_seen += 1
        self._seen.add(score.event_id)
        return True

    def result(self) -> ItemScore:
        return ItemScore(
            item_id=self.item_id,
            prob_score=self._prob_total,
            sim_score=self._sim_total if self.item_sim is not None else None,
            event_count=len(self._seen),
            sim_event_count=self._sim_seen,
        )


@dataclass(frozen=True)
class MultitaskItemScore:
    item_id: str
    score: float
    event_count: int


def _check_pairs(pairs: Mapping[str, Sequence[float]], what: str) -> dict[str, tuple[float, float]]:
    if not pairs:
        raise AllocationError(f"{what} is empty")
    out: dict[str, tuple[float, float]] = {}
    for key, pair in pairs.items():
        if len(pair) != 2:
            raise AllocationError(f"{what}: entry {key!r} must be a [belongs, not-belongs] pair")
        a, b = float(pair[0]), float(pair[1])
        if not (np.isfinite(a) and np.isfinite(b)) or a < 0 or b < 0:
            raise AllocationError(f"{what}: pair for {key!r} must be finite and >= 0")
        if abs(a + b - 1.0) > 1e-9:
            raise AllocationError(f"{what}: pair for {key!r} sums to {a + b!r}, not 1")
        out[key] = (a, b)
    return out


def score_item_multitask(
    item_pairs: Mapping[str, Sequence[float]],
    events: Iterable[tuple[str, Mapping[str, Sequence[float]]]],
    item_id: str = "item",
) -> MultitaskItemScore:
    """Item scoring when each class carries a [belongs, not-belongs] pair.

    Per event and class, the item's pair is dotted with the event's pair;
    the two-entry pairs each sum to one. With item pairs [1, 0] this
    reduces exactly to the plain profile dot with an all-ones profile.
    """
    item = _check_pairs(item_pairs, "item pairs")
    classes = set(item)
    total = 0.0
    seen = 0
    for event_id, event_pairs in events:
        pairs = _check_pairs(event_pairs, f"event {event_id!r} pairs")
        if set(pairs) != classes:
            raise AllocationError(f"event {event_id!r} classes do not match the item pairs")
        for c in classes:
            a = item[c]
            p = pairs[c]
            total += a[0] * p[0] + a[1] * p[1]
        seen += 1
    return MultitaskItemScore(item_id=item_id, score=total, event_count=seen)


# ------------------------------------------------------------- modality blend


def combine_modalities(
    shares_by_modality: Mapping[str, Mapping[str, float]],
    weights: Mapping[str, float],
    id_maps: Mapping[str, Mapping[str, str]] | None = None,
) -> dict[str, float]:
    """Blend per-modality share tables into one, translating provider ids.

    `weights` must cover exactly the modalities given and sum to 1. An id
    map may translate a modality's local provider ids to global ones; two
    local ids mapping to the same global id within one modality is an
    error (it would silently merge providers).
    """
    if set(weights) != set(shares_by_modality):
        raise AllocationError("modality weights do not match the share tables")
    _check_simplex({m: float(w) for m, w in weights.items()}, "modality weights")
    blended: dict[str, float] = {}
    for modality in sorted(shares_by_modality):
        shares = _check_profile(shares_by_modality[modality], f"{modality} shares")
        _check_simplex(shares, f"{modality} shares", tol=1e-6)
        mapping = (id_maps or {}).get(modality, {})
        seen_globals: dict[str, str] = {}
        for local_id in sorted(shares):
            global_id = mapping.get(local_id, local_id)
            if global_id in seen_globals:
                raise AllocationError(
                    f"modality {modality!r}: ids {seen_globals[global_id]!r} and "
                    f"{local_id!r} both map to {global_id!r}"
                )
            seen_globals[global_id] = local_id
            blended[global_id] = blended.get(global_id, 0.0) + float(weights[modality]) * shares[local_id]
    return blended


def split_item_share(amount_minor_units: int, fractions: Mapping[str, float]) -> dict[str, int]:
    """Split one item's payout between roles (e.g. provider/operator/user).

    Fractions must be a normalized split; the integer amounts sum to the
    amount exactly via largest remainder.
    """
    _check_simplex({k: float(v) for k, v in fractions.items()}, "split fractions")
    return largest_remainder(amount_minor_units, fractions)
