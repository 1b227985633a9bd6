"""Durable, append-only JSONL event log plus point-in-time snapshots.

Layout: the first line is a header {"format_version", "fingerprint"}; every
following line is {"sequence_no", "score"} with sequence numbers contiguous
from 1. Appends are flushed and fsynced before returning, so a record is
durable once `append_score` returns. On open, a partial trailing write
(torn line) is detected and truncated away; interior damage or a sequence
gap is a hard error, because an append-only log can only ever be torn at
the end.

All floats inside records travel as [hex, decimal] string pairs; the hex
side is authoritative and round-trips bit-exactly, which is what makes
replay deterministic.
"""

from __future__ import annotations

import json
import os
from pathlib import Path
from typing import Iterator

import numpy as np

from .errors import FingerprintMismatch, ScoringError, StoreError
from .score import EventScore, ScoreLedger

FORMAT_VERSION = 1


def _parse_json_line(raw: bytes) -> dict | None:
    try:
        doc = json.loads(raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError):
        return None
    return doc if isinstance(doc, dict) else None


class EventLog:
    """Append-only score log bound to one model fingerprint."""

    def __init__(self, path: str | Path, fingerprint: str | None = None, *, fsync: bool = True):
        self.path = Path(path)
        self.fsync = fsync
        self.fingerprint = fingerprint
        self.last_sequence_no = 0
        self._fh = None
        if self.path.exists() and self.path.stat().st_size > 0:
            self._recover()
        else:
            if fingerprint is None:
                raise StoreError(f"{self.path}: creating a new log requires a fingerprint")
            self._create()
        self._fh = open(self.path, "ab")

    # -- lifecycle -----------------------------------------------------------

    def _create(self) -> None:
        header = {"format_version": FORMAT_VERSION, "fingerprint": self.fingerprint}
        data = (json.dumps(header, sort_keys=True) + "\n").encode("utf-8")
        with open(self.path, "wb") as fh:
            fh.write(data)
            fh.flush()
            os.fsync(fh.fileno())

    def _recover(self) -> None:
        data = self.path.read_bytes()
        lines: list[tuple[int, bytes, bool]] = []  # (start_offset, content, terminated)
        start = 0
        while start < len(data):
            nl = data.find(b"\n", start)
            if nl < 0:
                lines.append((start, data[start:], False))
                break
            lines.append((start, data[start:nl], True))
            start = nl + 1

        header_off, header_raw, header_term = lines[0]
        header = _parse_json_line(header_raw) if header_term else None
        if header is None or "format_version" not in header or "fingerprint" not in header:
            if len(lines) == 1:
                # Torn write of the header itself; only recoverable if the
                # caller knows the fingerprint.
                if self.fingerprint is None:
                    raise StoreError(
                        f"{self.path}: truncated header and no fingerprint to recreate it"
                    )
                os.truncate(self.path, 0)
                self._create()
                return
            raise StoreError(f"{self.path}: corrupt header line")
        if int(header["format_version"]) != FORMAT_VERSION:
            raise StoreError(
                f"{self.path}: unsupported format_version {header['format_version']!r}"
            )
        stored_fp = str(header["fingerprint"])
        if self.fingerprint is not None and self.fingerprint != stored_fp:
            raise FingerprintMismatch(
                f"{self.path}: log belongs to fingerprint {stored_fp[:12]}..., "
                f"got {self.fingerprint[:12]}..."
            )
        self.fingerprint = stored_fp

        valid_end = header_off + len(header_raw) + 1
        last_seq = 0
        for i, (off, raw, terminated) in enumerate(lines[1:], start=1):
            is_last = i == len(lines) - 1
            doc = _parse_json_line(raw) if terminated else None
            record_ok = False
            if doc is not None and "sequence_no" in doc and "score" in doc:
                try:
                    EventScore.from_record(doc["score"])
                    record_ok = True
                except ScoringError:
                    record_ok = False
            if not record_ok:
                if is_last:
                    break  # torn trailing write; truncate below
                raise StoreError(f"{self.path}: corrupt record at byte {off} (not trailing)")
            seq = doc["sequence_no"]
            if seq != last_seq + 1:
                raise StoreError(
                    f"{self.path}: sequence gap, expected {last_seq + 1} found {seq}"
                )
            last_seq = seq
            valid_end = off + len(raw) + 1
        if valid_end < len(data):
            os.truncate(self.path, valid_end)
        self.last_sequence_no = last_seq

    def close(self) -> None:
        if self._fh is not None:
            self._fh.close()
            self._fh = None

    def __enter__(self) -> "EventLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()

    # -- writing ---------------------------------------------------------------

    def append_score(self, score: EventScore) -> int:
        """Append one record; durable when this returns. Returns its sequence_no."""
        if self._fh is None:
            raise StoreError(f"{self.path}: log is closed")
        seq = self.last_sequence_no + 1
        record = {"sequence_no": seq, "score": score.to_record()}
        line = (json.dumps(record, sort_keys=True, ensure_ascii=False) + "\n").encode("utf-8")
        self._fh.write(line)
        self._fh.flush()
        if self.fsync:
            os.fsync(self._fh.fileno())
        self.last_sequence_no = seq
        return seq

    # -- reading ---------------------------------------------------------------

    def records(self, from_sequence: int = 1) -> Iterator[tuple[int, EventScore]]:
        """Yield (sequence_no, score) in order from a fresh read of the file."""
        with open(self.path, "rb") as fh:
            raw_lines = fh.read().split(b"\n")
        expected = 1
        for raw in raw_lines[1:]:
            if not raw:
                continue
            doc = _parse_json_line(raw)
            if doc is None or "sequence_no" not in doc or "score" not in doc:
                raise StoreError(f"{self.path}: corrupt record during read")
            seq = doc["sequence_no"]
            if seq != expected:
                raise StoreError(f"{self.path}: sequence gap, expected {expected} found {seq}")
            expected += 1
            if seq >= from_sequence:
                yield seq, EventScore.from_record(doc["score"])


def replay(log: EventLog, base: ScoreLedger | None = None) -> ScoreLedger:
    """Rebuild a ledger by folding the log's stored scores in order.

    With `base` (a snapshot restore), only records after the snapshot's
    last_sequence_no are folded. Replay never re-scores anything: the log's
    stored scores are the source of truth, so two replays of the same file
    are bit-identical. Duplicate event ids fold once.
    """
    if base is not None:
        if base.fingerprint != log.fingerprint:
            raise FingerprintMismatch(
                f"snapshot fingerprint {base.fingerprint[:12]}... does not match log "
                f"{log.fingerprint[:12]}..."
            )
        ledger: ScoreLedger | None = base
        start = base.last_sequence_no + 1
    else:
        ledger = None
        start = 1
    for seq, score in log.records(start):
        if ledger is None:
            ledger = ScoreLedger(score.prob.class_ids, log.fingerprint)
        ledger.ingest_score(score)
        ledger.last_sequence_no = seq
    if ledger is None:
        ledger = ScoreLedger((), log.fingerprint)
    return ledger


# ------------------------------------------------------------------ snapshots


def _pairs(values: np.ndarray) -> list[list[str]]:
    return [[float(v).hex(), repr(float(v))] for v in values]


def _from_pairs(pairs: list, what: str) -> np.ndarray:
    out = np.empty(len(pairs))
    for i, pair in enumerate(pairs):
        try:
            out[i] = float.fromhex(pair[0])
        except (TypeError, ValueError, IndexError) as exc:
            raise StoreError(f"snapshot {what}[{i}] is not a [hex, decimal] pair") from exc
    return out


def snapshot(ledger: ScoreLedger, path: str | Path) -> None:
    """Write the ledger's state as a single JSON document (atomic replace).

    Event ids are part of the state: they are what keeps ingestion
    idempotent across a snapshot+tail restore. Full per-event scores are
    not retained; the log keeps those.
    """
    path = Path(path)
    doc = {
        "format_version": FORMAT_VERSION,
        "fingerprint": ledger.fingerprint,
        "last_sequence_no": ledger.last_sequence_no,
        "total_events": ledger.total_events,
        "sim_events": ledger.sim_events,
        "total_weight": [float(ledger.total_weight).hex(), repr(float(ledger.total_weight))],
        "class_ids": list(ledger.class_ids),
        "prob_sums": _pairs(ledger.prob_sums),
        "sim_sums": _pairs(ledger.sim_sums),
        "event_ids": list(ledger.event_ids),
    }
    tmp = path.with_name(path.name + ".tmp")
    with open(tmp, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, sort_keys=True)
        fh.write("\n")
        fh.flush()
        os.fsync(fh.fileno())
    os.replace(tmp, path)


def load_snapshot(path: str | Path) -> ScoreLedger:
    path = Path(path)
    if not path.is_file():
        raise StoreError(f"snapshot not found: {path}")
    try:
        doc = json.loads(path.read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise StoreError(f"{path}: snapshot is not valid JSON ({exc})") from exc
    for key in (
        "format_version",
        "fingerprint",
        "last_sequence_no",
        "total_events",
        "sim_events",
        "total_weight",
        "class_ids",
        "prob_sums",
        "sim_sums",
        "event_ids",
    ):
        if key not in doc:
            raise StoreError(f"{path}: snapshot lacks {key!r}")
    if int(doc["format_version"]) != FORMAT_VERSION:
        raise StoreError(f"{path}: unsupported format_version {doc['format_version']!r}")
    class_ids = tuple(str(c) for c in doc["class_ids"])
    ledger = ScoreLedger(class_ids, str(doc["fingerprint"]))
    prob_sums = _from_pairs(doc["prob_sums"], "prob_sums")
    sim_sums = _from_pairs(doc["sim_sums"], "sim_sums")
    if prob_sums.shape != (len(class_ids),) or sim_sums.shape != (len(class_ids),):
        raise StoreError(f"{path}: snapshot sums do not match its class list")
    event_ids = [str(e) for e in doc["event_ids"]]
    if len(set(event_ids)) != len(event_ids):
        raise StoreError(f"{path}: snapshot repeats event ids")
    if len(event_ids) != int(doc["total_events"]):
        raise StoreError(f"{path}: total_events does not match the event id list")
    ledger.prob_sums = prob_sums
    ledger.sim_sums = sim_sums
    ledger.total_events = int(doc["total_events"])
    ledger.sim_events = int(doc["sim_events"])
    ledger.total_weight = float.fromhex(doc["total_weight"][0])
    ledger.last_sequence_no = int(doc["last_sequence_no"])
    ledger.restore_applied_ids(event_ids)
    return ledger
