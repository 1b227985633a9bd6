"""Append-only log recovery, replay determinism, snapshot handoff.

Fault injection works at the byte level: files are truncated at arbitrary
offsets and corrupted in place, then reopened.
"""

from __future__ import annotations

import json

import numpy as np
import pytest

from engagement.classify import ProbVector
from engagement.errors import FingerprintMismatch, StoreError
from engagement.ledger_store import EventLog, load_snapshot, replay, snapshot
from engagement.score import EventScore, ScoreLedger

CLASSES = ("alpha", "beta", "gamma")


def _score(i, seed=None, weight=1.0):
    rng = np.random.default_rng(i if seed is None else seed)
    return EventScore(
        f"ev{i:05d}",
        ProbVector(CLASSES, rng.dirichlet(np.ones(3))),
        rng.uniform(-1, 1, 3),
        weight,
        "concat",
    )


def _write_log(path, n, fingerprint="fp-1"):
    log = EventLog(path, fingerprint, fsync=False)
    for i in range(n):
        log.append_score(_score(i))
    log.close()
    return path


def test_append_assigns_contiguous_sequence(tmp_path):
    log = EventLog(tmp_path / "e.log", "fp", fsync=False)
    assert [log.append_score(_score(i)) for i in range(5)] == [1, 2, 3, 4, 5]
    got = list(log.records())
    assert [seq for seq, _ in got] == [1, 2, 3, 4, 5]
    assert [s.event_id for _, s in got] == [f"ev{i:05d}" for i in range(5)]
    log.close()


def test_records_from_sequence(tmp_path):
    path = _write_log(tmp_path / "e.log", 10)
    log = EventLog(path)
    assert [seq for seq, _ in log.records(from_sequence=7)] == [7, 8, 9, 10]
    log.close()


def test_replay_twice_is_bit_identical(tmp_path):
    path = _write_log(tmp_path / "e.log", 300)
    log = EventLog(path)
    a = replay(log)
    b = replay(log)
    assert np.array_equal(a.prob_sums, b.prob_sums)
    assert np.array_equal(a.sim_sums, b.sim_sums)
    assert a.total_weight == b.total_weight
    assert a.total_events == b.total_events == 300
    assert a.last_sequence_no == 300
    log.close()


def test_replay_empty_log(tmp_path):
    log = EventLog(tmp_path / "e.log", "fp", fsync=False)
    ledger = replay(log)
    assert ledger.total_events == 0
    assert ledger.fingerprint == "fp"
    log.close()


def test_reopen_adopts_stored_fingerprint(tmp_path):
    path = _write_log(tmp_path / "e.log", 3, fingerprint="stored-fp")
    log = EventLog(path)  # no fingerprint passed
    assert log.fingerprint == "stored-fp"
    log.close()
    with pytest.raises(FingerprintMismatch):
        EventLog(path, "different-fp")


def test_append_after_reopen_continues_sequence(tmp_path):
    path = _write_log(tmp_path / "e.log", 4)
    log = EventLog(path)
    assert log.append_score(_score(99)) == 5
    log.close()


def test_torn_tail_is_truncated_on_open(tmp_path):
    path = _write_log(tmp_path / "e.log", 12)
    whole = path.read_bytes()
    lines = whole.splitlines(keepends=True)
    last_start = len(whole) - len(lines[-1])
    # cut anywhere inside the final record, including just before its newline
    for cut in range(last_start + 1, len(whole)):
        path.write_bytes(whole[:cut])
        log = EventLog(path)
        ledger = replay(log)
        assert ledger.total_events == 11
        assert ledger.last_sequence_no == 11
        # the torn tail is gone; the next append lands at sequence 12
        assert log.append_score(_score(1000 + cut)) == 12
        log.close()
        path.write_bytes(whole)


def test_truncation_sweep_never_corrupts_prefix(tmp_path):
    path = _write_log(tmp_path / "e.log", 6)
    whole = path.read_bytes()
    header_end = whole.index(b"\n") + 1
    starts = [header_end]
    for i, b in enumerate(whole[:-1]):
        if b == ord("\n") and i + 1 > header_end:
            starts.append(i + 1)
    for cut in range(header_end, len(whole)):
        path.write_bytes(whole[:cut])
        log = EventLog(path)
        ledger = replay(log)
        complete = sum(1 for s in starts if s <= cut and whole.index(b"\n", s) < cut)
        assert ledger.total_events == complete
        log.close()
        path.write_bytes(whole)


def test_interior_corruption_is_fatal(tmp_path):
    path = _write_log(tmp_path / "e.log", 10)
    lines = path.read_bytes().splitlines(keepends=True)
    lines[4] = b'{"garbage": true}\n'
    path.write_bytes(b"".join(lines))
    with pytest.raises(StoreError, match="not trailing"):
        EventLog(path)


def test_sequence_gap_is_fatal(tmp_path):
    path = _write_log(tmp_path / "e.log", 10)
    lines = path.read_bytes().splitlines(keepends=True)
    del lines[5]
    path.write_bytes(b"".join(lines))
    with pytest.raises(StoreError, match="sequence"):
        EventLog(path)


def test_corrupt_header_with_records_is_fatal(tmp_path):
    path = _write_log(tmp_path / "e.log", 3)
    lines = path.read_bytes().splitlines(keepends=True)
    lines[0] = b"not json at all\n"
    path.write_bytes(b"".join(lines))
    with pytest.raises(StoreError):
        EventLog(path)


def test_torn_header_alone_recreates(tmp_path):
    path = tmp_path / "e.log"
    path.write_bytes(b'{"format_ver')
    log = EventLog(path, "fresh-fp", fsync=False)
    assert log.fingerprint == "fresh-fp"
    assert log.append_score(_score(1)) == 1
    log.close()
    # without a fingerprint there is nothing to recreate the header from
    path.write_bytes(b'{"format_ver')
    with pytest.raises(StoreError):
        EventLog(path)


def test_unsupported_format_version_rejected(tmp_path):
    path = tmp_path / "e.log"
    path.write_text('{"format_version": 99, "fingerprint": "fp"}\n')
    with pytest.raises(StoreError, match="version"):
        EventLog(path)


def test_duplicate_event_ids_fold_once_on_replay(tmp_path):
    path = tmp_path / "e.log"
    log = EventLog(path, "fp", fsync=False)
    sc = _score(7)
    log.append_score(sc)
    log.append_score(_score(8))
    log.append_score(sc)  # same event id appended again
    ledger = replay(log)
    assert ledger.total_events == 2
    np.testing.assert_allclose(
        ledger.prob_sums, sc.prob.values + _score(8).prob.values, atol=1e-15
    )
    log.close()


def test_snapshot_round_trip_is_exact(tmp_path):
    path = _write_log(tmp_path / "e.log", 120)
    log = EventLog(path)
    full = replay(log)
    snap_path = tmp_path / "snap.json"
    snapshot(full, snap_path)
    restored = load_snapshot(snap_path)
    assert np.array_equal(restored.prob_sums, full.prob_sums)
    assert np.array_equal(restored.sim_sums, full.sim_sums)
    assert restored.total_weight == full.total_weight
    assert restored.total_events == full.total_events
    assert restored.last_sequence_no == full.last_sequence_no
    assert restored.fingerprint == full.fingerprint
    assert set(restored.event_ids) == set(full.event_ids)
    log.close()


def test_snapshot_plus_tail_equals_full_replay(tmp_path):
    path = _write_log(tmp_path / "e.log", 200)
    log = EventLog(path)
    full = replay(log)

    # replay only the first half, snapshot it, then continue from the snapshot
    half_log = EventLog(tmp_path / "half.log", "fp-1", fsync=False)
    for seq, sc in log.records():
        if seq <= 100:
            half_log.append_score(sc)
    half = replay(half_log)
    snap_path = tmp_path / "snap.json"
    snapshot(half, snap_path)
    base = load_snapshot(snap_path)
    resumed = replay(log, base)

    assert np.array_equal(resumed.prob_sums, full.prob_sums)
    assert np.array_equal(resumed.sim_sums, full.sim_sums)
    assert resumed.total_events == full.total_events
    assert resumed.last_sequence_no == full.last_sequence_no
    np.testing.assert_allclose(resumed.prob_sums, full.prob_sums, rtol=1e-9)
    half_log.close()
    log.close()


def test_replay_from_base_skips_duplicates_across_boundary(tmp_path):
    path = tmp_path / "e.log"
    log = EventLog(path, "fp", fsync=False)
    sc1, sc2 = _score(1), _score(2)
    log.append_score(sc1)
    log.append_score(sc2)

    base = ScoreLedger(CLASSES, "fp")
    base.ingest_score(sc1, sequence_no=1)
    snap_path = tmp_path / "snap.json"
    snapshot(base, snap_path)
    restored = load_snapshot(snap_path)

    # the tail re-delivers sc2 and a duplicate of sc1; sc1 must not double-count
    log.append_score(sc1)
    resumed = replay(log, restored)
    assert resumed.total_events == 2
    np.testing.assert_allclose(
        resumed.prob_sums, sc1.prob.values + sc2.prob.values, atol=1e-15
    )
    log.close()


def test_replay_base_fingerprint_checked(tmp_path):
    path = _write_log(tmp_path / "e.log", 5)
    log = EventLog(path)
    with pytest.raises(FingerprintMismatch):
        replay(log, ScoreLedger(CLASSES, "other-fp"))
    log.close()


def test_snapshot_rejects_tampered_documents(tmp_path):
    path = _write_log(tmp_path / "e.log", 10)
    log = EventLog(path)
    ledger = replay(log)
    log.close()
    snap_path = tmp_path / "snap.json"
    snapshot(ledger, snap_path)
    doc = json.loads(snap_path.read_text())

    bad = dict(doc, format_version=99)
    snap_path.write_text(json.dumps(bad))
    with pytest.raises(StoreError, match="version"):
        load_snapshot(snap_path)

    bad = dict(doc)
    del bad["prob_sums"]
    snap_path.write_text(json.dumps(bad))
    with pytest.raises(StoreError):
        load_snapshot(snap_path)

    bad = dict(doc, event_ids=doc["event_ids"] + [doc["event_ids"][0]])
    snap_path.write_text(json.dumps(bad))
    with pytest.raises(StoreError):
        load_snapshot(snap_path)


def test_snapshot_hex_floats_survive_json(tmp_path):
    # a sum with no short decimal form must round-trip bit-exactly
    ledger = ScoreLedger(CLASSES, "fp")
    ledger.ingest_score(_score(1, weight=0.1))
    ledger.ingest_score(_score(2, weight=0.3))
    snap_path = tmp_path / "s.json"
    snapshot(ledger, snap_path)
    back = load_snapshot(snap_path)
    assert np.array_equal(back.prob_sums, ledger.prob_sums)
    assert back.total_weight == ledger.total_weight
