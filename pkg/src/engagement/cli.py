"""Command-line interface.

Subcommands: train, score, replay, report, allocate, waitlist, item-score,
serve. Usage problems (bad flags, missing files) exit 2; runtime failures
exit 1 with a single machine-parseable JSON line on stderr.
"""

from __future__ import annotations

import argparse
import dataclasses
import json
import sys
from pathlib import Path

from .allocate import (
    ItemScoreAccumulator,
    allocate_revenue,
    allocate_with_waitlist,
    export_allocation_csv,
    score_waitlist,
    waitlist_similarity_row,
)
from .config import RunConfig, resolve_home
from .errors import EngagementError
from .ledger_store import EventLog, load_snapshot, replay, snapshot
from .pipeline import (
    Bundle,
    build_artifacts,
    item_profiles_from_text,
    load_bundle,
    load_corpus,
    make_engine,
    parse_events_file,
    save_bundle,
)
from .score import EngagementReport, ScoreLedger, ScoringEngine, ingest, normalize
from .service import serve_home


class UsageError(EngagementError):
    """Bad invocation: wrong flags, missing files. Exits 2, like argparse."""


def _home(args) -> Path:
    try:
        return resolve_home(args.home)
    except EngagementError as exc:
        raise UsageError(str(exc)) from exc


def _bundle(args) -> Bundle:
    home = _home(args)
    try:
        return load_bundle(home)
    except EngagementError as exc:
        raise UsageError(str(exc)) from exc


def _engine_with_mode(bundle: Bundle, source_mode: str | None) -> ScoringEngine:
    engine = bundle.engine
    if source_mode is None or source_mode == engine.source_mode:
        return engine
    return ScoringEngine(
        classifier=engine.classifier,
        embedder=engine.embedder,
        centroids=engine.centroids,
        source_mode=source_mode,
        vocab=engine.vocab,
    )


def _open_ledger(bundle: Bundle, engine: ScoringEngine, *, fsync: bool = True):
    event_log = EventLog(bundle.log_path, engine.fingerprint, fsync=fsync)
    base = load_snapshot(bundle.snapshot_path) if bundle.snapshot_path.is_file() else None
    ledger = replay(event_log, base)
    if not ledger.class_ids:
        ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
    return event_log, ledger


def format_report(report: EngagementReport) -> str:
    """Fixed-width per-class table, ranked by probability share (deterministic bytes)."""
    lines = [
        f"fingerprint {report.fingerprint}",
        f"events {report.total_events}  sim_events {report.sim_events}  "
        f"flagged {report.flagged_events}  total_weight {report.total_weight:.6f}",
    ]
    width = max([len(c) for c in report.class_ids] + [5])
    lines.append(
        f"{'class':<{width}}  {'prob_share':>12}  {'prob_sum':>14}  {'sim_share':>12}  {'sim_sum':>14}"
    )
    ranked = sorted(
        range(len(report.class_ids)),
        key=lambda i: (-report.prob_shares[i], report.class_ids[i]),
    )
    for i in ranked:
        sim_share = (
            "undefined" if report.sim_shares is None else f"{report.sim_shares[i]:.6f}"
        )
        lines.append(
            f"{report.class_ids[i]:<{width}}  {report.prob_shares[i]:>12.6f}  "
            f"{report.prob_sums[i]:>14.6f}  {sim_share:>12}  {report.sim_sums[i]:>14.6f}"
        )
    return "\n".join(lines)


def _print_allocation(allocation) -> None:
    print(f"total_minor_units {allocation.total_minor_units}  basis {allocation.basis}"
          + (f"  alpha {allocation.alpha}" if allocation.alpha is not None else ""))
    width = max([len(p) for p in allocation.shares] + [8])
    print(f"{'provider':<{width}}  {'score':>12}  {'amount':>14}")
    for provider in sorted(allocation.shares):
        print(
            f"{provider:<{width}}  {allocation.scores[provider]:>12.6f}  "
            f"{allocation.shares[provider]:>14d}"
        )


# ----------------------------------------------------------------- commands


def cmd_train(args) -> int:
    if not Path(args.config).is_file():
        raise UsageError(f"config file not found: {args.config}")
    config = RunConfig.from_file(args.config)
    if args.seed is not None:
        config = dataclasses.replace(config, train_seed=args.seed, reducer_seed=args.seed)
    if args.source_mode is not None:
        config = dataclasses.replace(config, source_mode=args.source_mode)
    home = _home(args)
    corpus = load_corpus(config, split="train")
    print(f"loaded {len(corpus)} documents across {len(corpus.classes)} classes")
    built = build_artifacts(config, corpus)
    save_bundle(home, built)
    engine = make_engine(built)
    acc = built.train_result.held_out_accuracy
    print(f"vocabulary {len(built.vocab)} terms")
    print(f"held_out_accuracy {'n/a' if acc is None else f'{acc:.4f}'}")
    print(f"fingerprint {engine.fingerprint}")
    print(f"bundle written to {home}")
    return 0


def cmd_score(args) -> int:
    bundle = _bundle(args)
    if not Path(args.events).is_file():
        raise UsageError(f"events file not found: {args.events}")
    events = parse_events_file(args.events)
    engine = _engine_with_mode(bundle, args.source_mode)
    event_log, ledger = _open_ledger(bundle, engine)
    ingested = duplicates = flagged = 0
    audit_fh = open(args.audit, "w", encoding="utf-8") if args.audit else None
    try:
        for event in events:
            if event.event_id in ledger:
                duplicates += 1
                continue
            score = engine.score_event(event)
            sequence_no = event_log.append_score(score)
            ledger.ingest_score(score, sequence_no=sequence_no)
            ingested += 1
            if score.flagged:
                flagged += 1
            if audit_fh:
                audit_fh.write(json.dumps(score.to_record(), sort_keys=True) + "\n")
    finally:
        if audit_fh:
            audit_fh.close()
        event_log.close()
    print(f"ingested {ingested}  duplicates {duplicates}  flagged {flagged}")
    print(f"ledger events {ledger.total_events}")
    return 0


def cmd_replay(args) -> int:
    bundle = _bundle(args)
    event_log = EventLog(bundle.log_path, bundle.engine.fingerprint)
    try:
        ledger = replay(event_log)
    finally:
        event_log.close()
    if ledger.total_events == 0:
        print("ledger is empty")
        return 0
    if args.write_snapshot:
        snapshot(ledger, bundle.snapshot_path)
        print(f"snapshot written to {bundle.snapshot_path}")
    print(format_report(normalize(ledger)))
    return 0


def cmd_report(args) -> int:
    bundle = _bundle(args)
    event_log, ledger = _open_ledger(bundle, bundle.engine)
    event_log.close()
    if ledger.total_events == 0:
        print("ledger is empty")
        return 0
    report = normalize(ledger)
    if args.json:
        print(json.dumps(report.as_dict(), sort_keys=True, indent=2))
    else:
        print(format_report(report))
    return 0


def _report_from_ledger(args) -> tuple[Bundle, EngagementReport]:
    bundle = _bundle(args)
    event_log, ledger = _open_ledger(bundle, bundle.engine)
    event_log.close()
    if ledger.total_events == 0:
        raise EngagementError("ledger is empty; score events first")
    return bundle, normalize(ledger)


def cmd_allocate(args) -> int:
    if args.total < 0:
        raise UsageError(f"--total must be a non-negative integer, got {args.total}")
    _, report = _report_from_ledger(args)
    allocation = allocate_revenue(args.total, report, args.basis, args.alpha)
    _print_allocation(allocation)
    if args.csv:
        export_allocation_csv(allocation, args.csv)
        print(f"csv written to {args.csv}")
    return 0


def cmd_waitlist(args) -> int:
    if args.total < 0:
        raise UsageError(f"--total must be a non-negative integer, got {args.total}")
    if not Path(args.providers).is_file():
        raise UsageError(f"providers file not found: {args.providers}")
    bundle, report = _report_from_ledger(args)
    with open(args.providers, "r", encoding="utf-8") as fh:
        entries_spec = json.load(fh)
    if not isinstance(entries_spec, list) or not entries_spec:
        raise EngagementError("providers file must hold a non-empty JSON list")
    rows: dict[str, dict[str, float]] = {}
    for entry in entries_spec:
        provider_id = str(entry["provider_id"])
        if "similarity_row" in entry:
            rows[provider_id] = {str(c): float(v) for c, v in entry["similarity_row"].items()}
        elif "documents" in entry:
            rows[provider_id] = waitlist_similarity_row(
                [str(d) for d in entry["documents"]],
                bundle.engine.centroids,
                bundle.engine.embedder,
            )
        else:
            raise EngagementError(f"provider {provider_id!r} needs similarity_row or documents")
    entries = score_waitlist(report, rows)
    width = max([len(p) for p in entries] + [8])
    print(f"{'provider':<{width}}  {'score':>12}")
    for provider in sorted(entries):
        print(f"{provider:<{width}}  {entries[provider].score:>12.6f}")
    if args.total is not None:
        main, side = allocate_with_waitlist(
            args.total, report, entries, args.pool_fraction, args.basis, args.alpha
        )
        print(f"main pool {main.total_minor_units}")
        _print_allocation(main)
        print(f"waitlist pool {side.total_minor_units}")
        _print_allocation(side)
    return 0


def cmd_item_score(args) -> int:
    if not Path(args.item).is_file():
        raise UsageError(f"item file not found: {args.item}")
    bundle = _bundle(args)
    with open(args.item, "r", encoding="utf-8") as fh:
        spec = json.load(fh)
    item_id = str(spec.get("item_id", "item"))
    if "body" in spec:
        prob, sim = item_profiles_from_text(bundle.engine, str(spec["body"]))
    else:
        prob = {str(c): float(v) for c, v in spec["prob"].items()}
        sim = (
            {str(c): float(v) for c, v in spec["sim"].items()} if spec.get("sim") else None
        )
    accumulator = ItemScoreAccumulator(item_id, prob, sim)
    event_log = EventLog(bundle.log_path, bundle.engine.fingerprint)
    try:
        for _, score in event_log.records():
            accumulator.ingest_score(score)
    finally:
        event_log.close()
    result = accumulator.result()
    print(f"item {result.item_id}")
    print(f"prob_score {result.prob_score:.6f} over {result.event_count} events")
    if result.sim_score is not None:
        print(f"sim_score {result.sim_score:.6f} over {result.sim_event_count} events")
    return 0


def cmd_serve(args) -> int:
    home = _home(args)
    serve_home(home, args.host, args.port)
    return 0


# -------------------------------------------------------------------- parser


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="engagement",
        description="Per-prompt engagement scoring and revenue attribution.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    def add_home(p):
        p.add_argument("--home", help="artifact/ledger directory (or ENGAGEMENT_LEDGER_HOME)")

    p = sub.add_parser("train", help="fit vocabulary, basis, classifier, centroids")
    p.add_argument("--config", required=True, help="RunConfig JSON file")
    add_home(p)
    p.add_argument("--seed", type=int, help="override training and reducer seeds")
    p.add_argument("--source-mode", choices=["prompt", "response", "concat", "mean"])
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="score an events file into the ledger")
    add_home(p)
    p.add_argument("--events", required=True, help="JSONL events file")
    p.add_argument("--source-mode", choices=["prompt", "response", "concat", "mean"])
    p.add_argument("--audit", help="also write scored records to this JSONL file")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("replay", help="rebuild the ledger from the log and print the report")
    add_home(p)
    p.add_argument("--write-snapshot", action="store_true", help="persist the replayed state")
    p.set_defaults(func=cmd_replay)

    p = sub.add_parser("report", help="print normalized engagement shares")
    add_home(p)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_report)

    p = sub.add_parser("allocate", help="allocate revenue across classes")
    add_home(p)
    p.add_argument("--total", type=int, required=True, help="revenue in integer minor units")
    p.add_argument("--basis", default="prob", choices=["prob", "sim", "blend"])
    p.add_argument("--alpha", type=float, help="probability weight for blend basis")
    p.add_argument("--csv", help="export rows to this CSV file")
    p.set_defaults(func=cmd_allocate)

    p = sub.add_parser("waitlist", help="score providers not yet in the class set")
    add_home(p)
    p.add_argument("--providers", required=True, help="JSON list of waitlist providers")
    p.add_argument("--total", type=int, help="also split this total with a side pool")
    p.add_argument("--pool-fraction", type=float, default=0.1)
    p.add_argument("--basis", default="prob", choices=["prob", "sim", "blend"])
    p.add_argument("--alpha", type=float)
    p.set_defaults(func=cmd_waitlist)

    p = sub.add_parser("item-score", help="score one catalog item across logged events")
    add_home(p)
    p.add_argument("--item", required=True, help="item JSON (profiles or body text)")
    p.set_defaults(func=cmd_item_score)

    p = sub.add_parser("serve", help="run the HTTP service")
    add_home(p)
    p.add_argument("--host", default="127.0.0.1")
    p.add_argument("--port", type=int, default=8080)
    p.set_defaults(func=cmd_serve)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except EngagementError as exc:
        print(
            json.dumps({"error": type(exc).__name__, "message": str(exc)}),
            file=sys.stderr,
        )
        return 1
    except KeyboardInterrupt:
        return 130


if __name__ == "__main__":
    sys.exit(main())
