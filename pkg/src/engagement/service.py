"""HTTP face of the scoring engine and ledger.

Stdlib ThreadingHTTPServer; one process, one ledger, one append-only log.
Ingestion is serialized by a lock and appends to the log before folding
into the in-memory ledger, so a crash can never leave the ledger ahead of
the log.

Routes:
  POST /v1/events            ingest one event (idempotent by event_id)
  GET  /v1/report            normalized engagement shares
  GET  /v1/allocation        ?total=<minor units>&basis=prob|sim|blend&alpha=
  POST /v1/waitlist/score    score off-ledger providers by similarity rows
  GET  /v1/healthz           liveness and fingerprint

Errors: 400 malformed request, 409 fingerprint/state conflict, 422 empty
prompt, 503 before the model is loaded.
"""

from __future__ import annotations

import json
import logging
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .allocate import allocate_revenue, score_waitlist, waitlist_similarity_row
from .errors import AllocationError, EngagementError, FingerprintMismatch, ScoringError
from .ledger_store import EventLog, load_snapshot, replay
from .pipeline import Bundle, load_bundle, parse_event
from .score import ScoreLedger, ScoringEngine, normalize

log = logging.getLogger(__name__)


class EngagementService:
    """Holds the engine, the ledger, and the log; does the actual work."""

    def __init__(self, engine: ScoringEngine, ledger: ScoreLedger, event_log: EventLog | None):
        if ledger.fingerprint != engine.fingerprint:
            raise FingerprintMismatch("service ledger does not match its engine")
        self.engine = engine
        self.ledger = ledger
        self.event_log = event_log
        self.lock = threading.Lock()
        self.ready = True

    @classmethod
    def from_bundle(cls, bundle: Bundle, *, fsync: bool = True) -> "EngagementService":
        engine = bundle.engine
        event_log = EventLog(bundle.log_path, engine.fingerprint, fsync=fsync)
        base = None
        if bundle.snapshot_path.is_file():
            base = load_snapshot(bundle.snapshot_path)
        ledger = replay(event_log, base)
        if not ledger.class_ids:
            ledger = ScoreLedger(engine.class_ids, engine.fingerprint)
        return cls(engine, ledger, event_log)

    # -- operations, transport-free ------------------------------------------

    def ingest_event(self, record: dict) -> tuple[int, dict]:
        claimed = record.pop("fingerprint", None)
        if claimed is not None and claimed != self.engine.fingerprint:
            return 409, {"error": "event fingerprint does not match the serving model"}
        try:
            event = parse_event(record)
        except (EngagementError, ScoringError) as exc:
            message = str(exc)
            status = 422 if "empty prompt" in message else 400
            return status, {"error": message}
        with self.lock:
            if event.event_id in self.ledger:
                stored = self.ledger.stored_score(event.event_id)
                return 200, {
                    "duplicate": True,
                    "score": stored.to_record() if stored else None,
                }
            try:
                score = self.engine.score_event(event)
            except ScoringError as exc:
                return 400, {"error": str(exc)}
            sequence_no = None
            if self.event_log is not None:
                sequence_no = self.event_log.append_score(score)
            self.ledger.ingest_score(score, sequence_no=sequence_no)
            return 200, {"duplicate": False, "sequence_no": sequence_no, "score": score.to_record()}

    def report(self) -> tuple[int, dict]:
        with self.lock:
            if self.ledger.total_events == 0:
                return 409, {"error": "ledger is empty; ingest events first"}
            return 200, normalize(self.ledger).as_dict()

    def allocation(self, query: dict[str, list[str]]) -> tuple[int, dict]:
        try:
            total = int(query["total"][0])
        except (KeyError, ValueError, IndexError):
            return 400, {"error": "allocation needs an integer total (minor units)"}
        basis = query.get("basis", ["prob"])[0]
        alpha = None
        if "alpha" in query:
            try:
                alpha = float(query["alpha"][0])
            except ValueError:
                return 400, {"error": "alpha must be a number"}
        with self.lock:
            if self.ledger.total_events == 0:
                return 409, {"error": "ledger is empty; ingest events first"}
            report = normalize(self.ledger)
        try:
            allocation = allocate_revenue(total, report, basis, alpha)
        except AllocationError as exc:
            return 400, {"error": str(exc)}
        return 200, {
            "total_minor_units": allocation.total_minor_units,
            "basis": allocation.basis,
            "alpha": allocation.alpha,
            "scores": allocation.scores,
            "shares": allocation.shares,
        }

    def waitlist(self, body: dict) -> tuple[int, dict]:
        providers = body.get("providers")
        if not isinstance(providers, list) or not providers:
            return 400, {"error": 'body needs a non-empty "providers" list'}
        with self.lock:
            if self.ledger.total_events == 0:
                return 409, {"error": "ledger is empty; ingest events first"}
            report = normalize(self.ledger)
        rows: dict[str, dict[str, float]] = {}
        try:
            for entry in providers:
                if not isinstance(entry, dict) or "provider_id" not in entry:
                    return 400, {"error": "each provider needs a provider_id"}
                provider_id = str(entry["provider_id"])
                if "similarity_row" in entry:
                    rows[provider_id] = {
                        str(c): float(v) for c, v in entry["similarity_row"].items()
                    }
                elif "documents" in entry:
                    if self.engine.centroids is None:
                        return 400, {"error": "this deployment has no similarity centroids"}
                    rows[provider_id] = waitlist_similarity_row(
                        [str(d) for d in entry["documents"]],
                        self.engine.centroids,
                        self.engine.embedder,
                    )
                else:
                    return 400, {
                        "error": f"provider {provider_id!r} needs similarity_row or documents"
                    }
            entries = score_waitlist(report, rows)
        except (AllocationError, ValueError, AttributeError) as exc:
            return 400, {"error": str(exc)}
        return 200, {
            "entries": {
                p: {"score": e.score, "similarity_row": e.similarity_row}
                for p, e in entries.items()
            }
        }

    def healthz(self) -> tuple[int, dict]:
        if not self.ready:
            return 503, {"status": "loading"}
        return 200, {
            "status": "ok",
            "fingerprint": self.engine.fingerprint,
            "total_events": self.ledger.total_events,
        }


class _Handler(BaseHTTPRequestHandler):
    server: "EngagementHTTPServer"

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        log.debug("%s - %s", self.address_string(), fmt % args)

    def _send(self, status: int, payload: dict) -> None:
        body = json.dumps(payload, sort_keys=True).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _read_json(self) -> dict | None:
        try:
            length = int(self.headers.get("Content-Length", "0"))
            raw = self.rfile.read(length)
            doc = json.loads(raw.decode("utf-8"))
        except (ValueError, UnicodeDecodeError):
            return None
        return doc if isinstance(doc, dict) else None

    def do_GET(self) -> None:
        service = self.server.service
        url = urlparse(self.path)
        if url.path == "/v1/healthz":
            self._send(*service.healthz())
            return
        if not service.ready:
            self._send(503, {"error": "model not loaded yet"})
            return
        if url.path == "/v1/report":
            self._send(*service.report())
        elif url.path == "/v1/allocation":
            self._send(*service.allocation(parse_qs(url.query)))
        else:
            self._send(404, {"error": f"no route {url.path}"})

    def do_POST(self) -> None:
        service = self.server.service
        url = urlparse(self.path)
        if not service.ready:
            self._send(503, {"error": "model not loaded yet"})
            return
        body = self._read_json()
        if body is None:
            self._send(400, {"error": "request body must be a JSON object"})
            return
        if url.path == "/v1/events":
            self._send(*service.ingest_event(body))
        elif url.path == "/v1/waitlist/score":
            self._send(*service.waitlist(body))
        else:
            self._send(404, {"error": f"no route {url.path}"})


class EngagementHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], service: EngagementService):
        super().__init__(address, _Handler)
        self.service = service


def make_server(service: EngagementService, host: str = "127.0.0.1", port: int = 0) -> EngagementHTTPServer:
    return EngagementHTTPServer((host, port), service)


def serve_home(home: str | Path, host: str, port: int) -> None:
    """Load the bundle under `home`, replay its log, and serve until interrupted."""
    service = EngagementService.from_bundle(load_bundle(Path(home)))
    server = make_server(service, host, port)
    log.info("serving on %s:%d", *server.server_address[:2])
    try:
        server.serve_forever()
    finally:
        server.server_close()
        if service.event_log is not None:
            service.event_log.close()
