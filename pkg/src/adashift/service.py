"""Annotation service: exposes the current round's pending queries over
HTTP/JSON and accepts one binary label per sample, so a human can stand in
for the oracle while the harness blocks.

Durability: every accepted label is appended to a JSONL journal and fsynced
before it is acknowledged, and a restarted service rebuilds the round state
by replaying that journal.

Wire schema (version "annotate/v1"):
  GET  /rounds/current          -> {"schema", "round", "domain", "budget",
                                    "pending", "labeled", "phase"}
  GET  /rounds/current/queries  -> {"schema", "queries": [{"sample_id",
                                    "domain", "round", "features", "status",
                                    "label", "annotator"}]}
  GET  /context/source          -> {"schema", "points": [[f0, f1, label], ...]}
                                   display-only background for the annotation
                                   UI; 404 until the harness registers it
  POST /labels                  -> body {"sample_id", "label", "annotator"};
                                   200 ack, 409 duplicate (body carries the
                                   stored label), 422 unknown id or bad label
The round GETs answer 404 while no round is active.
"""

from __future__ import annotations

import json
import os
import threading
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

SCHEMA = "annotate/v1"


class RoundInProgress(RuntimeError):
    pass


class AnnotationService:
    """Round state machine; all transitions run under one lock and label
    submissions are serialized per sample id by that lock."""

    def __init__(self, journal_path: str | None = None):
        self._lock = threading.Lock()
        self._complete = threading.Condition(self._lock)
        self._round: dict | None = None
        self._source_context: list | None = None
        self._journal_path = journal_path
        if journal_path and os.path.exists(journal_path):
            self._replay(journal_path)

    def set_source_context(self, points: list) -> None:
        """Labeled source points ([f0, f1, label] rows) for UI display only."""
        with self._lock:
            self._source_context = [list(p) for p in points]

    def source_context(self) -> list | None:
        with self._lock:
            return None if self._source_context is None else list(self._source_context)

    # ---- journal ----

    def _append_journal(self, record: dict) -> None:
        if not self._journal_path:
            return
        with open(self._journal_path, "a") as fh:
            fh.write(json.dumps(record, sort_keys=True) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    def _replay(self, path: str) -> None:
        with open(path) as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                record = json.loads(line)
                if record["type"] == "round":
                    self._round = {
                        "round_index": record["round"],
                        "domain": record["domain"],
                        "queries": {q["sample_id"]: dict(q, status="pending",
                                                         label=None, annotator=None)
                                    for q in record["queries"]},
                        "order": [q["sample_id"] for q in record["queries"]],
                    }
                elif record["type"] == "label" and self._round is not None:
                    q = self._round["queries"].get(record["sample_id"])
                    if q is not None and q["status"] == "pending":
                        q["status"] = "labeled"
                        q["label"] = record["label"]
                        q["annotator"] = record.get("annotator")
                elif record["type"] == "abort":
                    self._round = None

    # ---- round lifecycle (called by the harness side) ----

    def start_round(self, domain: str, round_index: int, queries: list[dict]) -> None:
        with self._lock:
            if self._round is not None and self._pending_locked() > 0:
                raise RoundInProgress("a round is already waiting for labels")
            self._append_journal({"type": "round", "round": round_index,
                                  "domain": domain, "queries": queries})
            self._round = {
                "round_index": round_index,
                "domain": domain,
                "queries": {q["sample_id"]: dict(q, status="pending",
                                                 label=None, annotator=None)
                            for q in queries},
                "order": [q["sample_id"] for q in queries],
            }
            self._complete.notify_all()

    def abort_round(self) -> None:
        with self._lock:
            if self._round is not None:
                self._append_journal({"type": "abort"})
                self._round = None

    def wait_complete(self, timeout: float | None = None) -> dict[str, int] | None:
        """Block until every query is labeled; None on timeout. Resumes
        exactly once per round because the caller owns the round object."""
        with self._lock:
            done = self._complete.wait_for(lambda: self._round is not None
                                           and self._pending_locked() == 0,
                                           timeout=timeout)
            if not done:
                return None
            return {sid: q["label"] for sid, q in self._round["queries"].items()}

    # ---- inspection / submission (HTTP side) ----

    def _pending_locked(self) -> int:
        return sum(1 for q in self._round["queries"].values() if q["status"] == "pending")

    def status(self) -> dict | None:
        with self._lock:
            if self._round is None:
                return None
            pending = self._pending_locked()
            labeled = len(self._round["queries"]) - pending
            return {
                "schema": SCHEMA,
                "round": self._round["round_index"],
                "domain": self._round["domain"],
                "budget": len(self._round["queries"]),
                "pending": pending,
                "labeled": labeled,
                "phase": "labeling" if pending else "complete",
            }

    def queries(self) -> list[dict] | None:
        with self._lock:
            if self._round is None:
                return None
            return [dict(self._round["queries"][sid]) for sid in self._round["order"]]

    def submit_label(self, sample_id, label, annotator=None) -> tuple[int, dict]:
        """Returns (http_status, body). The label is journaled before the
        in-memory state flips, so an acknowledged label survives a crash."""
        with self._lock:
            if self._round is None:
                return 404, {"error": "no active round"}
            if label not in (0, 1):
                return 422, {"error": "label must be 0 or 1"}
            q = self._round["queries"].get(sample_id)
            if q is None:
                return 422, {"error": f"unknown sample id {sample_id!r}"}
            if q["status"] == "labeled":
                return 409, {"error": "already labeled", "sample_id": sample_id,
                             "label": q["label"]}
            self._append_journal({"type": "label", "round": self._round["round_index"],
                                  "sample_id": sample_id, "label": int(label),
                                  "annotator": annotator})
            q["status"] = "labeled"
            q["label"] = int(label)
            q["annotator"] = annotator
            pending = self._pending_locked()
            if pending == 0:
                self._complete.notify_all()
            return 200, {"status": "ok", "sample_id": sample_id, "label": int(label),
                         "pending": pending}


# ---------------------------------------------------------------------------
# HTTP layer


class _Handler(BaseHTTPRequestHandler):
    def _send(self, code: int, body: dict | list) -> None:
        payload = json.dumps(body).encode("utf-8")
        self.send_response(code)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)

    def _send_file(self, path: str) -> bool:
        if not os.path.isfile(path):
            return False
        types = {".html": "text/html", ".js": "text/javascript", ".css": "text/css",
                 ".map": "application/json"}
        ctype = types.get(os.path.splitext(path)[1], "application/octet-stream")
        with open(path, "rb") as fh:
            payload = fh.read()
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(payload)))
        self.end_headers()
        self.wfile.write(payload)
        return True

    def do_GET(self):
        service = self.server.service
        if self.path == "/rounds/current":
            status = service.status()
            if status is None:
                self._send(404, {"error": "no active round"})
            else:
                self._send(200, status)
            return
        if self.path == "/rounds/current/queries":
            queries = service.queries()
            if queries is None:
                self._send(404, {"error": "no active round"})
            else:
                self._send(200, {"schema": SCHEMA, "queries": queries})
            return
        if self.path == "/context/source":
            points = service.source_context()
            if points is None:
                self._send(404, {"error": "no source context registered"})
            else:
                self._send(200, {"schema": SCHEMA, "points": points})
            return
        ui_dir = self.server.ui_dir
        if ui_dir:
            rel = "index.html" if self.path in ("/", "") else self.path.lstrip("/")
            full = os.path.realpath(os.path.join(ui_dir, rel))
            if full.startswith(os.path.realpath(ui_dir)) and self._send_file(full):
                return
        self._send(404, {"error": "not found"})

    def do_POST(self):
        if self.path != "/labels":
            self._send(404, {"error": "not found"})
            return
        length = int(self.headers.get("Content-Length", 0))
        try:
            body = json.loads(self.rfile.read(length) or b"{}")
        except json.JSONDecodeError:
            self._send(400, {"error": "invalid JSON"})
            return
        if "sample_id" not in body or "label" not in body:
            self._send(422, {"error": "sample_id and label are required"})
            return
        code, payload = self.server.service.submit_label(
            body["sample_id"], body["label"], body.get("annotator"))
        self._send(code, payload)

    def log_message(self, *args):  # quiet by default
        pass


def make_server(service: AnnotationService, port: int = 0,
                ui_dir: str | None = None) -> ThreadingHTTPServer:
    server = ThreadingHTTPServer(("127.0.0.1", port), _Handler)
    server.service = service
    server.ui_dir = ui_dir
    return server


def serve_in_background(service: AnnotationService, port: int = 0,
                        ui_dir: str | None = None):
    """Start the HTTP server on a daemon thread; returns (server, thread)."""
    server = make_server(service, port, ui_dir)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
