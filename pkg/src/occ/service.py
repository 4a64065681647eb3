"""HTTP layer for a live human oracle.

While training runs, the trainer enqueues one pending pair query at a time
and blocks (with a timeout) until a client answers it. The service exposes:

  GET  /next-query  oldest pending query, or 204 when none
  POST /answer      {"id": int, "same": bool} -> {"ok", "recorded"}
  GET  /status      {"epoch", "loss_total", "queries_spent",
                     "budget_total", "pending"}
  GET  /scatter     current 2-d projection rows with cluster labels

Plain JSON over loopback HTTP, no auth: this is a desk tool. Answers are
recorded exactly once; an expired query is skipped without charging the
query budget and its pair stays eligible for a later batch.
"""

import json
import threading
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import numpy as np

from .data import pca_2d, scatter_rows
from .errors import InputError
from .oracle import DIFFERENT, SAME

PENDING = "pending"
ANSWERED = "answered"
EXPIRED = "expired"


@dataclass
class PendingQuery:
    query_id: int
    pair: tuple
    features_i: list
    features_j: list
    pc_i: list
    pc_j: list
    epoch: int
    status: str = PENDING
    same: bool = None
    event: threading.Event = field(default_factory=threading.Event)

    def to_payload(self):
        return {
            "id": self.query_id,
            "pair": list(self.pair),
            "features_i": self.features_i,
            "features_j": self.features_j,
            "pc_i": self.pc_i,
            "pc_j": self.pc_j,
            "epoch": self.epoch,
        }


class OracleSession:
    """Shared state between the trainer thread and the HTTP handlers."""

    def __init__(self, dataset, timeout=60.0, max_pending=8):
        self.dataset = dataset
        self.timeout = timeout
        self.max_pending = max_pending
        self._lock = threading.Lock()
        self._queries = {}
        self._order = []  # query ids in arrival order
        self._next_id = 1
        self.status = {"epoch": 0, "loss_total": None, "queries_spent": 0,
                       "budget_total": 0, "pending": 0}
        coords, _ = pca_2d(dataset.features)
        self._coords = coords
        self._scatter = scatter_rows(dataset, dataset.features,
                                     np.full(len(dataset), -1))

    # -- trainer side ------------------------------------------------------

    def enqueue_query(self, pair, epoch):
        """Register a pending query; returns its id or None on backpressure."""
        i, j = pair
        with self._lock:
            open_count = sum(1 for q in self._queries.values() if q.status == PENDING)
            if open_count >= self.max_pending:
                return None
            qid = self._next_id
            self._next_id += 1
            query = PendingQuery(
                query_id=qid, pair=(i, j),
                features_i=[float(v) for v in self.dataset.features[i]],
                features_j=[float(v) for v in self.dataset.features[j]],
                pc_i=[float(v) for v in self._coords[i]],
                pc_j=[float(v) for v in self._coords[j]],
                epoch=epoch,
            )
            self._queries[qid] = query
            self._order.append(qid)
            self._refresh_pending()
            return qid

    def wait_for_answer(self, qid):
        """Block up to the timeout; None means the query expired."""
        query = self._queries[qid]
        query.event.wait(self.timeout)
        with self._lock:
            if query.status == ANSWERED:
                return SAME if query.same else DIFFERENT
            query.status = EXPIRED
            self._refresh_pending()
            return None

    def _refresh_pending(self):
        self.status["pending"] = sum(1 for q in self._queries.values()
                                     if q.status == PENDING)

    # -- handler side ------------------------------------------------------

    def next_query(self):
        with self._lock:
            for qid in self._order:
                q = self._queries[qid]
                if q.status == PENDING:
                    return q.to_payload()
            return None

    def submit_answer(self, qid, same):
        """Resolve a pending query exactly once. Returns (ok, reason)."""
        if not isinstance(same, bool):
            raise InputError("'same' must be a boolean")
        with self._lock:
            q = self._queries.get(qid)
            if q is None:
                return False, "unknown query id"
            if q.status != PENDING:
                return False, f"query already {q.status}"
            q.same = same
            q.status = ANSWERED
            self._refresh_pending()
            q.event.set()
            return True, "recorded"

    def snapshot_status(self):
        with self._lock:
            return dict(self.status)

    def snapshot_scatter(self):
        with self._lock:
            return list(self._scatter)

    # -- trainer observer hooks --------------------------------------------

    def on_batch(self, info):
        with self._lock:
            self.status.update({
                "epoch": info["epoch"], "loss_total": info["loss_total"],
                "queries_spent": info["queries_spent"],
                "budget_total": info["budget_total"],
            })

    def on_epoch(self, epoch, params, dataset):
        from .nn import forward  # local import to keep module load light
        cache = forward(params, dataset.features)
        assignment = np.argmax(cache.yhat, axis=1)
        rows = scatter_rows(dataset, cache.zhat, assignment)
        with self._lock:
            self._scatter = rows
            self.status["epoch"] = epoch + 1


class InteractiveOracle:
    """Trainer-side adapter turning .answer() calls into pending queries."""

    def __init__(self, session):
        self.session = session

    def answer(self, i, j, epoch=None):
        qid = self.session.enqueue_query((i, j), epoch if epoch is not None else 0)
        if qid is None:
            return None  # backpressure: skip this query
        return self.session.wait_for_answer(qid)


def _json_bytes(payload):
    return json.dumps(payload).encode()


class _Handler(BaseHTTPRequestHandler):
    session = None  # injected by make_server

    def _send(self, code, payload=None):
        body = b"" if payload is None else _json_bytes(payload)
        self.send_response(code)
        self.send_header("Access-Control-Allow-Origin", "*")
        self.send_header("Access-Control-Allow-Headers", "Content-Type")
        self.send_header("Access-Control-Allow-Methods", "GET, POST, OPTIONS")
        if body:
            self.send_header("Content-Type", "application/json")
            self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        if body:
            self.wfile.write(body)

    def log_message(self, fmt, *args):  # keep test output quiet
        pass

    def do_OPTIONS(self):
        self._send(204)

    def do_GET(self):
        if self.path == "/next-query":
            payload = self.session.next_query()
            if payload is None:
                self._send(204)
            else:
                self._send(200, payload)
        elif self.path == "/status":
            self._send(200, self.session.snapshot_status())
        elif self.path == "/scatter":
            self._send(200, self.session.snapshot_scatter())
        else:
            self._send(404, {"ok": False, "error": f"no such endpoint {self.path}"})

    def do_POST(self):
        if self.path != "/answer":
            self._send(404, {"ok": False, "error": f"no such endpoint {self.path}"})
            return
        try:
            length = int(self.headers.get("Content-Length", 0))
            body = json.loads(self.rfile.read(length) or b"{}")
            qid = body["id"]
            same = body["same"]
            if not isinstance(same, bool):
                raise ValueError("'same' must be a boolean")
        except (ValueError, KeyError) as exc:
            self._send(400, {"ok": False, "recorded": False, "error": str(exc)})
            return
        ok, reason = self.session.submit_answer(qid, same)
        if ok:
            self._send(200, {"ok": True, "recorded": True})
        elif reason == "unknown query id":
            self._send(404, {"ok": False, "recorded": False, "error": reason})
        else:
            self._send(409, {"ok": False, "recorded": False, "error": reason})


def make_server(session, host="127.0.0.1", port=0):
    """Threaded HTTP server bound to host:port (port 0 picks a free one)."""
    handler = type("BoundHandler", (_Handler,), {"session": session})
    server = ThreadingHTTPServer((host, port), handler)
    return server


def serve_in_thread(session, host="127.0.0.1", port=0):
    """Start the server on a daemon thread; returns (server, thread)."""
    server = make_server(session, host, port)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    return server, thread
