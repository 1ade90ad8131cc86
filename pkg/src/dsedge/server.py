"""Snapshot server: HTTP front plus the generation pipeline.

Endpoints:
    GET    /{host}/{path}         interstitial lookup (X-DS-FormFactor header)
    POST   /ds/post               snapshot upload (multipart/form-data)
    DELETE /ds/purge/{host}/{path}

Uploads are stored synchronously; desensitization and page generation run
off a work queue, never inline with the POST. Publication of a finished
document is a single dict assignment under a lock, so readers observe
either the old or the new document, never a half-written one.
"""

from __future__ import annotations

import json
import queue
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional
from urllib.parse import urlsplit

from dsedge import desensitize as ds
from dsedge.config import DsConfig
from dsedge.harvester import GroupKey, HarvestStore
from dsedge.htmlgen import DsHtmlDocument, generate
from dsedge.model import (
    DsPostRejected,
    ValidationError,
    canonicalize_url,
    validate_ds_post,
)
from dsedge.proxy import DS_AVAILABLE, DS_EXPIRED, DS_MISSING, HttpResponse


class SnapshotService:
    """Store + pipeline + published-document table."""

    def __init__(
        self,
        config: DsConfig | None = None,
        store: HarvestStore | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config or DsConfig()
        self.clock = clock
        self.store = store if store is not None else HarvestStore(self.config, clock=clock)
        self._docs: dict[tuple[str, str], DsHtmlDocument] = {}
        self._docs_lock = threading.Lock()
        self._queue: "queue.Queue[GroupKey]" = queue.Queue()
        self._inflight: set[GroupKey] = set()
        self._inflight_lock = threading.Lock()
        self._worker: Optional[threading.Thread] = None
        self._stop = threading.Event()
        # Re-publish anything a previous process generated.
        for slot, doc in self.store.published_documents().items():
            self._docs[slot] = doc

    # -- API operations --------------------------------------------------

    def ds_post(self, body: bytes, content_type: str, user_agent: str) -> str:
        """Validate and store one upload; returns the storage key.

        Raises DsPostRejected with a machine-readable reason otherwise.
        """
        record = validate_ds_post(body, content_type, user_agent, received_at=self.clock())
        key, record_id = self.store.store_snapshot(record)
        group = self.store.group(key)
        if group is not None and self.store.needs_refresh(group, self.clock()):
            self._enqueue(key)
        return f"{key}/{record_id}"

    def ds_get(self, url: str, device_class: str) -> tuple[str, Optional[DsHtmlDocument]]:
        """(status, document): available, missing, or expired."""
        canon = canonicalize_url(url)
        with self._docs_lock:
            doc = self._docs.get((canon, device_class))
        if doc is None:
            return DS_MISSING, None
        if doc.is_expired(self.clock()):
            return DS_EXPIRED, None
        return DS_AVAILABLE, doc

    def purge(self, url: str) -> int:
        canon = canonicalize_url(url)
        with self._docs_lock:
            for slot in [s for s in self._docs if s[0] == canon]:
                del self._docs[slot]
        return self.store.purge(canon)

    # -- pipeline ----------------------------------------------------------

    def _enqueue(self, key: GroupKey) -> None:
        with self._inflight_lock:
            if key in self._inflight:
                return
            self._inflight.add(key)
        self._queue.put(key)

    def maintain(self, now: Optional[float] = None) -> int:
        """Scan for groups due a (re)generation; returns enqueued count."""
        if now is None:
            now = self.clock()
        enqueued = 0
        for group in self.store.groups():
            if self.store.needs_refresh(group, now):
                self._enqueue(group.key)
                enqueued += 1
        return enqueued

    def drain(self) -> int:
        """Run all queued pipeline jobs synchronously; returns job count."""
        done = 0
        while True:
            try:
                key = self._queue.get_nowait()
            except queue.Empty:
                return done
            try:
                self._run_pipeline(key)
            finally:
                with self._inflight_lock:
                    self._inflight.discard(key)
                self._queue.task_done()
            done += 1

    def _run_pipeline(self, key: GroupKey) -> None:
        group = self.store.group(key)
        if group is None:
            return
        if not self.store.threshold_reached(group):
            return
        host = key.host
        batch = self.store.select_batch_entries(group, self.config.threshold_for(host))
        batch_ids = tuple(rid for rid, _ in batch)
        records = [r for _, r in batch]
        result = ds.desensitize(
            records,
            discard_threshold=self.config.discard_for(host),
            blank_color=self.config.blank_color,
            tolerance=self.config.pixel_tolerance,
            clock=self.clock,
        )
        if isinstance(result, ds.Discarded):
            self.store.mark_discarded(group, result.fraction, batch_ids)
            return
        newest = records[-1]
        document = generate(
            result,
            newest.links,
            newest.viewport_height,
            original_url=key.url,
            token_name=self.config.prerender_token,
            ttl_seconds=self.config.ttl_for(host),
            clock=self.clock,
        )
        self.store.mark_generated(group, result, document, batch_ids)
        with self._docs_lock:
            slot = (key.url, key.device_class)
            current = self._docs.get(slot)
            if current is None or document.generated_at >= current.generated_at:
                self._docs[slot] = document

    # -- background worker ------------------------------------------------

    def start_worker(self) -> None:
        if self._worker is not None:
            return
        self._stop.clear()
        self._worker = threading.Thread(target=self._worker_loop, daemon=True)
        self._worker.start()

    def stop_worker(self) -> None:
        self._stop.set()
        if self._worker is not None:
            self._worker.join(timeout=5.0)
            self._worker = None

    def _worker_loop(self) -> None:
        while not self._stop.is_set():
            try:
                key = self._queue.get(timeout=0.1)
            except queue.Empty:
                continue
            try:
                self._run_pipeline(key)
            finally:
                with self._inflight_lock:
                    self._inflight.discard(key)
                self._queue.task_done()

    def wait_idle(self, timeout: float = 30.0) -> bool:
        """Block until the queue is empty (worker mode)."""
        deadline = time.monotonic() + timeout
        while time.monotonic() < deadline:
            with self._inflight_lock:
                busy = bool(self._inflight)
            if self._queue.empty() and not busy:
                return True
            time.sleep(0.01)
        return False


class InProcessDsClient:
    """DsServerClient implementation bound directly to a service; used by
    tests and single-process deployments."""

    def __init__(self, service: SnapshotService):
        self.service = service

    def lookup(self, url: str, device_class: str, user_agent: str):
        status, doc = self.service.ds_get(url, device_class)
        if status == DS_AVAILABLE and doc is not None:
            return status, doc.html_bytes
        return status, None

    def forward_post(self, body: bytes, content_type: str, user_agent: str) -> HttpResponse:
        try:
            key = self.service.ds_post(body, content_type, user_agent)
        except DsPostRejected as exc:
            payload = json.dumps({"error": exc.reason, "part": exc.part}).encode()
            return HttpResponse(400, {"Content-Type": "application/json"}, payload)
        payload = json.dumps({"key": key}).encode()
        return HttpResponse(200, {"Content-Type": "application/json"}, payload)


# -- HTTP layer -------------------------------------------------------------


class _DsHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "DsHTTPServer"

    def _reply(self, status: int, headers: dict[str, str], body: bytes) -> None:
        self.send_response(status)
        for name, value in headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _url_from_path(self, path: str) -> str:
        # "/{host}/{path...}" -> "http://{host}/{path...}"
        trimmed = path.lstrip("/")
        if not trimmed:
            raise ValidationError("malformed lookup path")
        return canonicalize_url("http://" + trimmed)

    def do_GET(self):
        service = self.server.service
        try:
            url = self._url_from_path(self.path)
        except ValidationError as exc:
            self._reply(400, {"Content-Type": "text/plain"}, str(exc).encode())
            return
        device_class = self.headers.get("X-DS-FormFactor", "desktop")
        status, doc = service.ds_get(url, device_class)
        if status == DS_AVAILABLE and doc is not None:
            self._reply(
                200, {"Content-Type": "text/html; charset=utf-8"}, doc.html_bytes
            )
        else:
            self._reply(404, {"Content-Type": "text/plain", "X-DS-Status": status}, b"")

    def do_POST(self):
        if self.path != "/ds/post":
            self._reply(404, {"Content-Type": "text/plain"}, b"unknown endpoint")
            return
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        response = InProcessDsClient(self.server.service).forward_post(
            body,
            self.headers.get("Content-Type", ""),
            self.headers.get("User-Agent", ""),
        )
        self._reply(response.status, response.headers, response.body)

    def do_DELETE(self):
        prefix = "/ds/purge/"
        if not self.path.startswith(prefix):
            self._reply(404, {"Content-Type": "text/plain"}, b"unknown endpoint")
            return
        try:
            url = self._url_from_path(self.path[len(prefix) - 1 :])
        except ValidationError as exc:
            self._reply(400, {"Content-Type": "text/plain"}, str(exc).encode())
            return
        removed = self.server.service.purge(url)
        self._reply(
            200, {"Content-Type": "application/json"}, json.dumps({"removed": removed}).encode()
        )

    def log_message(self, fmt, *args):
        pass


class DsHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, service: SnapshotService, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _DsHandler)
        self.service = service

    @property
    def address(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
