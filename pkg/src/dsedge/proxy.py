"""Client-facing forwarding proxy.

Serves pre-generated interstitial pages when the snapshot server has one,
injects the client hook into origin HTML otherwise, recognizes and strips
pre-render tokens so background fetches bypass the snapshot server, and
keeps a small per-request state table with timeout-based expiry.

Fail-open is the rule: if the snapshot server is unreachable the proxy
degrades to a plain forwarding proxy with hook injection.
"""

from __future__ import annotations

import threading
import time
from collections import Counter
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable, Optional, Protocol
from urllib.parse import urlsplit

import requests

from dsedge.config import DsConfig
from dsedge.model import ValidationError, canonicalize_url

HOOK_SENTINEL = b"<!--ds-hook-->"

CLEAN = "clean"
PRE_RENDERING = "pre-rendering"
SNAPSHOT = "snapshot"

DS_AVAILABLE = "available"
DS_MISSING = "missing"
DS_EXPIRED = "expired"


@dataclass
class HttpResponse:
    status: int
    headers: dict[str, str]
    body: bytes


@dataclass(frozen=True)
class ProxyRequestState:
    tag: str
    created_at: float
    url: str


@dataclass(frozen=True)
class SessionState:
    session_id: str = ""
    connection_class: str = "unknown"  # wifi | cellular | unknown


class OriginError(Exception):
    pass


class DsServerClient(Protocol):
    def lookup(self, url: str, device_class: str, user_agent: str) -> tuple[str, Optional[bytes]]:
        """(status, body): status in {available, missing, expired}."""

    def forward_post(self, body: bytes, content_type: str, user_agent: str) -> HttpResponse: ...


def detect_prerender_token(url: str, token_name: str = "__ds_prerender") -> tuple[bool, str]:
    """Detect and strip the reserved pre-render query parameter.

    Pure string surgery: the returned URL is byte-identical to the input
    apart from the removed parameter.
    """
    base, hash_sep, fragment = url.partition("#")
    path, q_sep, query = base.partition("?")
    if not q_sep:
        return False, url
    token = f"{token_name}=1"
    params = query.split("&")
    if token not in params:
        return False, url
    remaining = [p for p in params if p != token]
    rebuilt = path
    if remaining:
        rebuilt += "?" + "&".join(remaining)
    if hash_sep:
        rebuilt += "#" + fragment
    return True, rebuilt


def should_inject(session: SessionState, ds_status: str) -> bool:
    """Harvest only when there is nothing fresh to serve, and never over
    a metered connection."""
    if session.connection_class == "cellular":
        return False
    return ds_status in (DS_MISSING, DS_EXPIRED)


def inject_hook(html: bytes, hook: bytes, content_type: str = "text/html") -> bytes:
    """Insert the hook script before the final </body>.

    Anchoring on the last body close survives the multi-head pages that
    break head-based rewriting. Idempotent via the sentinel comment; all
    other bytes pass through untouched.
    """
    if "html" not in content_type.lower():
        return html
    if HOOK_SENTINEL in html:
        return html
    block = HOOK_SENTINEL + b"<script>" + hook + b"</script>"
    anchor = html.lower().rfind(b"</body>")
    if anchor == -1:
        return html + block
    return html[:anchor] + block + html[anchor:]


def injected_block_size(hook: bytes) -> int:
    """Wire-size delta a single injection adds to a page."""
    return len(HOOK_SENTINEL) + len(b"<script>") + len(hook) + len(b"</script>")


class ProxyCore:
    """Transport-independent request handling; the HTTP layer is a thin
    shell around this so tests can drive it directly."""

    def __init__(
        self,
        config: DsConfig,
        ds_client: DsServerClient,
        origin_fetch: Callable[[str, str, dict[str, str], bytes], HttpResponse],
        hook: bytes = b"",
        clock: Callable[[], float] = time.monotonic,
    ):
        self.config = config
        self.ds_client = ds_client
        self.origin_fetch = origin_fetch
        self.hook = hook
        self.clock = clock
        self._states: dict[str, ProxyRequestState] = {}
        self._lock = threading.Lock()
        self.counters: Counter[str] = Counter()
        # (url, bytes before injection, bytes after) per injected page.
        self.injections: list[tuple[str, int, int]] = []

    # -- state table ---------------------------------------------------

    def _set_state(self, url: str, tag: str) -> None:
        with self._lock:
            self._states[url] = ProxyRequestState(tag=tag, created_at=self.clock(), url=url)

    def _clear_state(self, url: str) -> None:
        with self._lock:
            self._states.pop(url, None)

    def state_of(self, url: str) -> Optional[ProxyRequestState]:
        with self._lock:
            return self._states.get(url)

    def expire_states(self, now: Optional[float] = None) -> int:
        """Purge entries strictly older than the timeout; returns count."""
        if now is None:
            now = self.clock()
        timeout = self.config.state_timeout_seconds
        with self._lock:
            stale = [u for u, s in self._states.items() if now - s.created_at > timeout]
            for url in stale:
                del self._states[url]
        return len(stale)

    # -- request handling ------------------------------------------------

    def handle_request(
        self, method: str, url: str, headers: dict[str, str], body: bytes = b""
    ) -> HttpResponse:
        headers = {k.lower(): v for k, v in headers.items()}
        session = SessionState(
            session_id=headers.get("x-ds-session", ""),
            connection_class=headers.get("x-ds-connection", "unknown"),
        )
        device_class = headers.get("x-ds-formfactor", "desktop")
        user_agent = headers.get("user-agent", "")

        if method == "POST" and urlsplit(url).path == self.config.hook_post_path:
            self.counters["hook_posts"] += 1
            return self.ds_client.forward_post(
                body, headers.get("content-type", ""), user_agent
            )

        is_prerender, stripped = detect_prerender_token(url, self.config.prerender_token)
        try:
            canon = canonicalize_url(stripped)
        except ValidationError as exc:
            return HttpResponse(400, {"Content-Type": "text/plain"}, str(exc).encode())

        if is_prerender:
            self.counters["prerender_requests"] += 1
            self._set_state(canon, PRE_RENDERING)
            ds_status, _ = self._safe_lookup(canon, device_class, user_agent)
            response = self._fetch_origin(method, stripped, headers, body)
            response = self._maybe_inject(response, session, ds_status, canon)
            self._clear_state(canon)
            return response

        ds_status, doc = self._safe_lookup(canon, device_class, user_agent)
        if ds_status == DS_AVAILABLE and doc is not None:
            self.counters["interstitials_served"] += 1
            self._set_state(canon, SNAPSHOT)
            return HttpResponse(
                200,
                {"Content-Type": "text/html; charset=utf-8", "X-DS-Interstitial": "1"},
                doc,
            )

        response = self._fetch_origin(method, stripped, headers, body)
        response = self._maybe_inject(response, session, ds_status, canon)
        self._set_state(canon, CLEAN)
        return response

    def _safe_lookup(
        self, url: str, device_class: str, user_agent: str
    ) -> tuple[str, Optional[bytes]]:
        try:
            return self.ds_client.lookup(url, device_class, user_agent)
        except Exception:
            return DS_MISSING, None

    def _fetch_origin(
        self, method: str, url: str, headers: dict[str, str], body: bytes
    ) -> HttpResponse:
        self.counters["origin_fetches"] += 1
        try:
            return self.origin_fetch(method, url, headers, body)
        except Exception as exc:
            return HttpResponse(
                502, {"Content-Type": "text/plain"}, f"origin unreachable: {exc}".encode()
            )

    def _maybe_inject(
        self, response: HttpResponse, session: SessionState, ds_status: str, url: str
    ) -> HttpResponse:
        if response.status != 200 or not should_inject(session, ds_status):
            return response
        content_type = response.headers.get("Content-Type", "")
        injected = inject_hook(response.body, self.hook, content_type)
        if injected is not response.body and injected != response.body:
            self.counters["injections"] += 1
            self.injections.append((url, len(response.body), len(injected)))
            response = HttpResponse(response.status, dict(response.headers), injected)
        return response


# -- HTTP shell -----------------------------------------------------------


def make_requests_origin_fetch(timeout: float = 15.0):
    session = requests.Session()
    session.trust_env = False
    forwarded = {"user-agent", "accept", "content-type", "accept-language", "cookie"}

    def fetch(method: str, url: str, headers: dict[str, str], body: bytes) -> HttpResponse:
        fwd = {k: v for k, v in headers.items() if k.lower() in forwarded}
        try:
            r = session.request(
                method, url, headers=fwd, data=body or None,
                timeout=timeout, allow_redirects=False,
            )
        except requests.RequestException as exc:
            raise OriginError(str(exc)) from exc
        headers_out = {"Content-Type": r.headers.get("Content-Type", "application/octet-stream")}
        return HttpResponse(r.status_code, headers_out, r.content)

    return fetch


class HttpDsServerClient:
    """Talks to the snapshot server over its HTTP API."""

    def __init__(self, base_url: str, timeout: float = 10.0):
        self.base_url = base_url.rstrip("/")
        self.timeout = timeout
        self.session = requests.Session()
        self.session.trust_env = False

    def _ds_path(self, url: str) -> str:
        parts = urlsplit(url)
        path = "/" + parts.netloc + parts.path
        if parts.query:
            path += "?" + parts.query
        return path

    def lookup(self, url: str, device_class: str, user_agent: str) -> tuple[str, Optional[bytes]]:
        try:
            r = self.session.get(
                self.base_url + self._ds_path(url),
                headers={"X-DS-FormFactor": device_class, "User-Agent": user_agent},
                timeout=self.timeout,
            )
        except requests.RequestException:
            return DS_MISSING, None
        if r.status_code == 200:
            return DS_AVAILABLE, r.content
        if r.status_code == 404:
            return r.headers.get("X-DS-Status", DS_MISSING), None
        return DS_MISSING, None

    def forward_post(self, body: bytes, content_type: str, user_agent: str) -> HttpResponse:
        try:
            r = self.session.post(
                self.base_url + "/ds/post",
                data=body,
                headers={"Content-Type": content_type, "User-Agent": user_agent},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            return HttpResponse(503, {"Content-Type": "text/plain"}, str(exc).encode())
        return HttpResponse(
            r.status_code, {"Content-Type": r.headers.get("Content-Type", "")}, r.content
        )


class _ProxyHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "ProxyHTTPServer"

    def _dispatch(self, method: str) -> None:
        length = int(self.headers.get("Content-Length") or 0)
        body = self.rfile.read(length) if length else b""
        response = self.server.core.handle_request(
            method, self.path, dict(self.headers.items()), body
        )
        self.send_response(response.status)
        for name, value in response.headers.items():
            self.send_header(name, value)
        self.send_header("Content-Length", str(len(response.body)))
        self.end_headers()
        self.wfile.write(response.body)

    def do_GET(self):
        self._dispatch("GET")

    def do_POST(self):
        self._dispatch("POST")

    def log_message(self, fmt, *args):  # quiet by default
        pass


class ProxyHTTPServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, core: ProxyCore, host: str = "127.0.0.1", port: int = 0):
        super().__init__((host, port), _ProxyHandler)
        self.core = core

    @property
    def address(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
