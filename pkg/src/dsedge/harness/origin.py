"""Synthetic origin server.

Serves one fixture page per site. The page body carries the render index
and echoes the exact request target, so scripted clients can rasterize
the page deterministically and tests can audit what the proxy actually
forwarded upstream.
"""

from __future__ import annotations

import html
import re
import threading
import time
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from typing import Callable
from urllib.parse import urlsplit

from dsedge.harness.pages import SyntheticPageSpec

RENDER_INDEX_RE = re.compile(rb"<!--render-index:(\d+)-->")
REQUESTED_RE = re.compile(rb"<!--requested:([^>]*)-->")
BANNER_EPOCH_RE = re.compile(rb"<!--banner-epoch:(\d+)-->")


def page_html(spec: SyntheticPageSpec, render_index: int, requested: str, banner_epoch: int) -> bytes:
    anchors = "\n".join(
        f'<a href="{html.escape(l.url, quote=True)}">{html.escape(l.url)}</a>' for l in spec.links
    )
    doc = f"""<!DOCTYPE html>
<html>
<head><title>{spec.site_id}</title></head>
<body>
<!--render-index:{render_index}-->
<!--banner-epoch:{banner_epoch}-->
<!--requested:{html.escape(requested)}-->
<h1>{spec.site_id}</h1>
{anchors}
</body>
</html>
"""
    return doc.encode("utf-8")


class _OriginHandler(BaseHTTPRequestHandler):
    protocol_version = "HTTP/1.1"
    server: "OriginServer"

    def do_GET(self):
        path = urlsplit(self.path).path
        spec = self.server.specs.get(path)
        if spec is None:
            body = b"not here"
            self.send_response(404)
            self.send_header("Content-Type", "text/plain")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        render_index = self.server.next_render_index(path)
        epoch = self.server.banner_epoch()
        body = page_html(spec, render_index, self.path, epoch)
        self.send_response(200)
        self.send_header("Content-Type", "text/html; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, fmt, *args):
        pass


class OriginServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(
        self,
        specs: dict[str, SyntheticPageSpec],
        host: str = "127.0.0.1",
        port: int = 0,
        clock: Callable[[], float] = time.time,
        banner_period: float = 7200.0,
    ):
        super().__init__((host, port), _OriginHandler)
        self.specs = specs
        self.clock = clock
        self.banner_period = banner_period
        self._counters: dict[str, int] = {}
        self._lock = threading.Lock()

    def next_render_index(self, path: str) -> int:
        with self._lock:
            self._counters[path] = self._counters.get(path, 0) + 1
            return self._counters[path]

    def banner_epoch(self) -> int:
        return int(self.clock() / self.banner_period)

    @property
    def address(self) -> str:
        return f"http://{self.server_address[0]}:{self.server_address[1]}"

    def start(self) -> threading.Thread:
        thread = threading.Thread(target=self.serve_forever, daemon=True)
        thread.start()
        return thread
