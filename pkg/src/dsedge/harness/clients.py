"""Scripted clients standing in for real browsers.

A client requests a page through the proxy. On an origin page carrying
the hook sentinel it behaves like the injected hook would: rasterize,
mine links, upload. On an interstitial it fires the flip and issues the
tokenized background request. Adversarial clients upload noise instead
of the rendered page.
"""

from __future__ import annotations

import html as html_mod
import json
import re
import threading
from dataclasses import dataclass, field
from typing import Optional
from urllib.parse import urlsplit

import numpy as np
import requests

from dsedge.harness.origin import BANNER_EPOCH_RE, RENDER_INDEX_RE, REQUESTED_RE
from dsedge.harness.pages import SyntheticPageSpec
from dsedge.model import Raster, links_to_json
from dsedge.proxy import HOOK_SENTINEL
from dsedge.wire import encode_multipart

PRERENDER_LINK_RE = re.compile(
    rb'<link id="ds-prerender" rel="prerender" href="([^"]+)">'
)


class EventLog:
    """Append-only ordered channel shared by all clients."""

    def __init__(self):
        self._events: list[dict] = []
        self._lock = threading.Lock()

    def append(self, **event) -> None:
        with self._lock:
            event["seq"] = len(self._events)
            self._events.append(event)

    def events(self, kind: Optional[str] = None) -> list[dict]:
        with self._lock:
            snapshot = list(self._events)
        if kind is None:
            return snapshot
        return [e for e in snapshot if e["kind"] == kind]


@dataclass
class SimClient:
    client_id: str
    proxy_url: str
    log: EventLog
    connection: str = "wifi"  # wifi | cellular
    adversary: bool = False
    hook_post_path: str = "/__ds/post"
    ff: tuple[int, int, Optional[float]] = (360, 640, 4.7)
    user_agent: str = "dsedge-sim/1.0"
    rng: np.random.Generator = field(default_factory=lambda: np.random.default_rng(0))

    def __post_init__(self):
        self.session = requests.Session()
        self.session.trust_env = False
        self.session.proxies = {"http": self.proxy_url}

    def _headers(self) -> dict[str, str]:
        return {
            "X-DS-Connection": self.connection,
            "X-DS-FormFactor": "phone",
            "User-Agent": self.user_agent,
        }

    def browse(self, site_url: str, spec: SyntheticPageSpec) -> None:
        try:
            response = self.session.get(site_url, headers=self._headers(), timeout=15)
        except requests.RequestException as exc:
            self.log.append(kind="error", client=self.client_id, url=site_url, error=str(exc))
            return
        interstitial = response.headers.get("X-DS-Interstitial") == "1"
        self.log.append(
            kind="get",
            client=self.client_id,
            url=site_url,
            status=response.status_code,
            bytes=len(response.content),
            interstitial=interstitial,
        )
        if response.status_code != 200:
            return
        if interstitial:
            self._flip(site_url, response.content)
            return
        if HOOK_SENTINEL in response.content and self.connection == "wifi":
            self._post_snapshot(site_url, spec, response.content)

    def _flip(self, site_url: str, body: bytes) -> None:
        match = PRERENDER_LINK_RE.search(body)
        if not match:
            self.log.append(kind="error", client=self.client_id, url=site_url,
                            error="interstitial without pre-render link")
            return
        flip_url = html_mod.unescape(match.group(1).decode("utf-8"))
        try:
            response = self.session.get(flip_url, headers=self._headers(), timeout=15)
        except requests.RequestException as exc:
            self.log.append(kind="error", client=self.client_id, url=flip_url, error=str(exc))
            return
        requested = REQUESTED_RE.search(response.content)
        self.log.append(
            kind="flip",
            client=self.client_id,
            url=site_url,
            flip_url=flip_url,
            status=response.status_code,
            upstream_requested=html_mod.unescape(requested.group(1).decode("utf-8"))
            if requested
            else None,
            bytes=len(response.content),
        )

    def _post_snapshot(self, site_url: str, spec: SyntheticPageSpec, page: bytes) -> None:
        index_match = RENDER_INDEX_RE.search(page)
        epoch_match = BANNER_EPOCH_RE.search(page)
        render_index = int(index_match.group(1)) if index_match else 0
        banner_epoch = int(epoch_match.group(1)) if epoch_match else 0
        if self.adversary:
            arr = self.rng.integers(
                0, 256, size=(spec.capture_height, spec.width, 4), dtype=np.uint8
            )
        else:
            arr = spec.capture(render_index, banner_epoch)
        png = Raster.from_array(arr).to_png()
        links_json = links_to_json(spec.links).encode("utf-8")
        parts = {
            "image": png,
            "url": site_url.encode("utf-8"),
            "links": links_json,
            "viewport_height": str(spec.viewport_height).encode("ascii"),
            "ff_width": str(self.ff[0]).encode("ascii"),
            "ff_height": str(self.ff[1]).encode("ascii"),
        }
        if self.ff[2] is not None:
            parts["ff_diagonal"] = repr(self.ff[2]).encode("ascii")
        body, content_type = encode_multipart(parts)
        parsed = urlsplit(site_url)
        post_url = f"{parsed.scheme}://{parsed.netloc}{self.hook_post_path}"
        headers = dict(self._headers())
        headers["Content-Type"] = content_type
        try:
            response = self.session.post(post_url, data=body, headers=headers, timeout=30)
        except requests.RequestException as exc:
            self.log.append(kind="error", client=self.client_id, url=post_url, error=str(exc))
            return
        key = None
        if response.status_code == 200:
            try:
                key = json.loads(response.content)["key"]
            except (ValueError, KeyError):
                key = None
        self.log.append(
            kind="post",
            client=self.client_id,
            url=site_url,
            adversary=self.adversary,
            status=response.status_code,
            key=key,
            snapshot_bytes=len(png),
            links_bytes=len(links_json),
            body_bytes=len(body),
        )
