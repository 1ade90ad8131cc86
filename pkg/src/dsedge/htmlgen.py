"""Interstitial page generation.

The generated page is fully self-contained: the desensitized snapshot is
embedded as a base64 data URI so serving it costs a single
request-response cycle. Links become an imagemap overlay; a pre-render
hint plus flip script hands off to the real page once the background
fetch completes.
"""

from __future__ import annotations

import base64
import html
import json
import time
from dataclasses import dataclass
from importlib import resources
from string import Template
from typing import Callable, Sequence

from dsedge.desensitize import DesensitizedImage
from dsedge.model import LinkRect

_TEMPLATE = Template(
    resources.files("dsedge").joinpath("resources/ds_page.html").read_text("utf-8")
)


class GenerationError(ValueError):
    pass


@dataclass(frozen=True)
class DsHtmlDocument:
    html_bytes: bytes
    original_url: str
    generated_at: float
    ttl_seconds: float

    def is_expired(self, now: float) -> bool:
        return now > self.generated_at + self.ttl_seconds


def tokenize_url(url: str, token_name: str) -> str:
    """Append the reserved pre-render parameter."""
    sep = "&" if "?" in url else "?"
    return f"{url}{sep}{token_name}=1"


def filter_links(
    links: Sequence[LinkRect],
    raster_width: int,
    raster_height: int,
    viewport_height: int,
) -> list[LinkRect]:
    """Keep only links fully inside the captured region, order preserved.

    The captured region ends at min(raster height, 2x viewport); anything
    at or below that boundary is invisible in the snapshot and dropped.
    """
    limit = min(raster_height, 2 * viewport_height)
    kept: list[LinkRect] = []
    for link in links:
        if link.bottom > limit:
            continue
        clamped = link.clamped_horizontal(raster_width)
        if clamped is not None:
            kept.append(clamped)
    return kept


def generate(
    image: DesensitizedImage,
    links: Sequence[LinkRect],
    viewport_height: int,
    original_url: str,
    token_name: str,
    ttl_seconds: float,
    clock: Callable[[], float] = time.time,
) -> DsHtmlDocument:
    """Render the interstitial for a desensitized snapshot."""
    raster = image.raster
    retained = filter_links(links, raster.width, raster.height, viewport_height)
    prerender_url = tokenize_url(original_url, token_name)
    areas = "".join(
        '<area shape="rect" coords="{},{},{},{}" href="{}" alt="">\n'.format(
            l.left, l.top, l.right, l.bottom, html.escape(l.url, quote=True)
        )
        for l in retained
    )
    data_uri = "data:image/png;base64," + base64.b64encode(raster.to_png()).decode("ascii")
    doc = _TEMPLATE.substitute(
        title=html.escape(original_url),
        prerender_url=html.escape(prerender_url, quote=True),
        prerender_url_json=json.dumps(prerender_url),
        image_uri=data_uri,
        width=raster.width,
        height=raster.height,
        areas=areas,
    )
    return DsHtmlDocument(
        html_bytes=doc.encode("utf-8"),
        original_url=original_url,
        generated_at=clock(),
        ttl_seconds=ttl_seconds,
    )
