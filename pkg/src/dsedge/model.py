"""Core domain types and snapshot-upload validation.

Everything here is immutable after construction and safe to share across
concurrent request handlers.
"""

from __future__ import annotations

import io
import json
import time
from dataclasses import dataclass, field
from typing import Iterable, Optional
from urllib.parse import urlsplit, urlunsplit

import numpy as np
from PIL import Image

from dsedge import config as cfg
from dsedge.wire import MultipartError, encode_multipart, parse_multipart

PHONE = "phone"
TABLET = "tablet"
DESKTOP = "desktop"
DEVICE_CLASSES = (PHONE, TABLET, DESKTOP)

# Multipart part names for snapshot uploads.
POST_PARTS_REQUIRED = ("image", "url", "links", "viewport_height", "ff_width", "ff_height")
POST_PART_OPTIONAL = "ff_diagonal"


class ValidationError(ValueError):
    """Bad value for a domain type."""


class DsPostRejected(ValidationError):
    """A snapshot upload failed validation; `field` names the offender."""

    def __init__(self, reason: str, part: str = ""):
        super().__init__(reason)
        self.reason = reason
        self.part = part


@dataclass(frozen=True)
class Raster:
    """Decoded lossless image: row-major RGBA, 8 bits per channel."""

    width: int
    height: int
    pixels: bytes

    def __post_init__(self):
        if self.width <= 0 or self.height <= 0:
            raise ValidationError("raster dimensions must be positive")
        if len(self.pixels) != self.width * self.height * 4:
            raise ValidationError(
                f"pixel buffer is {len(self.pixels)} bytes, expected "
                f"{self.width * self.height * 4} for {self.width}x{self.height} RGBA"
            )

    @classmethod
    def from_array(cls, arr: np.ndarray) -> "Raster":
        arr = np.asarray(arr, dtype=np.uint8)
        if arr.ndim != 3 or arr.shape[2] != 4:
            raise ValidationError("expected an HxWx4 uint8 array")
        return cls(width=arr.shape[1], height=arr.shape[0], pixels=arr.tobytes())

    def to_array(self) -> np.ndarray:
        arr = np.frombuffer(self.pixels, dtype=np.uint8)
        arr = arr.reshape(self.height, self.width, 4)
        arr.setflags(write=False)
        return arr

    @classmethod
    def from_png(cls, data: bytes) -> "Raster":
        """Decode a PNG; palette/greyscale inputs are expanded to RGBA."""
        try:
            img = Image.open(io.BytesIO(data))
            img.load()
        except Exception as exc:
            raise ValidationError(f"undecodable image: {exc}") from exc
        if img.format != "PNG":
            raise ValidationError("png required")
        rgba = img.convert("RGBA")
        return cls(width=rgba.width, height=rgba.height, pixels=rgba.tobytes())

    def to_png(self) -> bytes:
        img = Image.frombytes("RGBA", (self.width, self.height), self.pixels)
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()


def classify_form_factor(
    width_px: int,
    height_px: int,
    diagonal_in: Optional[float] = None,
    *,
    phone_max_diag: float = cfg.PHONE_MAX_DIAGONAL_IN,
    tablet_max_diag: float = cfg.TABLET_MAX_DIAGONAL_IN,
    phone_max_px: int = cfg.PHONE_MAX_MIN_DIM_PX,
    tablet_max_px: int = cfg.TABLET_MAX_MIN_DIM_PX,
) -> str:
    """Bucket a device into phone / tablet / desktop.

    The physical diagonal wins when reported; otherwise the smaller pixel
    dimension decides. Total over all positive inputs.
    """
    if width_px <= 0 or height_px <= 0:
        raise ValidationError("form factor dimensions must be positive")
    if diagonal_in is not None:
        if diagonal_in < phone_max_diag:
            return PHONE
        if diagonal_in < tablet_max_diag:
            return TABLET
        return DESKTOP
    smaller = min(width_px, height_px)
    if smaller < phone_max_px:
        return PHONE
    if smaller < tablet_max_px:
        return TABLET
    return DESKTOP


@dataclass(frozen=True)
class FormFactor:
    width_px: int
    height_px: int
    diagonal_in: Optional[float] = None
    device_class: str = field(default="")

    def __post_init__(self):
        derived = classify_form_factor(self.width_px, self.height_px, self.diagonal_in)
        if self.device_class and self.device_class != derived:
            raise ValidationError(
                f"device class {self.device_class!r} inconsistent with dimensions"
            )
        object.__setattr__(self, "device_class", derived)


@dataclass(frozen=True)
class LinkRect:
    """One hyperlink with its page-coordinate rectangle (CSS pixels)."""

    url: str
    left: int
    top: int
    right: int
    bottom: int

    def __post_init__(self):
        if self.left < 0 or self.top < 0:
            raise ValidationError("link coordinates must be non-negative")
        if not (self.left < self.right and self.top < self.bottom):
            raise ValidationError("link rectangle must have positive area")

    def clamped_horizontal(self, width: int) -> Optional["LinkRect"]:
        """Clamp to [0, width); None when nothing remains."""
        left = max(0, self.left)
        right = min(self.right, width)
        if left >= right:
            return None
        if left == self.left and right == self.right:
            return self
        return LinkRect(self.url, left, self.top, right, self.bottom)


def canonicalize_url(url: str) -> str:
    """Lowercase scheme and host, strip default ports and fragments.

    Queries are preserved verbatim. Idempotent.
    """
    parts = urlsplit(url)
    if not parts.scheme or not parts.netloc:
        raise ValidationError(f"absolute URL required: {url!r}")
    scheme = parts.scheme.lower()
    host = (parts.hostname or "").lower()
    if not host:
        raise ValidationError(f"URL has no host: {url!r}")
    port = parts.port
    default = {"http": 80, "https": 443}.get(scheme)
    netloc = host if port is None or port == default else f"{host}:{port}"
    path = parts.path or "/"
    return urlunsplit((scheme, netloc, path, parts.query, ""))


def url_host(url: str) -> str:
    return urlsplit(url).netloc


@dataclass(frozen=True)
class SnapshotRecord:
    """One harvested snapshot upload, post-validation."""

    url: str
    raster: Raster
    links: tuple[LinkRect, ...]
    viewport_height: int
    form_factor: FormFactor
    user_agent: str
    received_at: float

    def __post_init__(self):
        if self.raster.height > 2 * self.viewport_height:
            raise ValidationError("raster height exceeds 2x viewport")


def _require_part(parts: dict[str, bytes], name: str) -> bytes:
    if name not in parts:
        raise DsPostRejected(f"{name} missing", part=name)
    return parts[name]


def _int_part(parts: dict[str, bytes], name: str) -> int:
    raw = _require_part(parts, name)
    try:
        value = int(raw.decode("ascii").strip())
    except (UnicodeDecodeError, ValueError):
        raise DsPostRejected(f"{name} is not an integer", part=name) from None
    return value


def validate_ds_post(
    body: bytes,
    content_type: str,
    user_agent: str,
    received_at: Optional[float] = None,
) -> SnapshotRecord:
    """Validate and decode a snapshot upload into a SnapshotRecord.

    Rejections carry the offending part name. Oversized rasters are
    rejected outright, never truncated: cropping would silently change
    what other clients get served.
    """
    try:
        parts = parse_multipart(body, content_type)
    except MultipartError as exc:
        raise DsPostRejected(str(exc)) from exc

    image_bytes = _require_part(parts, "image")
    raw_url = _require_part(parts, "url")
    links_raw = _require_part(parts, "links")
    viewport_height = _int_part(parts, "viewport_height")
    ff_width = _int_part(parts, "ff_width")
    ff_height = _int_part(parts, "ff_height")
    diagonal = None
    if "ff_diagonal" in parts and parts["ff_diagonal"].strip():
        try:
            diagonal = float(parts["ff_diagonal"].decode("ascii").strip())
        except (UnicodeDecodeError, ValueError):
            raise DsPostRejected("ff_diagonal is not a number", part="ff_diagonal") from None

    if viewport_height <= 0:
        raise DsPostRejected("viewport_height must be positive", part="viewport_height")

    try:
        raster = Raster.from_png(image_bytes)
    except ValidationError as exc:
        raise DsPostRejected(str(exc), part="image") from exc
    if raster.height > 2 * viewport_height:
        raise DsPostRejected("height exceeds 2x viewport", part="image")

    try:
        url = canonicalize_url(raw_url.decode("utf-8").strip())
    except (UnicodeDecodeError, ValidationError) as exc:
        raise DsPostRejected(f"bad url: {exc}", part="url") from exc

    try:
        link_objs = json.loads(links_raw.decode("utf-8"))
        if not isinstance(link_objs, list):
            raise ValueError("links must be a JSON array")
        links = []
        for obj in link_objs:
            rect = LinkRect(
                url=str(obj["url"]),
                left=int(obj["left"]),
                top=int(obj["top"]),
                right=int(obj["right"]),
                bottom=int(obj["bottom"]),
            )
            # Links inside the captured region must fit horizontally.
            if rect.top < raster.height:
                clamped = rect.clamped_horizontal(raster.width)
                if clamped is None:
                    continue
                rect = clamped
            links.append(rect)
    except DsPostRejected:
        raise
    except (ValueError, KeyError, TypeError, ValidationError) as exc:
        raise DsPostRejected(f"bad links: {exc}", part="links") from exc

    try:
        form_factor = FormFactor(ff_width, ff_height, diagonal)
    except ValidationError as exc:
        raise DsPostRejected(str(exc), part="ff_width") from exc

    return SnapshotRecord(
        url=url,
        raster=raster,
        links=tuple(links),
        viewport_height=viewport_height,
        form_factor=form_factor,
        user_agent=user_agent,
        received_at=received_at if received_at is not None else time.time(),
    )


def links_to_json(links: Iterable[LinkRect]) -> str:
    return json.dumps(
        [
            {"url": l.url, "left": l.left, "top": l.top, "right": l.right, "bottom": l.bottom}
            for l in links
        ]
    )


def encode_ds_post(record: SnapshotRecord, boundary: str | None = None) -> tuple[bytes, str]:
    """Encode a record back into the upload wire format (harness use)."""
    parts: dict[str, bytes] = {
        "image": record.raster.to_png(),
        "url": record.url.encode("utf-8"),
        "links": links_to_json(record.links).encode("utf-8"),
        "viewport_height": str(record.viewport_height).encode("ascii"),
        "ff_width": str(record.form_factor.width_px).encode("ascii"),
        "ff_height": str(record.form_factor.height_px).encode("ascii"),
    }
    if record.form_factor.diagonal_in is not None:
        parts["ff_diagonal"] = repr(record.form_factor.diagonal_in).encode("ascii")
    return encode_multipart(parts, boundary=boundary)


def user_agent_family(user_agent: str) -> str:
    """Product token before the first slash; metadata only."""
    head = user_agent.strip().split()[0] if user_agent.strip() else ""
    return head.split("/", 1)[0]
