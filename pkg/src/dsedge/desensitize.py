"""Pixel-wise privacy pipeline.

Any pixel that differs between any two snapshots in a batch is treated as
potentially personal and blanked. The union over all unordered pairs is
strictly safer than diff-against-one and cheap at the batch sizes in use.
"""

from __future__ import annotations

import io
import time
from dataclasses import dataclass
from itertools import combinations
from typing import Callable, Sequence

import numpy as np
from PIL import Image
from scipy import ndimage

from dsedge.config import DEFAULT_BLANK_COLOR
from dsedge.model import Raster, SnapshotRecord

# left, top, right, bottom; right/bottom exclusive.
Rect = tuple[int, int, int, int]

_FOUR_CONNECTED = np.array([[0, 1, 0], [1, 1, 1], [0, 1, 0]], dtype=bool)


class MaskError(ValueError):
    pass


class Mask:
    """Boolean pixel grid; true = blank this pixel."""

    __slots__ = ("bits",)

    def __init__(self, bits: np.ndarray):
        bits = np.ascontiguousarray(bits, dtype=bool)
        if bits.ndim != 2:
            raise MaskError("mask must be a 2-D boolean grid")
        bits.setflags(write=False)
        self.bits = bits

    @property
    def width(self) -> int:
        return self.bits.shape[1]

    @property
    def height(self) -> int:
        return self.bits.shape[0]

    @property
    def true_count(self) -> int:
        return int(self.bits.sum())

    def __eq__(self, other) -> bool:
        return isinstance(other, Mask) and np.array_equal(self.bits, other.bits)

    def __hash__(self):
        return hash((self.bits.shape, self.bits.tobytes()))

    @classmethod
    def empty(cls, width: int, height: int) -> "Mask":
        return cls(np.zeros((height, width), dtype=bool))

    def to_png(self) -> bytes:
        """1-bit PNG for auditing."""
        img = Image.fromarray(self.bits.astype(np.uint8) * 255, mode="L").convert("1")
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        return buf.getvalue()

    @classmethod
    def from_png(cls, data: bytes) -> "Mask":
        img = Image.open(io.BytesIO(data)).convert("1")
        return cls(np.array(img, dtype=bool))


@dataclass(frozen=True)
class DesensitizedImage:
    raster: Raster
    mask: Mask
    source_count: int
    generated_at: float
    regions: tuple[Rect, ...]


@dataclass(frozen=True)
class Discarded:
    """Batch rejected: too much of the page changed across snapshots."""

    fraction: float


def _check_dims(a, b):
    if a.shape[:2] != b.shape[:2]:
        raise MaskError(f"dimension mismatch: {a.shape[:2]} vs {b.shape[:2]}")


def diff_mask(a: Raster, b: Raster, tolerance: int = 0) -> Mask:
    """True wherever any RGBA channel differs (beyond `tolerance`)."""
    aa, bb = a.to_array(), b.to_array()
    _check_dims(aa, bb)
    if tolerance <= 0:
        bits = np.any(aa != bb, axis=2)
    else:
        delta = np.abs(aa.astype(np.int16) - bb.astype(np.int16))
        bits = np.any(delta > tolerance, axis=2)
    return Mask(bits)


def union_masks(masks: Sequence[Mask]) -> Mask:
    if not masks:
        raise MaskError("cannot union an empty list of masks")
    shape = masks[0].bits.shape
    for m in masks[1:]:
        if m.bits.shape != shape:
            raise MaskError("mask dimensions differ")
    return Mask(np.logical_or.reduce([m.bits for m in masks]))


def apply_mask(
    base: Raster, mask: Mask, blank_color: tuple[int, int, int, int] = DEFAULT_BLANK_COLOR
) -> Raster:
    arr = base.to_array()
    if (mask.height, mask.width) != (base.height, base.width):
        raise MaskError("mask dimensions do not match raster")
    out = arr.copy()
    out[mask.bits] = np.array(blank_color, dtype=np.uint8)
    return Raster.from_array(out)


def change_fraction(mask: Mask) -> float:
    return mask.true_count / (mask.width * mask.height)


def masked_regions(mask: Mask) -> list[Rect]:
    """Bounding boxes of 4-connected components, sorted by (top, left)."""
    labels, count = ndimage.label(mask.bits, structure=_FOUR_CONNECTED)
    rects: list[Rect] = []
    for sl in ndimage.find_objects(labels):
        if sl is None:
            continue
        rows, cols = sl
        rects.append((cols.start, rows.start, cols.stop, rows.stop))
    rects.sort(key=lambda r: (r[1], r[0]))
    return rects


def batch_mask(rasters: Sequence[Raster], tolerance: int = 0) -> Mask:
    """Union of pairwise difference masks over the whole batch."""
    if len(rasters) < 2:
        raise MaskError("need at least two snapshots to compare")
    masks = [diff_mask(a, b, tolerance) for a, b in combinations(rasters, 2)]
    return union_masks(masks)


def desensitize(
    batch: Sequence[SnapshotRecord],
    discard_threshold: float,
    blank_color: tuple[int, int, int, int] = DEFAULT_BLANK_COLOR,
    tolerance: int = 0,
    clock: Callable[[], float] = time.time,
) -> DesensitizedImage | Discarded:
    """Blank every pixel that differs anywhere in the batch.

    The freshest snapshot is the base image. A batch whose combined
    change exceeds `discard_threshold` is discarded wholesale; a single
    adversarial upload should poison one batch, not the served page.
    """
    if len(batch) < 2:
        raise MaskError("batch must contain at least two snapshots")
    ordered = sorted(batch, key=lambda r: r.received_at)
    mask = batch_mask([r.raster for r in ordered], tolerance)
    fraction = change_fraction(mask)
    if fraction > discard_threshold:
        return Discarded(fraction=fraction)
    base = ordered[-1]
    return DesensitizedImage(
        raster=apply_mask(base.raster, mask, blank_color),
        mask=mask,
        source_count=len(batch),
        generated_at=clock(),
        regions=tuple(masked_regions(mask)),
    )
