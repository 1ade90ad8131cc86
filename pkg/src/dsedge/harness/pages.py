"""Synthetic page specs and the deterministic rasterizer.

A page is a seeded pixel grid: a solid background, fixed patterned
regions, and dynamic regions that are guaranteed to change between any
two render indexes (ads) or between banner epochs (banners). Rendering
with equal (seed, render index, epoch) is byte-deterministic, which is
what lets golden tests pin the whole pipeline.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from dsedge.model import LinkRect

AD = "ad"  # re-randomized every render
BANNER = "banner"  # changes once per banner epoch

# Odd multiplier: k * delta % 256 is nonzero for any delta in 1..255, so
# any two distinct render indexes disagree on every dynamic pixel.
_SHIFT = 37


@dataclass(frozen=True)
class Region:
    left: int
    top: int
    right: int
    bottom: int
    kind: str = AD

    def __post_init__(self):
        if not (0 <= self.left < self.right and 0 <= self.top < self.bottom):
            raise ValueError("region must have positive area and non-negative origin")
        if self.kind not in (AD, BANNER):
            raise ValueError(f"unknown region kind {self.kind!r}")


def _overlaps(a: Region, b: Region) -> bool:
    return a.left < b.right and b.left < a.right and a.top < b.bottom and b.top < a.bottom


@dataclass(frozen=True)
class SyntheticPageSpec:
    site_id: str
    seed: int
    width: int
    height: int
    viewport_height: int
    stable_regions: tuple[Region, ...] = ()
    dynamic_regions: tuple[Region, ...] = ()
    links: tuple[LinkRect, ...] = ()

    def __post_init__(self):
        regions = list(self.stable_regions) + list(self.dynamic_regions)
        for r in regions:
            if r.right > self.width or r.bottom > self.height:
                raise ValueError(f"region {r} outside the {self.width}x{self.height} page")
        for i, a in enumerate(regions):
            for b in regions[i + 1 :]:
                if _overlaps(a, b):
                    raise ValueError(f"overlapping regions: {a} and {b}")

    @property
    def capture_height(self) -> int:
        return min(self.height, 2 * self.viewport_height)

    def _region_base(self, tag: int, region_index: int, region: Region) -> np.ndarray:
        rng = np.random.default_rng(
            np.random.SeedSequence([self.seed, tag, region_index])
        )
        h = region.bottom - region.top
        w = region.right - region.left
        block = rng.integers(0, 256, size=(h, w, 4), dtype=np.uint8)
        block[:, :, 3] = 255
        return block

    def render(self, render_index: int, banner_epoch: int = 0) -> np.ndarray:
        """Full-page RGBA raster for one request."""
        rng = np.random.default_rng(np.random.SeedSequence([self.seed, 0]))
        background = rng.integers(32, 224, size=3, dtype=np.uint8)
        page = np.empty((self.height, self.width, 4), dtype=np.uint8)
        page[:, :, :3] = background
        page[:, :, 3] = 255
        for i, region in enumerate(self.stable_regions):
            page[region.top : region.bottom, region.left : region.right] = self._region_base(
                1, i, region
            )
        for i, region in enumerate(self.dynamic_regions):
            block = self._region_base(2, i, region).copy()
            step = render_index if region.kind == AD else banner_epoch
            block[:, :, 0] = (block[:, :, 0].astype(np.int32) + _SHIFT * step) % 256
            page[region.top : region.bottom, region.left : region.right] = block
        return page

    def capture(self, render_index: int, banner_epoch: int = 0) -> np.ndarray:
        """What the client hook would upload: top 2x-viewport rows."""
        return self.render(render_index, banner_epoch)[: self.capture_height]

    def sensitive_mask(self, height: int | None = None) -> np.ndarray:
        """Label grid: true on per-request dynamic (ad) pixels. Banner
        regions are stable within one epoch, so they are not labeled."""
        if height is None:
            height = self.capture_height
        mask = np.zeros((height, self.width), dtype=bool)
        for region in self.dynamic_regions:
            if region.kind != AD:
                continue
            top = min(region.top, height)
            bottom = min(region.bottom, height)
            mask[top:bottom, region.left : region.right] = True
        return mask


def make_workload(
    n_sites: int,
    seed: int = 1234,
    width: int = 360,
    page_height: int = 1600,
    viewport_height: int = 640,
    ads_per_site: int = 2,
    banners_per_site: int = 0,
    links_per_site: int = 3,
) -> list[SyntheticPageSpec]:
    """Build N page specs modeling the observed change taxonomy: ads that
    change per request, banners on a slow schedule, and a static body."""
    specs = []
    for i in range(n_sites):
        site_seed = seed * 1000003 + i
        row = 0

        def next_row_rect(kind):
            nonlocal row
            region = Region(20, 100 + row * 90, width - 20, 150 + row * 90, kind=kind)
            row += 1
            return region

        dynamic = tuple(next_row_rect(AD) for _ in range(ads_per_site)) + tuple(
            next_row_rect(BANNER) for _ in range(banners_per_site)
        )
        stable = (
            Region(0, 0, width, 60),  # header bar
            Region(20, 100 + row * 90, width - 20, 160 + row * 90),
        )
        links = tuple(
            LinkRect(
                url=f"http://links.example/site{i}/l{j}",
                left=10 + 30 * j,
                top=10,
                right=35 + 30 * j,
                bottom=40,
            )
            for j in range(links_per_site)
        )
        specs.append(
            SyntheticPageSpec(
                site_id=f"site{i}",
                seed=site_seed,
                width=width,
                height=page_height,
                viewport_height=viewport_height,
                stable_regions=stable,
                dynamic_regions=dynamic,
                links=links,
            )
        )
    return specs
