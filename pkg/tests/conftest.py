import numpy as np
import pytest

from dsedge.model import FormFactor, LinkRect, Raster, SnapshotRecord


class FakeClock:
    """Steppable clock usable wherever a time source is injected."""

    def __init__(self, start: float = 1_000_000.0):
        self.now = start

    def __call__(self) -> float:
        return self.now

    def advance(self, seconds: float) -> float:
        self.now += seconds
        return self.now


@pytest.fixture
def clock():
    return FakeClock()


def solid_raster(width: int, height: int, color=(10, 20, 30, 255)) -> Raster:
    arr = np.empty((height, width, 4), dtype=np.uint8)
    arr[:] = np.array(color, dtype=np.uint8)
    return Raster.from_array(arr)


def raster_with_rect(base: Raster, rect, color) -> Raster:
    """Copy of `base` with (left, top, right, bottom) filled with color."""
    arr = base.to_array().copy()
    left, top, right, bottom = rect
    arr[top:bottom, left:right] = np.array(color, dtype=np.uint8)
    return Raster.from_array(arr)


def random_raster(width: int, height: int, seed: int) -> Raster:
    rng = np.random.default_rng(seed)
    arr = rng.integers(0, 256, size=(height, width, 4), dtype=np.uint8)
    return Raster.from_array(arr)


def make_record(
    raster: Raster,
    url: str = "http://www.a.com/",
    links=(),
    viewport_height=None,
    received_at: float = 1_000_000.0,
    user_agent: str = "TestUA/1.0",
    ff=(360, 640, 4.7),
) -> SnapshotRecord:
    if viewport_height is None:
        viewport_height = raster.height  # always satisfies the 2x bound
    return SnapshotRecord(
        url=url,
        raster=raster,
        links=tuple(links),
        viewport_height=viewport_height,
        form_factor=FormFactor(*ff),
        user_agent=user_agent,
        received_at=received_at,
    )


def link(url="http://www.a.com/x", left=0, top=0, right=10, bottom=10) -> LinkRect:
    return LinkRect(url=url, left=left, top=top, right=right, bottom=bottom)
