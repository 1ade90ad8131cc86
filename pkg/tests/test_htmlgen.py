import base64
import re
from html.parser import HTMLParser

import pytest
from hypothesis import given, settings, strategies as st

from dsedge.desensitize import DesensitizedImage, Mask
from dsedge.htmlgen import DsHtmlDocument, filter_links, generate, tokenize_url
from dsedge.model import LinkRect, Raster
from dsedge.proxy import detect_prerender_token

from conftest import FakeClock, link, random_raster


class PageAudit(HTMLParser):
    """Counts the structural elements of a generated interstitial."""

    def __init__(self):
        super().__init__(convert_charrefs=True)
        self.images = []
        self.maps = []
        self.areas = []
        self.prerender_links = []
        self.scripts = []
        self.external_refs = []

    def handle_starttag(self, tag, attrs):
        d = dict(attrs)
        if tag == "img":
            self.images.append(d)
            if not d.get("src", "").startswith("data:"):
                self.external_refs.append(d.get("src"))
        elif tag == "map":
            self.maps.append(d)
        elif tag == "area":
            self.areas.append(d)
        elif tag == "link":
            if d.get("rel") == "prerender":
                self.prerender_links.append(d)
            else:
                self.external_refs.append(d.get("href"))
        elif tag == "script":
            self.scripts.append(d)
            if "src" in d:
                self.external_refs.append(d["src"])


def audit(doc: DsHtmlDocument) -> PageAudit:
    parser = PageAudit()
    parser.feed(doc.html_bytes.decode("utf-8"))
    return parser


def make_image(width=24, height=40) -> DesensitizedImage:
    raster = random_raster(width, height, seed=width * 1000 + height)
    return DesensitizedImage(
        raster=raster,
        mask=Mask.empty(width, height),
        source_count=3,
        generated_at=0.0,
        regions=(),
    )


def gen(links=(), width=24, height=40, viewport_height=None, url="http://www.a.com/p",
        ttl=7200.0, clock=None) -> DsHtmlDocument:
    if viewport_height is None:
        viewport_height = height
    return generate(
        make_image(width, height),
        list(links),
        viewport_height,
        url,
        "__ds_prerender",
        ttl,
        clock=clock or FakeClock(),
    )


class TestStructure:
    def test_exactly_one_of_each_element(self):
        a = audit(gen(links=[link(), link(url="http://www.a.com/y", top=12, bottom=20)]))
        assert len(a.images) == 1
        assert len(a.maps) == 1
        assert len(a.prerender_links) == 1
        assert len(a.scripts) == 1
        assert a.scripts[0].get("id") == "ds-flip"

    def test_fully_self_contained(self):
        a = audit(gen(links=[link()]))
        assert a.external_refs == []
        assert a.images[0]["src"].startswith("data:image/png;base64,")

    def test_embedded_png_round_trips(self):
        image = make_image(10, 16)
        doc = generate(image, [], 16, "http://www.a.com/", "__ds_prerender", 7200.0,
                       clock=FakeClock())
        a = audit(doc)
        payload = a.images[0]["src"].split(",", 1)[1]
        assert Raster.from_png(base64.b64decode(payload)) == image.raster

    def test_image_references_the_map(self):
        a = audit(gen(links=[link()]))
        assert a.images[0]["usemap"] == "#" + a.maps[0]["name"]

    def test_flip_script_listens_for_completion_event(self):
        doc = gen()
        assert b"ds-prerender-complete" in doc.html_bytes
        assert b"location.replace" in doc.html_bytes


class TestClickmap:
    def test_area_per_retained_link(self):
        links = [link(top=i * 10, bottom=i * 10 + 8) for i in range(4)]
        a = audit(gen(links=links))
        assert len(a.areas) == 4

    def test_coords_and_hrefs_round_trip(self):
        links = [
            link(url="http://www.a.com/one", left=1, top=2, right=20, bottom=9),
            link(url="http://www.a.com/two?x=1&y=2", left=3, top=11, right=17, bottom=19),
        ]
        a = audit(gen(links=links))
        got = [
            (d["href"],) + tuple(int(c) for c in d["coords"].split(","))
            for d in a.areas
        ]
        assert got == [(l.url, l.left, l.top, l.right, l.bottom) for l in links]

    def test_all_areas_are_rects(self):
        a = audit(gen(links=[link(), link(top=20, bottom=30)]))
        assert all(d["shape"] == "rect" for d in a.areas)

    @settings(max_examples=50, deadline=None)
    @given(
        rects=st.lists(
            st.tuples(st.integers(0, 23), st.integers(0, 78), st.integers(1, 24), st.integers(1, 40)),
            max_size=8,
        )
    )
    def test_bijection_with_filtered_links(self, rects):
        links = [
            LinkRect(f"http://www.a.com/l{i}", l, t, l + w, t + h)
            for i, (l, t, w, h) in enumerate(rects)
        ]
        viewport = 20
        doc = gen(links=links, width=24, height=40, viewport_height=viewport)
        expected = filter_links(links, 24, 40, viewport)
        a = audit(doc)
        assert [d["href"] for d in a.areas] == [l.url for l in expected]


class TestFilterLinks:
    def test_bottom_inside_capture_retained(self):
        kept = filter_links([link(top=30, bottom=39)], 24, 40, 20)
        assert len(kept) == 1

    def test_bottom_at_limit_retained(self):
        kept = filter_links([link(top=30, bottom=40)], 24, 40, 20)
        assert len(kept) == 1

    def test_below_two_viewports_dropped(self):
        assert filter_links([link(top=41, bottom=50)], 24, 60, 20) == []

    def test_limit_is_min_of_raster_and_two_viewports(self):
        # Short raster: its own height caps the region.
        assert filter_links([link(top=0, bottom=35)], 24, 30, 100) == []
        # Tall raster: two viewports cap it.
        assert filter_links([link(top=0, bottom=35)], 24, 200, 17) == []

    def test_order_preserved(self):
        links = [link(url=f"http://a.com/{i}", top=i, bottom=i + 1) for i in (5, 1, 3)]
        assert [l.url for l in filter_links(links, 24, 40, 40)] == [l.url for l in links]

    def test_offscreen_horizontal_dropped(self):
        wide = LinkRect("http://a.com/w", 30, 0, 40, 5)
        assert filter_links([wide], 24, 40, 40) == []


class TestPrerenderUrl:
    def test_token_appended_with_query_separator(self):
        assert tokenize_url("http://a.com/p", "__ds_prerender") == (
            "http://a.com/p?__ds_prerender=1"
        )
        assert tokenize_url("http://a.com/p?q=2", "__ds_prerender") == (
            "http://a.com/p?q=2&__ds_prerender=1"
        )

    def test_round_trips_through_token_detection(self):
        for url in ("http://www.a.com/", "http://www.a.com/x?a=1", "http://a.com/p?a=1&b=2"):
            found, stripped = detect_prerender_token(tokenize_url(url, "__ds_prerender"))
            assert found and stripped == url

    def test_document_carries_tokenized_url(self):
        doc = gen(url="http://www.a.com/page?k=v")
        a = audit(doc)
        assert a.prerender_links[0]["href"] == "http://www.a.com/page?k=v&__ds_prerender=1"


class TestSizeAndExpiry:
    def test_overhead_beyond_png_is_bounded(self):
        image = make_image(32, 48)
        links = [link(top=i * 5, bottom=i * 5 + 4) for i in range(8)]
        doc = generate(image, links, 48, "http://www.a.com/", "__ds_prerender", 7200.0,
                       clock=FakeClock())
        png_b64 = len(base64.b64encode(image.raster.to_png()))
        assert len(doc.html_bytes) - png_b64 < 8192

    def test_expiry_boundary(self):
        clock = FakeClock(start=1000.0)
        doc = gen(ttl=7200.0, clock=clock)
        assert doc.generated_at == 1000.0
        assert not doc.is_expired(1000.0 + 7200.0)
        assert doc.is_expired(1000.0 + 7200.0 + 0.001)

    def test_html_escaping_of_url(self):
        doc = gen(url="http://www.a.com/p?a=1&b=2")
        assert b'href="http://www.a.com/p?a=1&amp;b=2&amp;__ds_prerender=1"' in doc.html_bytes
