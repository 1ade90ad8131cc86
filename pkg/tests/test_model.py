import io
import json

import pytest
from hypothesis import given, strategies as st
from PIL import Image

from dsedge.model import (
    DsPostRejected,
    FormFactor,
    LinkRect,
    Raster,
    ValidationError,
    canonicalize_url,
    classify_form_factor,
    encode_ds_post,
    user_agent_family,
    validate_ds_post,
)
from dsedge.wire import encode_multipart

from conftest import link, make_record, random_raster, solid_raster


class TestClassifyFormFactor:
    def test_typical_phone_tuple(self):
        assert classify_form_factor(1080, 1920, 4.7) == "phone"

    def test_degenerate_minimum_is_phone(self):
        assert classify_form_factor(1, 1, None) == "phone"

    def test_tablet_by_diagonal(self):
        assert classify_form_factor(2560, 1600, 10.5) == "tablet"

    def test_diagonal_boundaries(self):
        assert classify_form_factor(100, 100, 6.99) == "phone"
        assert classify_form_factor(100, 100, 7.0) == "tablet"
        assert classify_form_factor(100, 100, 10.99) == "tablet"
        assert classify_form_factor(100, 100, 11.0) == "desktop"

    def test_pixel_boundaries_without_diagonal(self):
        assert classify_form_factor(799, 3000, None) == "phone"
        assert classify_form_factor(800, 3000, None) == "tablet"
        assert classify_form_factor(1199, 3000, None) == "tablet"
        assert classify_form_factor(1200, 3000, None) == "desktop"

    def test_non_positive_dimensions_rejected(self):
        with pytest.raises(ValidationError):
            classify_form_factor(0, 100)
        with pytest.raises(ValidationError):
            classify_form_factor(100, -1)

    @given(
        w=st.integers(1, 10_000),
        h=st.integers(1, 10_000),
        d=st.one_of(st.none(), st.floats(0.1, 100.0)),
    )
    def test_total_and_partitions(self, w, h, d):
        assert classify_form_factor(w, h, d) in ("phone", "tablet", "desktop")


class TestCanonicalizeUrl:
    def test_lowercases_and_strips_default_port(self):
        assert canonicalize_url("HTTP://WWW.A.COM:80/Path?Q=1#frag") == (
            "http://www.a.com/Path?Q=1"
        )

    def test_preserves_query_and_non_default_port(self):
        assert canonicalize_url("http://a.com:8080/x?a=1&b=2") == "http://a.com:8080/x?a=1&b=2"

    def test_empty_path_becomes_slash(self):
        assert canonicalize_url("http://a.com") == "http://a.com/"

    def test_rejects_relative(self):
        with pytest.raises(ValidationError):
            canonicalize_url("/just/a/path")

    @given(
        scheme=st.sampled_from(["http", "https", "HTTP"]),
        host=st.from_regex(r"[a-zA-Z][a-zA-Z0-9-]{0,10}(\.[a-zA-Z]{2,5}){0,2}", fullmatch=True),
        path=st.from_regex(r"(/[a-zA-Z0-9._~-]{0,8}){0,3}", fullmatch=True),
        query=st.from_regex(r"([a-z]{1,4}=[a-zA-Z0-9]{0,5}(&[a-z]{1,4}=[a-zA-Z0-9]{0,5}){0,3})?", fullmatch=True),
    )
    def test_idempotent(self, scheme, host, path, query):
        url = f"{scheme}://{host}{path}" + (f"?{query}" if query else "")
        once = canonicalize_url(url)
        assert canonicalize_url(once) == once


class TestRaster:
    def test_round_trips_through_png(self):
        r = random_raster(13, 7, seed=1)
        assert Raster.from_png(r.to_png()) == r

    def test_palette_png_expanded_to_rgba(self):
        img = Image.new("P", (4, 4))
        img.putpalette([i % 256 for i in range(768)])
        buf = io.BytesIO()
        img.save(buf, format="PNG")
        r = Raster.from_png(buf.getvalue())
        assert (r.width, r.height) == (4, 4)
        assert len(r.pixels) == 4 * 4 * 4

    def test_rejects_jpeg(self):
        buf = io.BytesIO()
        Image.new("RGB", (4, 4)).save(buf, format="JPEG")
        with pytest.raises(ValidationError, match="png required"):
            Raster.from_png(buf.getvalue())

    def test_rejects_bad_dimensions(self):
        with pytest.raises(ValidationError):
            Raster(width=0, height=1, pixels=b"")
        with pytest.raises(ValidationError):
            Raster(width=2, height=2, pixels=b"\x00" * 15)


class TestLinkRect:
    def test_rejects_inverted(self):
        with pytest.raises(ValidationError):
            LinkRect("http://a.com", 10, 0, 5, 10)

    def test_rejects_negative(self):
        with pytest.raises(ValidationError):
            LinkRect("http://a.com", -1, 0, 5, 10)

    def test_clamp(self):
        r = LinkRect("http://a.com", 5, 0, 50, 10)
        assert r.clamped_horizontal(20) == LinkRect("http://a.com", 5, 0, 20, 10)
        assert r.clamped_horizontal(5) is None


def post_body_for(record, **overrides):
    body, ctype = encode_ds_post(record)
    if not overrides:
        return body, ctype
    from dsedge.wire import parse_multipart

    parts = parse_multipart(body, ctype)
    for name, value in overrides.items():
        if value is None:
            parts.pop(name, None)
        else:
            parts[name] = value
    return encode_multipart(parts)


class TestValidateDsPost:
    def test_accepts_well_formed(self):
        record = make_record(
            solid_raster(360, 1280), url="http://www.a.com/", viewport_height=640,
            links=[link()], received_at=5.0,
        )
        body, ctype = encode_ds_post(record)
        out = validate_ds_post(body, ctype, "TestUA/1.0", received_at=5.0)
        assert out == record

    def test_round_trip_identity(self):
        record = make_record(
            random_raster(64, 100, seed=3),
            url="http://www.b.com/p?q=1",
            viewport_height=50,
            links=[link(left=1, top=2, right=30, bottom=9)],
            received_at=17.25,
            ff=(800, 1280, None),
        )
        body, ctype = encode_ds_post(record)
        assert validate_ds_post(body, ctype, record.user_agent, received_at=17.25) == record

    def test_rejects_oversized_raster(self):
        record = make_record(solid_raster(360, 1280), viewport_height=640)
        body, ctype = post_body_for(record, viewport_height=b"640")
        # 1281 > 2 x 640: rebuild with a taller image
        tall = solid_raster(360, 1281)
        body, ctype = post_body_for(record, image=tall.to_png())
        with pytest.raises(DsPostRejected, match="height exceeds 2x viewport"):
            validate_ds_post(body, ctype, "ua")

    def test_boundary_height_accepted(self):
        record = make_record(solid_raster(8, 1280), viewport_height=640)
        body, ctype = encode_ds_post(record)
        assert validate_ds_post(body, ctype, "ua").raster.height == 1280

    def test_rejects_missing_links(self):
        record = make_record(solid_raster(8, 8))
        body, ctype = post_body_for(record, links=None)
        with pytest.raises(DsPostRejected, match="links missing") as err:
            validate_ds_post(body, ctype, "ua")
        assert err.value.part == "links"

    def test_rejects_lossy_image(self):
        record = make_record(solid_raster(8, 8))
        buf = io.BytesIO()
        Image.new("RGB", (8, 8)).save(buf, format="JPEG")
        body, ctype = post_body_for(record, image=buf.getvalue())
        with pytest.raises(DsPostRejected, match="png required"):
            validate_ds_post(body, ctype, "ua")

    def test_canonicalizes_url(self):
        record = make_record(solid_raster(8, 8))
        body, ctype = post_body_for(record, url=b"HTTP://WWW.A.COM:80/")
        out = validate_ds_post(body, ctype, "ua")
        assert out.url == "http://www.a.com/"

    def test_clamps_in_capture_links(self):
        record = make_record(solid_raster(10, 10))
        links = json.dumps(
            [
                {"url": "http://a.com/wide", "left": 2, "top": 1, "right": 500, "bottom": 5},
                {"url": "http://a.com/below", "left": 2, "top": 100, "right": 500, "bottom": 120},
            ]
        ).encode()
        body, ctype = post_body_for(record, links=links)
        out = validate_ds_post(body, ctype, "ua")
        assert out.links[0].right == 10  # clamped to raster width
        assert out.links[1].right == 500  # below the capture: left alone

    def test_non_multipart_rejected(self):
        with pytest.raises(DsPostRejected):
            validate_ds_post(b"{}", "application/json", "ua")


def test_user_agent_family():
    assert user_agent_family("Mozilla/5.0 (Linux; Android)") == "Mozilla"
    assert user_agent_family("") == ""


def test_form_factor_class_is_derived():
    assert FormFactor(1080, 1920, 4.7).device_class == "phone"
    with pytest.raises(ValidationError):
        FormFactor(1080, 1920, 4.7, device_class="desktop")
