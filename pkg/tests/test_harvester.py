import numpy as np
import pytest

from dsedge.config import DsConfig
from dsedge.desensitize import desensitize
from dsedge.harvester import GroupKey, HarvestStore
from dsedge.htmlgen import generate
from dsedge.model import ValidationError

from conftest import FakeClock, make_record, random_raster, solid_raster


def store_with(clock, root=None, **config_kwargs):
    return HarvestStore(DsConfig(**config_kwargs), root=root, clock=clock)


class TestGrouping:
    def test_first_snapshot_creates_group(self, clock):
        store = store_with(clock)
        key, rid = store.store_snapshot(make_record(solid_raster(8, 8)))
        group = store.group(key)
        assert len(group.entries) == 1
        assert group.record_ids == [rid]

    def test_dimension_mismatch_forms_second_group(self, clock):
        store = store_with(clock)
        k1, _ = store.store_snapshot(make_record(solid_raster(360, 1280), viewport_height=640))
        k2, _ = store.store_snapshot(make_record(solid_raster(412, 1460), viewport_height=730))
        assert k1 != k2
        assert len(store.groups_for_url("http://www.a.com/")) == 2

    def test_third_snapshot_reaches_threshold(self, clock):
        store = store_with(clock)
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        group = store.group(key)
        assert store.threshold_reached(group)

    def test_all_rasters_in_group_share_dimensions(self, clock):
        store = store_with(clock)
        for i in range(4):
            w = 8 if i % 2 == 0 else 16
            store.store_snapshot(make_record(solid_raster(w, 8), received_at=i))
        for group in store.groups():
            dims = {(r.raster.width, r.raster.height) for r in group.records}
            assert len(dims) == 1

    def test_identical_payload_new_record(self, clock):
        store = store_with(clock)
        record = make_record(solid_raster(8, 8), received_at=100.0)
        k1, r1 = store.store_snapshot(record)
        k2, r2 = store.store_snapshot(record)
        assert k1 == k2 and r1 != r2
        assert len(store.group(k1).entries) == 2


class TestThreshold:
    def test_below(self, clock):
        store = store_with(clock)
        for i in range(2):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        assert not store.threshold_reached(store.group(key))

    def test_configured_threshold_dominates(self, clock):
        store = store_with(clock, threshold=5)
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        assert not store.threshold_reached(store.group(key))

    def test_per_host_override(self, clock):
        store = store_with(clock, threshold=3, host_thresholds={"www.a.com": 5})
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        assert not store.threshold_reached(store.group(key))


def generated_group(store, clock, key):
    group = store.group(key)
    batch = store.select_batch_entries(group)
    records = [r for _, r in batch]
    result = desensitize(records, discard_threshold=1.0, clock=clock)
    doc = generate(result, records[-1].links, records[-1].viewport_height,
                   key.url, "__ds_prerender", 7200.0, clock=clock)
    store.mark_generated(group, result, doc, tuple(rid for rid, _ in batch))
    return group


class TestNeedsRefresh:
    def setup_group(self, clock, **cfg):
        store = store_with(clock, **cfg)
        for i in range(3):
            key, _ = store.store_snapshot(
                make_record(solid_raster(8, 8), received_at=clock() - 10 + i)
            )
        return store, key

    def test_threshold_not_met(self, clock):
        store = store_with(clock)
        key, _ = store.store_snapshot(make_record(solid_raster(8, 8)))
        assert not store.needs_refresh(store.group(key), clock())

    def test_due_when_never_generated(self, clock):
        store, key = self.setup_group(clock)
        assert store.needs_refresh(store.group(key), clock())

    def test_newer_record_triggers(self, clock):
        store, key = self.setup_group(clock)
        generated_group(store, clock, key)
        assert not store.needs_refresh(store.group(key), clock())
        clock.advance(1)
        store.store_snapshot(make_record(solid_raster(8, 8), received_at=clock()))
        assert store.needs_refresh(store.group(key), clock())

    def test_fresh_generation_not_due(self, clock):
        store, key = self.setup_group(clock)
        generated_group(store, clock, key)
        assert not store.needs_refresh(store.group(key), clock() + 600)

    def test_ttl_expiry_triggers(self, clock):
        store, key = self.setup_group(clock)
        generated_group(store, clock, key)
        t = store.group(key).last_generated_at
        assert not store.needs_refresh(store.group(key), t + 7200)
        assert store.needs_refresh(store.group(key), t + 7200 + 1)

    def test_monotone_in_now(self, clock):
        store, key = self.setup_group(clock)
        generated_group(store, clock, key)
        group = store.group(key)
        t0 = group.last_generated_at + 7201
        assert store.needs_refresh(group, t0)
        for dt in (1, 60, 86400):
            assert store.needs_refresh(group, t0 + dt)


class TestSelectBatch:
    def test_most_recent_in_time_order(self, clock):
        store = store_with(clock)
        for i in range(5):
            key, _ = store.store_snapshot(
                make_record(random_raster(8, 8, seed=i), received_at=i)
            )
        batch = store.select_batch(store.group(key), 3)
        assert [r.received_at for r in batch] == [2, 3, 4]

    def test_exact_size(self, clock):
        store = store_with(clock)
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        assert len(store.select_batch(store.group(key), 3)) == 3

    def test_undersized_group_errors(self, clock):
        store = store_with(clock)
        for i in range(2):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        with pytest.raises(ValidationError):
            store.select_batch(store.group(key), 3)


class TestPersistence:
    def test_restart_reloads_byte_identically(self, clock, tmp_path):
        store = store_with(clock, root=tmp_path)
        records = [
            make_record(
                random_raster(12, 20, seed=i),
                url="http://www.a.com/page?x=1",
                viewport_height=10,
                links=[],
                received_at=100.0 + i,
            )
            for i in range(3)
        ]
        for r in records:
            key, _ = store.store_snapshot(r)
        generated_group(store, clock, key)

        reloaded = store_with(clock, root=tmp_path)
        group = reloaded.group(key)
        assert group.records == records
        assert group.last_generated_at == store.group(key).last_generated_at
        assert group.document.html_bytes == store.group(key).document.html_bytes
        assert group.mask == store.group(key).mask
        assert reloaded.total_stored == 3

    def test_disk_layout(self, clock, tmp_path):
        store = store_with(clock, root=tmp_path)
        key, rid = store.store_snapshot(
            make_record(solid_raster(8, 8), url="http://www.a.com/", received_at=42.0)
        )
        gdir = tmp_path / str(key)
        assert (gdir / f"{rid}.png").exists()
        assert (gdir / f"{rid}.json").exists()
        assert (gdir / "_group.json").exists()
        assert str(key).startswith("www.a.com/")
        assert str(key).endswith("/phone/8x8")


class TestPurge:
    def test_purge_counts_snapshots_and_artifacts(self, clock):
        store = store_with(clock)
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        generated_group(store, clock, key)
        assert store.purge("http://www.a.com/") >= 4

    def test_purge_unknown_url(self, clock):
        store = store_with(clock)
        assert store.purge("http://nowhere.test/") == 0

    def test_purge_clears_disk(self, clock, tmp_path):
        store = store_with(clock, root=tmp_path)
        key, _ = store.store_snapshot(make_record(solid_raster(8, 8)))
        store.purge("http://www.a.com/")
        assert not (tmp_path / str(key)).exists()
        assert store.group(key) is None


class TestDiscard:
    def test_discard_drops_batch_records(self, clock):
        store = store_with(clock)
        for i in range(3):
            key, _ = store.store_snapshot(make_record(solid_raster(8, 8), received_at=i))
        group = store.group(key)
        ids = tuple(group.record_ids)
        store.mark_discarded(group, 0.9, ids)
        assert group.entries == []
        assert group.discard_count == 1
        assert group.last_discard_fraction == 0.9
