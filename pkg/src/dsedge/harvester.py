"""Snapshot store: groups uploads by {URL, device class, dimensions},
tracks the generation threshold and freshness, and persists everything in
an inspectable on-disk layout.

Layout (when a root directory is given):

    {root}/{host}/{url-hash}/{class}/{WxH}/{epoch-millis}.png   snapshot
    {root}/{host}/{url-hash}/{class}/{WxH}/{epoch-millis}.json  metadata
    {root}/.../_group.json         group bookkeeping
    {root}/.../_desensitized.png   masked base image
    {root}/.../_mask.png           1-bit audit mask
    {root}/.../_regions.json       masked-region rectangles
    {root}/.../_ds.html            generated interstitial
    {root}/.../_doc.json           interstitial metadata

Without a root the store is purely in-memory (test mode).
"""

from __future__ import annotations

import hashlib
import json
import shutil
import threading
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterator, Optional

from dsedge.config import DsConfig
from dsedge.desensitize import DesensitizedImage, Mask
from dsedge.htmlgen import DsHtmlDocument
from dsedge.model import (
    FormFactor,
    LinkRect,
    Raster,
    SnapshotRecord,
    ValidationError,
    url_host,
)


def _url_hash(url: str) -> str:
    return hashlib.sha256(url.encode("utf-8")).hexdigest()[:16]


@dataclass(frozen=True)
class GroupKey:
    url: str
    device_class: str
    width: int
    height: int

    @property
    def host(self) -> str:
        return url_host(self.url)

    def __str__(self) -> str:
        return f"{self.host}/{_url_hash(self.url)}/{self.device_class}/{self.width}x{self.height}"


@dataclass
class HarvestGroup:
    """All snapshots for one (URL, class, dimensions) bucket."""

    key: GroupKey
    entries: list[tuple[str, SnapshotRecord]] = field(default_factory=list)
    last_generated_at: Optional[float] = None
    last_batch_ids: tuple[str, ...] = ()
    generated_batch_ids: tuple[str, ...] = ()
    discard_count: int = 0
    last_discard_fraction: Optional[float] = None
    # Published artifacts, kept so a restarted store can re-serve them.
    document: Optional[DsHtmlDocument] = None
    mask: Optional[Mask] = None
    regions: tuple[tuple[int, int, int, int], ...] = ()

    @property
    def records(self) -> list[SnapshotRecord]:
        return [r for _, r in self.entries]

    @property
    def record_ids(self) -> list[str]:
        return [rid for rid, _ in self.entries]


class HarvestStore:
    """Thread-safe snapshot store. Group mutation is serialized by a
    store-wide lock; snapshot ingestion never runs the pipeline inline."""

    def __init__(
        self,
        config: DsConfig | None = None,
        root: str | Path | None = None,
        clock: Callable[[], float] = time.time,
    ):
        self.config = config or DsConfig()
        self.root = Path(root) if root is not None else None
        self.clock = clock
        self._groups: dict[GroupKey, HarvestGroup] = {}
        self._lock = threading.RLock()
        self.total_stored = 0  # lifetime accepted-snapshot count
        if self.root is not None:
            self.root.mkdir(parents=True, exist_ok=True)
            self._reload()

    # -- ingestion ---------------------------------------------------

    def store_snapshot(self, record: SnapshotRecord) -> tuple[GroupKey, str]:
        """Append a validated record to its group; creates the group on
        first sight of a (url, class, dimensions) combination."""
        key = GroupKey(
            url=record.url,
            device_class=record.form_factor.device_class,
            width=record.raster.width,
            height=record.raster.height,
        )
        with self._lock:
            group = self._groups.setdefault(key, HarvestGroup(key=key))
            record_id = self._fresh_record_id(group, record.received_at)
            group.entries.append((record_id, record))
            group.entries.sort(key=lambda e: e[1].received_at)
            self.total_stored += 1
            self._persist_record(group, record_id, record)
            self._write_store_meta()
        return key, record_id

    def _fresh_record_id(self, group: HarvestGroup, received_at: float) -> str:
        millis = int(received_at * 1000)
        taken = set(group.record_ids)
        while str(millis) in taken:
            millis += 1
        return str(millis)

    # -- queries -----------------------------------------------------

    def group(self, key: GroupKey) -> Optional[HarvestGroup]:
        with self._lock:
            return self._groups.get(key)

    def groups(self) -> Iterator[HarvestGroup]:
        with self._lock:
            return iter(list(self._groups.values()))

    def groups_for_url(
        self, url: str, device_class: Optional[str] = None
    ) -> list[HarvestGroup]:
        with self._lock:
            return [
                g
                for g in self._groups.values()
                if g.key.url == url
                and (device_class is None or g.key.device_class == device_class)
            ]

    def threshold_reached(self, group: HarvestGroup) -> bool:
        return len(group.entries) >= self.config.threshold_for(group.key.host)

    def needs_refresh(self, group: HarvestGroup, now: float) -> bool:
        """A generation is due when none exists yet, when a newer snapshot
        has arrived, or when the last one has outlived its TTL."""
        if not self.threshold_reached(group):
            return False
        if group.last_generated_at is None:
            return True
        newest = group.entries[-1][1].received_at if group.entries else None
        if newest is not None and newest > group.last_generated_at:
            return True
        return now - group.last_generated_at > self.config.ttl_for(group.key.host)

    def select_batch(self, group: HarvestGroup, n: Optional[int] = None) -> list[SnapshotRecord]:
        return [r for _, r in self.select_batch_entries(group, n)]

    def select_batch_entries(
        self, group: HarvestGroup, n: Optional[int] = None
    ) -> list[tuple[str, SnapshotRecord]]:
        """The n most recent records, oldest first."""
        if n is None:
            n = self.config.threshold_for(group.key.host)
        with self._lock:
            if len(group.entries) < n:
                raise ValidationError(
                    f"group has {len(group.entries)} records, batch needs {n}"
                )
            return list(group.entries[-n:])

    # -- pipeline outcomes -------------------------------------------

    def mark_generated(
        self,
        group: HarvestGroup,
        desensitized: DesensitizedImage,
        document: DsHtmlDocument,
        batch_ids: tuple[str, ...],
    ) -> None:
        with self._lock:
            group.last_generated_at = document.generated_at
            group.last_batch_ids = batch_ids
            group.generated_batch_ids = batch_ids
            group.document = document
            group.mask = desensitized.mask
            group.regions = desensitized.regions
            self._persist_artifacts(group, desensitized, document)

    def mark_discarded(
        self, group: HarvestGroup, fraction: float, batch_ids: tuple[str, ...]
    ) -> None:
        """Drop the poisoned batch so the group can recover with fresh
        uploads instead of re-discarding forever."""
        with self._lock:
            group.discard_count += 1
            group.last_discard_fraction = fraction
            group.last_batch_ids = batch_ids
            dropped = set(batch_ids)
            group.entries = [e for e in group.entries if e[0] not in dropped]
            if self.root is not None:
                gdir = self._group_dir(group.key)
                for rid in dropped:
                    (gdir / f"{rid}.png").unlink(missing_ok=True)
                    (gdir / f"{rid}.json").unlink(missing_ok=True)
                self._write_group_meta(group)

    # -- purge ---------------------------------------------------------

    def purge(self, url: str) -> int:
        """Remove every snapshot and artifact set for a URL, across all
        form factors and dimensions. Returns the number of items removed
        (snapshots plus one per generated artifact set)."""
        removed = 0
        with self._lock:
            for key in [k for k in self._groups if k.url == url]:
                group = self._groups.pop(key)
                removed += len(group.entries)
                if group.document is not None:
                    removed += 1
                if self.root is not None:
                    shutil.rmtree(self._group_dir(key), ignore_errors=True)
        return removed

    def published_documents(self) -> dict[tuple[str, str], DsHtmlDocument]:
        """Freshest generated document per (url, device class)."""
        docs: dict[tuple[str, str], DsHtmlDocument] = {}
        with self._lock:
            for group in self._groups.values():
                if group.document is None:
                    continue
                slot = (group.key.url, group.key.device_class)
                cur = docs.get(slot)
                if cur is None or group.document.generated_at > cur.generated_at:
                    docs[slot] = group.document
        return docs

    # -- persistence ---------------------------------------------------

    def _group_dir(self, key: GroupKey) -> Path:
        assert self.root is not None
        return self.root / str(key)

    def _persist_record(self, group: HarvestGroup, record_id: str, record: SnapshotRecord) -> None:
        if self.root is None:
            return
        gdir = self._group_dir(group.key)
        gdir.mkdir(parents=True, exist_ok=True)
        (gdir / f"{record_id}.png").write_bytes(record.raster.to_png())
        meta = {
            "url": record.url,
            "links": [
                {"url": l.url, "left": l.left, "top": l.top, "right": l.right, "bottom": l.bottom}
                for l in record.links
            ],
            "viewport_height": record.viewport_height,
            "form_factor": {
                "width_px": record.form_factor.width_px,
                "height_px": record.form_factor.height_px,
                "diagonal_in": record.form_factor.diagonal_in,
            },
            "user_agent": record.user_agent,
            "received_at": record.received_at,
        }
        (gdir / f"{record_id}.json").write_text(json.dumps(meta, indent=1))
        self._write_group_meta(group)

    def _write_group_meta(self, group: HarvestGroup) -> None:
        if self.root is None:
            return
        gdir = self._group_dir(group.key)
        gdir.mkdir(parents=True, exist_ok=True)
        meta = {
            "url": group.key.url,
            "device_class": group.key.device_class,
            "width": group.key.width,
            "height": group.key.height,
            "last_generated_at": group.last_generated_at,
            "last_batch_ids": list(group.last_batch_ids),
            "generated_batch_ids": list(group.generated_batch_ids),
            "discard_count": group.discard_count,
            "last_discard_fraction": group.last_discard_fraction,
            "regions": [list(r) for r in group.regions],
        }
        (gdir / "_group.json").write_text(json.dumps(meta, indent=1))

    def _persist_artifacts(
        self, group: HarvestGroup, desensitized: DesensitizedImage, document: DsHtmlDocument
    ) -> None:
        if self.root is None:
            return
        gdir = self._group_dir(group.key)
        gdir.mkdir(parents=True, exist_ok=True)
        (gdir / "_desensitized.png").write_bytes(desensitized.raster.to_png())
        (gdir / "_mask.png").write_bytes(desensitized.mask.to_png())
        (gdir / "_regions.json").write_text(json.dumps([list(r) for r in desensitized.regions]))
        (gdir / "_ds.html").write_bytes(document.html_bytes)
        (gdir / "_doc.json").write_text(
            json.dumps(
                {
                    "original_url": document.original_url,
                    "generated_at": document.generated_at,
                    "ttl_seconds": document.ttl_seconds,
                }
            )
        )
        self._write_group_meta(group)

    def _write_store_meta(self) -> None:
        if self.root is None:
            return
        (self.root / "_store.json").write_text(
            json.dumps({"total_stored": self.total_stored})
        )

    def _reload(self) -> None:
        assert self.root is not None
        store_meta_path = self.root / "_store.json"
        if store_meta_path.exists():
            self.total_stored = json.loads(store_meta_path.read_text())["total_stored"]
        for meta_path in sorted(self.root.glob("*/*/*/*/_group.json")):
            gdir = meta_path.parent
            meta = json.loads(meta_path.read_text())
            key = GroupKey(
                url=meta["url"],
                device_class=meta["device_class"],
                width=meta["width"],
                height=meta["height"],
            )
            group = HarvestGroup(
                key=key,
                last_generated_at=meta["last_generated_at"],
                last_batch_ids=tuple(meta["last_batch_ids"]),
                generated_batch_ids=tuple(meta.get("generated_batch_ids", [])),
                discard_count=meta["discard_count"],
                last_discard_fraction=meta["last_discard_fraction"],
                regions=tuple(tuple(r) for r in meta["regions"]),
            )
            for rec_meta_path in sorted(gdir.glob("[0-9]*.json")):
                rid = rec_meta_path.stem
                rec_meta = json.loads(rec_meta_path.read_text())
                raster = Raster.from_png((gdir / f"{rid}.png").read_bytes())
                ff = rec_meta["form_factor"]
                record = SnapshotRecord(
                    url=rec_meta["url"],
                    raster=raster,
                    links=tuple(
                        LinkRect(l["url"], l["left"], l["top"], l["right"], l["bottom"])
                        for l in rec_meta["links"]
                    ),
                    viewport_height=rec_meta["viewport_height"],
                    form_factor=FormFactor(ff["width_px"], ff["height_px"], ff["diagonal_in"]),
                    user_agent=rec_meta["user_agent"],
                    received_at=rec_meta["received_at"],
                )
                group.entries.append((rid, record))
            group.entries.sort(key=lambda e: e[1].received_at)
            mask_path = gdir / "_mask.png"
            if mask_path.exists():
                group.mask = Mask.from_png(mask_path.read_bytes())
            doc_meta_path = gdir / "_doc.json"
            if doc_meta_path.exists():
                doc_meta = json.loads(doc_meta_path.read_text())
                group.document = DsHtmlDocument(
                    html_bytes=(gdir / "_ds.html").read_bytes(),
                    original_url=doc_meta["original_url"],
                    generated_at=doc_meta["generated_at"],
                    ttl_seconds=doc_meta["ttl_seconds"],
                )
            self._groups[key] = group

    def load_mask(self, group: HarvestGroup) -> Optional[Mask]:
        """Audit helper: the persisted 1-bit mask, if any."""
        if self.root is None:
            return None
        path = self._group_dir(group.key) / "_mask.png"
        if not path.exists():
            return None
        return Mask.from_png(path.read_bytes())
