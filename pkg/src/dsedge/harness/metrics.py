"""Post-run measurement: pixel accounting against labels, discard audit,
wire-byte accounting, and the self-checks that decide the exit code."""

from __future__ import annotations

import base64
import re
from dataclasses import dataclass, field

import numpy as np

from dsedge.harness.clients import EventLog
from dsedge.harness.pages import SyntheticPageSpec
from dsedge.harvester import HarvestGroup, HarvestStore

TEMPLATE_OVERHEAD_LIMIT = 8192  # bytes beyond the embedded image payload

_DATA_URI_RE = re.compile(rb'src="data:image/png;base64,([^"]*)"')


@dataclass
class SiteStats:
    site_id: str
    url: str
    groups: int = 0
    generated: int = 0
    discarded_batches: int = 0
    contaminated: bool = False
    unchanged_pct: float = 100.0
    masked_pct: float = 0.0
    false_negative_pct: float = 0.0
    false_positive_pct: float = 0.0
    discards_pct: float = 0.0


@dataclass
class RunReport:
    sites: list[SiteStats]
    sizes: dict[str, list[int]]  # snapshot / links / ds_html wire bytes
    counters: dict[str, int]
    hook_block_bytes: int
    injection_deltas: list[tuple[str, int, int]]
    failures: list[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _embedded_image_payload(html_bytes: bytes) -> int:
    match = _DATA_URI_RE.search(html_bytes)
    return len(match.group(1)) if match else 0


def _group_pixel_stats(group: HarvestGroup, spec: SyntheticPageSpec):
    mask = group.mask
    if mask is None:
        return None
    bits = mask.bits
    labels = spec.sensitive_mask(mask.height)
    total = bits.size
    masked = int(bits.sum())
    fn = int(np.count_nonzero(labels & ~bits))
    fp = int(np.count_nonzero(bits & ~labels))
    return total, masked, fn, fp


def compute_metrics(
    log: EventLog,
    store: HarvestStore,
    specs_by_url: dict[str, SyntheticPageSpec],
    hook_block_bytes: int,
    proxy_counters: dict[str, int],
    injections: list[tuple[str, int, int]],
) -> RunReport:
    posts = [e for e in log.events("post") if e["status"] == 200]
    adversary_keys = {e["key"] for e in posts if e["adversary"] and e["key"]}

    sites: list[SiteStats] = []
    failures: list[str] = []

    for url, spec in sorted(specs_by_url.items()):
        stats = SiteStats(site_id=spec.site_id, url=url)
        groups = store.groups_for_url(url)
        stats.groups = len(groups)
        total = masked = fn = fp = 0
        generations = 0
        for group in groups:
            stats.discarded_batches += group.discard_count
            prefix = f"{group.key}/"
            group_adversarial = any(k.startswith(prefix) for k in adversary_keys)
            stats.contaminated = stats.contaminated or group_adversarial
            if group.document is not None:
                generations += 1
                pix = _group_pixel_stats(group, spec)
                if pix is not None:
                    t, m, n, p = pix
                    total += t
                    masked += m
                    fn += n
                    fp += p
                # A published page must never come from a poisoned batch.
                doc_batch = {f"{group.key}/{rid}" for rid in group.generated_batch_ids}
                if doc_batch & adversary_keys:
                    failures.append(
                        f"{spec.site_id}: published page generated from an adversarial batch"
                    )
                overhead = len(group.document.html_bytes) - _embedded_image_payload(
                    group.document.html_bytes
                )
                if overhead >= TEMPLATE_OVERHEAD_LIMIT:
                    failures.append(
                        f"{spec.site_id}: template overhead {overhead} exceeds "
                        f"{TEMPLATE_OVERHEAD_LIMIT} bytes"
                    )
            if group_adversarial and group.discard_count == 0 and group.document is None:
                # Contaminated but never processed (below threshold): fine.
                pass
            if not group_adversarial and group.discard_count > 0:
                failures.append(f"{spec.site_id}: clean group was discarded")
        stats.generated = generations
        if fn:
            # Labels coincide with pixel change by construction, so any
            # labeled pixel must have been masked.
            failures.append(f"{spec.site_id}: {fn} sensitive pixels left unmasked")
        if total:
            stats.masked_pct = 100.0 * masked / total
            stats.unchanged_pct = 100.0 - stats.masked_pct
            stats.false_negative_pct = 100.0 * fn / total
            stats.false_positive_pct = 100.0 * fp / total
        outcomes = stats.discarded_batches + generations
        if outcomes:
            stats.discards_pct = 100.0 * stats.discarded_batches / outcomes
        for value in (
            stats.unchanged_pct,
            stats.masked_pct,
            stats.false_negative_pct,
            stats.false_positive_pct,
            stats.discards_pct,
        ):
            if not (0.0 <= value <= 100.0):
                failures.append(f"{spec.site_id}: percentage {value} out of range")
        sites.append(stats)

    # Conservation: every accepted post landed in the store exactly once.
    if len(posts) != store.total_stored:
        failures.append(
            f"conservation violated: {len(posts)} accepted posts, "
            f"{store.total_stored} stored records"
        )

    # Hook injection is a constant additive overhead on the wire.
    for url, before, after in injections:
        if abs((after - before) - hook_block_bytes) > 1:
            failures.append(
                f"injection overhead for {url} was {after - before} bytes, "
                f"expected {hook_block_bytes}"
            )

    sizes = {
        "snapshot": [e["snapshot_bytes"] for e in posts],
        "links": [e["links_bytes"] for e in posts],
        "ds_html": [
            e["bytes"] for e in log.events("get") if e.get("interstitial") and e["status"] == 200
        ],
    }

    return RunReport(
        sites=sites,
        sizes=sizes,
        counters=dict(proxy_counters),
        hook_block_bytes=hook_block_bytes,
        injection_deltas=list(injections),
        failures=failures,
    )
