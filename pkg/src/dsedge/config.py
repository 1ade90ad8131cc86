"""Shared configuration for the proxy, server, and pipeline.

All tunables live here so tests and the harness can override them in one
place. Per-host overrides let individual sites raise the snapshot
threshold or tighten the discard knob without touching global defaults.
"""

from __future__ import annotations

import json
import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

DEFAULT_BLANK_COLOR = (128, 128, 128, 255)  # opaque #808080

# Form-factor bucket boundaries. The three classes are fixed; where the
# cut-offs fall is a deployment choice.
PHONE_MAX_DIAGONAL_IN = 7.0
TABLET_MAX_DIAGONAL_IN = 11.0
PHONE_MAX_MIN_DIM_PX = 800
TABLET_MAX_MIN_DIM_PX = 1200


@dataclass(frozen=True)
class DsConfig:
    """Knobs shared across components.

    threshold: snapshots required before a group may be desensitized.
    ttl_seconds: freshness window of a generated interstitial page.
    discard_threshold: max tolerated changed-pixel fraction for a batch.
    state_timeout_seconds: proxy request-state entries older than this
        are purgeable.
    prerender_token: reserved query parameter marking background fetches.
    hook_post_path: same-origin path the injected hook posts snapshots to.
    """

    threshold: int = 3
    ttl_seconds: float = 7200.0
    discard_threshold: float = 0.4
    state_timeout_seconds: float = 30.0
    prerender_token: str = "__ds_prerender"
    hook_post_path: str = "/__ds/post"
    blank_color: tuple[int, int, int, int] = DEFAULT_BLANK_COLOR
    ds_server_url: str = "http://127.0.0.1:8400"
    hook_payload_path: Optional[str] = None
    pixel_tolerance: int = 0  # per-channel; 0 = exact equality (lossless inputs)
    # Per-host overrides, keyed by canonical host.
    host_thresholds: dict[str, int] = field(default_factory=dict)
    host_ttls: dict[str, float] = field(default_factory=dict)
    host_discards: dict[str, float] = field(default_factory=dict)

    def threshold_for(self, host: str) -> int:
        return self.host_thresholds.get(host, self.threshold)

    def ttl_for(self, host: str) -> float:
        return self.host_ttls.get(host, self.ttl_seconds)

    def discard_for(self, host: str) -> float:
        return self.host_discards.get(host, self.discard_threshold)

    def with_overrides(self, **kwargs) -> "DsConfig":
        return replace(self, **kwargs)

    @classmethod
    def from_file(cls, path: str | Path) -> "DsConfig":
        raw = json.loads(Path(path).read_text())
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(raw) - known
        if unknown:
            raise ValueError(f"unknown config keys: {sorted(unknown)}")
        if "blank_color" in raw:
            raw["blank_color"] = tuple(raw["blank_color"])
        return cls(**raw)

    @classmethod
    def from_env(cls, var: str = "DS_PROXY_CONFIG") -> "DsConfig":
        """Load from the file named by the env var; defaults if unset."""
        path = os.environ.get(var)
        if not path:
            return cls()
        return cls.from_file(path)
