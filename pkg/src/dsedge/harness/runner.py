"""End-to-end run orchestration: spins up origin, snapshot server, and
proxy in one process, drives a scripted client fleet through the proxy,
then measures the outcome."""

from __future__ import annotations

import time
from dataclasses import dataclass
from importlib import resources
from typing import Callable, Optional

import numpy as np

from dsedge.config import DsConfig
from dsedge.harness.clients import EventLog, SimClient
from dsedge.harness.metrics import RunReport, compute_metrics
from dsedge.harness.origin import OriginServer
from dsedge.harness.pages import SyntheticPageSpec, make_workload
from dsedge.harvester import HarvestStore
from dsedge.model import canonicalize_url
from dsedge.proxy import (
    HttpDsServerClient,
    ProxyCore,
    ProxyHTTPServer,
    injected_block_size,
    make_requests_origin_fetch,
)
from dsedge.server import DsHTTPServer, SnapshotService


def default_hook() -> bytes:
    return resources.files("dsedge").joinpath("resources/hook.js").read_bytes()


@dataclass
class RunOptions:
    sites: int = 3
    clients: int = 5
    threshold: int = 3
    discard: float = 0.4
    ttl: float = 7200.0
    adversary_rate: float = 0.0
    cellular_rate: float = 0.0
    seed: int = 1234
    store_root: Optional[str] = None
    concurrent: bool = False


@dataclass
class RunResult:
    report: RunReport
    log: EventLog
    store: HarvestStore
    specs_by_url: dict[str, SyntheticPageSpec]


def run_harness(opts: RunOptions, clock: Callable[[], float] = time.time) -> RunResult:
    specs = make_workload(opts.sites, seed=opts.seed)
    origin = OriginServer({f"/{s.site_id}": s for s in specs}, clock=clock)
    origin.start()

    config = DsConfig(
        threshold=opts.threshold,
        ttl_seconds=opts.ttl,
        discard_threshold=opts.discard,
    )
    store = HarvestStore(config, root=opts.store_root, clock=clock)
    service = SnapshotService(config, store=store, clock=clock)

    ds_http = DsHTTPServer(service)
    ds_http.start()

    hook = default_hook()
    core = ProxyCore(
        config.with_overrides(ds_server_url=ds_http.address),
        HttpDsServerClient(ds_http.address),
        make_requests_origin_fetch(),
        hook=hook,
    )
    proxy_http = ProxyHTTPServer(core)
    proxy_http.start()

    log = EventLog()
    rng = np.random.default_rng(opts.seed)
    site_urls = {s.site_id: f"{origin.address}/{s.site_id}" for s in specs}

    try:
        if opts.concurrent:
            service.start_worker()
        for spec in specs:
            for i in range(opts.clients):
                adversary = bool(rng.random() < opts.adversary_rate)
                cellular = bool(rng.random() < opts.cellular_rate)
                client = SimClient(
                    client_id=f"{spec.site_id}-c{i}",
                    proxy_url=proxy_http.address,
                    log=log,
                    connection="cellular" if cellular else "wifi",
                    adversary=adversary,
                    hook_post_path=config.hook_post_path,
                    rng=np.random.default_rng(opts.seed * 7919 + i),
                )
                client.browse(site_urls[spec.site_id], spec)
                if opts.concurrent:
                    service.wait_idle()
                else:
                    service.drain()
        specs_by_url = {
            canonicalize_url(site_urls[s.site_id]): s for s in specs
        }
        report = compute_metrics(
            log,
            store,
            specs_by_url,
            hook_block_bytes=injected_block_size(hook),
            proxy_counters=dict(core.counters),
            injections=list(core.injections),
        )
        return RunResult(report=report, log=log, store=store, specs_by_url=specs_by_url)
    finally:
        if opts.concurrent:
            service.stop_worker()
        proxy_http.shutdown()
        ds_http.shutdown()
        origin.shutdown()
        proxy_http.server_close()
        ds_http.server_close()
        origin.server_close()
