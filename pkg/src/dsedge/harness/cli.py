"""ds-harness command line interface."""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from dsedge.model import DsPostRejected, validate_ds_post


@click.group()
def main():
    """Deterministic end-to-end harness for the snapshot edge system."""


@main.command()
@click.option("--sites", default=3, show_default=True, help="Number of synthetic sites.")
@click.option("--clients", default=5, show_default=True, help="Clients per site.")
@click.option("--threshold", default=3, show_default=True, help="Snapshots required before generation.")
@click.option("--discard", default=0.4, show_default=True, help="Max changed-pixel fraction per batch.")
@click.option("--ttl", default=7200.0, show_default=True, help="Interstitial TTL in seconds.")
@click.option("--adversary-rate", default=0.0, show_default=True, help="Fraction of clients posting noise.")
@click.option("--cellular-rate", default=0.0, show_default=True, help="Fraction of clients on cellular.")
@click.option("--seed", default=1234, show_default=True, help="Workload RNG seed.")
@click.option("--concurrent/--sequential", default=False, show_default=True,
              help="Run the pipeline on a background worker instead of draining inline.")
@click.option("--store", "store_root", type=click.Path(), default=None,
              help="Persist the snapshot store at this directory.")
@click.option("--out", type=click.Path(), required=True, help="Report output directory.")
@click.option("--figures/--no-figures", default=True, show_default=True)
def run(sites, clients, threshold, discard, ttl, adversary_rate, cellular_rate,
        seed, concurrent, store_root, out, figures):
    """Run the full proxy/server/client loop and write the report."""
    from dsedge.harness.report import emit_report
    from dsedge.harness.runner import RunOptions, run_harness

    opts = RunOptions(
        sites=sites,
        clients=clients,
        threshold=threshold,
        discard=discard,
        ttl=ttl,
        adversary_rate=adversary_rate,
        cellular_rate=cellular_rate,
        seed=seed,
        store_root=store_root,
        concurrent=concurrent,
    )
    result = run_harness(opts)
    paths = emit_report(result.report, out, figures=figures)
    click.echo(Path(paths["summary"]).read_text(), nl=False)
    for name, path in sorted(paths.items()):
        click.echo(f"wrote {name}: {path}")
    sys.exit(0 if result.report.ok else 1)


@main.command("validate-post")
@click.option("--body", "body_path", type=click.Path(exists=True), required=True,
              help="File holding the raw multipart body.")
@click.option("--content-type", required=True, help="Content-Type header value.")
@click.option("--user-agent", default="", help="User-Agent header value.")
def validate_post(body_path, content_type, user_agent):
    """Validate a raw snapshot upload body; exit 0 iff it is accepted."""
    body = Path(body_path).read_bytes()
    try:
        record = validate_ds_post(body, content_type, user_agent)
    except DsPostRejected as exc:
        click.echo(json.dumps({"ok": False, "error": exc.reason, "part": exc.part}))
        sys.exit(1)
    click.echo(
        json.dumps(
            {
                "ok": True,
                "url": record.url,
                "width": record.raster.width,
                "height": record.raster.height,
                "links": len(record.links),
                "device_class": record.form_factor.device_class,
                "viewport_height": record.viewport_height,
            }
        )
    )


if __name__ == "__main__":
    main()
