"""Report emission: machine-readable CSV/JSON, a plain-text summary, and
matplotlib figures (size CDFs and per-site pixel accounting) written next
to the delimited output. Output is deterministic for a given report."""

from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from dsedge.harness.metrics import RunReport

PCT_FIELDS = (
    "unchanged_pct",
    "masked_pct",
    "false_negative_pct",
    "false_positive_pct",
    "discards_pct",
)

CSV_FIELDS = ("site_id", "url", "groups", "generated", "discarded_batches",
              "contaminated") + PCT_FIELDS


def _aggregate_row(report: RunReport) -> dict:
    n = max(len(report.sites), 1)
    row = {
        "site_id": "ALL",
        "url": "",
        "groups": sum(s.groups for s in report.sites),
        "generated": sum(s.generated for s in report.sites),
        "discarded_batches": sum(s.discarded_batches for s in report.sites),
        "contaminated": sum(1 for s in report.sites if s.contaminated),
    }
    for name in PCT_FIELDS:
        row[name] = round(sum(getattr(s, name) for s in report.sites) / n, 4)
    return row


def write_csv(report: RunReport, path: Path) -> None:
    with path.open("w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_FIELDS)
        writer.writeheader()
        for site in report.sites:
            row = {name: getattr(site, name) for name in CSV_FIELDS}
            for name in PCT_FIELDS:
                row[name] = round(row[name], 4)
            writer.writerow(row)
        writer.writerow(_aggregate_row(report))


def write_json(report: RunReport, path: Path) -> None:
    payload = {
        "sites": [asdict(s) for s in report.sites],
        "sizes": report.sizes,
        "counters": report.counters,
        "hook_block_bytes": report.hook_block_bytes,
        "injection_deltas": report.injection_deltas,
        "failures": report.failures,
        "ok": report.ok,
    }
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n")


def write_summary(report: RunReport, path: Path) -> None:
    lines = [
        f"sites: {len(report.sites)}",
        f"hook overhead per injected page: {report.hook_block_bytes} bytes",
        f"injected pages: {len(report.injection_deltas)}",
        f"counters: {json.dumps(report.counters, sort_keys=True)}",
        "",
        f"{'site':<10}{'masked%':>10}{'fn%':>8}{'fp%':>8}{'discards%':>11}",
    ]
    for s in report.sites:
        lines.append(
            f"{s.site_id:<10}{s.masked_pct:>10.2f}{s.false_negative_pct:>8.2f}"
            f"{s.false_positive_pct:>8.2f}{s.discards_pct:>11.2f}"
        )
    lines.append("")
    lines.append("OK" if report.ok else "FAILURES:\n" + "\n".join(report.failures))
    path.write_text("\n".join(lines) + "\n")


def _cdf(values):
    xs = np.sort(np.asarray(values))
    ys = np.arange(1, len(xs) + 1) / len(xs)
    return xs, ys


def write_figures(report: RunReport, out_dir: Path) -> list[Path]:
    written = []

    fig, ax = plt.subplots(figsize=(6, 4))
    for name, label in (("snapshot", "snapshot PNG"), ("links", "link coords"),
                        ("ds_html", "interstitial HTML")):
        values = report.sizes.get(name, [])
        if not values:
            continue
        xs, ys = _cdf(values)
        ax.step(np.asarray(xs) / 1024.0, ys, where="post", label=label)
    ax.set_xlabel("size (KiB)")
    ax.set_ylabel("CDF")
    ax.set_title("Upload and interstitial sizes on the wire")
    ax.legend(loc="lower right")
    ax.grid(True, alpha=0.3)
    path = out_dir / "post_sizes_cdf.png"
    fig.savefig(path, dpi=100)
    plt.close(fig)
    written.append(path)

    if report.sites:
        fig, ax = plt.subplots(figsize=(max(6, 0.8 * len(report.sites)), 4))
        idx = np.arange(len(report.sites))
        width = 0.2
        for offset, (name, label) in enumerate(
            (("masked_pct", "masked"), ("false_negative_pct", "false neg"),
             ("false_positive_pct", "false pos"), ("discards_pct", "discards"))
        ):
            ax.bar(idx + offset * width, [getattr(s, name) for s in report.sites],
                   width, label=label)
        ax.set_xticks(idx + 1.5 * width)
        ax.set_xticklabels([s.site_id for s in report.sites], rotation=45, ha="right")
        ax.set_ylabel("percent of pixels / batches")
        ax.set_title("Desensitization accounting per site")
        ax.legend()
        fig.tight_layout()
        path = out_dir / "desensitization.png"
        fig.savefig(path, dpi=100)
        plt.close(fig)
        written.append(path)

    return written


def emit_report(report: RunReport, out_dir: str | Path, figures: bool = True) -> dict[str, Path]:
    """Write all report artifacts; returns {artifact name: path}."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "csv": out / "report.csv",
        "json": out / "report.json",
        "summary": out / "summary.txt",
    }
    write_csv(report, paths["csv"])
    write_json(report, paths["json"])
    write_summary(report, paths["summary"])
    if figures:
        for fig_path in write_figures(report, out):
            paths[fig_path.stem] = fig_path
    return paths
