"""CSV and plain-text emission of suite reports."""

from __future__ import annotations

from pathlib import Path

from .runner import Report

CSV_HEADER = "template,split,category,episodes,successes,success_rate,mean_ticks"


def report_csv(report: Report) -> str:
    """One row per (template, split) cell, deterministically ordered."""
    lines = [CSV_HEADER]
    for (template, split), rows in sorted(report.cells().items()):
        episodes = len(rows)
        successes = sum(r["success"] for r in rows)
        mean_ticks = sum(r["ticks"] for r in rows) / episodes
        category = rows[0]["category"]
        lines.append(
            f"{template},{split},{category},{episodes},{successes},"
            f"{successes / episodes:.4f},{mean_ticks:.2f}"
        )
    return "\n".join(lines) + "\n"


def parse_report_csv(text: str) -> list[dict]:
    rows = []
    lines = text.strip().splitlines()
    header = lines[0].split(",")
    for line in lines[1:]:
        parts = line.split(",")
        rows.append(dict(zip(header, parts)))
    return rows


def report_summary(report: Report) -> str:
    lines = ["== suite summary =="]
    for split in ("seen", "unseen"):
        rows = [r for r in report.rows if r["split"] == split]
        if not rows:
            continue
        rate = sum(r["success"] for r in rows) / len(rows)
        lines.append(f"{split} attributes: {rate:.1%} over {len(rows)} episodes")
    for category in ("object interaction", "spatial composition"):
        rows = [r for r in report.rows if r["category"] == category]
        if rows:
            rate = sum(r["success"] for r in rows) / len(rows)
            lines.append(f"{category}: {rate:.1%} over {len(rows)} episodes")
    hist = report.failure_histogram()
    total_failures = sum(hist.values())
    lines.append(f"failures: {total_failures}")
    if total_failures:
        for name in ("perception", "specification", "dynamics", "other"):
            count = hist.get(name, 0)
            lines.append(f"  {name}: {count} ({100.0 * count / total_failures:.1f}%)")
    return "\n".join(lines) + "\n"


def emit(report: Report, out_dir) -> tuple[Path, Path]:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    csv_path = out_dir / "report.csv"
    txt_path = out_dir / "summary.txt"
    csv_path.write_text(report_csv(report))
    txt_path.write_text(report_summary(report))
    return csv_path, txt_path
