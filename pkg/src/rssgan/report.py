"""Report emission: raw and aggregated CSVs, a Markdown table and an SVG line chart.

Result files never carry timestamps; run times appear only in the raw CSV's
``wall_ms`` column and the separate metadata JSON.
"""
from __future__ import annotations

import csv
import json
from dataclasses import asdict
from pathlib import Path
from xml.sax.saxutils import escape

from .experiments import SWEEP_REAL, SWEEP_TOPPED, TABLE1, ExperimentReport

RAW_COLUMNS = (
    "experiment",
    "real_fraction",
    "synthetic_count",
    "interpretation",
    "repetition",
    "run_seed",
    "accuracy",
    "log_loss",
    "wall_ms",
    "error",
)
AGG_COLUMNS = (
    "experiment",
    "real_fraction",
    "synthetic_count",
    "interpretation",
    "n_runs",
    "n_failed",
    "accuracy_mean",
    "accuracy_std",
    "accuracy_min",
    "accuracy_max",
    "log_loss_mean",
    "log_loss_std",
    "log_loss_min",
    "log_loss_max",
)


def _num(x: float) -> str:
    return repr(float(x))


def write_raw_csv(path: str | Path, report: ExperimentReport) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RAW_COLUMNS)
        for r in report.records:
            w.writerow(
                [
                    r.experiment,
                    f"{r.real_fraction:.2f}",
                    r.synthetic_count,
                    r.interpretation,
                    r.repetition,
                    r.run_seed,
                    _num(r.accuracy),
                    _num(r.log_loss),
                    r.wall_ms,
                    r.error,
                ]
            )


def write_aggregate_csv(path: str | Path, report: ExperimentReport) -> None:
    with Path(path).open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(AGG_COLUMNS)
        for (exp, frac, synth, interp), s in sorted(report.cells.items()):
            stats = asdict(s)
            w.writerow(
                [exp, f"{frac:.2f}", synth, interp]
                + [stats[c] if c.startswith("n_") else _num(stats[c]) for c in AGG_COLUMNS[4:]]
            )


def write_meta(path: str | Path, report: ExperimentReport, config: dict | None = None) -> None:
    doc = {"meta": report.meta, "config": config or {}}
    Path(path).write_text(json.dumps(doc, indent=2, sort_keys=True) + "\n")


def table1_markdown(report: ExperimentReport) -> str:
    cells = {k: v for k, v in report.cells.items() if k[0] == TABLE1}
    fractions = sorted({k[1] for k in cells})
    counts = sorted({k[2] for k in cells})
    lines = [
        "| Synthetic | " + " | ".join(f"{f:.0%} real: accuracy | log loss" for f in fractions) + " |",
        "|---|" + "---|---|" * len(fractions),
    ]
    for s in counts:
        row = [str(s)]
        for f in fractions:
            stats = next(v for k, v in cells.items() if k[1] == f and k[2] == s)
            row += [f"{stats.accuracy_mean:.1f}%", f"{stats.log_loss_mean:.2f}"]
        lines.append("| " + " | ".join(row) + " |")
    return "\n".join(lines) + "\n"


def sweep_series(report: ExperimentReport) -> dict[str, list[tuple[float, float]]]:
    series = {SWEEP_REAL: [], SWEEP_TOPPED: []}
    for (exp, frac, _, _), stats in sorted(report.cells.items()):
        if exp in series:
            series[exp].append((frac, stats.accuracy_mean))
    return series


def sweep_svg(
    series: dict[str, list[tuple[float, float]]],
    width: int = 560,
    height: int = 380,
    title: str = "Test accuracy vs. fraction of real training data",
) -> str:
    """Two-series line chart, fraction (%) on x, accuracy (%) on y."""
    styles = {
        SWEEP_REAL: ("#1f4fd1", "real data only"),
        SWEEP_TOPPED: ("#d11f1f", "real + synthetic (topped up)"),
    }
    left, right, top, bottom = 60, 20, 40, 50
    pw, ph = width - left - right, height - top - bottom
    ys = [y for pts in series.values() for _, y in pts]
    y_lo = max(0.0, 10 * (min(ys, default=0.0) // 10))
    y_hi = 100.0
    if y_hi - y_lo < 10:
        y_lo = y_hi - 10

    def sx(x: float) -> float:
        return left + pw * x

    def sy(y: float) -> float:
        return top + ph * (1 - (y - y_lo) / (y_hi - y_lo))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
        f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>',
        f'<text x="{width / 2:.1f}" y="20" text-anchor="middle" font-size="13">{escape(title)}</text>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" stroke="black"/>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" stroke="black"/>',
    ]
    for i in range(0, 11):
        x = i / 10
        out.append(
            f'<line x1="{sx(x):.1f}" y1="{top + ph}" x2="{sx(x):.1f}" y2="{top + ph + 4}" stroke="black"/>'
        )
        out.append(
            f'<text x="{sx(x):.1f}" y="{top + ph + 16}" text-anchor="middle">{i * 10}</text>'
        )
    y = y_lo
    while y <= y_hi + 1e-9:
        out.append(f'<line x1="{left - 4}" y1="{sy(y):.1f}" x2="{left}" y2="{sy(y):.1f}" stroke="black"/>')
        out.append(
            f'<line x1="{left}" y1="{sy(y):.1f}" x2="{left + pw}" y2="{sy(y):.1f}" stroke="#dddddd"/>'
        )
        out.append(f'<text x="{left - 7}" y="{sy(y) + 4:.1f}" text-anchor="end">{y:.0f}</text>')
        y += 10
    out.append(
        f'<text x="{left + pw / 2:.1f}" y="{height - 12}" text-anchor="middle">real data used (%)</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.1f})">test accuracy (%)</text>'
    )
    for n, (name, pts) in enumerate(series.items()):
        color, label = styles.get(name, ("#444444", name))
        if pts:
            coords = " ".join(f"{sx(x):.1f},{sy(y):.1f}" for x, y in pts)
            out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="2"/>')
            for x, y in pts:
                out.append(f'<circle cx="{sx(x):.1f}" cy="{sy(y):.1f}" r="2.5" fill="{color}"/>')
        ly = top + 12 + 16 * n
        out.append(
            f'<line x1="{left + pw - 190}" y1="{ly}" x2="{left + pw - 170}" y2="{ly}" '
            f'stroke="{color}" stroke-width="2"/>'
        )
        out.append(f'<text x="{left + pw - 165}" y="{ly + 4}">{escape(label)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
