"""Write a BenchmarkReport as CSV tables, a JSON document, or an SVG error-bar chart.

Outputs carry no timestamps or host details, so identical reports give
identical bytes.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path
from typing import Dict, Iterable, List, Optional
from xml.sax.saxutils import escape

from quantbench.cli.bench import BenchmarkReport, Failure, aggregate_rows
from quantbench.cli.wire import fmt
from quantbench.errors import ParseError
from quantbench.metrics import AggregateError, CellError

ROWS_CSV = "cell_errors.csv"
AGG_CSV = "aggregates.csv"
FAIL_CSV = "failures.csv"
REPORT_JSON = "report.json"
CHART_SVG = "errors.svg"

ROW_FIELDS = ["method", "budget", "cell_id", "seed", "bray_curtis"]
AGG_FIELDS = ["method", "budget", "mean", "se", "n_cells"]
FAIL_FIELDS = ["method", "budget", "cell_id", "seed", "error"]


def _opt(v):
    return "" if v is None else str(v)


def _write_csv(path: Path, header, rows):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)


def write_csv(report: BenchmarkReport, out: Path) -> List[Path]:
    paths = [out / ROWS_CSV, out / AGG_CSV, out / FAIL_CSV]
    _write_csv(paths[0], ROW_FIELDS,
               ([r.method, _opt(r.budget), r.cell_id, _opt(r.seed), fmt(r.bray_curtis)] for r in report.rows))
    _write_csv(paths[1], AGG_FIELDS,
               ([a.method, _opt(a.budget), fmt(a.mean), fmt(a.se), a.n_cells] for a in report.aggregates))
    _write_csv(paths[2], FAIL_FIELDS,
               ([f.method, _opt(f.budget), f.cell_id, _opt(f.seed), f.error] for f in report.failures))
    return paths


def read_rows_csv(path) -> List[CellError]:
    rows = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            rows.append(CellError(
                rec["cell_id"], rec["method"],
                int(rec["budget"]) if rec["budget"] else None,
                float(rec["bray_curtis"]),
                int(rec["seed"]) if rec["seed"] else None,
            ))
    return rows


def read_aggregates_csv(path) -> List[AggregateError]:
    out = []
    with open(path, encoding="utf-8", newline="") as fh:
        for rec in csv.DictReader(fh):
            out.append(AggregateError(rec["method"], int(rec["budget"]) if rec["budget"] else None,
                                      float(rec["mean"]), float(rec["se"]), int(rec["n_cells"])))
    return out


def to_json(report: BenchmarkReport) -> dict:
    return {
        "provenance": report.provenance,
        "class_names": list(report.class_names),
        "aggregates": [
            {"method": a.method, "budget": a.budget, "mean": a.mean, "se": a.se, "n_cells": a.n_cells}
            for a in report.aggregates
        ],
        "rows": [
            {"method": r.method, "budget": r.budget, "cell_id": r.cell_id, "seed": r.seed, "bray_curtis": r.bray_curtis}
            for r in report.rows
        ],
        "failures": [
            {"method": f.method, "budget": f.budget, "cell_id": f.cell_id, "seed": f.seed, "error": f.error}
            for f in report.failures
        ],
    }


def dumps_json(report: BenchmarkReport) -> str:
    return json.dumps(to_json(report), indent=1, sort_keys=True) + "\n"


def from_json(doc: dict) -> BenchmarkReport:
    try:
        rows = [CellError(r["cell_id"], r["method"], r["budget"], r["bray_curtis"], r["seed"]) for r in doc["rows"]]
        failures = [Failure(f["cell_id"], f["method"], f["budget"], f["seed"], f["error"]) for f in doc["failures"]]
        provenance = doc["provenance"]
    except (KeyError, TypeError) as exc:
        raise ParseError(f"not a benchmark report: missing {exc}") from None
    return BenchmarkReport(rows, failures, aggregate_rows(rows) if rows else [], provenance,
                           doc.get("class_names", []))


def load_json(path) -> BenchmarkReport:
    try:
        doc = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise ParseError(str(exc), path, exc.lineno) from None
    return from_json(doc)


# svg ----------------------------------------------------------------------

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]
W, H = 640, 400
LEFT, RIGHT, TOP, BOTTOM = 60, 150, 30, 50


def _n(x: float) -> str:
    return f"{x:.2f}"


def render_svg(aggregates: Iterable[AggregateError], title: str = "Bray-Curtis error (mean +- SE)") -> str:
    """One ``<g class="series">`` per method.

    Supervised methods are plotted against budget; methods without a budget
    are drawn as a horizontal line with a shaded SE band.
    """
    aggs = list(aggregates)
    methods: List[str] = []
    for a in aggs:
        if a.method not in methods:
            methods.append(a.method)
    budgets = sorted({a.budget for a in aggs if a.budget is not None})
    ymax = max((a.mean + a.se for a in aggs), default=1.0) * 1.1 or 1.0
    pw, ph = W - LEFT - RIGHT, H - TOP - BOTTOM

    def xpos(b):
        if len(budgets) <= 1:
            return LEFT + pw / 2
        return LEFT + pw * budgets.index(b) / (len(budgets) - 1)

    def ypos(v):
        return TOP + ph * (1 - v / ymax)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<text x="{W / 2:.0f}" y="18" text-anchor="middle" font-size="14">{escape(title)}</text>',
        f'<line x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for k in range(5):
        v = ymax * k / 4
        out.append(f'<text x="{LEFT - 6}" y="{_n(ypos(v) + 4)}" text-anchor="end" font-size="10">{v:.3f}</text>')
    for b in budgets:
        out.append(f'<text x="{_n(xpos(b))}" y="{TOP + ph + 16}" text-anchor="middle" font-size="10">{b}</text>')
    if budgets:
        out.append(f'<text x="{LEFT + pw / 2:.0f}" y="{H - 12}" text-anchor="middle" font-size="11">budget b</text>')

    for i, m in enumerate(methods):
        color = PALETTE[i % len(PALETTE)]
        series = [a for a in aggs if a.method == m]
        out.append(f'<g class="series" data-method="{escape(m)}" stroke="{color}" fill="{color}">')
        flat = [a for a in series if a.budget is None]
        if flat:
            a = flat[0]
            lo, hi = ypos(a.mean + a.se), ypos(max(a.mean - a.se, 0.0))
            out.append(f'<rect x="{LEFT}" y="{_n(lo)}" width="{pw}" height="{_n(hi - lo)}" opacity="0.15" stroke="none"/>')
            out.append(f'<line x1="{LEFT}" y1="{_n(ypos(a.mean))}" x2="{LEFT + pw}" y2="{_n(ypos(a.mean))}" '
                       f'stroke-dasharray="6 3" fill="none"/>')
        pts = sorted((a for a in series if a.budget is not None), key=lambda a: a.budget)
        if pts:
            path = " ".join(f"{_n(xpos(a.budget))},{_n(ypos(a.mean))}" for a in pts)
            out.append(f'<polyline points="{path}" fill="none"/>')
            for a in pts:
                x = _n(xpos(a.budget))
                out.append(f'<line x1="{x}" y1="{_n(ypos(a.mean + a.se))}" x2="{x}" '
                           f'y2="{_n(ypos(max(a.mean - a.se, 0.0)))}"/>')
                out.append(f'<circle cx="{x}" cy="{_n(ypos(a.mean))}" r="3"/>')
        ly = TOP + 14 * i + 10
        out.append(f'<text x="{LEFT + pw + 12}" y="{ly + 4}" font-size="11" stroke="none">{escape(m)}</text>')
        out.append("</g>")
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(report: BenchmarkReport, out_dir, formats=("csv", "json")) -> List[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written: List[Path] = []
    if "csv" in formats:
        written += write_csv(report, out)
    if "json" in formats:
        p = out / REPORT_JSON
        p.write_text(dumps_json(report), encoding="utf-8")
        written.append(p)
    if "svg" in formats:
        p = out / CHART_SVG
        p.write_text(render_svg(report.aggregates), encoding="utf-8")
        written.append(p)
    return written
