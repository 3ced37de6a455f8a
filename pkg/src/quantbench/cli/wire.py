"""Tabular cell files: one header line, then one sample per line.

Header::

    # kind=scores; classes=mix,diatom,ciliate; labels=true
    # kind=features; classes=mix,diatom,ciliate; dim=4; labels=true

Rows are comma-separated reals written with 17 significant digits,
followed by an integer truth label when ``labels=true``. UTF-8, LF endings.
Score rows within 1e-3 of the simplex are renormalized (rows already within
1e-9 are kept as written); others are rejected.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import List, Optional, Sequence

import numpy as np

from quantbench.core import Cell, LabeledDataset, ScoreMatrix
from quantbench.errors import ClassCatalogMismatch, ParseError, SimplexViolation

INGEST_TOL = 1e-3
EXACT_TOL = 1e-9  # rows this close are kept as written, so files round-trip exactly
SUFFIX = ".csv"


def fmt(x: float) -> str:
    return format(float(x), ".17g")


@dataclass
class Header:
    kind: str
    classes: List[str]
    labels: bool
    dim: Optional[int] = None

    def render(self) -> str:
        parts = [f"kind={self.kind}", "classes=" + ",".join(self.classes)]
        if self.kind == "features":
            parts.append(f"dim={self.dim}")
        parts.append(f"labels={'true' if self.labels else 'false'}")
        return "# " + "; ".join(parts)

    @property
    def width(self) -> int:
        return len(self.classes) if self.kind == "scores" else int(self.dim)


def _check_names(classes: Sequence[str]):
    for name in classes:
        if not name or any(ch in name for ch in ",;=\n") or name != name.strip():
            raise ValueError(f"class name {name!r} cannot be written to a cell file")


def parse_header(line: str, path=None) -> Header:
    if not line.startswith("#"):
        raise ParseError("first line must be a '# kind=...; classes=...' header", path, 1)
    fields = {}
    for part in line[1:].split(";"):
        if not part.strip():
            continue
        key, sep, value = part.partition("=")
        if not sep:
            raise ParseError(f"header field {part.strip()!r} is not key=value", path, 1)
        fields[key.strip()] = value.strip()
    kind = fields.get("kind")
    if kind not in ("scores", "features"):
        raise ParseError(f"header kind must be scores or features, got {kind!r}", path, 1)
    classes = [c.strip() for c in fields.get("classes", "").split(",") if c.strip()]
    if len(classes) < 2:
        raise ParseError("header must list at least two classes", path, 1)
    labels = fields.get("labels", "false").lower()
    if labels not in ("true", "false"):
        raise ParseError(f"labels must be true or false, got {labels!r}", path, 1)
    dim = None
    if kind == "features":
        try:
            dim = int(fields["dim"])
        except (KeyError, ValueError):
            raise ParseError("features header needs an integer dim", path, 1) from None
        if dim < 1:
            raise ParseError("dim must be positive", path, 1)
    return Header(kind, classes, labels == "true", dim)


def read_table(path):
    """Parse a cell file into ``(header, values n x width, labels or None)``."""
    path = Path(path)
    with open(path, encoding="utf-8", newline="") as fh:
        lines = fh.read().split("\n")
    if not lines or not lines[0].strip():
        raise ParseError("empty file", path, 1)
    header = parse_header(lines[0].rstrip("\r"), path)
    width = header.width + (1 if header.labels else 0)
    rows, labels = [], []
    for lineno, raw in enumerate(lines[1:], start=2):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(",")
        if len(parts) != width:
            raise ParseError(f"expected {width} fields, found {len(parts)}", path, lineno)
        try:
            vals = [float(p) for p in parts[:header.width]]
        except ValueError as exc:
            raise ParseError(str(exc), path, lineno) from None
        if not all(math.isfinite(v) for v in vals):
            raise ParseError("non-finite value", path, lineno)
        if header.labels:
            try:
                lab = int(parts[-1])
            except ValueError:
                raise ParseError(f"truth label {parts[-1]!r} is not an integer", path, lineno) from None
            if not 0 <= lab < len(header.classes):
                raise ParseError(f"truth label {lab} outside [0, {len(header.classes)})", path, lineno)
            labels.append(lab)
        if header.kind == "scores":
            total = sum(vals)
            if min(vals) < 0 or abs(total - 1.0) > INGEST_TOL:
                raise SimplexViolation(f"{path}:{lineno}: score row sums to {total!r}")
            if abs(total - 1.0) > EXACT_TOL:
                vals = [v / total for v in vals]
        rows.append(vals)
    if not rows:
        raise ParseError("no data rows", path, len(lines))
    values = np.asarray(rows, dtype=float)
    return header, values, (np.asarray(labels, dtype=np.int64) if header.labels else None)


def read_cell(path, cell_id: Optional[str] = None):
    """Load one cell file. Returns ``(Cell, class_names)``."""
    header, values, labels = read_table(path)
    cid = cell_id if cell_id is not None else Path(path).stem
    if header.kind == "scores":
        cell = Cell(cid, scores=ScoreMatrix(values), truth=labels)
    else:
        cell = Cell(cid, features=values, truth=labels)
    return cell, header.classes


def read_labeled(path):
    """A labeled table (scores or features) as ``(LabeledDataset, header)``."""
    header, values, labels = read_table(path)
    if labels is None:
        raise ParseError("file carries no truth labels", path, 1)
    return LabeledDataset(values, labels, len(header.classes)), header


def write_table(path, header: Header, values, labels=None):
    _check_names(header.classes)
    values = np.asarray(values, dtype=float)
    if header.labels != (labels is not None):
        raise ValueError("labels flag and labels argument disagree")
    out = [header.render()]
    for i, row in enumerate(values):
        fields = [fmt(v) for v in row]
        if labels is not None:
            fields.append(str(int(labels[i])))
        out.append(",".join(fields))
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")


def write_cell(path, cell: Cell, classes: Sequence[str]):
    if cell.kind == "scores":
        header = Header("scores", list(classes), cell.truth is not None)
        values = cell.scores.values
    else:
        header = Header("features", list(classes), cell.truth is not None, cell.features.shape[1])
        values = cell.features
    write_table(path, header, values, cell.truth)


def write_labeled(path, data: LabeledDataset, classes: Sequence[str], kind: str = "features"):
    header = Header(kind, list(classes), True, data.d if kind == "features" else None)
    write_table(path, header, data.features, data.labels)


@dataclass
class Ingested:
    cells: List[Cell]
    classes: List[str]


def ingest_scores(path) -> Ingested:
    """Read score cells from one file or every ``*.csv`` in a directory.

    All files must share one class catalog; cell ids are file stems, in
    sorted order.
    """
    path = Path(path)
    files = sorted(path.glob(f"*{SUFFIX}")) if path.is_dir() else [path]
    if not files:
        raise ParseError(f"no {SUFFIX} cell files found", path)
    cells, catalog = [], None
    for f in files:
        cell, classes = read_cell(f)
        if cell.kind != "scores":
            raise ParseError("expected a scores file, found features", f, 1)
        if catalog is None:
            catalog = classes
        elif classes != catalog:
            raise ClassCatalogMismatch(f"{f}: classes {classes} differ from {catalog}")
        cells.append(cell)
    return Ingested(cells, catalog)
