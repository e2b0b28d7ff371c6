"""Tabular results and their deterministic CSV / gnuplot serialisation."""
from __future__ import annotations

import csv
import hashlib
import io
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np


@dataclass
class Table:
    """Named columns plus rows; ``plot`` names a plotting style for ``emit_plot_data``."""

    name: str
    columns: list[str]
    rows: list[list[Any]] = field(default_factory=list)
    plot: str | None = None
    plot_spec: dict = field(default_factory=dict)

    def append(self, *values) -> None:
        if len(values) != len(self.columns):
            raise ValueError(f"{self.name}: expected {len(self.columns)} values, got {len(values)}")
        self.rows.append(list(values))

    def column(self, name: str) -> list:
        i = self.columns.index(name)
        return [r[i] for r in self.rows]

    def __len__(self) -> int:
        return len(self.rows)


def format_value(v) -> str:
    """17 significant digits for floats, plain text otherwise."""
    if isinstance(v, (bool, np.bool_)):
        return "true" if v else "false"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        v = float(v)
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return f"{v:.17g}"
    return str(getattr(v, "value", v))


def to_csv(table: Table) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(table.columns)
    for row in table.rows:
        writer.writerow([format_value(v) for v in row])
    return buf.getvalue()


def write_csv(table: Table, out_dir: Path) -> Path:
    path = Path(out_dir) / f"{table.name}.csv"
    path.write_text(to_csv(table))
    return path


def sha256_file(path: Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


_STYLES = {
    "loglog": "set logscale xy\n",
    "semilogy": "set logscale y\n",
    "regions": "set logscale xy\n",
    "lines": "",
}


def gnuplot_script(table: Table, style: str) -> str:
    """Script plotting ``<name>.csv``; x/y columns and grouping come from ``plot_spec``."""
    if style not in _STYLES:
        raise ValueError(f"unknown plot style {style!r}")
    spec = table.plot_spec
    x = table.columns.index(spec.get("x", table.columns[0])) + 1
    y = table.columns.index(spec.get("y", table.columns[1])) + 1
    lines = [
        "set datafile separator ','",
        "set key autotitle columnhead",
        f"set xlabel '{spec.get('xlabel', table.columns[x - 1])}'",
        f"set ylabel '{spec.get('ylabel', table.columns[y - 1])}'",
        _STYLES[style].rstrip("\n"),
    ]
    src = f"'{table.name}.csv'"
    if style == "regions":
        lab = table.columns.index(spec.get("label", "label")) + 1
        plots = [
            f"{src} using {x}:{y}:(strcol({lab}) eq '{r}' ? 1 : 1/0) with points title 'Region {r}'"
            for r in ("I", "II", "III", "IV", "V")
        ]
        overlay = spec.get("overlay")
        if overlay:
            plots.append(f"'{overlay}.csv' using 1:2 with lines lw 2 title 'efficiency frontier'")
            plots.append(f"'{overlay}.csv' using 1:3 with lines lw 2 dt 2 title 'Kolmogorov frontier'")
        lines.append("plot " + ", \\\n     ".join(plots))
    elif "group" in spec:
        g = table.columns.index(spec["group"]) + 1
        groups = sorted({format_value(v) for v in table.column(spec["group"])}, key=float)
        plots = [
            f"{src} using {x}:(strcol({g}) eq '{v}' ? ${y} : 1/0) with linespoints title '{spec['group']}={v}'"
            for v in groups
        ]
        lines.append("plot " + ", \\\n     ".join(plots))
    else:
        lines.append(f"plot {src} using {x}:{y} with linespoints")
    return "\n".join(l for l in lines if l) + "\n"


def emit_plot_data(table: Table, out_dir: Path, style: str | None = None, script: bool = True) -> list[Path]:
    """Write ``<name>.csv`` and, when a style is known, ``<name>.gp``."""
    if not table.rows:
        raise ValueError(f"table {table.name!r} is empty")
    out_dir = Path(out_dir)
    paths = [write_csv(table, out_dir)]
    style = style or table.plot
    if script and style:
        gp = out_dir / f"{table.name}.gp"
        gp.write_text(gnuplot_script(table, style))
        paths.append(gp)
    return paths


def as_rows(table: Table) -> Sequence[dict]:
    return [dict(zip(table.columns, r)) for r in table.rows]
