"""CSV, SVG and manifest writers. All text output is locale-free with ``\\n`` newlines."""

from __future__ import annotations

import csv
import json
import logging
import math
from pathlib import Path
from typing import Iterable, Mapping, Sequence

log = logging.getLogger(__name__)

SCHEMAS = {
    "converge": ("n", "sup_error"),
    "bound": ("n", "sup_error", "bound", "margin"),
    "voronovskaya": ("n", "residual"),
    "korovkin": ("monomial", "n", "sup_error"),
    "pde-compare": ("n", "gamma", "t", "m", "gap", "amp_compose", "amp_pde"),
    "moments": ("x", "component", "value"),
    "admissible": ("condition", "value", "pass"),
    "rate": ("alpha", "intercept", "r2"),
    "compose": ("n", "gamma", "t", "m", "sup_in", "sup_out", "amplitude"),
}


def format_cell(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        return format(v, ".17g")
    if v is None:
        return ""
    return str(v)


def emit_csv(header: Sequence[str], rows: Iterable[Sequence], path: str | Path) -> Path:
    path = Path(path)
    with open(path, "w", newline="", encoding="ascii") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            if len(row) != len(header):
                raise ValueError(f"row {row!r} does not match header {header!r}")
            writer.writerow([format_cell(v) for v in row])
    return path


def write_manifest(path: str | Path, payload: Mapping) -> Path:
    path = Path(path)
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="ascii")
    return path


# ---------------------------------------------------------------------------
# SVG plots

_W, _H = 640, 420
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 150, 30, 50
_COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf")


def emit_plot(series: Mapping[str, Sequence[tuple[float, float]]], path: str | Path,
              title: str = "", xlabel: str = "n", ylabel: str = "value") -> Path:
    """Static log-log line chart, one polyline per series, with a legend.

    Falls back to linear axes (with a warning) if any value is not positive.
    """
    if not series or any(len(pts) < 2 for pts in series.values()):
        raise ValueError("every plotted series needs at least 2 rows")
    xs = [x for pts in series.values() for x, _ in pts]
    ys = [y for pts in series.values() for _, y in pts]
    log_axes = all(v > 0 for v in xs + ys)
    if not log_axes:
        log.warning("non-positive values in %s; using linear axes", path)
    tx = math.log10 if log_axes else float
    x0, x1 = _span([tx(x) for x in xs])
    y0, y1 = _span([tx(y) for y in ys])

    def px(x):
        return _LEFT + (tx(x) - x0) / (x1 - x0) * (_W - _LEFT - _RIGHT)

    def py(y):
        return _H - _BOTTOM - (tx(y) - y0) / (y1 - y0) * (_H - _TOP - _BOTTOM)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{_W}" height="{_H}" '
           f'font-family="sans-serif" font-size="11">',
           f'<rect width="{_W}" height="{_H}" fill="white"/>',
           f'<text x="{_W / 2:.1f}" y="18" text-anchor="middle" font-size="13">{_esc(title)}</text>']
    ax, ay = _LEFT, _H - _BOTTOM
    out.append(f'<line x1="{ax}" y1="{ay}" x2="{_W - _RIGHT}" y2="{ay}" stroke="black"/>')
    out.append(f'<line x1="{ax}" y1="{ay}" x2="{ax}" y2="{_TOP}" stroke="black"/>')
    for v in _ticks(x0, x1):
        label = _label(v, log_axes)
        x = _LEFT + (v - x0) / (x1 - x0) * (_W - _LEFT - _RIGHT)
        out.append(f'<line x1="{x:.1f}" y1="{ay}" x2="{x:.1f}" y2="{ay + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.1f}" y="{ay + 18}" text-anchor="middle">{label}</text>')
    for v in _ticks(y0, y1):
        label = _label(v, log_axes)
        y = _H - _BOTTOM - (v - y0) / (y1 - y0) * (_H - _TOP - _BOTTOM)
        out.append(f'<line x1="{ax - 5}" y1="{y:.1f}" x2="{ax}" y2="{y:.1f}" stroke="black"/>')
        out.append(f'<text x="{ax - 8}" y="{y + 4:.1f}" text-anchor="end">{label}</text>')
    out.append(f'<text x="{(_LEFT + _W - _RIGHT) / 2:.1f}" y="{_H - 12}" text-anchor="middle">'
               f'{_esc(xlabel)}</text>')
    out.append(f'<text x="16" y="{(_TOP + _H - _BOTTOM) / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {(_TOP + _H - _BOTTOM) / 2:.1f})">{_esc(ylabel)}</text>')
    for k, (name, pts) in enumerate(series.items()):
        color = _COLORS[k % len(_COLORS)]
        coords = " ".join(f"{px(x):.2f},{py(y):.2f}" for x, y in pts)
        out.append(f'<polyline points="{coords}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = _TOP + 16 * k + 10
        out.append(f'<line x1="{_W - _RIGHT + 10}" y1="{ly}" x2="{_W - _RIGHT + 30}" y2="{ly}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{_W - _RIGHT + 35}" y="{ly + 4}">{_esc(name)}</text>')
    out.append("</svg>\n")
    path = Path(path)
    path.write_text("\n".join(out), encoding="utf-8")
    return path


def _span(vals):
    lo, hi = min(vals), max(vals)
    if hi - lo < 1e-12:
        lo, hi = lo - 0.5, hi + 0.5
    return lo, hi


def _ticks(lo, hi, count=5):
    return [lo + (hi - lo) * i / (count - 1) for i in range(count)]


def _label(v, log_axes):
    return f"{10 ** v:.3g}" if log_axes else f"{v:.3g}"


def _esc(s: str) -> str:
    return s.replace("&", "&amp;").replace("<", "&lt;").replace(">", "&gt;")
