"""Deterministic CSV and SVG renderings of a sweep."""
from __future__ import annotations

from pathlib import Path
from typing import Optional, Sequence
from xml.sax.saxutils import escape

from ..exceptions import ContractError
from .sweep import SweepResult

CSV_HEADER = "N,method,delta,miou,wall_ms"
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")
WIDTH, HEIGHT = 640, 400
MARGIN = dict(left=64, right=176, top=36, bottom=52)


def _num(x) -> str:
    return "" if x is None else format(float(x), ".6f")


def render_csv(result: SweepResult, methods: Optional[Sequence[str]] = None) -> str:
    rows = _filtered(result, methods)
    lines = [CSV_HEADER]
    for r in rows:
        lines.append(f"{r.N},{r.method},{_num(r.delta)},{_num(r.miou)},{_num(r.wall_ms)}")
    return "\n".join(lines) + "\n"


def _filtered(result: SweepResult, methods):
    rows = [r for r in result.rows if methods is None or r.method in methods]
    if not rows:
        raise ContractError(f"no sweep rows for methods {list(methods) if methods else methods}")
    return rows


def render_svg(result: SweepResult, methods: Optional[Sequence[str]] = None, metric: str = "delta") -> str:
    rows = _filtered(result, methods)
    order = []
    for r in rows:
        if r.method not in order:
            order.append(r.method)
    ns = sorted({r.N for r in rows})
    values = [getattr(r, metric) for r in rows if getattr(r, metric) is not None]
    lo = min(0.0, min(values, default=0.0))
    hi = max(values, default=1.0)
    if hi <= lo:
        hi = lo + 1.0
    x0, x1 = MARGIN["left"], WIDTH - MARGIN["right"]
    y0, y1 = HEIGHT - MARGIN["bottom"], MARGIN["top"]

    def px(n):
        i = ns.index(n)
        return x0 + (x1 - x0) * (i / (len(ns) - 1) if len(ns) > 1 else 0.5)

    def py(v):
        return y0 - (y0 - y1) * (v - lo) / (hi - lo)

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.1f}" y="{HEIGHT - 12}" text-anchor="middle">N (shots)</text>',
        f'<text x="16" y="{(y0 + y1) / 2:.1f}" text-anchor="middle" '
        f'transform="rotate(-90 16 {(y0 + y1) / 2:.1f})">{escape(metric)}</text>',
    ]
    for n in ns:
        out.append(f'<text x="{px(n):.1f}" y="{y0 + 18}" text-anchor="middle">{n}</text>')
    for k in range(5):
        v = lo + (hi - lo) * k / 4
        out.append(f'<text x="{x0 - 6}" y="{py(v) + 4:.1f}" text-anchor="end">{v:.3f}</text>')
        out.append(f'<line x1="{x0 - 3}" y1="{py(v):.1f}" x2="{x0}" y2="{py(v):.1f}" stroke="black"/>')
    for i, method in enumerate(order):
        color = PALETTE[i % len(PALETTE)]
        pts = [(px(r.N), py(getattr(r, metric))) for r in rows
               if r.method == method and getattr(r, metric) is not None]
        coords = " ".join(f"{x:.1f},{y:.1f}" for x, y in pts)
        out.append(f'<polyline data-method="{escape(method)}" fill="none" stroke="{color}" '
                   f'stroke-width="2" points="{coords}"/>')
        ly = y1 + 18 * i
        out.append(f'<line x1="{x1 + 16}" y1="{ly}" x2="{x1 + 40}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{x1 + 46}" y="{ly + 4}">{escape(method)}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_report(result: SweepResult, csv_path, svg_path, methods: Optional[Sequence[str]] = None,
                metric: str = "delta") -> None:
    # render both before touching the filesystem so a bad filter leaves no files
    csv_text = render_csv(result, methods)
    svg_text = render_svg(result, methods, metric)
    Path(csv_path).write_bytes(csv_text.encode("utf-8"))
    Path(svg_path).write_bytes(svg_text.encode("utf-8"))
