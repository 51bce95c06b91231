"""Deterministic SVG layout plots."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .errors import IoError
from .legalize import overlap_area_exact, overlapping_pairs
from .netlist import check_placement
from .objectives import hpwl_exact, per_net_hpwl

MAX_FLY_LINES = 200
FILLS = ("#d9e7f5", "#a9c8e8", "#6fa3d6", "#3a78bd")   # area quartiles, small to large


@dataclass(frozen=True)
class RenderOptions:
    width_px: int = 800
    fly_lines: int = 0              # draw the K longest nets, capped at MAX_FLY_LINES
    highlight_overlaps: bool = False
    labels: bool = False
    title: str = ""
    config_hash: str = ""
    seed: int | None = None


def _n(v):
    s = f"{v:.3f}".rstrip("0").rstrip(".")
    return "0" if s in ("-0", "") else s


def render_svg(netlist, placement, path=None, options: RenderOptions = RenderOptions()):
    """Return the SVG text and write it to ``path`` if given."""
    p = check_placement(netlist, placement)
    a = netlist.arrays
    c = netlist.canvas
    m = netlist.n_movable
    scale = options.width_px / c.width
    pad = 20.0
    legend_h = 48.0
    w_px = c.width * scale + 2 * pad
    h_px = c.height * scale + 2 * pad + legend_h

    def X(x):
        return pad + (x - c.origin_x) * scale

    def Y(y):   # canvas y grows upwards
        return pad + (c.origin_y + c.height - y) * scale

    hpwl = hpwl_exact(netlist, p)
    overlap = overlap_area_exact(netlist, p)
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{_n(w_px)}" '
        f'height="{_n(h_px)}" viewBox="0 0 {_n(w_px)} {_n(h_px)}">',
        f'<metadata>{{"design": "{escape(netlist.name)}", "config_hash": "{escape(options.config_hash)}", '
        f'"seed": {"null" if options.seed is None else int(options.seed)}}}</metadata>',
        "<style>.canvas{fill:#ffffff;stroke:#222;stroke-width:1.5}"
        ".macro{stroke:#1b3a5c;stroke-width:0.8}.pad{fill:#c0392b}"
        ".net{stroke:#e67e22;stroke-width:0.6;stroke-opacity:0.7}"
        ".overlap-pair{fill:#e74c3c;fill-opacity:0.55;stroke:#c0392b;stroke-width:1.2}"
        ".legend{font-family:monospace;font-size:12px;fill:#222}</style>",
    ]
    if options.title:
        out.append(f"<title>{escape(options.title)}</title>")
    out.append(f'<rect class="canvas" x="{_n(X(c.origin_x))}" y="{_n(Y(c.origin_y + c.height))}" '
               f'width="{_n(c.width * scale)}" height="{_n(c.height * scale)}"/>')

    sizes = a.sizes[:m]
    area = sizes[:, 0] * sizes[:, 1]
    edges = np.quantile(area, [0.25, 0.5, 0.75]) if m else np.zeros(3)
    for i in range(m):
        q = int(np.searchsorted(edges, area[i], side="right"))
        x, y = p[i]
        w, h = sizes[i]
        out.append(f'<rect class="macro" id="m{i}" fill="{FILLS[q]}" x="{_n(X(x))}" y="{_n(Y(y + h))}" '
                   f'width="{_n(w * scale)}" height="{_n(h * scale)}"/>')
        if options.labels:
            out.append(f'<text class="legend" x="{_n(X(x + w / 2))}" y="{_n(Y(y + h / 2))}" '
                       f'text-anchor="middle">{escape(netlist.macros[i].name or str(i))}</text>')
    for j in range(len(netlist.pads)):
        x, y = a.pad_xy[j]
        out.append(f'<circle class="pad" cx="{_n(X(x))}" cy="{_n(Y(y))}" r="2"/>')

    k = min(options.fly_lines, MAX_FLY_LINES)
    if k > 0 and a.n_nets:
        per = per_net_hpwl(netlist, p)
        order = sorted(range(a.n_nets), key=lambda n: (-per[n], n))[:k]
        pos = a.positions(p)
        pins = pos[a.pin_node] + a.half[a.pin_node] + a.pin_off
        for n in order:
            seg = pins[a.net_ptr[n]:a.net_ptr[n + 1]]
            if seg.shape[0] < 2:
                continue
            cx, cy = seg.mean(axis=0)
            for px, py in seg:
                out.append(f'<line class="net" x1="{_n(X(cx))}" y1="{_n(Y(cy))}" '
                           f'x2="{_n(X(px))}" y2="{_n(Y(py))}"/>')

    if options.highlight_overlaps:
        for i, j in overlapping_pairs(netlist, p):
            lo = np.maximum(p[i], p[j])
            hi = np.minimum(p[i] + sizes[i], p[j] + sizes[j])
            out.append(f'<rect class="overlap-pair" data-pair="{i},{j}" x="{_n(X(lo[0]))}" '
                       f'y="{_n(Y(hi[1]))}" width="{_n((hi[0] - lo[0]) * scale)}" '
                       f'height="{_n((hi[1] - lo[1]) * scale)}"/>')

    ly = c.height * scale + 2 * pad + 14
    out.append(f'<text class="legend" x="{_n(pad)}" y="{_n(ly)}">HPWL {hpwl:.6g}   '
               f'overlap {overlap:.6g}   macros {m}   pads {len(netlist.pads)}</text>')
    seed = "" if options.seed is None else f"   seed {int(options.seed)}"
    out.append(f'<text class="legend" x="{_n(pad)}" y="{_n(ly + 16)}">{escape(netlist.name)}'
               f'{seed}   config {escape(options.config_hash or "-")}</text>')
    out.append("</svg>")
    text = "\n".join(out) + "\n"
    if path is not None:
        try:
            Path(path).write_text(text)
        except OSError as exc:
            raise IoError(f"cannot write {path}: {exc}") from exc
    return text
