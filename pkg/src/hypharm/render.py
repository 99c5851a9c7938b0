"""SVG drawings of disk maps: geodesics as arcs orthogonal to the unit circle."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .fuchsian import FundamentalPolygon, GroupElement
from .hypgeom import apply_arrays, geodesic_through

SIZE = 800.0


def _xy(z):
    # screen coordinates: y axis points down
    s = 0.5 * SIZE / 1.05
    return 0.5 * SIZE + s * z.real, 0.5 * SIZE - s * z.imag


def geodesic_path(p: complex, q: complex) -> str:
    """SVG path data for the geodesic segment from p to q."""
    x0, y0 = _xy(p)
    x1, y1 = _xy(q)
    circ = geodesic_through(p, q)
    if circ is None:
        return f"M{x0:.3f},{y0:.3f}L{x1:.3f},{y1:.3f}"
    c, rad = circ
    cx, cy = _xy(c)
    r = rad * 0.5 * SIZE / 1.05
    if r > 1e6:
        return f"M{x0:.3f},{y0:.3f}L{x1:.3f},{y1:.3f}"
    # the arc inside the disk is the minor arc; pick its direction in screen space
    cross = (x0 - cx) * (y1 - cy) - (y0 - cy) * (x1 - cx)
    sweep = 1 if cross > 0 else 0
    return f"M{x0:.3f},{y0:.3f}A{r:.3f},{r:.3f} 0 0 {sweep} {x1:.3f},{y1:.3f}"


def _edges_path(pos, edges) -> str:
    return "".join(geodesic_path(complex(pos[a]), complex(pos[b])) for a, b in edges)


def svg_document(layers) -> str:
    """layers: list of (path data, stroke colour, stroke width)."""
    s = 0.5 * SIZE / 1.05
    out = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{SIZE:.0f}" height="{SIZE:.0f}" '
        f'viewBox="0 0 {SIZE:.0f} {SIZE:.0f}">',
        f'<circle cx="{SIZE / 2:.3f}" cy="{SIZE / 2:.3f}" r="{s:.3f}" fill="none" stroke="black" stroke-width="1.5"/>',
    ]
    for d, colour, width in layers:
        if d:
            out.append(f'<path d="{d}" fill="none" stroke="{colour}" stroke-width="{width}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def polygon_path(poly: FundamentalPolygon) -> str:
    return "".join(geodesic_path(*poly.side(k)) for k in range(poly.n_sides))


def realization_svg(positions, edges, polygon: FundamentalPolygon, elements: list[GroupElement] | None = None,
                    flipped_faces=None, faces=None) -> str:
    """Image edges under each group element, the polygon on top."""
    layers = []
    elements = elements or []
    colours = ["#1f77b4", "#7f7f7f"]
    for k, g in enumerate(elements):
        m = g.transform
        pos = apply_arrays(m.a, m.b, np.asarray(positions))
        layers.append((_edges_path(pos, edges), colours[0] if k == 0 else colours[1], 0.4 if k == 0 else 0.25))
    if flipped_faces is not None and faces is not None and len(flipped_faces):
        tri = np.asarray(faces)[flipped_faces]
        e = np.concatenate([tri[:, [0, 1]], tri[:, [1, 2]], tri[:, [2, 0]]])
        layers.append((_edges_path(np.asarray(positions), e), "#d62728", 0.8))
    layers.append((polygon_path(polygon), "black", 1.2))
    return svg_document(layers)


def write_svg(path, text: str):
    Path(path).write_text(text)
