"""Plain static SVG renderings of explanation heatmaps and survival curves."""
from __future__ import annotations

from xml.sax.saxutils import escape

import numpy as np


def _color(v, vmax):
    # diverging white->red for positive, white->blue for negative
    a = 0.0 if vmax <= 0 else min(abs(v) / vmax, 1.0)
    fade = int(round(255 * (1 - a)))
    return f"rgb(255,{fade},{fade})" if v >= 0 else f"rgb({fade},{fade},255)"


def heatmap_svg(weights, row_names, cell=12, label_width=160, title="") -> str:
    """Rows are features, columns are intervals; every cell carries its value."""
    W = np.asarray(weights, dtype=np.float64)
    n_rows, n_cols = W.shape
    vmax = float(np.max(np.abs(W))) if W.size else 0.0
    width = label_width + n_cols * cell + 10
    height = 30 + n_rows * cell + 20
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="4" y="14">{escape(title)}</text>')
    for r, name in enumerate(row_names):
        y = 24 + r * cell
        out.append(f'<text x="4" y="{y + cell - 2}">{escape(str(name))}</text>')
        for c in range(n_cols):
            v = W[r, c]
            out.append(f'<rect x="{label_width + c * cell}" y="{y}" width="{cell}" height="{cell}" '
                       f'fill="{_color(v, vmax)}" data-value="{v!r}"><title>{escape(str(name))} '
                       f'interval {c + 1}: {v!r}</title></rect>')
    out.append(f'<text x="{label_width}" y="{height - 4}">interval 1..{n_cols}, '
               f'|max weight| = {vmax:.4g}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def curve_svg(times, surv, width=400, height=240, title="") -> str:
    """Step-free polyline of a survival curve with the raw points embedded."""
    t = np.asarray(times, dtype=np.float64)
    s = np.asarray(surv, dtype=np.float64)
    pad = 30
    tmax = t[-1] if t[-1] > 0 else 1.0
    xs = pad + (width - 2 * pad) * t / tmax
    ys = height - pad - (height - 2 * pad) * s
    pts = " ".join(f"{x:.2f},{y:.2f}" for x, y in zip(xs, ys))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'font-family="sans-serif" font-size="10">']
    if title:
        out.append(f'<text x="4" y="14">{escape(title)}</text>')
    out.append(f'<line x1="{pad}" y1="{height - pad}" x2="{width - pad}" y2="{height - pad}" stroke="black"/>')
    out.append(f'<line x1="{pad}" y1="{pad}" x2="{pad}" y2="{height - pad}" stroke="black"/>')
    out.append(f'<text x="{pad}" y="{height - 8}">0</text>')
    out.append(f'<text x="{width - pad - 30}" y="{height - 8}">{tmax:g} d</text>')
    out.append(f'<text x="4" y="{pad + 4}">1</text>')
    out.append(f'<polyline fill="none" stroke="black" points="{pts}"/>')
    for ti, si, x, y in zip(t, s, xs, ys):
        out.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="1.5" data-time="{ti!r}" '
                   f'data-survival="{si!r}"><title>t={ti:g}: {si:.4f}</title></circle>')
    out.append("</svg>")
    return "\n".join(out) + "\n"
