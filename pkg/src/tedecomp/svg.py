"""Hand-emitted SVG primitives for diagnostic charts: line plots, bar
charts, heatmaps. Deterministic byte-for-byte given identical inputs."""

from __future__ import annotations

import numpy as np

WIDTH, HEIGHT = 640, 420
MARGIN = 60
PALETTE = (
    "#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
)


def _f(x):
    return f"{x:.2f}"


def _axis_range(values):
    lo, hi = float(min(values)), float(max(values))
    if hi == lo:
        hi = lo + 1.0
    pad = 0.05 * (hi - lo)
    return lo - pad, hi + pad


def _header(title):
    return [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="monospace" font-size="12">',
        f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2:.0f}" y="20" text-anchor="middle" font-size="14">{title}</text>',
    ]


def _frame(x_label, y_label):
    x0, y0 = MARGIN, HEIGHT - MARGIN
    x1, y1 = WIDTH - MARGIN, MARGIN
    return [
        f'<line x1="{x0}" y1="{y0}" x2="{x1}" y2="{y0}" stroke="black"/>',
        f'<line x1="{x0}" y1="{y0}" x2="{x0}" y2="{y1}" stroke="black"/>',
        f'<text x="{(x0 + x1) / 2:.0f}" y="{HEIGHT - 15}" text-anchor="middle">{x_label}</text>',
        f'<text x="18" y="{(y0 + y1) / 2:.0f}" text-anchor="middle" '
        f'transform="rotate(-90 18 {(y0 + y1) / 2:.0f})">{y_label}</text>',
    ]


def _scale(lo, hi, a, b):
    span = hi - lo
    return lambda v: a + (v - lo) / span * (b - a)


def line_chart(title, x_label, y_label, curves):
    """curves: {name: (xs, ys)}; one polyline per named curve."""
    parts = _header(title) + _frame(x_label, y_label)
    all_x = [x for xs, _ in curves.values() for x in xs]
    all_y = [y for _, ys in curves.values() for y in ys]
    xlo, xhi = _axis_range(all_x)
    ylo, yhi = _axis_range(all_y)
    sx = _scale(xlo, xhi, MARGIN, WIDTH - MARGIN)
    sy = _scale(ylo, yhi, HEIGHT - MARGIN, MARGIN)
    for tick in np.linspace(xlo, xhi, 5):
        parts.append(
            f'<text x="{_f(sx(tick))}" y="{HEIGHT - MARGIN + 18}" '
            f'text-anchor="middle">{tick:.3g}</text>'
        )
    for tick in np.linspace(ylo, yhi, 5):
        parts.append(
            f'<text x="{MARGIN - 8}" y="{_f(sy(tick))}" text-anchor="end">{tick:.3g}</text>'
        )
    for i, (name, (xs, ys)) in enumerate(curves.items()):
        color = PALETTE[i % len(PALETTE)]
        points = " ".join(f"{_f(sx(x))},{_f(sy(y))}" for x, y in zip(xs, ys))
        parts.append(f'<polyline points="{points}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        parts.append(
            f'<text x="{WIDTH - MARGIN + 4}" y="{MARGIN + 16 * i + 12}" fill="{color}" '
            f'font-size="10">{name}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def bar_chart(title, y_label, labels, values):
    parts = _header(title) + _frame("", y_label)
    ylo = min(0.0, float(min(values)))
    yhi = max(float(max(values)), 1e-9)
    sy = _scale(ylo, yhi * 1.05, HEIGHT - MARGIN, MARGIN)
    n = len(labels)
    slot = (WIDTH - 2 * MARGIN) / max(n, 1)
    for tick in np.linspace(ylo, yhi, 5):
        parts.append(
            f'<text x="{MARGIN - 8}" y="{_f(sy(tick))}" text-anchor="end">{tick:.3g}</text>'
        )
    for i, (label, value) in enumerate(zip(labels, values)):
        x = MARGIN + i * slot + 0.15 * slot
        y = sy(value)
        parts.append(
            f'<rect x="{_f(x)}" y="{_f(min(y, sy(0)))}" width="{_f(0.7 * slot)}" '
            f'height="{_f(abs(sy(0) - y))}" fill="{PALETTE[i % len(PALETTE)]}"/>'
        )
        cx = x + 0.35 * slot
        parts.append(
            f'<text x="{_f(cx)}" y="{HEIGHT - MARGIN + 14}" text-anchor="end" font-size="9" '
            f'transform="rotate(-40 {_f(cx)} {HEIGHT - MARGIN + 14})">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def heatmap(title, row_labels, col_labels, matrix):
    """matrix[i][j] colored white -> dark blue by magnitude; NaN cells gray."""
    parts = _header(title)
    matrix = np.asarray(matrix, dtype=float)
    finite = matrix[np.isfinite(matrix)]
    vmax = float(finite.max()) if finite.size and finite.max() > 0 else 1.0
    n_rows, n_cols = matrix.shape
    cell_w = (WIDTH - 2 * MARGIN) / max(n_cols, 1)
    cell_h = (HEIGHT - 2 * MARGIN) / max(n_rows, 1)
    for i in range(n_rows):
        for j in range(n_cols):
            v = matrix[i, j]
            if np.isfinite(v):
                frac = max(0.0, min(1.0, v / vmax))
                r = int(255 - 224 * frac)
                g = int(255 - 136 * frac)
                fill = f"rgb({r},{g},255)"
            else:
                fill = "rgb(220,220,220)"
            parts.append(
                f'<rect x="{_f(MARGIN + j * cell_w)}" y="{_f(MARGIN + i * cell_h)}" '
                f'width="{_f(cell_w)}" height="{_f(cell_h)}" fill="{fill}" stroke="white"/>'
            )
    for i, label in enumerate(row_labels):
        parts.append(
            f'<text x="{MARGIN - 6}" y="{_f(MARGIN + (i + 0.6) * cell_h)}" '
            f'text-anchor="end" font-size="10">{label}</text>'
        )
    for j, label in enumerate(col_labels):
        cx = MARGIN + (j + 0.5) * cell_w
        parts.append(
            f'<text x="{_f(cx)}" y="{MARGIN - 6}" text-anchor="start" font-size="10" '
            f'transform="rotate(-45 {_f(cx)} {MARGIN - 6})">{label}</text>'
        )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
