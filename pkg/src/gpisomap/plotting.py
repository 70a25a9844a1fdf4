"""Minimal dependency-free SVG output: polylines and scatter plots."""

from __future__ import annotations

from typing import Optional, Sequence

import numpy as np

PALETTE = ["#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf"]

W, H, PAD = 640, 400, 48


def _fmt(x):
    return f"{x:.2f}"


def _scale(vals, lo, hi, out_lo, out_hi):
    span = hi - lo if hi > lo else 1.0
    return out_lo + (np.asarray(vals, dtype=float) - lo) / span * (out_hi - out_lo)


def _frame(title, xlabel, ylabel, xlim, ylim):
    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" viewBox="0 0 {W} {H}">',
        f'<rect x="0" y="0" width="{W}" height="{H}" fill="white"/>',
        f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" fill="none" stroke="black"/>',
        f'<text x="{W / 2}" y="{PAD / 2}" text-anchor="middle" font-size="14">{title}</text>',
        f'<text x="{W / 2}" y="{H - 10}" text-anchor="middle" font-size="12">{xlabel}</text>',
        f'<text x="14" y="{H / 2}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {H / 2})">{ylabel}</text>',
        f'<text x="{PAD}" y="{H - PAD + 14}" font-size="10">{xlim[0]:.4g}</text>',
        f'<text x="{W - PAD}" y="{H - PAD + 14}" text-anchor="end" font-size="10">{xlim[1]:.4g}</text>',
        f'<text x="{PAD - 4}" y="{H - PAD}" text-anchor="end" font-size="10">{ylim[0]:.4g}</text>',
        f'<text x="{PAD - 4}" y="{PAD + 10}" text-anchor="end" font-size="10">{ylim[1]:.4g}</text>',
    ]
    return parts


def _limits(vals):
    vals = np.asarray(vals, dtype=float)
    vals = vals[np.isfinite(vals)]
    if vals.size == 0:
        return 0.0, 1.0
    lo, hi = float(vals.min()), float(vals.max())
    if hi == lo:
        hi = lo + 1.0
    return lo, hi


def line_plot(path, y_series: Sequence, labels: Sequence[str], title: str = "", xlabel: str = "",
              ylabel: str = "", hline: Optional[float] = None, vlines: Sequence[float] = (),
              scatter: Optional[np.ndarray] = None):
    """Write polylines (one per series, x = index) with an optional horizontal threshold line.

    ``scatter`` draws the raw values as faint dots beneath the lines.
    """
    all_y = [np.asarray(y, dtype=float) for y in y_series]
    pool = np.concatenate(all_y + ([np.asarray(scatter, float)] if scatter is not None else [])
                          + ([np.array([hline])] if hline is not None else []))
    n = max((len(y) for y in all_y), default=1)
    xlim, ylim = (0.0, float(max(n - 1, 1))), _limits(pool)
    parts = _frame(title, xlabel, ylabel, xlim, ylim)
    sx = lambda x: _scale(x, *xlim, PAD, W - PAD)
    sy = lambda y: _scale(y, *ylim, H - PAD, PAD)
    if scatter is not None:
        xs, ys = sx(np.arange(len(scatter))), sy(scatter)
        parts += [f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="1" fill="#999999" fill-opacity="0.4"/>'
                  for a, b in zip(xs, ys)]
    for i, (y, lab) in enumerate(zip(all_y, labels)):
        pts = " ".join(f"{_fmt(a)},{_fmt(b)}" for a, b in zip(sx(np.arange(len(y))), sy(y)))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{PALETTE[i % len(PALETTE)]}" stroke-width="1.5"/>')
        parts.append(f'<text x="{W - PAD - 4}" y="{PAD + 14 * (i + 1)}" text-anchor="end" font-size="11" '
                     f'fill="{PALETTE[i % len(PALETTE)]}">{lab}</text>')
    if hline is not None:
        y0 = _fmt(float(sy(hline)))
        parts.append(f'<line x1="{PAD}" y1="{y0}" x2="{W - PAD}" y2="{y0}" stroke="red" stroke-dasharray="6,4"/>')
    for v in vlines:
        x0 = _fmt(float(sx(v)))
        parts.append(f'<line x1="{x0}" y1="{PAD}" x2="{x0}" y2="{H - PAD}" stroke="black" stroke-dasharray="2,3"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")


def scatter_plot(path, xy, groups=None, title: str = "", xlabel: str = "x1", ylabel: str = "x2"):
    """Write a 2-D scatter coloured by integer ``groups``."""
    xy = np.asarray(xy, dtype=float)
    groups = np.zeros(len(xy), dtype=int) if groups is None else np.asarray(groups)
    xlim, ylim = _limits(xy[:, 0] if len(xy) else []), _limits(xy[:, 1] if len(xy) else [])
    parts = _frame(title, xlabel, ylabel, xlim, ylim)
    xs = _scale(xy[:, 0], *xlim, PAD, W - PAD) if len(xy) else []
    ys = _scale(xy[:, 1], *ylim, H - PAD, PAD) if len(xy) else []
    for a, b, g in zip(xs, ys, groups):
        colour = "#000000" if g < 0 else PALETTE[int(g) % len(PALETTE)]
        parts.append(f'<circle cx="{_fmt(a)}" cy="{_fmt(b)}" r="1.5" fill="{colour}"/>')
    parts.append("</svg>")
    with open(path, "w") as fh:
        fh.write("\n".join(parts) + "\n")
