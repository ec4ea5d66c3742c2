"""Minimal deterministic SVG line charts.

Pure string assembly, no plotting dependency: same inputs give identical
bytes, which keeps output files diffable in tests.  Coordinates are fixed
to two decimals and tick labels to six significant digits.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import UsageError

PALETTE = (
    "#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
    "#8c564b", "#17becf", "#7f7f7f",
)

__all__ = ["LineSeries", "line_chart", "PALETTE"]


@dataclass(frozen=True)
class LineSeries:
    label: str
    x: tuple[float, ...]
    y: tuple[float, ...]
    dashed: bool = False


def _ticks(lo: float, hi: float, target: int = 5) -> list[float]:
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / target
    mag = 10.0 ** np.floor(np.log10(raw))
    step = min((m * mag for m in (1.0, 2.0, 5.0, 10.0)),
               key=lambda s: abs(s - raw))
    first = np.ceil(lo / step) * step
    out = []
    v = first
    while v <= hi + 1e-9 * step:
        out.append(float(v))
        v += step
    return out


def _fmt(v: float) -> str:
    return f"{v:.2f}"


def _label(v: float) -> str:
    return f"{v:.6g}"


def line_chart(
    series: list[LineSeries],
    *,
    title: str,
    xlabel: str,
    ylabel: str,
    width: int = 720,
    height: int = 480,
    version: str = "",
) -> str:
    """Render labelled polylines with axes, ticks, and a legend."""
    if not series or any(len(s.x) != len(s.y) or len(s.x) == 0 for s in series):
        raise UsageError("each series needs equal-length, non-empty x and y")
    xs = np.concatenate([np.asarray(s.x, dtype=float) for s in series])
    ys = np.concatenate([np.asarray(s.y, dtype=float) for s in series])
    if not (np.all(np.isfinite(xs)) and np.all(np.isfinite(ys))):
        raise UsageError("series values must be finite")
    x_lo, x_hi = float(xs.min()), float(xs.max())
    y_lo, y_hi = float(ys.min()), float(ys.max())
    if x_hi == x_lo:
        x_lo, x_hi = x_lo - 0.5, x_hi + 0.5
    if y_hi == y_lo:
        y_lo, y_hi = y_lo - 0.5, y_hi + 0.5
    pad_y = 0.05 * (y_hi - y_lo)
    y_lo, y_hi = y_lo - pad_y, y_hi + pad_y

    left, right, top, bottom = 62, 160, 40, 48
    pw, ph = width - left - right, height - top - bottom

    def sx(v: float) -> float:
        return left + (v - x_lo) / (x_hi - x_lo) * pw

    def sy(v: float) -> float:
        return top + (y_hi - v) / (y_hi - y_lo) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" '
        f'height="{height}" viewBox="0 0 {width} {height}">',
        f"<!-- {version} -->" if version else "",
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{left}" y="24" font-size="15" font-family="sans-serif" '
        f'font-weight="bold">{title}</text>',
        f'<line x1="{left}" y1="{top}" x2="{left}" y2="{top + ph}" '
        'stroke="black" stroke-width="1"/>',
        f'<line x1="{left}" y1="{top + ph}" x2="{left + pw}" y2="{top + ph}" '
        'stroke="black" stroke-width="1"/>',
    ]
    for tx in _ticks(x_lo, x_hi):
        px = _fmt(sx(tx))
        out.append(
            f'<line x1="{px}" y1="{top + ph}" x2="{px}" y2="{top + ph + 4}" '
            'stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{px}" y="{top + ph + 18}" font-size="11" '
            f'font-family="sans-serif" text-anchor="middle">{_label(tx)}</text>'
        )
    for ty in _ticks(y_lo, y_hi):
        py = _fmt(sy(ty))
        out.append(
            f'<line x1="{left - 4}" y1="{py}" x2="{left}" y2="{py}" '
            'stroke="black" stroke-width="1"/>'
        )
        out.append(
            f'<text x="{left - 8}" y="{py}" font-size="11" '
            f'font-family="sans-serif" text-anchor="end" dy="4">{_label(ty)}</text>'
        )
    out.append(
        f'<text x="{left + pw / 2:.0f}" y="{height - 8}" font-size="12" '
        f'font-family="sans-serif" text-anchor="middle">{xlabel}</text>'
    )
    out.append(
        f'<text x="16" y="{top + ph / 2:.0f}" font-size="12" '
        f'font-family="sans-serif" text-anchor="middle" '
        f'transform="rotate(-90 16 {top + ph / 2:.0f})">{ylabel}</text>'
    )
    for i, s in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join(
            f"{_fmt(sx(float(px)))},{_fmt(sy(float(py)))}"
            for px, py in zip(s.x, s.y)
        )
        dash = ' stroke-dasharray="6 4"' if s.dashed else ""
        out.append(
            f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="1.5"{dash}/>'
        )
        ly = top + 14 + 18 * i
        out.append(
            f'<line x1="{left + pw + 10}" y1="{ly}" x2="{left + pw + 34}" '
            f'y2="{ly}" stroke="{color}" stroke-width="1.5"{dash}/>'
        )
        out.append(
            f'<text x="{left + pw + 40}" y="{ly}" font-size="11" '
            f'font-family="sans-serif" dy="4">{s.label}</text>'
        )
    out.append("</svg>")
    return "\n".join(line for line in out if line) + "\n"
