"""Self-contained SVG plots: FROC curves and the sensitivity-vs-volume chart.

No plotting dependency: the emitters build deterministic SVG strings, so
outputs are diffable in tests (identical up to the version comment line).
"""

from __future__ import annotations

from dataclasses import dataclass

from . import __version__
from .analysis import FrocCurve, StratumPoint

_WIDTH, _HEIGHT = 720, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 70, 30, 55
_PLOT_W = _WIDTH - _LEFT - _RIGHT
_PLOT_H = _HEIGHT - _TOP - _BOTTOM

_PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b")


@dataclass(frozen=True)
class FrocSeries:
    label: str
    curve: FrocCurve
    dashed: bool = False


def _fmt(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".") if x == x else "nan"


def _header(title: str) -> list[str]:
    return [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f"<!-- lesioneval {__version__} -->",
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" height="{_HEIGHT}" '
        f'viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<text x="{_WIDTH / 2:.1f}" y="20" text-anchor="middle" '
        f'font-family="sans-serif" font-size="14">{title}</text>',
    ]


def _x_px(x: float, xmax: float) -> float:
    return _LEFT + (x / xmax) * _PLOT_W if xmax > 0 else _LEFT


def _y_px(y: float, ymax: float) -> float:
    return _TOP + _PLOT_H - (y / ymax) * _PLOT_H if ymax > 0 else _TOP + _PLOT_H


def _axes(xmax: float, ymax: float, xlabel: str, ylabel: str,
          y2max: float | None = None, y2label: str = "") -> list[str]:
    parts = [
        f'<line x1="{_LEFT}" y1="{_TOP + _PLOT_H}" x2="{_LEFT + _PLOT_W}" '
        f'y2="{_TOP + _PLOT_H}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + _PLOT_H}" stroke="black"/>',
        f'<text x="{_LEFT + _PLOT_W / 2:.1f}" y="{_HEIGHT - 12}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12">{xlabel}</text>',
        f'<text x="18" y="{_TOP + _PLOT_H / 2:.1f}" text-anchor="middle" '
        f'font-family="sans-serif" font-size="12" '
        f'transform="rotate(-90 18 {_TOP + _PLOT_H / 2:.1f})">{ylabel}</text>',
    ]
    for i in range(6):
        frac = i / 5
        x = _LEFT + frac * _PLOT_W
        y = _TOP + _PLOT_H - frac * _PLOT_H
        parts.append(f'<line x1="{x:.1f}" y1="{_TOP + _PLOT_H}" x2="{x:.1f}" '
                     f'y2="{_TOP + _PLOT_H + 4}" stroke="black"/>')
        parts.append(f'<text x="{x:.1f}" y="{_TOP + _PLOT_H + 18}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="11">{_fmt(frac * xmax)}</text>')
        parts.append(f'<line x1="{_LEFT - 4}" y1="{y:.1f}" x2="{_LEFT}" y2="{y:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_LEFT - 8}" y="{y + 4:.1f}" text-anchor="end" '
                     f'font-family="sans-serif" font-size="11">{_fmt(frac * ymax)}</text>')
        if y2max is not None:
            parts.append(f'<text x="{_LEFT + _PLOT_W + 8}" y="{y + 4:.1f}" text-anchor="start" '
                         f'font-family="sans-serif" font-size="11">{_fmt(frac * y2max)}</text>')
    if y2max is not None:
        parts.append(f'<line x1="{_LEFT + _PLOT_W}" y1="{_TOP}" x2="{_LEFT + _PLOT_W}" '
                     f'y2="{_TOP + _PLOT_H}" stroke="black"/>')
        parts.append(f'<text x="{_WIDTH - 14}" y="{_TOP + _PLOT_H / 2:.1f}" text-anchor="middle" '
                     f'font-family="sans-serif" font-size="12" '
                     f'transform="rotate(90 {_WIDTH - 14} {_TOP + _PLOT_H / 2:.1f})">{y2label}</text>')
    return parts


def _polyline(points_px: list[tuple[float, float]], color: str, dashed: bool) -> str:
    coords = " ".join(f"{x:.2f},{y:.2f}" for x, y in points_px)
    dash = ' stroke-dasharray="8,5"' if dashed else ""
    return f'<polyline fill="none" stroke="{color}" stroke-width="2"{dash} points="{coords}"/>'


def froc_svg(series: list[FrocSeries], title: str = "FROC") -> str:
    """One plot with every series drawn to its own FPPI limit; the legend
    carries the piecewise-linear AUC values."""
    xmax = max((s.curve.fppi_limit for s in series), default=1.0)
    parts = _header(title)
    parts += _axes(xmax, 1.0, "false positives per image", "sensitivity")
    legends = []
    for idx, s in enumerate(series):
        color = _PALETTE[idx % len(_PALETTE)]
        pts = list(s.curve.points)
        if pts:
            extended = [(0.0, pts[0][1])] + pts
            if extended[-1][0] < s.curve.fppi_limit:
                extended.append((s.curve.fppi_limit, extended[-1][1]))
            px = [(_x_px(x, xmax), _y_px(y, 1.0)) for x, y in extended]
            parts.append(_polyline(px, color, s.dashed))
        legends.append((f"{s.label} (AUC={s.curve.auc:.2f})", color, s.dashed))
    for i, (text, color, dashed) in enumerate(legends):
        y = _TOP + 16 + i * 18
        x0 = _LEFT + _PLOT_W - 190
        dash = ' stroke-dasharray="8,5"' if dashed else ""
        parts.append(f'<line x1="{x0}" y1="{y - 4}" x2="{x0 + 28}" y2="{y - 4}" '
                     f'stroke="{color}" stroke-width="2"{dash}/>')
        parts.append(f'<text x="{x0 + 34}" y="{y}" font-family="sans-serif" '
                     f'font-size="12">{text}</text>')
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def volume_curve_svg(rows: list[StratumPoint], title: str = "Detection vs lesion volume") -> str:
    """Sensitivity (solid, left axis) and FPPI (dashed, right axis) against the
    minimum lesion volume, over a white histogram of retained reference
    lesion counts."""
    if not rows:
        raise ValueError("volume_curve_svg needs at least one row")
    xmax = max(r.min_ml for r in rows) or 1.0
    fmax = max((r.fppi for r in rows), default=0.0) or 1.0
    cmax = max((r.gt_lesion_count for r in rows), default=0) or 1
    parts = _header(title)
    # histogram first so the curves draw on top
    for i, row in enumerate(rows):
        x0 = _x_px(row.min_ml, xmax)
        x1 = _x_px(rows[i + 1].min_ml, xmax) if i + 1 < len(rows) else _LEFT + _PLOT_W
        h = (row.gt_lesion_count / cmax) * _PLOT_H
        parts.append(f'<rect x="{x0:.2f}" y="{_TOP + _PLOT_H - h:.2f}" '
                     f'width="{max(x1 - x0, 0.0):.2f}" height="{h:.2f}" '
                     f'fill="white" stroke="#999999"/>')
    parts += _axes(xmax, 1.0, "minimum lesion volume (ml)", "sensitivity",
                   y2max=fmax, y2label="false positives per image")
    sens_px = [(_x_px(r.min_ml, xmax), _y_px(r.sensitivity, 1.0))
               for r in rows if r.sensitivity is not None]
    if sens_px:
        parts.append(_polyline(sens_px, _PALETTE[0], dashed=False))
    fppi_px = [(_x_px(r.min_ml, xmax), _y_px(r.fppi, fmax)) for r in rows]
    parts.append(_polyline(fppi_px, _PALETTE[1], dashed=True))
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
