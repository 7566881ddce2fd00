"""Sweep figures: a dependency-free SVG writer plus matplotlib PNG renders.

The SVG path is the stable machine-checkable artifact (one ``<polyline>``
per filter variant, log-y ARMSE against the sweep variable, breakdown
markers); the PNG is the human-friendly companion rendered with matplotlib.
"""

from __future__ import annotations

import math
from pathlib import Path
from xml.sax.saxutils import escape

from .bench import ResultRow

__all__ = ["write_sweep_svg", "write_sweep_png"]

_WIDTH, _HEIGHT = 760, 480
_LEFT, _RIGHT, _TOP, _BOTTOM = 70, 220, 30, 55
_PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b",
            "#17becf", "#7f7f7f"]


def _group_rows(rows: list[ResultRow], variable: str):
    groups: dict[str, list[tuple[float, float, bool]]] = {}
    for row in rows:
        x = row.delta_s if variable == "delta_s" else row.delta_ill
        if x is None:
            continue
        groups.setdefault(row.label, []).append((float(x), row.armse_p, row.failed))
    for pts in groups.values():
        pts.sort(key=lambda p: p[0])
    return groups


def _axes(groups, variable):
    log_x = variable == "delta_ill"
    xs = [x for pts in groups.values() for (x, _, _) in pts]
    ys = [y for pts in groups.values() for (_, y, failed) in pts
          if not failed and math.isfinite(y) and y > 0.0]
    if not xs:
        xs = [1.0, 10.0]
    if not ys:
        ys = [1.0, 1000.0]
    fx = (lambda v: math.log10(v)) if log_x else (lambda v: v)
    x_lo, x_hi = min(fx(x) for x in xs), max(fx(x) for x in xs)
    y_lo = math.floor(math.log10(min(ys)))
    y_hi = math.ceil(math.log10(max(ys)))
    if x_hi == x_lo:
        x_hi = x_lo + 1.0
    if y_hi == y_lo:
        y_hi = y_lo + 1
    return log_x, fx, x_lo, x_hi, float(y_lo), float(y_hi)


def write_sweep_svg(path: str | Path, rows: list[ResultRow], variable: str,
                    breakdown: dict[str, float | None] | None = None) -> Path:
    """ARMSE_p (log y) against the sweep variable, one polyline per variant.

    Failed cells are dropped from the polyline; a variant's breakdown value
    (largest failing x) is marked with a cross on the axis line.
    """
    path = Path(path)
    groups = _group_rows(rows, variable)
    log_x, fx, x_lo, x_hi, y_lo, y_hi = _axes(groups, variable)
    plot_w = _WIDTH - _LEFT - _RIGHT
    plot_h = _HEIGHT - _TOP - _BOTTOM

    def to_px(x: float, y: float) -> tuple[float, float]:
        px = _LEFT + (fx(x) - x_lo) / (x_hi - x_lo) * plot_w
        py = _TOP + (y_hi - math.log10(y)) / (y_hi - y_lo) * plot_h
        return px, py

    parts = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_WIDTH}" '
        f'height="{_HEIGHT}" viewBox="0 0 {_WIDTH} {_HEIGHT}">',
        f'<rect width="{_WIDTH}" height="{_HEIGHT}" fill="white"/>',
        f'<line x1="{_LEFT}" y1="{_TOP + plot_h}" x2="{_LEFT + plot_w}" '
        f'y2="{_TOP + plot_h}" stroke="black"/>',
        f'<line x1="{_LEFT}" y1="{_TOP}" x2="{_LEFT}" y2="{_TOP + plot_h}" '
        f'stroke="black"/>',
        f'<text x="{_LEFT + plot_w / 2:.1f}" y="{_HEIGHT - 12}" '
        f'text-anchor="middle" font-size="13">{escape(variable)}</text>',
        f'<text x="16" y="{_TOP + plot_h / 2:.1f}" font-size="13" '
        f'transform="rotate(-90 16 {_TOP + plot_h / 2:.1f})" '
        f'text-anchor="middle">ARMSE_p (m)</text>',
    ]
    for exp in range(int(y_lo), int(y_hi) + 1):
        _, py = to_px(10 ** x_lo if log_x else x_lo, 10.0 ** exp)
        parts.append(f'<line x1="{_LEFT - 4}" y1="{py:.1f}" x2="{_LEFT}" '
                     f'y2="{py:.1f}" stroke="black"/>')
        parts.append(f'<text x="{_LEFT - 8}" y="{py + 4:.1f}" text-anchor="end" '
                     f'font-size="11">1e{exp}</text>')
    tick_xs = sorted({x for pts in groups.values() for (x, _, _) in pts})
    for x in tick_xs:
        px = _LEFT + (fx(x) - x_lo) / (x_hi - x_lo) * plot_w
        parts.append(f'<line x1="{px:.1f}" y1="{_TOP + plot_h}" x2="{px:.1f}" '
                     f'y2="{_TOP + plot_h + 4}" stroke="black"/>')
        label = f"{x:g}"
        parts.append(f'<text x="{px:.1f}" y="{_TOP + plot_h + 18}" '
                     f'text-anchor="middle" font-size="10">{label}</text>')

    for idx, (label, pts) in enumerate(sorted(groups.items())):
        color = _PALETTE[idx % len(_PALETTE)]
        good = [to_px(x, y) for (x, y, failed) in pts
                if not failed and math.isfinite(y) and y > 0.0]
        coords = " ".join(f"{px:.2f},{py:.2f}" for px, py in good)
        parts.append(f'<polyline fill="none" stroke="{color}" stroke-width="1.6" '
                     f'points="{coords}"/>')
        for px, py in good:
            parts.append(f'<circle cx="{px:.2f}" cy="{py:.2f}" r="2.6" '
                         f'fill="{color}"/>')
        if breakdown and breakdown.get(label) is not None:
            bx = _LEFT + (fx(breakdown[label]) - x_lo) / (x_hi - x_lo) * plot_w
            by = _TOP + plot_h
            parts.append(
                f'<path d="M {bx - 5:.1f} {by - 5:.1f} L {bx + 5:.1f} {by + 5:.1f} '
                f'M {bx - 5:.1f} {by + 5:.1f} L {bx + 5:.1f} {by - 5:.1f}" '
                f'stroke="{color}" stroke-width="2" fill="none"/>')
        ly = _TOP + 16 * (idx + 1)
        lx = _LEFT + plot_w + 14
        parts.append(f'<line x1="{lx}" y1="{ly - 4}" x2="{lx + 22}" y2="{ly - 4}" '
                     f'stroke="{color}" stroke-width="2"/>')
        parts.append(f'<text x="{lx + 28}" y="{ly}" font-size="11">'
                     f'{escape(label)}</text>')
    parts.append("</svg>")
    path.write_text("\n".join(parts) + "\n")
    return path


def write_sweep_png(path: str | Path, rows: list[ResultRow], variable: str,
                    breakdown: dict[str, float | None] | None = None) -> Path:
    """Matplotlib companion figure for the same sweep."""
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    path = Path(path)
    groups = _group_rows(rows, variable)
    fig, ax = plt.subplots(figsize=(7.2, 4.6))
    for idx, (label, pts) in enumerate(sorted(groups.items())):
        color = _PALETTE[idx % len(_PALETTE)]
        xs = [x for (x, y, failed) in pts if not failed and math.isfinite(y)]
        ys = [y for (x, y, failed) in pts if not failed and math.isfinite(y)]
        ax.plot(xs, ys, marker="o", ms=3.5, color=color, label=label)
        if breakdown and breakdown.get(label) is not None:
            ax.axvline(breakdown[label], color=color, ls=":", lw=1.0, alpha=0.6)
    ax.set_yscale("log")
    if variable == "delta_ill":
        ax.set_xscale("log")
        ax.invert_xaxis()
    ax.set_xlabel(variable)
    ax.set_ylabel("ARMSE_p (m)")
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8, loc="best")
    fig.tight_layout()
    fig.savefig(path, dpi=130)
    plt.close(fig)
    return path
