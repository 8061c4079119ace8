"""Plain-text and SVG rendering of aggregates (no plotting dependency)."""
from __future__ import annotations

from .theorems import GATE_DEFAULT

_SVG_HEADER = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}">'


def verification_table(reports, gate: float = GATE_DEFAULT) -> str:
    """One line per checked identity, diagnostics indented underneath."""
    lines = [f"{'case':<24} {'identity':<28} {'check':<26} {'deviation':>12}  status"]
    lines.append("-" * 100)
    for case, report in reports:
        for check, deviation in report.checks.items():
            status = "pass" if deviation < gate else "FAIL"
            lines.append(
                f"{case:<24} {report.name:<28} {check:<26} {deviation:>12.3e}  {status}"
            )
        for key, value in report.diagnostics.items():
            lines.append(f"{'':<24} {'':<28}   {key:<24} {value:>12.3e}")
        for label, flag in report.feasible.items():
            lines.append(f"{'':<24} {'':<28}   {label:<24} {'feasible' if flag else 'infeasible':>12}")
        for note in report.notes:
            lines.append(f"{'':<24} {'':<28}   note: {note}")
    return "\n".join(lines)


def histogram_text(histogram: dict, strategy: str) -> str:
    """Aligned bar rows per factor count."""
    lines = [f"correlations of the first residual component with the first factor ({strategy})"]
    for q in sorted(histogram):
        bins = histogram[q]
        total = sum(count for _, _, count in bins)
        peak = max((count for _, _, count in bins), default=0)
        lines.append("")
        lines.append(f"q = {q} factors ({total} replications)")
        for low, high, count in bins:
            width = 0 if peak == 0 else round(50 * count / peak)
            lines.append(f"[{low:+.2f}, {high:+.2f}) {count:>6d} |{'#' * width}")
    return "\n".join(lines) + "\n"


def histogram_svg(histogram: dict, strategy: str) -> str:
    """Stacked panels of count bars over [-1, 1], one panel per factor count."""
    panel_w, panel_h, margin = 640, 220, 45
    qs = sorted(histogram)
    height = margin + len(qs) * (panel_h + margin)
    parts = [_SVG_HEADER.format(w=panel_w + 2 * margin, h=height)]
    parts.append(
        f'<text x="{margin}" y="20" font-family="monospace" font-size="13">'
        f"r(u1, f1) by factor count ({strategy})</text>"
    )
    for index, q in enumerate(qs):
        bins = histogram[q]
        top = margin + index * (panel_h + margin)
        peak = max((count for _, _, count in bins), default=1) or 1
        bar_w = panel_w / len(bins)
        parts.append(
            f'<text x="{margin}" y="{top - 6}" font-family="monospace" font-size="12">'
            f"q = {q}</text>"
        )
        parts.append(
            f'<line x1="{margin}" y1="{top + panel_h}" x2="{margin + panel_w}" '
            f'y2="{top + panel_h}" stroke="black" stroke-width="1"/>'
        )
        for i, (_low, _high, count) in enumerate(bins):
            bar_h = panel_h * count / peak
            x = margin + i * bar_w
            y = top + panel_h - bar_h
            parts.append(
                f'<rect x="{x:.2f}" y="{y:.2f}" width="{bar_w:.2f}" height="{bar_h:.2f}" '
                f'fill="steelblue" stroke="white" stroke-width="0.5"/>'
            )
        for tick, label in ((0.0, "-1"), (0.5, "0"), (1.0, "1")):
            x = margin + tick * panel_w
            parts.append(
                f'<line x1="{x:.2f}" y1="{top + panel_h}" x2="{x:.2f}" '
                f'y2="{top + panel_h + 5}" stroke="black" stroke-width="1"/>'
            )
            parts.append(
                f'<text x="{x:.2f}" y="{top + panel_h + 18}" font-family="monospace" '
                f'font-size="11" text-anchor="middle">{label}</text>'
            )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"


def rmsc_text(rmsc_by_strategy: dict) -> str:
    """Per-cell table of root mean squared correlations, one column per strategy."""
    strategies = list(rmsc_by_strategy)
    cells = sorted(next(iter(rmsc_by_strategy.values())))
    header = f"{'loading':>8} {'n':>5} {'q':>3}" + "".join(f" {s:>18}" for s in strategies)
    lines = ["root mean squared correlation of the first residual component", header]
    for cell in cells:
        row = f"{cell[0]:>8.2f} {cell[1]:>5d} {cell[2]:>3d}"
        for strategy in strategies:
            row += f" {rmsc_by_strategy[strategy][cell]:>18.4f}"
        lines.append(row)
    return "\n".join(lines) + "\n"


def rmsc_svg(rmsc: dict, strategy: str) -> str:
    """One polyline per factor count across the (loading, n) conditions."""
    cells = sorted(rmsc)
    qs = sorted({cell[2] for cell in cells})
    conditions = sorted({(cell[0], cell[1]) for cell in cells})
    width, height, margin = 640, 300, 55
    parts = [_SVG_HEADER.format(w=width + 2 * margin, h=height + 2 * margin)]
    parts.append(
        f'<text x="{margin}" y="20" font-family="monospace" font-size="13">'
        f"rmsc by condition ({strategy})</text>"
    )
    # frame and a 0..1 value axis
    parts.append(
        f'<rect x="{margin}" y="{margin}" width="{width}" height="{height}" '
        f'fill="none" stroke="black" stroke-width="1"/>'
    )
    for value in (0.0, 0.25, 0.5, 0.75, 1.0):
        y = margin + height * (1.0 - value)
        parts.append(
            f'<line x1="{margin - 4}" y1="{y:.2f}" x2="{margin}" y2="{y:.2f}" '
            f'stroke="black" stroke-width="1"/>'
        )
        parts.append(
            f'<text x="{margin - 8}" y="{y + 4:.2f}" font-family="monospace" font-size="11" '
            f'text-anchor="end">{value:.2f}</text>'
        )
    step = width / max(1, len(conditions) - 1) if len(conditions) > 1 else 0.0
    colors = {qs[i]: color for i, color in zip(range(len(qs)), ("steelblue", "firebrick", "seagreen"))}
    for q in qs:
        points = []
        for i, (loading, n) in enumerate(conditions):
            value = rmsc.get((loading, n, q))
            if value is None:
                continue
            x = margin + (i * step if len(conditions) > 1 else width / 2)
            y = margin + height * (1.0 - value)
            points.append((x, y))
        path = " ".join(f"{x:.2f},{y:.2f}" for x, y in points)
        color = colors.get(q, "black")
        parts.append(
            f'<polyline points="{path}" fill="none" stroke="{color}" stroke-width="2"/>'
        )
        for x, y in points:
            parts.append(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="3" fill="{color}"/>')
        if points:
            parts.append(
                f'<text x="{points[-1][0] + 6:.2f}" y="{points[-1][1]:.2f}" '
                f'font-family="monospace" font-size="12" fill="{color}">q={q}</text>'
            )
    for i, (loading, n) in enumerate(conditions):
        x = margin + (i * step if len(conditions) > 1 else width / 2)
        parts.append(
            f'<text x="{x:.2f}" y="{margin + height + 16}" font-family="monospace" '
            f'font-size="10" text-anchor="middle">{loading:g}/{n}</text>'
        )
    parts.append(
        f'<text x="{margin + width / 2:.2f}" y="{margin + height + 34}" '
        f'font-family="monospace" font-size="11" text-anchor="middle">loading / sample size</text>'
    )
    parts.append("</svg>")
    return "\n".join(parts) + "\n"
