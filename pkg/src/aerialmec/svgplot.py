"""Static line charts from the results CSV as hand-built SVG text.

One polyline per approach over the sweep values, one whisker line per
aggregate point (mean plus/minus one standard error). All coordinates are
formatted to fixed precision, so the same CSV always yields the same bytes.
"""

from __future__ import annotations

import math

from .metrics import read_csv

METRIC_COLUMNS = {"acd": ("acd_s", "average completion delay (s)"),
                  "apr": ("apr_cps", "average processing rate (cycles/s)"),
                  "aschr": ("aschr", "average service caching hit ratio")}

PALETTE = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd",
           "#8c564b", "#e377c2", "#7f7f7f"]

W, H = 640.0, 420.0
ML, MR, MT, MB = 72.0, 24.0, 24.0, 56.0


class UsageError(ValueError):
    """Bad invocation: unknown metric, empty input, malformed CSV."""


def _ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10.0 ** math.floor(math.log10(raw))
    for mult in (1.0, 2.0, 2.5, 5.0, 10.0):
        if raw <= mult * mag:
            step = mult * mag
            break
    start = math.ceil(lo / step) * step
    out = []
    t = start
    while t <= hi + 1e-12 * step:
        out.append(t)
        t += step
    return out


def emit_plot(csv_path, metric: str, out_path) -> None:
    """Render one metric from a results CSV to an SVG file."""
    if metric not in METRIC_COLUMNS:
        raise UsageError(f"unknown metric {metric!r}; "
                         f"choose from {sorted(METRIC_COLUMNS)}")
    column, ylabel = METRIC_COLUMNS[metric]
    try:
        _, aggregates = read_csv(csv_path)
    except (OSError, ValueError) as exc:
        raise UsageError(f"cannot read results: {exc}") from exc

    series: dict[str, dict[float, list[float | None]]] = {}
    for row in aggregates:
        val = getattr(row, column)
        pt = series.setdefault(row.approach, {}).setdefault(
            row.sweep_value, [None, None])
        pt[0 if row.kind == "mean" else 1] = val
    series = {ap: {x: p for x, p in pts.items() if p[0] is not None}
              for ap, pts in series.items()}
    series = {ap: pts for ap, pts in series.items() if pts}
    if not series:
        raise UsageError("no aggregate rows to plot; run a sweep first")

    xs = sorted({x for pts in series.values() for x in pts})
    ylo, yhi = math.inf, -math.inf
    for pts in series.values():
        for m, e in pts.values():
            e = e or 0.0
            ylo = min(ylo, m - e)
            yhi = max(yhi, m + e)
    pad = 0.05 * (yhi - ylo) if yhi > ylo else max(abs(yhi), 1.0) * 0.05
    ylo, yhi = ylo - pad, yhi + pad
    xlo, xhi = min(xs), max(xs)
    if xhi <= xlo:
        xlo, xhi = xlo - 0.5, xhi + 0.5

    def px(x):
        return ML + (x - xlo) / (xhi - xlo) * (W - ML - MR)

    def py(y):
        return H - MB - (y - ylo) / (yhi - ylo) * (H - MT - MB)

    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{W:.0f}" '
           f'height="{H:.0f}" viewBox="0 0 {W:.0f} {H:.0f}">',
           f'<rect width="{W:.0f}" height="{H:.0f}" fill="white"/>',
           f'<line x1="{ML:.2f}" y1="{H - MB:.2f}" x2="{W - MR:.2f}" '
           f'y2="{H - MB:.2f}" stroke="black" stroke-width="1"/>',
           f'<line x1="{ML:.2f}" y1="{MT:.2f}" x2="{ML:.2f}" '
           f'y2="{H - MB:.2f}" stroke="black" stroke-width="1"/>']
    for t in _ticks(xlo, xhi):
        out.append(f'<line x1="{px(t):.2f}" y1="{H - MB:.2f}" '
                   f'x2="{px(t):.2f}" y2="{H - MB + 5:.2f}" stroke="black"/>')
        out.append(f'<text x="{px(t):.2f}" y="{H - MB + 18:.2f}" '
                   f'font-size="11" text-anchor="middle">{t:g}</text>')
    for t in _ticks(ylo, yhi):
        out.append(f'<line x1="{ML - 5:.2f}" y1="{py(t):.2f}" '
                   f'x2="{ML:.2f}" y2="{py(t):.2f}" stroke="black"/>')
        out.append(f'<text x="{ML - 8:.2f}" y="{py(t) + 4:.2f}" '
                   f'font-size="11" text-anchor="end">{t:.4g}</text>')
    out.append(f'<text x="{(ML + W - MR) / 2:.2f}" y="{H - 14:.2f}" '
               f'font-size="12" text-anchor="middle">sweep value</text>')
    out.append(f'<text x="16" y="{(MT + H - MB) / 2:.2f}" font-size="12" '
               f'text-anchor="middle" transform="rotate(-90 16 '
               f'{(MT + H - MB) / 2:.2f})">{ylabel}</text>')

    for si, ap in enumerate(sorted(series)):
        color = PALETTE[si % len(PALETTE)]
        pts = series[ap]
        coords = " ".join(f"{px(x):.2f},{py(pts[x][0]):.2f}"
                          for x in sorted(pts))
        out.append(f'<polyline class="series" fill="none" stroke="{color}" '
                   f'stroke-width="1.8" points="{coords}"/>')
        for x in sorted(pts):
            m, e = pts[x]
            e = e or 0.0
            out.append(f'<line class="whisker" x1="{px(x):.2f}" '
                       f'y1="{py(m - e):.2f}" x2="{px(x):.2f}" '
                       f'y2="{py(m + e):.2f}" stroke="{color}" '
                       f'stroke-width="1.2"/>')
            out.append(f'<circle cx="{px(x):.2f}" cy="{py(m):.2f}" r="2.6" '
                       f'fill="{color}"/>')
        out.append(f'<rect x="{W - MR - 130:.2f}" '
                   f'y="{MT + 6 + 16 * si:.2f}" width="14" height="4" '
                   f'fill="{color}"/>')
        out.append(f'<text x="{W - MR - 110:.2f}" '
                   f'y="{MT + 11 + 16 * si:.2f}" font-size="11">{ap}</text>')
    out.append("</svg>")
    with open(out_path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write("\n".join(out) + "\n")
