"""Static SVG rendering of the enhanced time series plot, study line charts
and rank curves.

Output is a pure function of the inputs: coordinates are printed with a
fixed number of decimals and elements are emitted in a fixed order.
"""
from dataclasses import dataclass
from xml.sax.saxutils import escape

import numpy as np

from . import style


@dataclass(frozen=True)
class Geometry:
    width: float = 900.0
    panel_height: float = 120.0
    strip_height: float = 40.0
    margin_left: float = 60.0
    margin_right: float = 20.0
    margin_top: float = 30.0
    margin_bottom: float = 30.0
    gap: float = 12.0
    marker: float = 3.5

    def __post_init__(self):
        if self.width <= 0 or self.panel_height <= 0 or self.strip_height <= 0:
            raise ValueError("SVG geometry must have positive width and heights")
        if self.width <= self.margin_left + self.margin_right:
            raise ValueError("SVG width leaves no room for the plot area")


def _f(x):
    return "%.2f" % x


def _header(width, height, comment=None, title=None):
    out = ['<?xml version="1.0" encoding="UTF-8" standalone="no"?>']
    if comment:
        out.append("<!-- " + comment.replace("--", "- -") + " -->")
    out.append(f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" '
               f'width="{_f(width)}" height="{_f(height)}" '
               f'viewBox="0 0 {_f(width)} {_f(height)}" font-family="{style.FONT}" font-size="10">')
    if title:
        out.append(f"<title>{escape(title)}</title>")
    out.append(f'<rect x="0" y="0" width="{_f(width)}" height="{_f(height)}" fill="#ffffff"/>')
    return out


def _metadata(meta):
    if not meta:
        return []
    return ["<metadata>" + escape(meta) + "</metadata>"]


class _Axis:
    """Affine map from data range to pixel range."""

    def __init__(self, lo, hi, p0, p1):
        if not np.isfinite(lo) or not np.isfinite(hi) or hi <= lo:
            mid = 0.0 if not np.isfinite(lo) else lo
            lo, hi = mid - 1.0, mid + 1.0
        self.lo, self.hi, self.p0, self.p1 = lo, hi, p0, p1

    def __call__(self, v):
        return self.p0 + (v - self.lo) / (self.hi - self.lo) * (self.p1 - self.p0)


def _polyline(xs, ys, color, width=1.0, dash=None):
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
    extra = f' stroke-dasharray="{dash}"' if dash else ""
    return (f'<polyline points="{pts}" fill="none" stroke="{color}" '
            f'stroke-width="{_f(width)}"{extra}/>')


def _frame(x0, y0, x1, y1, label=None):
    out = [f'<rect x="{_f(x0)}" y="{_f(y0)}" width="{_f(x1 - x0)}" height="{_f(y1 - y0)}" '
           f'fill="none" stroke="{style.AXIS}" stroke-width="0.75"/>']
    if label is not None:
        out.append(f'<text x="{_f(x0 - 6)}" y="{_f((y0 + y1) / 2)}" text-anchor="end" '
                   f'dominant-baseline="middle">{escape(str(label))}</text>')
    return out


def _ticks(axis_y, x0, lo, hi):
    out = []
    for v in (lo, hi):
        y = axis_y(v)
        out.append(f'<text x="{_f(x0 - 3)}" y="{_f(y)}" text-anchor="end" font-size="8" '
                   f'dominant-baseline="middle">{"%.3g" % v}</text>')
    return out


def emit_svg(model, geometry=None, comment=None, metadata=None):
    """Render a :class:`~rodessa.detect.PlotModel` as an SVG 1.1 document.

    Layout, top to bottom: a strip of case weights (grey circles, flagged
    cases filled black), then one panel per series with raw values (colored
    circles by cell weight, flagged cells as solid squares), the
    reconstruction as a black line, casewise outliers as dashed vertical
    lines across all panels and optional forecasts as triangles.
    """
    g = geometry or Geometry()
    N, p, h = model.N, model.p, model.horizon
    height = (g.margin_top + g.strip_height + g.gap + max(p, 0) * (g.panel_height + g.gap)
              + g.margin_bottom)
    x0, x1 = g.margin_left, g.width - g.margin_right
    out = _header(g.width, height, comment, "enhanced time series plot")
    out += _metadata(metadata)

    total = max(N + h, 1)
    tx = _Axis(0.5, total + 0.5, x0, x1)

    # case-weight strip
    sy0 = g.margin_top
    sy1 = sy0 + g.strip_height
    out += _frame(x0, sy0, x1, sy1, "case")
    wy = _Axis(0.0, 1.0, sy1 - 4, sy0 + 4)
    bottom = sy1 + g.gap + p * (g.panel_height + g.gap) - g.gap
    for i in range(N):
        if model.case_flags[i]:
            x = tx(i + 1)
            out.append(f'<line x1="{_f(x)}" y1="{_f(sy0)}" x2="{_f(x)}" y2="{_f(bottom)}" '
                       f'stroke="{style.CASE_LINE}" stroke-width="0.75" stroke-dasharray="4,3"/>')
    for i in range(N):
        fill = "#000000" if model.case_flags[i] else model.case_colors[i]
        out.append(f'<circle cx="{_f(tx(i + 1))}" cy="{_f(wy(model.case_weights[i]))}" '
                   f'r="{_f(g.marker)}" fill="{fill}" stroke="{style.CASE_LINE}" '
                   f'stroke-width="0.5"/>')

    for j in range(p):
        py0 = sy1 + g.gap + j * (g.panel_height + g.gap)
        py1 = py0 + g.panel_height
        vals = [model.raw[:, j], model.reconstructed[:, j]]
        if h:
            vals.append(model.forecasts[:, j])
        allv = np.concatenate(vals)
        lo, hi = float(allv.min()), float(allv.max())
        pad = 0.05 * (hi - lo) if hi > lo else 1.0
        ty = _Axis(lo - pad, hi + pad, py1, py0)
        out += _frame(x0, py0, x1, py1, model.names[j])
        out += _ticks(ty, x0, lo, hi)
        xs = [tx(i + 1) for i in range(N)]
        out.append(_polyline(xs, [ty(v) for v in model.raw[:, j]], style.RAW_LINE, 0.75))
        out.append(_polyline(xs, [ty(v) for v in model.reconstructed[:, j]], style.FIT_LINE, 1.25))
        m = g.marker
        for i in range(N):
            x, y = xs[i], ty(model.raw[i, j])
            if model.cell_flags[i, j]:
                color = style.flag_color(model.cell_sign[i, j])
                out.append(f'<rect x="{_f(x - m)}" y="{_f(y - m)}" width="{_f(2 * m)}" '
                           f'height="{_f(2 * m)}" fill="{color}"/>')
            else:
                out.append(f'<circle cx="{_f(x)}" cy="{_f(y)}" r="{_f(m)}" '
                           f'fill="{model.cell_colors[i][j]}" stroke="{style.AXIS}" '
                           f'stroke-width="0.4"/>')
        for s in range(h):
            x, y = tx(N + s + 1), ty(model.forecasts[s, j])
            out.append(f'<path d="M{_f(x)},{_f(y - m)} L{_f(x + m)},{_f(y + m)} '
                       f'L{_f(x - m)},{_f(y + m)} Z" fill="{style.FORECAST}"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def line_chart(x, series, title="", xlabel="", ylabel="", geometry=None, comment=None,
               log_y=False):
    """Simple multi-line chart; ``series`` maps label -> y values."""
    g = geometry or Geometry(panel_height=260.0)
    height = g.margin_top + g.panel_height + g.margin_bottom + 14 * max(len(series), 1)
    x0, x1 = g.margin_left, g.width - g.margin_right - 90
    y0, y1 = g.margin_top, g.margin_top + g.panel_height
    out = _header(g.width, height, comment, title)
    x = np.asarray(x, dtype=float)
    ys = {k: np.asarray(v, dtype=float) for k, v in series.items()}
    if log_y:
        ys = {k: np.log10(np.maximum(v, 1e-300)) for k, v in ys.items()}
    allv = np.concatenate(list(ys.values())) if ys else np.zeros(1)
    allv = allv[np.isfinite(allv)] if allv.size else np.zeros(1)
    lo, hi = (float(allv.min()), float(allv.max())) if allv.size else (0.0, 1.0)
    tx = _Axis(float(x.min()) if x.size else 0.0, float(x.max()) if x.size else 1.0, x0, x1)
    ty = _Axis(lo, hi, y1, y0)
    out += _frame(x0, y0, x1, y1)
    out.append(f'<text x="{_f((x0 + x1) / 2)}" y="{_f(y0 - 10)}" text-anchor="middle" '
               f'font-size="12">{escape(title)}</text>')
    out.append(f'<text x="{_f((x0 + x1) / 2)}" y="{_f(y1 + 22)}" text-anchor="middle">'
               f'{escape(xlabel)}</text>')
    ylab = ("log10 " + ylabel) if log_y else ylabel
    out.append(f'<text x="{_f(x0 - 40)}" y="{_f((y0 + y1) / 2)}" text-anchor="middle" '
               f'transform="rotate(-90 {_f(x0 - 40)} {_f((y0 + y1) / 2)})">{escape(ylab)}</text>')
    out += _ticks(ty, x0, lo, hi)
    for xv in x:
        out.append(f'<text x="{_f(tx(xv))}" y="{_f(y1 + 10)}" text-anchor="middle" '
                   f'font-size="8">{"%g" % xv}</text>')
    for k, (label, v) in enumerate(ys.items()):
        color = style.SERIES_COLORS[k % len(style.SERIES_COLORS)]
        out.append(_polyline([tx(a) for a in x], [ty(b) for b in v], color, 1.5))
        for a, b in zip(x, v):
            out.append(f'<circle cx="{_f(tx(a))}" cy="{_f(ty(b))}" r="2.50" fill="{color}"/>')
        ly = y0 + 10 + 14 * k
        out.append(f'<line x1="{_f(x1 + 10)}" y1="{_f(ly)}" x2="{_f(x1 + 30)}" y2="{_f(ly)}" '
                   f'stroke="{color}" stroke-width="1.50"/>')
        out.append(f'<text x="{_f(x1 + 34)}" y="{_f(ly)}" dominant-baseline="middle">'
                   f'{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def study_charts(report, metric="RE", comment=None):
    """One line chart per (scenario, mode, fraction): metric against gamma."""
    groups = {}
    for r in report.rows:
        groups.setdefault((r["scenario"], r["mode"], r["fraction"]), []).append(r)
    charts = {}
    for (s, mode, eps), rows in sorted(groups.items()):
        gammas = sorted({r["gamma"] for r in rows})
        methods = []
        for r in rows:
            if r["method"] not in methods:
                methods.append(r["method"])
        lines = {m: [report.lookup(s, mode, eps, gm, m)[metric] for gm in gammas] for m in methods}
        title = f"scenario {s}, {mode}, eps={eps:g}: mean {metric}"
        charts[(s, mode, eps)] = line_chart(gammas, lines, title, "gamma", metric,
                                            comment=comment, log_y=True)
    return charts


def rank_chart(ranks, objectives, comment=None):
    return line_chart(ranks, {"objective": objectives}, "robust objective by rank", "rank",
                      "objective", comment=comment)
