"""Static SVG figures: forest plots and bias/coverage panels.

Documents are built with :mod:`xml.etree.ElementTree`, so the output is
well-formed XML, and every coordinate is formatted to two decimals so the
same inputs always give the same bytes.
"""

from __future__ import annotations

import math
import xml.etree.ElementTree as ET
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import FitResult, MetaDataset, compute_effects, effect_arrays
from .metrics import PerformanceRow, coverage_band

__all__ = ["PlotStyle", "render_forest", "render_panel", "to_string"]

SVG_NS = "http://www.w3.org/2000/svg"

_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


@dataclass(frozen=True)
class PlotStyle:
    width: int = 720
    row_height: int = 22
    height: int | None = None
    glyph: str = "square"  # or "circle"
    diamond_color: str = "#222222"
    null_line: bool = True
    palette: Sequence[str] = field(default=_PALETTE)
    font_size: int = 12

    def __post_init__(self):
        if self.width <= 0 or self.row_height <= 0 or (self.height is not None and self.height <= 0):
            raise ValueError("plot dimensions must be positive")


def _n(x: float) -> str:
    return f"{x:.2f}"


def _el(parent, tag, **attrs):
    attrs = {k.rstrip("_").replace("_", "-"): (v if isinstance(v, str) else _n(v)) for k, v in attrs.items()}
    return ET.SubElement(parent, tag, attrs)


def _text(parent, x, y, s, anchor="start", size=12, **kw):
    t = _el(parent, "text", x=x, y=y, font_size=str(size), text_anchor=anchor,
            font_family="sans-serif", **kw)
    t.text = s
    return t


def to_string(root: ET.Element) -> str:
    return ET.tostring(root, encoding="unicode", xml_declaration=True) + "\n"


def _nice_ticks(lo, hi, n=5):
    span = hi - lo
    step = 10 ** math.floor(math.log10(span / n))
    for m in (1, 2, 2.5, 5, 10):
        if span / (m * step) <= n:
            step *= m
            break
    start = math.ceil(lo / step) * step
    return [round(v, 10) for v in np.arange(start, hi + step * 1e-9, step)]


def render_forest(d: MetaDataset, f: FitResult, style: PlotStyle | None = None, cc: float = 0.5) -> ET.Element:
    """Forest plot: one row per study, a pooled diamond and a vertical null line.

    Study rows show shrinkage estimates when the fit has them and raw log odds
    ratios (with a note) otherwise.  Fits carrying a DP cluster summary get
    cluster and probability columns plus a dashed line at each cluster mean.
    """
    style = style or PlotStyle()
    y_raw, v_raw = effect_arrays(compute_effects(d, cc=cc))
    ids = list(d.study_ids)
    note = None
    if f.theta is not None and f.theta_ci is not None and len(f.theta) == len(ids):
        est, lo, hi = np.asarray(f.theta), f.theta_ci[:, 0], f.theta_ci[:, 1]
        label = "shrinkage estimate (95% interval)"
    else:
        est = y_raw
        lo, hi = y_raw - 1.959963984540054 * np.sqrt(v_raw), y_raw + 1.959963984540054 * np.sqrt(v_raw)
        label = "observed log OR (95% CI)"
        note = "study-level shrinkage estimates unavailable for this model; raw effects shown"

    clusters = f.extras.get("clusters") if isinstance(f.extras, dict) else None
    n = len(ids)
    left = 110.0
    right_cols = 150.0 if clusters else 70.0
    top, bottom = 40.0, 60.0 + (16.0 if note else 0.0)
    rh = style.row_height
    height = style.height or int(top + rh * (n + 2) + bottom)
    width = style.width
    plot_l, plot_r = left, width - right_cols

    mu_lo, mu_hi = f.mu_ci if f.mu_ci is not None else (f.mu, f.mu)
    xs = np.concatenate([lo, hi, [mu_lo, mu_hi, 0.0]])
    xs = xs[np.isfinite(xs)]
    x_min, x_max = float(xs.min()), float(xs.max())
    pad = 0.05 * (x_max - x_min or 1.0)
    x_min, x_max = x_min - pad, x_max + pad

    def sx(v):
        return plot_l + (v - x_min) / (x_max - x_min) * (plot_r - plot_l)

    root = ET.Element("svg", {"xmlns": SVG_NS, "width": str(width), "height": str(height),
                              "viewBox": f"0 0 {width} {height}"})
    _el(root, "rect", x=0, y=0, width=width, height=height, fill="white")
    _text(root, width / 2, 20, f"{f.model_id}: {label}", anchor="middle", size=style.font_size + 1)
    axis_y = top + rh * (n + 1.5)

    if style.null_line:
        _el(root, "line", x1=sx(0.0), x2=sx(0.0), y1=top - 6, y2=axis_y, stroke="#888888",
            stroke_width="1", class_="null-line")

    if clusters:
        _text(root, width - right_cols + 40, top - 10, "cluster", anchor="middle", size=style.font_size)
        _text(root, width - right_cols + 110, top - 10, "prob.", anchor="middle", size=style.font_size)
        modal = clusters["modal_cluster"]
        means = clusters["cluster_means"]
        for k in sorted(set(modal)):
            color = style.palette[k % len(style.palette)]
            _el(root, "line", x1=sx(means[k]), x2=sx(means[k]), y1=top - 6, y2=axis_y,
                stroke=color, stroke_width="1", stroke_dasharray="5,4", class_="cluster-mean")

    g = _el(root, "g", class_="studies")
    for i, sid in enumerate(ids):
        yy = top + rh * (i + 0.5)
        color = "#000000"
        if clusters:
            k = clusters["modal_cluster"][i]
            color = style.palette[k % len(style.palette)]
        row = _el(g, "g", class_="study-row")
        _text(row, 8, yy + 4, str(sid), size=style.font_size)
        _el(row, "line", x1=sx(lo[i]), x2=sx(hi[i]), y1=yy, y2=yy, stroke=color, stroke_width="1.5")
        if style.glyph == "circle":
            _el(row, "circle", cx=sx(est[i]), cy=yy, r=4, fill=color)
        else:
            _el(row, "rect", x=sx(est[i]) - 4, y=yy - 4, width=8, height=8, fill=color)
        if clusters:
            _text(row, width - right_cols + 40, yy + 4, str(clusters["modal_cluster"][i] + 1),
                  anchor="middle", size=style.font_size)
            _text(row, width - right_cols + 110, yy + 4, f"{clusters['assignment_prob'][i]:.2f}",
                  anchor="middle", size=style.font_size)

    yd = top + rh * (n + 0.5)
    cx = sx(f.mu)
    pts = [(sx(mu_lo), yd), (cx, yd - 7), (sx(mu_hi), yd), (cx, yd + 7)]
    _el(root, "polygon", points=" ".join(f"{_n(a)},{_n(b)}" for a, b in pts),
        fill=style.diamond_color, class_="pooled")
    _text(root, 8, yd + 4, "Pooled", size=style.font_size)

    _el(root, "line", x1=plot_l, x2=plot_r, y1=axis_y, y2=axis_y, stroke="#000000", stroke_width="1")
    for t in _nice_ticks(x_min, x_max):
        _el(root, "line", x1=sx(t), x2=sx(t), y1=axis_y, y2=axis_y + 4, stroke="#000000", stroke_width="1")
        _text(root, sx(t), axis_y + 16, f"{t:g}", anchor="middle", size=style.font_size - 1)
    _text(root, (plot_l + plot_r) / 2, axis_y + 34, "log odds ratio", anchor="middle", size=style.font_size)
    if note:
        _text(root, 8, height - 8, note, size=style.font_size - 2, class_="note")
    return root


def render_panel(rows: Sequence[PerformanceRow], metric: str = "mean_bias", estimand: str = "mu",
                 style: PlotStyle | None = None, n_reps: int | None = None) -> ET.Element:
    """Dot panel of one performance metric by scenario, one colour per model.

    For ``coverage`` the Monte-Carlo acceptance band for ``n_reps`` replicates
    is shaded.  Excluded pairs are drawn as hollow markers at the axis.
    """
    style = style or PlotStyle()
    rows = [r for r in rows if r.estimand == estimand]
    scen = sorted({r.scenario_id for r in rows})
    models = sorted({r.model_id for r in rows})
    width, height = style.width, style.height or 420
    left, right, top, bottom = 60.0, 220.0, 40.0, 50.0
    vals = [getattr(r, metric) for r in rows if not r.excluded and np.isfinite(getattr(r, metric))]
    lo_v, hi_v = (min(vals), max(vals)) if vals else (0.0, 1.0)
    band = None
    if metric == "coverage" and n_reps:
        band = coverage_band(n_reps)
        lo_v, hi_v = min(lo_v, band[0]), max(hi_v, band[1])
    if metric in ("mean_bias", "pct_bias"):
        lo_v, hi_v = min(lo_v, 0.0), max(hi_v, 0.0)
    pad = 0.08 * (hi_v - lo_v or 1.0)
    lo_v, hi_v = lo_v - pad, hi_v + pad

    def sx(i):
        return left + (i + 0.5) / max(len(scen), 1) * (width - left - right)

    def sy(v):
        return top + (hi_v - v) / (hi_v - lo_v) * (height - top - bottom)

    root = ET.Element("svg", {"xmlns": SVG_NS, "width": str(width), "height": str(height),
                              "viewBox": f"0 0 {width} {height}"})
    _el(root, "rect", x=0, y=0, width=width, height=height, fill="white")
    _text(root, (width - right + left) / 2, 20, f"{metric} of {estimand}", anchor="middle",
          size=style.font_size + 1)
    if band:
        _el(root, "rect", x=left, y=sy(band[1]), width=width - left - right,
            height=sy(band[0]) - sy(band[1]), fill="#dddddd", class_="coverage-band")
        _el(root, "line", x1=left, x2=width - right, y1=sy(0.95), y2=sy(0.95), stroke="#888888",
            stroke_width="1")
    if lo_v < 0 < hi_v:
        _el(root, "line", x1=left, x2=width - right, y1=sy(0.0), y2=sy(0.0), stroke="#888888",
            stroke_width="1")
    _el(root, "line", x1=left, x2=left, y1=top, y2=height - bottom, stroke="#000000", stroke_width="1")
    for t in _nice_ticks(lo_v, hi_v):
        _el(root, "line", x1=left - 4, x2=left, y1=sy(t), y2=sy(t), stroke="#000000", stroke_width="1")
        _text(root, left - 6, sy(t) + 4, f"{t:g}", anchor="end", size=style.font_size - 1)
    for i, s in enumerate(scen):
        _text(root, sx(i), height - bottom + 16, str(s), anchor="middle", size=style.font_size - 1)
    _text(root, (width - right + left) / 2, height - 12, "scenario", anchor="middle", size=style.font_size)
    k_models = max(len(models), 1)
    for j, m in enumerate(models):
        color = style.palette[j % len(style.palette)]
        off = (j - (k_models - 1) / 2) * min(6.0, 0.6 * (width - left - right) / max(len(scen), 1) / k_models)
        for r in rows:
            if r.model_id != m:
                continue
            x = sx(scen.index(r.scenario_id)) + off
            v = getattr(r, metric)
            if r.excluded or not np.isfinite(v):
                _el(root, "circle", cx=x, cy=height - bottom, r=3.5, fill="none", stroke=color,
                    class_="excluded")
            else:
                _el(root, "circle", cx=x, cy=sy(v), r=3.5, fill=color)
        ly = top + 16 * j
        _el(root, "circle", cx=width - right + 16, cy=ly, r=4, fill=color)
        _text(root, width - right + 26, ly + 4, m, size=style.font_size - 2)
    return root
