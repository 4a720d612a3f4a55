"""Static SVG overlays of predicted and ground-truth lanes.

Two panels: top view (x against y) and side view (z against y). Only visible
points are drawn; each run of consecutive visible points becomes a polyline.
"""

from __future__ import annotations

from collections.abc import Sequence
from pathlib import Path

import numpy as np
from jinja2 import Template

from config.settings import setting
from core.lane import VIS_THRESHOLD, Lane3D, Proposal

from .data_files import atomic_write_text

GT_COLOR = "#2a9d3f"
PRED_COLOR = "#d62828"
_PANEL_W = 360
_PANEL_H = 300
_MARGIN = 60


def _visible_runs(lane: Lane3D) -> list[np.ndarray]:
    mask = lane.vis >= VIS_THRESHOLD
    runs, current = [], []
    for i, keep in enumerate(mask):
        if keep:
            current.append(i)
        elif current:
            runs.append(np.asarray(current))
            current = []
    if current:
        runs.append(np.asarray(current))
    return [run for run in runs if len(run) >= 2]


def _ticks(lo: float, hi: float, to_px, count: int = 5) -> list[dict[str, float | str]]:
    return [{"pos": round(float(to_px(v)), 2), "label": f"{v:g}"} for v in np.round(np.linspace(lo, hi, count), 1)]


def _panel(
    title: str,
    x_label: str,
    y_label: str,
    horizontal: tuple[float, float],
    vertical: tuple[float, float],
    series: Sequence[tuple[Lane3D, str, bool]],
    axes: tuple[str, str],
    origin: tuple[int, int],
) -> dict:
    (h_lo, h_hi), (v_lo, v_hi) = horizontal, vertical

    def to_x(value):
        return (np.asarray(value) - h_lo) / (h_hi - h_lo) * _PANEL_W

    def to_y(value):
        return _PANEL_H - (np.asarray(value) - v_lo) / (v_hi - v_lo) * _PANEL_H

    lines = []
    for lane, color, dashed in series:
        coords = {"x": lane.xs, "y": lane.ys.ys, "z": lane.zs}
        for run in _visible_runs(lane):
            px = to_x(coords[axes[0]][run])
            py = to_y(coords[axes[1]][run])
            points = " ".join(f"{a:.2f},{b:.2f}" for a, b in zip(px, py, strict=True))
            lines.append({"points": points, "color": color, "dashed": dashed, "width": 2})
    return {
        "title": title,
        "x_label": x_label,
        "y_label": y_label,
        "x": origin[0],
        "y": origin[1],
        "width": _PANEL_W,
        "height": _PANEL_H,
        "x_ticks": _ticks(h_lo, h_hi, to_x),
        "y_ticks": _ticks(v_lo, v_hi, to_y),
        "lines": lines,
    }


def _extent(values: list[np.ndarray], pad: float, minimum: float) -> tuple[float, float]:
    flat = np.concatenate(values) if values else np.zeros(0)
    if flat.size == 0:
        flat = np.zeros(1)
    lo, hi = float(flat.min()) - pad, float(flat.max()) + pad
    if hi - lo < minimum:
        center = 0.5 * (lo + hi)
        lo, hi = center - minimum / 2.0, center + minimum / 2.0
    return lo, hi


def render_lane_plot(
    preds: Sequence[Lane3D | Proposal],
    gts: Sequence[Lane3D],
    *,
    title: str = "",
    template_path: Path | None = None,
) -> str:
    """SVG text with top-view and side-view panels."""
    pred_lanes = [p.lane if isinstance(p, Proposal) else p for p in preds]
    series = [(lane, GT_COLOR, False) for lane in gts] + [(lane, PRED_COLOR, True) for lane in pred_lanes]
    all_lanes = [lane for lane, _, _ in series]
    visible = [lane.vis >= VIS_THRESHOLD for lane in all_lanes]
    xs = [lane.xs[m] for lane, m in zip(all_lanes, visible, strict=True)]
    zs = [lane.zs[m] for lane, m in zip(all_lanes, visible, strict=True)]
    ys_hi = max((float(lane.ys.ys[-1]) for lane in all_lanes), default=100.0)

    x_range = _extent(xs, 1.0, 10.0)
    z_range = _extent(zs, 0.5, 2.0)
    y_range = (0.0, ys_hi)
    panels = [
        _panel("top view", "x (m)", "y (m)", x_range, y_range, series, ("x", "y"), (_MARGIN, 40)),
        _panel("side view", "y (m)", "z (m)", y_range, z_range, series, ("y", "z"), (2 * _MARGIN + _PANEL_W, 40)),
    ]
    template_path = template_path or setting.TEMPLATE_DIR / setting.LANE_PLOT_TEMPLATE
    template = Template(template_path.read_text(encoding="utf-8"))
    return template.render(
        title=title,
        width=3 * _MARGIN + 2 * _PANEL_W,
        height=_PANEL_H + 110,
        panels=panels,
        gt_color=GT_COLOR,
        pred_color=PRED_COLOR,
    )


def write_lane_plot(
    path: str | Path,
    preds: Sequence[Lane3D | Proposal],
    gts: Sequence[Lane3D],
    *,
    title: str = "",
) -> Path:
    return atomic_write_text(path, render_lane_plot(preds, gts, title=title))
