"""Minimal SVG rendering of a planar run: obstacles, the eps-tube, both outputs and the goal."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .planner import Workspace

PX_PER_M = 40.0
MARGIN = 20.0
MAX_POINTS = 2000


def _decimate(pts: np.ndarray) -> np.ndarray:
    if len(pts) <= MAX_POINTS:
        return pts
    idx = np.unique(np.linspace(0, len(pts) - 1, MAX_POINTS).round().astype(int))
    return pts[idx]


def render(
    workspace: Workspace,
    y1: np.ndarray,
    y2: np.ndarray,
    eps: float,
    waypoints: np.ndarray | None = None,
    title: str = "",
) -> str:
    x0, ymin, x1, ymax = workspace.bounds
    width = (x1 - x0) * PX_PER_M + 2 * MARGIN
    height = (ymax - ymin) * PX_PER_M + 2 * MARGIN + (24 if title else 0)
    top = MARGIN + (24 if title else 0)

    def px(p) -> str:
        return f"{MARGIN + (p[0] - x0) * PX_PER_M:.2f},{top + (ymax - p[1]) * PX_PER_M:.2f}"

    def poly(pts) -> str:
        return " ".join(px(p) for p in _decimate(np.asarray(pts, dtype=float)))

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width:.0f}" height="{height:.0f}" '
        f'viewBox="0 0 {width:.0f} {height:.0f}">',
        f'<rect x="0" y="0" width="{width:.0f}" height="{height:.0f}" fill="white"/>',
    ]
    if title:
        out.append(f'<text x="{MARGIN:.0f}" y="18" font-family="sans-serif" font-size="14">{escape(title)}</text>')
    out.append(
        f'<rect x="{MARGIN:.2f}" y="{top:.2f}" width="{(x1 - x0) * PX_PER_M:.2f}" '
        f'height="{(ymax - ymin) * PX_PER_M:.2f}" fill="none" stroke="black" stroke-width="2"/>'
    )
    for r in workspace.obstacles:
        out.append(
            f'<rect x="{MARGIN + (r[0] - x0) * PX_PER_M:.2f}" y="{top + (ymax - r[3]) * PX_PER_M:.2f}" '
            f'width="{(r[2] - r[0]) * PX_PER_M:.2f}" height="{(r[3] - r[1]) * PX_PER_M:.2f}" fill="#555555"/>'
        )
    gx, gy = px(workspace.goal).split(",")
    out.append(f'<circle cx="{gx}" cy="{gy}" r="{workspace.goal_radius * PX_PER_M:.2f}" '
               f'fill="#f5d90a" fill-opacity="0.7" stroke="#b59b00"/>')
    tube = waypoints if waypoints is not None else y2
    if eps > 0:
        out.append(f'<polyline points="{poly(tube)}" fill="none" stroke="#2ca02c" stroke-opacity="0.3" '
                   f'stroke-width="{2 * eps * PX_PER_M:.2f}" stroke-linejoin="round" stroke-linecap="round"/>')
    out.append(f'<polyline points="{poly(y2)}" fill="none" stroke="#1f3fbf" stroke-width="2" '
               f'stroke-dasharray="8,5"/>')
    out.append(f'<polyline points="{poly(y1)}" fill="none" stroke="#d62728" stroke-width="1.5"/>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def save(path, *args, **kwargs) -> None:
    Path(path).write_text(render(*args, **kwargs), encoding="utf-8")
