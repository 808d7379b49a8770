"""Deterministic SVG overlays of frames, projected lines, and tip markers.

Output is plain text built with fixed float formatting, so identical inputs
produce byte-identical files.
"""

from __future__ import annotations

import numpy as np

from .cylinder import PolarLine, clip_to_rect
from .detection import DetectionFrame

_STYLE = {
    "projected": 'stroke="#1f77b4" stroke-width="2.0" fill="none"',
    "segment": 'stroke="#ff7f0e" stroke-width="2.0" fill="none"',
    "evidence": 'fill="#ffd700"',
    "estimate_tip": 'stroke="#d62728" stroke-width="2.0" fill="none"',
    "gt_tip": 'stroke="#2ca02c" stroke-width="2.0" fill="none"',
}


def _fmt(value: float) -> str:
    return f"{value:.2f}"


def _line_element(line: PolarLine, width: int, height: int) -> str | None:
    seg = clip_to_rect(line, width, height)
    if seg is None:
        return None
    (x1, y1), (x2, y2) = seg
    return (
        f'<line class="projected" x1="{_fmt(x1)}" y1="{_fmt(y1)}" '
        f'x2="{_fmt(x2)}" y2="{_fmt(y2)}" {_STYLE["projected"]}/>'
    )


def _cross(x: float, y: float, size: float, css: str, style: str) -> str:
    return (
        f'<path class="{css}" d="M {_fmt(x - size)} {_fmt(y)} L {_fmt(x + size)} {_fmt(y)} '
        f'M {_fmt(x)} {_fmt(y - size)} L {_fmt(x)} {_fmt(y + size)}" {style}/>'
    )


def render_overlay(
    frame: DetectionFrame,
    projected_lines,
    point_sets,
    estimate_tip,
    gt_tip,
    out_path,
) -> None:
    """Write an SVG showing evidence pixels, lines, and both tip markers."""
    width, height = frame.image_size
    parts = [
        '<?xml version="1.0" encoding="UTF-8"?>',
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">',
        f'<rect width="{width}" height="{height}" fill="#202020"/>',
    ]
    for points in point_sets:
        for u, v in np.asarray(points, dtype=float).reshape(-1, 2):
            parts.append(
                f'<circle class="evidence" cx="{_fmt(u)}" cy="{_fmt(v)}" r="1.5" '
                f'{_STYLE["evidence"]}/>'
            )
    for seg in frame.segments:
        parts.append(
            f'<line class="segment" x1="{_fmt(seg[0, 0])}" y1="{_fmt(seg[0, 1])}" '
            f'x2="{_fmt(seg[1, 0])}" y2="{_fmt(seg[1, 1])}" {_STYLE["segment"]}/>'
        )
    for line in projected_lines:
        element = _line_element(line, width, height)
        if element is not None:
            parts.append(element)
    gt_tip = np.asarray(gt_tip, dtype=float)
    estimate_tip = np.asarray(estimate_tip, dtype=float)
    parts.append(_cross(gt_tip[0], gt_tip[1], 12.0, "gt-tip", _STYLE["gt_tip"]))
    parts.append(
        f'<circle class="estimate-tip" cx="{_fmt(estimate_tip[0])}" '
        f'cy="{_fmt(estimate_tip[1])}" r="9" {_STYLE["estimate_tip"]}/>'
    )
    parts.append("</svg>")
    with open(out_path, "w") as f:
        f.write("\n".join(parts))
        f.write("\n")
