"""Tiny deterministic SVG emission for ROC curves and macro-f1 bars.

Hand-rolled on purpose: the outputs are static report artifacts and must be
byte-identical across reruns, so no plotting toolkit is involved.
"""

from __future__ import annotations

from typing import Sequence

from .metrics import RocCurve

_SIZE = 420
_MARGIN = 50
_PALETTE = ("#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd", "#8c564b")


def _fmt(x: float) -> str:
    return f"{x:.2f}"


def _x(v: float) -> float:
    return _MARGIN + v * (_SIZE - 2 * _MARGIN)


def _y(v: float) -> float:
    return _SIZE - _MARGIN - v * (_SIZE - 2 * _MARGIN)


def _axes(title: str, x_label: str, y_label: str) -> list[str]:
    parts = [
        f'<rect x="0" y="0" width="{_SIZE}" height="{_SIZE}" fill="white"/>',
        f'<text x="{_SIZE / 2:.0f}" y="24" text-anchor="middle" font-size="14">{title}</text>',
    ]
    for tick in (0.0, 0.2, 0.4, 0.6, 0.8, 1.0):
        parts.append(
            f'<line x1="{_fmt(_x(tick))}" y1="{_fmt(_y(0))}" x2="{_fmt(_x(tick))}" y2="{_fmt(_y(0) + 4)}" stroke="black"/>'
            f'<text x="{_fmt(_x(tick))}" y="{_fmt(_y(0) + 18)}" text-anchor="middle" font-size="10">{tick:.1f}</text>'
            f'<line x1="{_fmt(_x(0))}" y1="{_fmt(_y(tick))}" x2="{_fmt(_x(0) - 4)}" y2="{_fmt(_y(tick))}" stroke="black"/>'
            f'<text x="{_fmt(_x(0) - 8)}" y="{_fmt(_y(tick) + 3)}" text-anchor="end" font-size="10">{tick:.1f}</text>'
        )
    parts.append(
        f'<line x1="{_fmt(_x(0))}" y1="{_fmt(_y(0))}" x2="{_fmt(_x(1))}" y2="{_fmt(_y(0))}" stroke="black"/>'
        f'<line x1="{_fmt(_x(0))}" y1="{_fmt(_y(0))}" x2="{_fmt(_x(0))}" y2="{_fmt(_y(1))}" stroke="black"/>'
        f'<text x="{_SIZE / 2:.0f}" y="{_SIZE - 8}" text-anchor="middle" font-size="12">{x_label}</text>'
        f'<text x="14" y="{_SIZE / 2:.0f}" text-anchor="middle" font-size="12" '
        f'transform="rotate(-90 14 {_SIZE / 2:.0f})">{y_label}</text>'
    )
    return parts


def roc_svg(curves: Sequence[tuple[str, RocCurve]], title: str) -> str:
    """SVG document with one polyline per (label, curve) and the chance diagonal."""
    parts = _axes(title, "false positive rate", "true positive rate")
    parts.append(
        f'<line x1="{_fmt(_x(0))}" y1="{_fmt(_y(0))}" x2="{_fmt(_x(1))}" y2="{_fmt(_y(1))}" '
        'stroke="#999999" stroke-dasharray="6 4"/>'
    )
    for i, (label, curve) in enumerate(curves):
        color = _PALETTE[i % len(_PALETTE)]
        pts = " ".join(f"{_fmt(_x(f))},{_fmt(_y(t))}" for f, t in zip(curve.fpr, curve.tpr))
        parts.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.6"/>')
        ly = 40 + 16 * i
        parts.append(
            f'<line x1="{_SIZE - 170}" y1="{ly}" x2="{_SIZE - 150}" y2="{ly}" stroke="{color}" stroke-width="1.6"/>'
            f'<text x="{_SIZE - 144}" y="{ly + 4}" font-size="11">{label}</text>'
        )
    body = "".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">{body}</svg>\n'
    )


def bar_svg(labels: Sequence[str], values: Sequence[float], title: str) -> str:
    """SVG bar chart for per-source scalar scores (macro f1 and the like)."""
    parts = _axes(title, "", "macro f1")
    n = len(labels)
    if n:
        span = _SIZE - 2 * _MARGIN
        width = span / (2 * n)
        for i, (label, value) in enumerate(zip(labels, values)):
            cx = _MARGIN + span * (2 * i + 1) / (2 * n)
            top = _y(max(0.0, min(1.0, value)))
            parts.append(
                f'<rect x="{_fmt(cx - width / 2)}" y="{_fmt(top)}" width="{_fmt(width)}" '
                f'height="{_fmt(_y(0) - top)}" fill="{_PALETTE[i % len(_PALETTE)]}"/>'
                f'<text x="{_fmt(cx)}" y="{_fmt(top - 4)}" text-anchor="middle" font-size="10">{value:.4f}</text>'
                f'<text x="{_fmt(cx)}" y="{_fmt(_y(0) + 30)}" text-anchor="middle" font-size="10">{label}</text>'
            )
    body = "".join(parts)
    return (
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{_SIZE}" height="{_SIZE}" '
        f'viewBox="0 0 {_SIZE} {_SIZE}">{body}</svg>\n'
    )
