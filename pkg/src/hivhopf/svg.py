"""Minimal SVG line plots: fixed 800x500 canvas, ticks at round numbers."""

from __future__ import annotations

import math
from xml.sax.saxutils import escape

import numpy as np

WIDTH, HEIGHT = 800, 500
LEFT, RIGHT, TOP, BOTTOM = 70, 20, 40, 50
MAX_POINTS = 4000


def nice_ticks(lo: float, hi: float, target: int = 6) -> list[float]:
    """Round-number ticks covering [lo, hi] (1, 2 or 5 times a power of ten)."""
    if not math.isfinite(lo) or not math.isfinite(hi):
        return []
    if hi <= lo:
        return [lo]
    raw = (hi - lo) / max(target - 1, 1)
    mag = 10.0 ** math.floor(math.log10(raw))
    step = next(m * mag for m in (1, 2, 5, 10) if m * mag >= raw)
    first = math.ceil(lo / step - 1e-9) * step
    ticks = []
    v = first
    while v <= hi + 1e-9 * step:
        ticks.append(0.0 if abs(v) < 1e-12 * step else v)
        v = first + len(ticks) * step
    return ticks


def _fmt(v: float) -> str:
    return f"{v:.6g}"


def _thin(*arrays):
    n = len(arrays[0])
    stride = max(1, math.ceil(n / MAX_POINTS))
    return [np.asarray(a)[::stride] for a in arrays]


def _range(v: np.ndarray) -> tuple[float, float]:
    lo, hi = float(np.min(v)), float(np.max(v))
    if hi - lo < 1e-12 * (1.0 + abs(hi)):
        pad = 0.5 * (1.0 + abs(hi)) * 1e-3
        lo, hi = lo - pad, hi + pad
    return lo, hi


def _frame(title: str, xlabel: str, ylabel: str, body: list[str]) -> str:
    head = [
        f'<svg xmlns="http://www.w3.org/2000/svg" viewBox="0 0 {WIDTH} {HEIGHT}" '
        f'width="{WIDTH}" height="{HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<text x="{WIDTH / 2}" y="22" text-anchor="middle" font-size="15">{escape(title)}</text>',
        f'<text x="{WIDTH / 2}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>',
        f'<text x="16" y="{HEIGHT / 2}" text-anchor="middle" '
        f'transform="rotate(-90 16 {HEIGHT / 2})">{escape(ylabel)}</text>',
    ]
    return "\n".join(head + body + ["</svg>", ""])


def line_plot(t, y, title: str, xlabel: str = "t", ylabel: str = "") -> str:
    """Single polyline of y against t with ticked axes."""
    t, y = _thin(t, y)
    x0, x1 = _range(t)
    y0, y1 = _range(y)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def sx(v):
        return LEFT + (v - x0) / (x1 - x0) * pw

    def sy(v):
        return TOP + (1.0 - (v - y0) / (y1 - y0)) * ph

    body = [f'<rect x="{LEFT}" y="{TOP}" width="{pw}" height="{ph}" fill="none" stroke="black"/>']
    for v in nice_ticks(x0, x1):
        px = sx(v)
        body.append(f'<line x1="{px:.2f}" y1="{TOP + ph}" x2="{px:.2f}" y2="{TOP + ph + 5}" stroke="black"/>')
        body.append(f'<text x="{px:.2f}" y="{TOP + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in nice_ticks(y0, y1):
        py = sy(v)
        body.append(f'<line x1="{LEFT - 5}" y1="{py:.2f}" x2="{LEFT}" y2="{py:.2f}" stroke="black"/>')
        body.append(f'<text x="{LEFT - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    pts = " ".join(f"{sx(a):.2f},{sy(b):.2f}" for a, b in zip(t, y))
    body.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1.2" points="{pts}"/>')
    return _frame(title, xlabel, ylabel, body)


def oblique_plot(x, p, y, title: str, labels=("x", "p", "y"), angle: float = math.pi / 6,
                 depth: float = 0.5) -> str:
    """Cavalier-style oblique projection of a 3-D curve.

    Each coordinate is first scaled to [0, 1]; the third axis is drawn
    receding at ``angle`` with foreshortening ``depth``.
    """
    x, p, y = _thin(x, p, y)
    norm = []
    for v in (x, p, y):
        lo, hi = _range(v)
        norm.append((np.asarray(v) - lo) / (hi - lo))
    u = norm[0] + depth * math.cos(angle) * norm[1]
    w = norm[2] + depth * math.sin(angle) * norm[1]
    umax = 1.0 + depth * math.cos(angle)
    wmax = 1.0 + depth * math.sin(angle)
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM
    scale = min(pw / umax, ph / wmax)

    def proj(a, b, c):
        uu = a + depth * math.cos(angle) * b
        ww = c + depth * math.sin(angle) * b
        return LEFT + uu * scale, TOP + ph - ww * scale

    body = []
    origin = proj(0, 0, 0)
    for axis, end in zip(labels, ((1, 0, 0), (0, 1, 0), (0, 0, 1))):
        ex, ey = proj(*end)
        body.append(f'<line x1="{origin[0]:.2f}" y1="{origin[1]:.2f}" x2="{ex:.2f}" y2="{ey:.2f}" '
                    f'stroke="gray"/>')
        body.append(f'<text x="{ex + 6:.2f}" y="{ey:.2f}">{escape(axis)}</text>')
    pts = " ".join(f"{LEFT + a * scale:.2f},{TOP + ph - b * scale:.2f}" for a, b in zip(u, w))
    body.append(f'<polyline fill="none" stroke="#1f4e9c" stroke-width="1" points="{pts}"/>')
    return _frame(title, "", "", body)
