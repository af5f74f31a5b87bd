"""Hand-rolled deterministic SVG charts (no plotting dependency).

Line charts for training curves, bar charts for metric comparisons and a
top-down trajectory overlay for closed-loop episodes.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e",
           "#8c564b", "#17becf")


def _svg(width, height, body):
    return ('<svg xmlns="http://www.w3.org/2000/svg" width="%d" height="%d" '
            'viewBox="0 0 %d %d">\n<rect width="%d" height="%d" '
            'fill="white"/>\n%s</svg>\n'
            % (width, height, width, height, width, height, body))


def _fmt(x):
    return "%.6g" % x


def _ticks(lo, hi, n=5):
    if hi <= lo:
        hi = lo + 1.0
    span = hi - lo
    step = 10.0 ** np.floor(np.log10(span / max(n, 1)))
    for mult in (1, 2, 5, 10):
        if span / (step * mult) <= n:
            step *= mult
            break
    first = np.ceil(lo / step) * step
    return list(np.arange(first, hi + step / 2, step))


class _Axes:
    """Maps data coordinates onto a fixed SVG plot box."""

    def __init__(self, width, height, xlim, ylim,
                 margin=(55, 15, 20, 45)):  # left, right, top, bottom
        self.w, self.h = width, height
        self.ml, self.mr, self.mt, self.mb = margin
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        frac = (v - lo) / (hi - lo) if hi > lo else 0.5
        return self.ml + frac * (self.w - self.ml - self.mr)

    def y(self, v):
        lo, hi = self.ylim
        frac = (v - lo) / (hi - lo) if hi > lo else 0.5
        return self.h - self.mb - frac * (self.h - self.mt - self.mb)

    def frame(self, xlabel="", ylabel="", title=""):
        parts = []
        x0, x1 = self.ml, self.w - self.mr
        y0, y1 = self.mt, self.h - self.mb
        parts.append('<rect x="%g" y="%g" width="%g" height="%g" '
                     'fill="none" stroke="#444"/>'
                     % (x0, y0, x1 - x0, y1 - y0))
        for t in _ticks(*self.xlim):
            px = self.x(t)
            parts.append('<line x1="%g" y1="%g" x2="%g" y2="%g" '
                         'stroke="#444"/>' % (px, y1, px, y1 + 4))
            parts.append('<text x="%g" y="%g" font-size="11" '
                         'text-anchor="middle">%s</text>'
                         % (px, y1 + 16, _fmt(t)))
        for t in _ticks(*self.ylim):
            py = self.y(t)
            parts.append('<line x1="%g" y1="%g" x2="%g" y2="%g" '
                         'stroke="#444"/>' % (x0 - 4, py, x0, py))
            parts.append('<text x="%g" y="%g" font-size="11" '
                         'text-anchor="end">%s</text>'
                         % (x0 - 7, py + 4, _fmt(t)))
        if xlabel:
            parts.append('<text x="%g" y="%g" font-size="12" '
                         'text-anchor="middle">%s</text>'
                         % ((x0 + x1) / 2, self.h - 8, xlabel))
        if ylabel:
            parts.append('<text x="14" y="%g" font-size="12" '
                         'text-anchor="middle" transform="rotate(-90 14 %g)"'
                         '>%s</text>' % ((y0 + y1) / 2, (y0 + y1) / 2,
                                         ylabel))
        if title:
            parts.append('<text x="%g" y="14" font-size="13" '
                         'text-anchor="middle">%s</text>'
                         % ((x0 + x1) / 2, title))
        return "\n".join(parts) + "\n"


def line_chart(series, path, xlabel="", ylabel="", title="",
               width=520, height=340):
    """series: list of (label, xs, ys)."""
    all_x = np.concatenate([np.asarray(xs, float) for _, xs, _ in series])
    all_y = np.concatenate([np.asarray(ys, float) for _, _, ys in series])
    pad = 0.05 * (all_y.max() - all_y.min() or 1.0)
    ax = _Axes(width, height, (all_x.min(), all_x.max() or 1.0),
               (all_y.min() - pad, all_y.max() + pad))
    body = ax.frame(xlabel, ylabel, title)
    for i, (label, xs, ys) in enumerate(series):
        color = PALETTE[i % len(PALETTE)]
        pts = " ".join("%g,%g" % (ax.x(x), ax.y(y))
                       for x, y in zip(xs, ys))
        body += ('<polyline points="%s" fill="none" stroke="%s" '
                 'stroke-width="1.5"/>\n' % (pts, color))
        body += ('<text x="%g" y="%g" font-size="11" fill="%s">%s</text>\n'
                 % (width - ax.mr - 110, ax.mt + 16 + 14 * i, color, label))
    Path(path).write_text(_svg(width, height, body))


def bar_chart(labels, values, path, ylabel="", title="",
              width=520, height=340):
    values = np.asarray(values, float)
    top = values.max() if values.size and values.max() > 0 else 1.0
    ax = _Axes(width, height, (0, len(labels)), (0, 1.1 * top))
    body = ax.frame("", ylabel, title)
    for i, (label, v) in enumerate(zip(labels, values)):
        x0 = ax.x(i + 0.15)
        x1 = ax.x(i + 0.85)
        body += ('<rect x="%g" y="%g" width="%g" height="%g" fill="%s"/>\n'
                 % (x0, ax.y(v), x1 - x0, ax.y(0) - ax.y(v),
                    PALETTE[i % len(PALETTE)]))
        body += ('<text x="%g" y="%g" font-size="11" '
                 'text-anchor="middle">%s</text>\n'
                 % ((x0 + x1) / 2, ax.y(0) + 16, label))
        body += ('<text x="%g" y="%g" font-size="10" '
                 'text-anchor="middle">%s</text>\n'
                 % ((x0 + x1) / 2, ax.y(v) - 4, _fmt(v)))
    Path(path).write_text(_svg(width, height, body))


def trajectory_overlay(world, episodes, path, title="", width=460,
                       height=460):
    """Top-down world view: obstacles, start/goal, per-episode paths.

    episodes: list of (label, states) with world-frame (T, 3) arrays.
    """
    s = world.config.size
    ax = _Axes(width, height, (0, s), (0, s), margin=(45, 15, 20, 40))
    body = ax.frame("x [m]", "y [m]", title)
    rx = (width - ax.ml - ax.mr) / s
    for ox, oy, r in world.obstacles:
        body += ('<circle cx="%g" cy="%g" r="%g" fill="#bbb" '
                 'stroke="#777"/>\n' % (ax.x(ox), ax.y(oy), r * rx))
    body += ('<circle cx="%g" cy="%g" r="%g" fill="none" stroke="#2ca02c" '
             'stroke-width="2"/>\n'
             % (ax.x(world.goal[0]), ax.y(world.goal[1]),
                world.config.goal_radius * rx))
    body += ('<circle cx="%g" cy="%g" r="3" fill="#000"/>\n'
             % (ax.x(world.start[0]), ax.y(world.start[1])))
    for i, (label, states) in enumerate(episodes):
        color = PALETTE[i % len(PALETTE)]
        states = np.asarray(states, float)
        pts = " ".join("%g,%g" % (ax.x(x), ax.y(y))
                       for x, y in states[:, :2])
        body += ('<polyline points="%s" fill="none" stroke="%s" '
                 'stroke-width="1.5"/>\n' % (pts, color))
        body += ('<text x="%g" y="%g" font-size="11" fill="%s">%s</text>\n'
                 % (ax.ml + 6, ax.mt + 14 + 13 * i, color, label))
    Path(path).write_text(_svg(width, height, body))
