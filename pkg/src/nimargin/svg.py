"""
Minimal hand-written SVG charts: the two-panel grid figure (group means and
event proportion against the per-visit event probability) and a forest plot.

Output is a pure function of the inputs: fixed 800x500 viewBox, fixed number
formatting, no timestamps.
"""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

from .meta import PosteriorSummary, TrialEffect
from .simulation import Arm, CohortSummary

WIDTH, HEIGHT = 800, 500
COLORS = {Arm.PLACEBO: "#d62728", Arm.REFERENCE: "#1f77b4"}


def _n(x: float) -> str:
    return f"{x:.2f}".rstrip("0").rstrip(".")


def _nice_ticks(lo: float, hi: float, n: int = 5) -> list[float]:
    if hi <= lo:
        hi = lo + 1.0
    raw = (hi - lo) / n
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 2.5, 5, 10) if m * mag >= raw),
               default=10 * mag)
    start = math.ceil(lo / step - 1e-9) * step
    ticks = []
    t = start
    while t <= hi + 1e-9 * step:
        ticks.append(round(t, 10))
        t += step
    return ticks


class _Panel:
    def __init__(self, x0, y0, w, h, xlim, ylim):
        self.x0, self.y0, self.w, self.h = x0, y0, w, h
        self.xlim, self.ylim = xlim, ylim

    def x(self, v):
        lo, hi = self.xlim
        return self.x0 + (v - lo) / (hi - lo) * self.w

    def y(self, v):
        lo, hi = self.ylim
        return self.y0 + self.h - (v - lo) / (hi - lo) * self.h

    def axes(self, xlabel, ylabel, title) -> list[str]:
        out = [f'<rect x="{_n(self.x0)}" y="{_n(self.y0)}" width="{_n(self.w)}" '
               f'height="{_n(self.h)}" fill="none" stroke="#333"/>']
        for t in _nice_ticks(*self.xlim):
            px = self.x(t)
            out.append(f'<line x1="{_n(px)}" y1="{_n(self.y0 + self.h)}" '
                       f'x2="{_n(px)}" y2="{_n(self.y0 + self.h + 5)}" stroke="#333"/>')
            out.append(f'<text x="{_n(px)}" y="{_n(self.y0 + self.h + 18)}" '
                       f'text-anchor="middle">{_n(t)}</text>')
        for t in _nice_ticks(*self.ylim):
            py = self.y(t)
            out.append(f'<line x1="{_n(self.x0 - 5)}" y1="{_n(py)}" '
                       f'x2="{_n(self.x0)}" y2="{_n(py)}" stroke="#333"/>')
            out.append(f'<text x="{_n(self.x0 - 8)}" y="{_n(py + 4)}" '
                       f'text-anchor="end">{_n(t)}</text>')
        cx = self.x0 + self.w / 2
        out.append(f'<text x="{_n(cx)}" y="{_n(self.y0 + self.h + 38)}" '
                   f'text-anchor="middle">{escape(xlabel)}</text>')
        out.append(f'<text x="{_n(self.x0 - 45)}" y="{_n(self.y0 + self.h / 2)}" '
                   f'text-anchor="middle" transform="rotate(-90 '
                   f'{_n(self.x0 - 45)} {_n(self.y0 + self.h / 2)})">'
                   f'{escape(ylabel)}</text>')
        out.append(f'<text x="{_n(cx)}" y="{_n(self.y0 - 10)}" '
                   f'text-anchor="middle" font-weight="bold">{escape(title)}</text>')
        return out

    def series(self, xs, ys, color) -> list[str]:
        pts = " ".join(f"{_n(self.x(a))},{_n(self.y(b))}" for a, b in zip(xs, ys))
        out = [f'<polyline points="{pts}" fill="none" stroke="{color}" '
               f'stroke-width="2"/>']
        out += [f'<circle cx="{_n(self.x(a))}" cy="{_n(self.y(b))}" r="3" '
                f'fill="{color}"/>' for a, b in zip(xs, ys)]
        return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" '
            f'height="{HEIGHT}" viewBox="0 0 {WIDTH} {HEIGHT}" '
            f'font-family="sans-serif" font-size="11">')
    return "\n".join([head, f'<rect width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
                      *body, "</svg>"]) + "\n"


def _padded(lo, hi, frac=0.08):
    pad = (hi - lo) * frac or 1.0
    return lo - pad, hi + pad


def grid_figure(summaries: Sequence[CohortSummary]) -> str:
    """Group mean at the final visit (left) and event proportion (right) vs p0."""
    by_arm = {arm: sorted((s for s in summaries if s.arm is arm),
                          key=lambda s: s.p0) for arm in Arm}
    p0s = [s.p0 for s in summaries]
    xlim = (min(p0s), max(p0s)) if max(p0s) > min(p0s) else (min(p0s) - 0.01, max(p0s) + 0.01)

    means = [s.mean_week68_observed for s in summaries]
    left = _Panel(90, 50, 280, 360, xlim, _padded(min(means), max(means)))
    props = [s.ie_proportion for s in summaries]
    right = _Panel(500, 50, 280, 360, xlim, (0.0, max(0.1, max(props) * 1.1)))

    body = left.axes("expit(beta0)", "Group mean at week 68 (%)",
                     "Group mean at week 68")
    body += right.axes("expit(beta0)", "Proportion with event",
                       "Event by week 68")
    for arm, rows in by_arm.items():
        xs = [s.p0 for s in rows]
        body += left.series(xs, [s.mean_week68_observed for s in rows], COLORS[arm])
        body += right.series(xs, [s.ie_proportion for s in rows], COLORS[arm])
    for i, arm in enumerate(Arm):
        x = 300 + 140 * i
        body.append(f'<rect x="{x}" y="461" width="12" height="12" '
                    f'fill="{COLORS[arm]}"/>')
        body.append(f'<text x="{x + 18}" y="471">{arm.value}</text>')
    return _document(body)


def forest_plot(groups: Sequence[tuple[str, Sequence[TrialEffect], PosteriorSummary]],
                z: float = 1.959963984540054) -> str:
    """
    Per-trial point estimates with 95% intervals and a pooled diamond for each
    estimand group.
    """
    rows: list[tuple[str, object]] = []
    for label, effects, post in groups:
        rows.append(("header", label))
        rows += [("trial", e) for e in effects]
        rows.append(("pooled", post))

    lows, highs = [0.0], [0.0]
    for kind, item in rows:
        if kind == "trial":
            lo = item.ci_lo if item.ci_lo is not None else item.y - z * item.s
            hi = item.ci_hi if item.ci_hi is not None else item.y + z * item.s
            lows.append(lo)
            highs.append(hi)
        elif kind == "pooled":
            lows.append(item.ci95[0])
            highs.append(item.ci95[1])
    panel = _Panel(260, 40, 380, 400, _padded(min(lows), max(highs), 0.05), (0, 1))
    step = panel.h / max(len(rows), 1)

    body = [f'<rect x="{_n(panel.x0)}" y="{_n(panel.y0)}" width="{_n(panel.w)}" '
            f'height="{_n(panel.h)}" fill="none" stroke="#333"/>']
    for t in _nice_ticks(*panel.xlim):
        px = panel.x(t)
        body.append(f'<line x1="{_n(px)}" y1="{_n(panel.y0 + panel.h)}" x2="{_n(px)}" '
                    f'y2="{_n(panel.y0 + panel.h + 5)}" stroke="#333"/>')
        body.append(f'<text x="{_n(px)}" y="{_n(panel.y0 + panel.h + 18)}" '
                    f'text-anchor="middle">{_n(t)}</text>')
    zx = panel.x(0.0)
    body.append(f'<line x1="{_n(zx)}" y1="{_n(panel.y0)}" x2="{_n(zx)}" '
                f'y2="{_n(panel.y0 + panel.h)}" stroke="#999" stroke-dasharray="4 3"/>')
    body.append(f'<text x="{_n(panel.x0 + panel.w / 2)}" '
                f'y="{_n(panel.y0 + panel.h + 38)}" text-anchor="middle">'
                f'Treatment difference (%) with 95% interval</text>')

    for i, (kind, item) in enumerate(rows):
        cy = panel.y0 + step * (i + 0.5)
        if kind == "header":
            body.append(f'<text x="20" y="{_n(cy + 4)}" font-weight="bold">'
                        f'{escape(str(item))}</text>')
        elif kind == "trial":
            lo = item.ci_lo if item.ci_lo is not None else item.y - z * item.s
            hi = item.ci_hi if item.ci_hi is not None else item.y + z * item.s
            body.append(f'<text x="30" y="{_n(cy + 4)}">{escape(item.trial_id)}</text>')
            body.append(f'<line x1="{_n(panel.x(lo))}" y1="{_n(cy)}" '
                        f'x2="{_n(panel.x(hi))}" y2="{_n(cy)}" stroke="#333"/>')
            body.append(f'<rect x="{_n(panel.x(item.y) - 3)}" y="{_n(cy - 3)}" '
                        f'width="6" height="6" fill="#1f77b4"/>')
            body.append(f'<text x="{WIDTH - 10}" y="{_n(cy + 4)}" text-anchor="end">'
                        f'{item.y:.2f} ({lo:.2f}, {hi:.2f})</text>')
        else:
            lo, hi = item.ci95
            m = item.mu_mean
            half = min(step * 0.35, 8)
            pts = (f"{_n(panel.x(lo))},{_n(cy)} {_n(panel.x(m))},{_n(cy - half)} "
                   f"{_n(panel.x(hi))},{_n(cy)} {_n(panel.x(m))},{_n(cy + half)}")
            body.append(f'<text x="30" y="{_n(cy + 4)}" font-style="italic">'
                        f'Pooled</text>')
            body.append(f'<polygon points="{pts}" fill="#d62728"/>')
            body.append(f'<text x="{WIDTH - 10}" y="{_n(cy + 4)}" text-anchor="end" '
                        f'font-weight="bold">{m:.3g} ({lo:.3g}, {hi:.3g})</text>')
    return _document(body)
