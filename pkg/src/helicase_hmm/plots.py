"""Minimal, deterministic SVG rendering for diagnostics.

Output is plain text with fixed number formatting so files can be diffed.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from helicase_hmm.model import ALPHABET, HelicaseModel, InnerState
from helicase_hmm.simulator import ConditionalMeans

_BASE_COLORS = {"A": "#2b8a3e", "C": "#1c7ed6", "G": "#f08c00", "T": "#c92a2a"}


class _Canvas:
    def __init__(self, width, height, xlim, ylim, margin=40):
        self.w, self.h, self.m = width, height, margin
        self.x0, self.x1 = xlim
        self.y0, self.y1 = ylim if ylim[1] > ylim[0] else (ylim[0] - 1, ylim[0] + 1)
        self.items: list[str] = []

    def sx(self, x):
        return self.m + (x - self.x0) / max(self.x1 - self.x0, 1e-12) * (self.w - 2 * self.m)

    def sy(self, y):
        return self.h - self.m - (y - self.y0) / (self.y1 - self.y0) * (self.h - 2 * self.m)

    def polyline(self, xs, ys, color, width=1.0, dash=None):
        pts = " ".join(f"{self.sx(x):.2f},{self.sy(y):.2f}" for x, y in zip(xs, ys))
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}"{d} points="{pts}"/>'
        )

    def line(self, x0, y0, x1, y1, color, width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.items.append(
            f'<line x1="{self.sx(x0):.2f}" y1="{self.sy(y0):.2f}" x2="{self.sx(x1):.2f}" '
            f'y2="{self.sy(y1):.2f}" stroke="{color}" stroke-width="{width}"{d}/>'
        )

    def text(self, x, y, s, size=10, anchor="middle"):
        self.items.append(
            f'<text x="{x:.2f}" y="{y:.2f}" font-size="{size}" text-anchor="{anchor}">{s}</text>'
        )

    def axes(self, xlabel, ylabel):
        m, w, h = self.m, self.w, self.h
        self.items.append(f'<rect x="{m}" y="{m}" width="{w - 2 * m}" height="{h - 2 * m}" '
                          'fill="none" stroke="#000"/>')
        self.text(w / 2, h - 8, xlabel)
        self.text(12, h / 2, ylabel, anchor="middle")

    def render(self) -> str:
        head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}" '
                f'viewBox="0 0 {self.w} {self.h}">')
        return "\n".join([head, *self.items, "</svg>"]) + "\n"


def conditional_means_svg(cm: ConditionalMeans, path=None, width=640, height=360) -> str:
    """One line per base: mean signal versus relative offset."""
    finite = cm.means[np.isfinite(cm.means)]
    lo, hi = (float(finite.min()), float(finite.max())) if finite.size else (0.0, 1.0)
    c = _Canvas(width, height, (float(cm.offsets[0]), float(cm.offsets[-1])), (lo, hi))
    c.axes("relative position", "mean signal")
    for j, b in enumerate(ALPHABET):
        ok = np.isfinite(cm.means[:, j])
        c.polyline(cm.offsets[ok], cm.means[ok, j], _BASE_COLORS[b], width=1.5)
        c.text(width - 30, 50 + 14 * j, b, anchor="start")
    for o in cm.offsets:
        c.text(c.sx(o), height - 24, str(int(o)))
    svg = c.render()
    if path is not None:
        Path(path).write_text(svg)
    return svg


def resquiggle_svg(model: HelicaseModel, signal, result, path=None, width=960, height=360) -> str:
    """Signal trace with k-mer boundaries and the level of each sample's chosen state.

    Back samples additionally get dotted lines one standard deviation either
    side of their mean.
    """
    x = np.asarray(signal, dtype=np.float64)
    n = np.arange(x.size)
    K = result.kmers[result.positions]
    e = result.states - 1
    mu = model.emission_mean[K, e]
    sd = np.sqrt(model.emission_var[K, e])
    lo = float(min(x.min(), (mu - sd).min()))
    hi = float(max(x.max(), (mu + sd).max()))
    c = _Canvas(width, height, (0.0, float(max(x.size - 1, 1))), (lo, hi))
    c.axes("sample", "signal")
    c.polyline(n, x, "#868e96", width=0.8)
    for s in result.starts[1:]:
        c.line(s - 0.5, lo, s - 0.5, hi, "#adb5bd", width=0.5)
    for i in range(x.size):
        c.line(i - 0.5, mu[i], i + 0.5, mu[i], "#1c7ed6", width=1.5)
        if result.states[i] == InnerState.BACK:
            for y in (mu[i] - sd[i], mu[i] + sd[i]):
                c.line(i - 0.5, y, i + 0.5, y, "#c92a2a", width=1.0, dash="2,2")
    svg = c.render()
    if path is not None:
        Path(path).write_text(svg)
    return svg
