"""Dependency-free SVG figures: cost vs Z, per-dimension control error, forecast-error heatmap."""
from __future__ import annotations

from html import escape

import numpy as np

COLORS = {"task-aware": "#e67e22", "weighted": "#27ae60", "task-agnostic": "#2e86c1"}
W_PX, H_PX, PAD = 560, 360, 56


class _Canvas:
    def __init__(self, width=W_PX, height=H_PX):
        self.w, self.h = width, height
        self.items = []

    def add(self, s):
        self.items.append(s)

    def text(self, x, y, s, size=12, anchor="middle", rotate=None):
        tr = f' transform="rotate({rotate} {x:.1f} {y:.1f})"' if rotate else ""
        self.add(f'<text x="{x:.1f}" y="{y:.1f}" font-size="{size}" text-anchor="{anchor}"'
                 f' font-family="sans-serif"{tr}>{escape(str(s))}</text>')

    def line(self, x1, y1, x2, y2, color="#000", width=1.0, dash=None):
        d = f' stroke-dasharray="{dash}"' if dash else ""
        self.add(f'<line x1="{x1:.2f}" y1="{y1:.2f}" x2="{x2:.2f}" y2="{y2:.2f}" stroke="{color}"'
                 f' stroke-width="{width}"{d}/>')

    def rect(self, x, y, w, h, fill, stroke="none"):
        self.add(f'<rect x="{x:.2f}" y="{y:.2f}" width="{w:.2f}" height="{h:.2f}" fill="{fill}" stroke="{stroke}"/>')

    def polyline(self, pts, color, width=2.0):
        p = " ".join(f"{x:.2f},{y:.2f}" for x, y in pts)
        self.add(f'<polyline points="{p}" fill="none" stroke="{color}" stroke-width="{width}"/>')

    def svg(self):
        body = "\n".join(self.items)
        return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.w}" height="{self.h}"'
                f' viewBox="0 0 {self.w} {self.h}">\n<rect width="100%" height="100%" fill="white"/>\n{body}\n</svg>\n')


def _axes(cv, xlo, xhi, ylo, yhi, xlabel, ylabel, title):
    x0, x1, y0, y1 = PAD, cv.w - 20, cv.h - PAD, 30
    sx = lambda v: x0 + (v - xlo) / (xhi - xlo or 1) * (x1 - x0)  # noqa: E731
    sy = lambda v: y0 - (v - ylo) / (yhi - ylo or 1) * (y0 - y1)  # noqa: E731
    cv.line(x0, y0, x1, y0)
    cv.line(x0, y0, x0, y1)
    for v in np.linspace(xlo, xhi, 6):
        cv.line(sx(v), y0, sx(v), y0 + 4)
        cv.text(sx(v), y0 + 16, f"{v:.3g}", 10)
    for v in np.linspace(ylo, yhi, 6):
        cv.line(x0 - 4, sy(v), x0, sy(v))
        cv.text(x0 - 6, sy(v) + 3, f"{v:.3g}", 10, anchor="end")
    cv.text((x0 + x1) / 2, cv.h - 14, xlabel)
    cv.text(14, (y0 + y1) / 2, ylabel, rotate=-90)
    cv.text((x0 + x1) / 2, 18, title, 13)
    return sx, sy


def cost_vs_z(curves, baseline, title="control cost vs bottleneck"):
    """``curves``: {label: array rows (Z, mean, q10, q90)}; ``baseline``: scalar."""
    cv = _Canvas()
    allz = np.concatenate([c[:, 0] for c in curves.values()])
    ally = np.concatenate([c[:, 1:4].ravel() for c in curves.values()] + [[baseline]])
    sx, sy = _axes(cv, allz.min(), allz.max(), 0.0, ally.max() * 1.05, "Z", "J", title)
    cv.line(sx(allz.min()), sy(baseline), sx(allz.max()), sy(baseline), "#000", 1.5, "6,4")
    for k, (label, c) in enumerate(curves.items()):
        color = COLORS.get(label.split("(")[0], "#7f8c8d")
        cv.polyline([(sx(z), sy(m)) for z, m in c[:, :2]], color)
        for z, _, lo, hi in c[:, :4]:
            cv.line(sx(z), sy(lo), sx(z), sy(hi), color, 1.0)
        cv.rect(cv.w - 190, 36 + 16 * k, 10, 10, color)
        cv.text(cv.w - 176, 45 + 16 * k, label, 11, anchor="start")
    return cv.svg()


def control_error_bars(errors, title="per-dimension control error"):
    """``errors``: {label: per-dimension mean squared control error}."""
    cv = _Canvas()
    labels = list(errors)
    n = len(next(iter(errors.values())))
    ymax = max(max(v) for v in errors.values()) * 1.1 or 1.0
    sx, sy = _axes(cv, -0.5, n - 0.5, 0.0, ymax, "dimension i", "MSE u(i)", title)
    bw = (sx(1) - sx(0)) * 0.8 / len(labels)
    for k, label in enumerate(labels):
        color = COLORS.get(label.split("(")[0], "#7f8c8d")
        for i, v in enumerate(errors[label]):
            x = sx(i) - 0.4 * (sx(1) - sx(0)) + k * bw
            cv.rect(x, sy(v), bw, sy(0) - sy(v), color)
        cv.rect(cv.w - 190, 36 + 16 * k, 10, 10, color)
        cv.text(cv.w - 176, 45 + 16 * k, label, 11, anchor="start")
    return cv.svg()


def heatmap(matrix, title="forecast error by horizon"):
    """``matrix``: p x H mean squared errors; rows are dimensions, columns offsets."""
    M = np.asarray(matrix, float)
    p, H = M.shape
    cv = _Canvas()
    x0, x1, y0, y1 = PAD, cv.w - 20, cv.h - PAD, 30
    cw, ch = (x1 - x0) / H, (y0 - y1) / p
    top = M.max() or 1.0
    for i in range(p):
        for j in range(H):
            a = M[i, j] / top
            r, g, b = int(255 - 200 * a), int(255 - 160 * a), int(255 - 60 * a)
            cv.rect(x0 + j * cw, y1 + i * ch, cw, ch, f"rgb({r},{g},{b})")
    cv.text((x0 + x1) / 2, cv.h - 14, "horizon offset")
    cv.text(14, (y0 + y1) / 2, "dimension", rotate=-90)
    cv.text((x0 + x1) / 2, 18, f"{title} (max {top:.3g})", 13)
    for j in range(H):
        cv.text(x0 + (j + 0.5) * cw, y0 + 14, j, 9)
    for i in range(p):
        cv.text(x0 - 6, y1 + (i + 0.6) * ch, i, 9, anchor="end")
    return cv.svg()


def write_report_plots(report, out_dir):
    """Cost-vs-Z per scheme, control-error bars and heatmaps at the smallest swept Z."""
    from pathlib import Path

    from .harness import _label, cost_curve

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    cells = report.ok_cells()
    if not cells:
        return []
    written = []
    for scen in sorted({c.scenario for c in cells}):
        sc = [c for c in cells if c.scenario == scen]
        keys = sorted({(c.scheme, c.lambda_f) for c in sc}, key=lambda k: (k[0], k[1] or 0.0))
        curves, baseline = {}, None
        sub = type(report)([c for c in sc])
        for scheme, lam in keys:
            rows = cost_curve(sub, scheme, lam)
            curves[_label(scheme, lam)] = rows[:, :4]
            baseline = rows[0, 4]
        p = out / f"{scen}_cost_vs_z.svg"
        p.write_text(cost_vs_z(curves, baseline, f"{scen}: control cost vs Z"))
        written.append(p)
        zmin = min(c.Z for c in sc)
        errs = {}
        for scheme, lam in keys:
            at = [c for c in sc if c.scheme == scheme and c.lambda_f == lam and c.Z == zmin]
            if at:
                errs[_label(scheme, lam)] = np.mean([c.control_mse for c in at], axis=0).tolist()
                hp = out / f"{scen}_{scheme}_Z{zmin}_forecast_heatmap.svg"
                hp.write_text(heatmap(np.mean([c.forecast_error for c in at], axis=0),
                                      f"{_label(scheme, lam)}, Z={zmin}"))
                written.append(hp)
        p = out / f"{scen}_control_error_Z{zmin}.svg"
        p.write_text(control_error_bars(errs, f"{scen}: control error, Z={zmin}"))
        written.append(p)
    return written
