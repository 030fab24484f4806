"""Dependency-free SVG plots from CSV tables.

Output is a pure function of the CSV contents: fixed number formatting,
no timestamps, no random ids.
"""
from __future__ import annotations

import csv
from pathlib import Path

import numpy as np

from .errors import PlotError

W, H = 480, 360
PAD = 56

KIND_COLUMNS = {
    "loglog": ("h", "error"),
    "profile": ("t", "value"),
    "field-heatmap": ("x", "y", "value"),
}


def _fmt(v: float) -> str:
    return f"{v:.4g}"


def read_table(path) -> dict:
    path = Path(path)
    if not path.exists():
        raise PlotError(f"{path} does not exist")
    with path.open(newline="") as fh:
        rows = list(csv.DictReader(fh))
    if not rows:
        raise PlotError(f"{path} has no data rows")
    cols = {}
    for key in rows[0]:
        try:
            cols[key] = np.array([float(r[key]) for r in rows])
        except (TypeError, ValueError):
            continue
    return cols


def _require(cols, kind):
    need = KIND_COLUMNS[kind]
    missing = [c for c in need if c not in cols]
    if missing:
        raise PlotError(f"{kind} plot needs numeric columns {list(need)}; missing {missing}")


class _Axes:
    def __init__(self, x, y, logx=False, logy=False):
        self.logx, self.logy = logx, logy
        tx = np.log10(x) if logx else x
        ty = np.log10(y) if logy else y
        self.x0, self.x1 = float(np.min(tx)), float(np.max(tx))
        self.y0, self.y1 = float(np.min(ty)), float(np.max(ty))
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        if self.y1 == self.y0:
            self.y1 = self.y0 + 1.0

    def px(self, x):
        t = np.log10(x) if self.logx else x
        return PAD + (t - self.x0) / (self.x1 - self.x0) * (W - 2 * PAD)

    def py(self, y):
        t = np.log10(y) if self.logy else y
        return H - PAD - (t - self.y0) / (self.y1 - self.y0) * (H - 2 * PAD)

    def frame(self, xlabel, ylabel):
        out = [f'<rect x="{PAD}" y="{PAD}" width="{W - 2 * PAD}" height="{H - 2 * PAD}" '
               'fill="none" stroke="black"/>']
        for frac in (0.0, 0.5, 1.0):
            tx = self.x0 + frac * (self.x1 - self.x0)
            ty = self.y0 + frac * (self.y1 - self.y0)
            lx = 10**tx if self.logx else tx
            ly = 10**ty if self.logy else ty
            X = PAD + frac * (W - 2 * PAD)
            Y = H - PAD - frac * (H - 2 * PAD)
            out.append(f'<text x="{X:.2f}" y="{H - PAD + 16}" text-anchor="middle">{_fmt(lx)}</text>')
            out.append(f'<text x="{PAD - 6}" y="{Y + 4:.2f}" text-anchor="end">{_fmt(ly)}</text>')
        out.append(f'<text x="{W / 2:.2f}" y="{H - 12}" text-anchor="middle">{xlabel}</text>')
        out.append(f'<text x="14" y="{H / 2:.2f}" transform="rotate(-90 14 {H / 2:.2f})" '
                   f'text-anchor="middle">{ylabel}</text>')
        return out


def _polyline(ax, x, y, color, dash=False):
    pts = " ".join(f"{ax.px(a):.2f},{ax.py(b):.2f}" for a, b in zip(x, y))
    extra = ' stroke-dasharray="5,4"' if dash else ""
    return f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"{extra}/>'


def _document(body, title):
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
            f'viewBox="0 0 {W} {H}" font-family="sans-serif" font-size="11">')
    return "\n".join([head, f"<title>{title}</title>", *body, "</svg>", ""])


def loglog_svg(cols) -> str:
    h, e = cols["h"], cols["error"]
    ok = (h > 0) & (e > 0)
    if np.sum(ok) < 2:
        raise PlotError("loglog plot needs at least two positive (h, error) rows")
    h, e = h[ok], e[ok]
    order = np.argsort(h)
    h, e = h[order], e[order]
    slope = float(np.polyfit(np.log(h), np.log(e), 1)[0])
    ax = _Axes(h, e, logx=True, logy=True)
    body = ax.frame("h", "error")
    body.append(_polyline(ax, h, e, "#1f77b4"))
    for a, b in zip(h, e):
        body.append(f'<circle cx="{ax.px(a):.2f}" cy="{ax.py(b):.2f}" r="3" fill="#1f77b4"/>')
    body.append(f'<text x="{W - PAD}" y="{PAD - 8}" text-anchor="end">slope {slope:.3f}</text>')
    return _document(body, f"loglog slope {slope:.3f}")


def profile_svg(cols) -> str:
    t, v = cols["t"], cols["value"]
    order = np.argsort(t)
    t, v = t[order], v[order]
    ys = [v]
    ref = cols.get("reference")
    if ref is not None:
        ref = ref[order]
        ys.append(ref)
    ax = _Axes(t, np.concatenate(ys))
    body = ax.frame("t", "value")
    body.append(_polyline(ax, t, v, "#1f77b4"))
    if ref is not None:
        body.append(_polyline(ax, t, ref, "#d62728", dash=True))
    return _document(body, "profile")


def _color(s: float) -> str:
    # blue -> white -> red
    s = min(max(s, 0.0), 1.0)
    if s < 0.5:
        k = s / 0.5
        r, g, b = int(59 + k * 196), int(76 + k * 179), 255
    else:
        k = (s - 0.5) / 0.5
        r, g, b = 255, int(255 - k * 179), int(255 - k * 196)
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap_svg(cols) -> str:
    x, y, v = cols["x"], cols["y"], cols["value"]
    lo, hi = float(np.min(v)), float(np.max(v))
    span = hi - lo if hi > lo else 1.0
    ax = _Axes(x, y)
    body = ax.frame("x", "y")
    xs, ys = np.unique(x), np.unique(y)
    if len(xs) * len(ys) == len(x):
        # tensor grid: one rectangle per node, edges at midpoints
        def edges(a):
            mid = 0.5 * (a[1:] + a[:-1])
            return np.concatenate([[a[0]], mid, [a[-1]]])
        ex, ey = edges(xs), edges(ys)
        ix = np.searchsorted(xs, x)
        iy = np.searchsorted(ys, y)
        for i, j, val in zip(ix, iy, v):
            x0, x1 = ax.px(ex[i]), ax.px(ex[i + 1])
            y0, y1 = ax.py(ey[j + 1]), ax.py(ey[j])
            body.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                        f'fill="{_color((val - lo) / span)}"/>')
    else:
        for a, b, val in zip(x, y, v):
            body.append(f'<circle cx="{ax.px(a):.2f}" cy="{ax.py(b):.2f}" r="2" '
                        f'fill="{_color((val - lo) / span)}"/>')
    body.append(f'<text x="{W - PAD}" y="{PAD - 8}" text-anchor="end">[{_fmt(lo)}, {_fmt(hi)}]</text>')
    return _document(body, "field")


def plot(csv_path, kind: str, out=None) -> Path:
    """Render ``csv_path`` as ``kind`` and write the SVG next to it (or to ``out``)."""
    if kind not in KIND_COLUMNS:
        raise PlotError(f"unknown plot kind {kind!r}; expected one of {sorted(KIND_COLUMNS)}")
    cols = read_table(csv_path)
    _require(cols, kind)
    svg = {"loglog": loglog_svg, "profile": profile_svg, "field-heatmap": heatmap_svg}[kind](cols)
    out = Path(out) if out is not None else Path(csv_path).with_suffix(".svg")
    out.parent.mkdir(parents=True, exist_ok=True)
    out.write_text(svg)
    return out
