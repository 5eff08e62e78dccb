"""Deterministic CSV/JSON/SVG emission and run manifests."""
from __future__ import annotations

import csv
import hashlib
import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

__all__ = ["fmt", "write_csv", "write_json", "svg_lines", "svg_scatter", "svg_heatmap",
           "write_manifest", "file_sha256"]

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#17becf", "#7f7f7f")


def fmt(v) -> str:
    """Stable text for a CSV cell: floats at 12 significant digits."""
    if isinstance(v, (bool, np.bool_)):
        return "1" if v else "0"
    if isinstance(v, (float, np.floating)):
        if math.isnan(v):
            return "nan"
        return f"{float(v):.12g}"
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return "" if v is None else str(v)


def write_csv(path: str | Path, header: list[str], rows: list) -> Path:
    """UTF-8, comma separated, header row; rows are dicts (keyed by header) or sequences."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            vals = [r.get(h) for h in header] if isinstance(r, dict) else list(r)
            w.writerow([fmt(v) for v in vals])
    return path


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.floating, float)):
        v = float(obj)
        return v if math.isfinite(v) else None
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, np.bool_):
        return bool(obj)
    return obj


def write_json(path: str | Path, obj) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n", encoding="utf-8")
    return path


def file_sha256(path: str | Path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out_dir: str | Path, cfg_hash: str, config: dict, files: list[Path],
                   extra: dict | None = None) -> Path:
    """manifest.json listing every emitted file with its hash; no timestamps, so reruns match."""
    out_dir = Path(out_dir)
    entries = sorted(({"file": str(Path(f).relative_to(out_dir)), "sha256": file_sha256(f),
                       "bytes": Path(f).stat().st_size} for f in files), key=lambda e: e["file"])
    return write_json(out_dir / "manifest.json",
                      {"config_hash": cfg_hash, "config": config, "files": entries, **(extra or {})})


# -------------------------------------------------------------------- SVG

W, H, PAD = 640, 440, 64


class _Axis:
    def __init__(self, lo, hi, log, a, b):
        if log:
            lo, hi = math.log10(lo), math.log10(hi)
        if hi <= lo:
            lo, hi = lo - 0.5, hi + 0.5
        self.lo, self.hi, self.log, self.a, self.b = lo, hi, log, a, b

    def __call__(self, v):
        v = math.log10(v) if self.log else v
        return self.a + (v - self.lo) / (self.hi - self.lo) * (self.b - self.a)

    def ticks(self):
        if self.log:
            return [10.0 ** k for k in range(math.floor(self.lo), math.ceil(self.hi) + 1)
                    if self.lo - 1e-9 <= k <= self.hi + 1e-9]
        return list(np.linspace(self.lo, self.hi, 5))


def _frame(out, xa, ya, xlabel, ylabel, title):
    out.append(f'<rect x="{PAD}" y="{PAD // 2}" width="{W - 1.5 * PAD:.0f}" height="{H - 1.5 * PAD:.0f}" '
               'fill="none" stroke="black"/>')
    for t in xa.ticks():
        x = xa(t)
        out.append(f'<line x1="{x:.2f}" y1="{H - PAD}" x2="{x:.2f}" y2="{H - PAD + 5}" stroke="black"/>')
        out.append(f'<text x="{x:.2f}" y="{H - PAD + 18}" font-size="11" text-anchor="middle">{t:.3g}</text>')
    for t in ya.ticks():
        y = ya(t)
        out.append(f'<line x1="{PAD - 5}" y1="{y:.2f}" x2="{PAD}" y2="{y:.2f}" stroke="black"/>')
        out.append(f'<text x="{PAD - 8}" y="{y + 4:.2f}" font-size="11" text-anchor="end">{t:.3g}</text>')
    out.append(f'<text x="{W / 2:.0f}" y="{H - 12}" font-size="13" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{H / 2:.0f}" font-size="13" text-anchor="middle" '
               f'transform="rotate(-90 16 {H / 2:.0f})">{escape(ylabel)}</text>')
    if title:
        out.append(f'<text x="{W / 2:.0f}" y="20" font-size="14" text-anchor="middle">{escape(title)}</text>')


def _finish(path, out):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    body = "\n".join(out)
    path.write_text(f'<svg xmlns="http://www.w3.org/2000/svg" width="{W}" height="{H}" '
                    f'viewBox="0 0 {W} {H}">\n{body}\n</svg>\n', encoding="utf-8")
    return path


def svg_lines(path, series: dict, xlabel="", ylabel="", title="", xlog=False, ylog=False,
              markers=True) -> Path:
    """series: label -> (xs, ys).  Non-finite (or, on log axes, nonpositive) points are skipped."""
    def ok(x, y):
        return (math.isfinite(x) and math.isfinite(y) and (x > 0 or not xlog) and (y > 0 or not ylog))
    pts = [(x, y) for xs, ys in series.values() for x, y in zip(xs, ys) if ok(x, y)]
    xs_all = [p[0] for p in pts] or [1.0]
    ys_all = [p[1] for p in pts] or [1.0]
    xa = _Axis(min(xs_all), max(xs_all), xlog, PAD, W - PAD / 2)
    ya = _Axis(min(ys_all), max(ys_all), ylog, H - PAD, PAD / 2)
    out = []
    _frame(out, xa, ya, xlabel, ylabel, title)
    for i, (label, (xs, ys)) in enumerate(series.items()):
        col = PALETTE[i % len(PALETTE)]
        p = [(xa(x), ya(y)) for x, y in zip(xs, ys) if ok(x, y)]
        if len(p) > 1:
            d = " ".join(f"{x:.2f},{y:.2f}" for x, y in p)
            out.append(f'<polyline points="{d}" fill="none" stroke="{col}" stroke-width="1.5"/>')
        if markers:
            out.extend(f'<circle cx="{x:.2f}" cy="{y:.2f}" r="2.5" fill="{col}"/>' for x, y in p)
        ly = PAD / 2 + 16 + 16 * i
        out.append(f'<rect x="{W - PAD / 2 - 150}" y="{ly - 9}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{W - PAD / 2 - 135}" y="{ly}" font-size="11">{escape(str(label))}</text>')
    return _finish(path, out)


def svg_scatter(path, groups: dict, xlabel="Re", ylabel="Im", title="", circles=()) -> Path:
    """groups: label -> list of (x, y); ``circles`` are reference radii drawn dashed."""
    pts = [p for g in groups.values() for p in g]
    r = max([math.hypot(*p) for p in pts] + list(circles) + [1e-9]) * 1.15
    xa = _Axis(-r, r, False, PAD, W - PAD / 2)
    ya = _Axis(-r, r, False, H - PAD, PAD / 2)
    out = []
    _frame(out, xa, ya, xlabel, ylabel, title)
    sx = (xa(1.0) - xa(0.0))
    sy = (ya(0.0) - ya(1.0))
    for rad in circles:
        out.append(f'<ellipse cx="{xa(0):.2f}" cy="{ya(0):.2f}" rx="{rad * sx:.2f}" ry="{rad * sy:.2f}" '
                   'fill="none" stroke="gray" stroke-dasharray="4 3"/>')
    for i, (label, g) in enumerate(groups.items()):
        col = PALETTE[i % len(PALETTE)]
        out.extend(f'<circle cx="{xa(x):.2f}" cy="{ya(y):.2f}" r="4" fill="{col}" fill-opacity="0.7"/>'
                   for x, y in g)
        ly = PAD / 2 + 16 + 16 * i
        out.append(f'<rect x="{W - PAD / 2 - 110}" y="{ly - 9}" width="10" height="10" fill="{col}"/>')
        out.append(f'<text x="{W - PAD / 2 - 95}" y="{ly}" font-size="11">{escape(str(label))}</text>')
    return _finish(path, out)


def svg_heatmap(path, xs, ys, z, xlabel="", ylabel="", title="", line=None) -> Path:
    """z[i, j] over (xs[j], ys[i]) on log axes; ``line`` an optional polyline of (x, y)."""
    xs, ys, z = np.asarray(xs, float), np.asarray(ys, float), np.asarray(z, float)
    lx, ly = np.log10(xs), np.log10(ys)

    def edges(v):
        if len(v) == 1:
            return np.array([v[0] - 0.5, v[0] + 0.5])
        mid = 0.5 * (v[1:] + v[:-1])
        return np.concatenate([[2 * v[0] - mid[0]], mid, [2 * v[-1] - mid[-1]]])
    ex, ey = 10 ** edges(lx), 10 ** edges(ly)
    xa = _Axis(ex[0], ex[-1], True, PAD, W - PAD / 2)
    ya = _Axis(ey[0], ey[-1], True, H - PAD, PAD / 2)
    fin = z[np.isfinite(z)]
    lo, hi = (float(fin.min()), float(fin.max())) if fin.size else (0.0, 1.0)
    out = []
    for i in range(len(ys)):
        for j in range(len(xs)):
            t = 0.0 if hi == lo or not np.isfinite(z[i, j]) else (z[i, j] - lo) / (hi - lo)
            col = f"rgb({int(255 * (1 - t))},{int(80 + 120 * t)},{int(255 * t)})"
            x0, x1 = xa(ex[j]), xa(ex[j + 1])
            y0, y1 = ya(ey[i + 1]), ya(ey[i])
            out.append(f'<rect x="{x0:.2f}" y="{y0:.2f}" width="{x1 - x0:.2f}" height="{y1 - y0:.2f}" '
                       f'fill="{col}"><title>{fmt(z[i, j])}</title></rect>')
    if line is not None:
        p = [(xa(x), ya(y)) for x, y in line if ex[0] <= x <= ex[-1] and ey[0] <= y <= ey[-1]]
        if len(p) > 1:
            d = " ".join(f"{x:.2f},{y:.2f}" for x, y in p)
            out.append(f'<polyline points="{d}" fill="none" stroke="blue" stroke-dasharray="6 4" stroke-width="2"/>')
    _frame(out, xa, ya, xlabel, ylabel, title)
    out.append(f'<text x="{W - PAD / 2:.0f}" y="{H - 24}" font-size="11" text-anchor="end">'
               f'range {lo:.4g} .. {hi:.4g}</text>')
    return _finish(path, out)
