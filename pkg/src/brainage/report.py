"""Deterministic SVG figures: agreement heatmaps, ranked group importance,
regional scalp maps and SHAP-vs-value scatter rows.

Markup is emitted by hand. Coordinates are printed with two decimals and
numeric labels are the artifact values rounded half-to-even, so equal
inputs give byte-identical files.
"""
from __future__ import annotations

import csv
import math
import os
import tempfile
from dataclasses import dataclass, field
from decimal import ROUND_HALF_EVEN, Decimal
from pathlib import Path
from typing import Mapping, Sequence
from xml.sax.saxutils import escape

import numpy as np

from . import signal as sig
from ._utils import fmt_float
from .agreement import AgreementMatrix
from .explain.shapley import ShapMatrix
from .features.catalogue import FeatureDescriptor
from .features.extraction import FeatureMatrix

KINDS = ("heatmap", "ranked_bars", "topo_map", "shap_scatter")

# anchor colours, interpolated linearly in RGB
PALETTES = {
    "rdbu": ["#2166ac", "#67a9cf", "#d1e5f0", "#f7f7f7", "#fddbc7", "#ef8a62", "#b2182b"],
    "viridis": ["#440154", "#414487", "#2a788e", "#22a884", "#7ad151", "#fde725"],
    "reds": ["#fff5f0", "#fcbba1", "#fb6a4a", "#cb181d", "#67000d"],
}
DEFAULT_PALETTE = {"heatmap": "rdbu", "ranked_bars": "viridis", "topo_map": "reds", "shap_scatter": "viridis"}


class RenderError(ValueError):
    pass


def label(value: float, digits: int = 2) -> str:
    """Half-to-even rounding of the value's shortest decimal form."""
    q = Decimal(repr(float(value))).quantize(Decimal(1).scaleb(-digits), rounding=ROUND_HALF_EVEN)
    text = f"{q:.{digits}f}"
    return text[1:] if text.startswith("-") and Decimal(text) == 0 else text


def _n(v: float) -> str:
    return f"{v:.2f}"


def color(t: float, palette: str) -> str:
    """Colour at position t in [0, 1] (clipped) along a palette."""
    anchors = PALETTES[palette]
    t = min(max(float(t), 0.0), 1.0) * (len(anchors) - 1)
    i = min(int(t), len(anchors) - 2)
    f = t - i
    a = [int(anchors[i][k:k + 2], 16) for k in (1, 3, 5)]
    b = [int(anchors[i + 1][k:k + 2], 16) for k in (1, 3, 5)]
    return "#" + "".join(f"{int(round(x + (y - x) * f)):02x}" for x, y in zip(a, b))


class _Svg:
    def __init__(self, width: float, height: float, title: str = ""):
        self.width, self.height = width, height
        self.parts = [
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{_n(width)}" height="{_n(height)}" '
            f'viewBox="0 0 {_n(width)} {_n(height)}" font-family="Helvetica, Arial, sans-serif">',
            f'<rect x="0" y="0" width="{_n(width)}" height="{_n(height)}" fill="#ffffff"/>',
        ]
        if title:
            self.text(width / 2, 18, title, size=13, anchor="middle", weight="bold")

    def rect(self, x, y, w, h, fill, stroke=None, cls=None):
        extra = f' stroke="{stroke}" stroke-width="0.5"' if stroke else ""
        extra += f' class="{cls}"' if cls else ""
        self.parts.append(f'<rect x="{_n(x)}" y="{_n(y)}" width="{_n(w)}" height="{_n(h)}" fill="{fill}"{extra}/>')

    def circle(self, x, y, r, fill, stroke="#333333", cls=None):
        extra = f' class="{cls}"' if cls else ""
        self.parts.append(f'<circle cx="{_n(x)}" cy="{_n(y)}" r="{_n(r)}" fill="{fill}" stroke="{stroke}" '
                          f'stroke-width="0.5"{extra}/>')

    def line(self, x1, y1, x2, y2, stroke="#333333", width=1.0):
        self.parts.append(f'<line x1="{_n(x1)}" y1="{_n(y1)}" x2="{_n(x2)}" y2="{_n(y2)}" '
                          f'stroke="{stroke}" stroke-width="{_n(width)}"/>')

    def text(self, x, y, s, size=10, anchor="start", weight=None, fill="#000000", cls=None, rotate=None):
        extra = f' font-weight="{weight}"' if weight else ""
        extra += f' class="{cls}"' if cls else ""
        extra += f' transform="rotate({_n(rotate)} {_n(x)} {_n(y)})"' if rotate is not None else ""
        self.parts.append(f'<text x="{_n(x)}" y="{_n(y)}" font-size="{size}" text-anchor="{anchor}" '
                          f'fill="{fill}"{extra}>{escape(str(s))}</text>')

    def colorbar(self, x, y, w, h, vmin, vmax, palette, steps=20):
        for k in range(steps):
            self.rect(x, y + h * (steps - 1 - k) / steps, w, h / steps + 0.01, color((k + 0.5) / steps, palette))
        self.text(x + w + 4, y + 8, label(vmax), size=9)
        self.text(x + w + 4, y + h, label(vmin), size=9)

    def document(self) -> str:
        return "\n".join(self.parts + ["</svg>"]) + "\n"


def _scale(v, vmin, vmax):
    return (v - vmin) / (vmax - vmin)


# ---------------------------------------------------------------------------
# figures

def heatmap_svg(am: AgreementMatrix, vmin: float = -1.0, vmax: float = 1.0, palette: str = "rdbu",
                title: str | None = None, cell: float = 44.0) -> str:
    """Agreement matrix with every cell annotated by rho; undefined
    coefficients carry a trailing asterisk."""
    n = len(am.models)
    left, top = 110.0, 40.0 + 70.0
    svg = _Svg(left + n * cell + 70, top + n * cell + 20, title if title is not None else f"Agreement ({am.kind})")
    for j, m in enumerate(am.models):
        svg.text(left + (j + 0.5) * cell, top - 6, m, size=9, anchor="start", rotate=-60)
    for i, m in enumerate(am.models):
        svg.text(left - 6, top + (i + 0.6) * cell, m, size=9, anchor="end")
        for j in range(n):
            v = float(am.matrix[i, j])
            t = _scale(v, vmin, vmax)
            svg.rect(left + j * cell, top + i * cell, cell, cell, color(t, palette), stroke="#ffffff", cls="cell")
            mark = "*" if am.degenerate[i, j] else ""
            ink = "#ffffff" if abs(t - 0.5) > 0.35 else "#000000"
            svg.text(left + (j + 0.5) * cell, top + (i + 0.62) * cell, label(v) + mark, size=10, anchor="middle",
                     fill=ink, cls="value")
    svg.colorbar(left + n * cell + 14, top, 12, n * cell, vmin, vmax, palette)
    return svg.document()


def ranked_bars_svg(scores: Mapping[str, float], title: str = "Group importance", palette: str = "viridis",
                    bar: float = 20.0, width: float = 320.0) -> str:
    """Horizontal bars, largest first; ties are ordered by group name."""
    items = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))
    if not items:
        raise RenderError("nothing to plot")
    vmax = max(v for _, v in items) or 1.0
    left, top = 150.0, 36.0
    svg = _Svg(left + width + 70, top + len(items) * (bar + 4) + 20, title)
    for k, (g, v) in enumerate(items):
        y = top + k * (bar + 4)
        svg.text(left - 6, y + bar * 0.7, g, size=10, anchor="end")
        svg.rect(left, y, width * v / vmax, bar, color(1.0 - k / max(len(items) - 1, 1), palette), cls="bar")
        svg.text(left + width * v / vmax + 4, y + bar * 0.7, label(v, 3), size=9, cls="value")
    return svg.document()


def _project(c: np.ndarray) -> tuple[float, float]:
    """Azimuthal equidistant projection from the vertex, nose up."""
    x, y, z = c
    r = math.acos(max(-1.0, min(1.0, z))) / (math.pi / 2)
    az = math.atan2(y, x)
    return r * math.cos(az), -r * math.sin(az)


def topo_map_svg(panels: Mapping[str, Mapping[str, float]], centroids: Mapping[str, np.ndarray],
                 title: str = "Regional importance", palette: str = "reds", radius: float = 90.0) -> str:
    """One head outline per panel with a disk at every region centroid,
    coloured by importance divided by the panel maximum."""
    if not panels:
        raise RenderError("nothing to plot")
    pad = 24.0
    size = 2 * radius + 2 * pad
    svg = _Svg(size * len(panels) + 60, size + 60, title)
    for k, (name, scores) in enumerate(panels.items()):
        missing = [r for r in scores if r not in centroids]
        if missing:
            raise RenderError(f"regions {missing[:3]} have no centroid")
        cx, cy = k * size + size / 2, 40 + size / 2
        svg.circle(cx, cy, radius, "none", stroke="#666666")
        svg.line(cx - 8, cy - radius + 2, cx, cy - radius - 10)
        svg.line(cx + 8, cy - radius + 2, cx, cy - radius - 10)
        svg.text(cx, 40 + 12, name, size=11, anchor="middle")
        top = max(scores.values()) if scores else 0.0
        for region in sorted(scores):
            v = scores[region] / top if top > 0 else 0.0
            px, py = _project(np.asarray(centroids[region], dtype=float))
            svg.circle(cx + px * radius * 0.92, cy + py * radius * 0.92, 13, color(v, palette), cls="region")
            svg.text(cx + px * radius * 0.92, cy + py * radius * 0.92 + 3, label(v), size=7, anchor="middle",
                     cls="value")
    svg.colorbar(len(panels) * size + 10, 50, 10, size - 40, 0.0, 1.0, palette)
    return svg.document()


def swarm_offsets(x: np.ndarray, order_key: np.ndarray, n_bins: int = 40) -> np.ndarray:
    """Deterministic beeswarm offsets: points sharing an x bin get offsets
    0, +1, -1, +2, ... in order of ``order_key`` (ties by index)."""
    x = np.asarray(x, dtype=float)
    lo, hi = float(x.min()), float(x.max())
    bins = np.zeros(len(x), dtype=int) if hi == lo else np.minimum(((x - lo) / (hi - lo) * n_bins).astype(int), n_bins - 1)
    out = np.zeros(len(x))
    for b in np.unique(bins):
        idx = np.flatnonzero(bins == b)
        idx = idx[np.lexsort((idx, np.asarray(order_key)[idx]))]
        for r, i in enumerate(idx):
            out[i] = ((r + 1) // 2) * (1 if r % 2 else -1)
    return out


def shap_scatter_svg(rows: Sequence[tuple[str, np.ndarray, np.ndarray]], title: str = "SHAP values",
                     palette: str = "viridis", width: float = 420.0, row_h: float = 34.0) -> str:
    """One swarm row per (label, phi, feature value); phi on x, value as colour."""
    if not rows:
        raise RenderError("nothing to plot")
    allphi = np.concatenate([np.asarray(r[1], dtype=float) for r in rows])
    lim = float(np.max(np.abs(allphi))) or 1.0
    left, top = 130.0, 40.0
    svg = _Svg(left + width + 70, top + len(rows) * row_h + 40, title)
    x0 = left + width / 2
    svg.line(x0, top - 4, x0, top + len(rows) * row_h, stroke="#999999", width=0.5)
    for k, (name, phi, val) in enumerate(rows):
        phi, val = np.asarray(phi, dtype=float), np.asarray(val, dtype=float)
        yc = top + (k + 0.5) * row_h
        svg.text(left - 6, yc + 3, name, size=9, anchor="end")
        vlo, vhi = float(val.min()), float(val.max())
        t = np.full(len(val), 0.5) if vhi == vlo else (val - vlo) / (vhi - vlo)
        off = swarm_offsets(phi, val)
        spread = max(np.abs(off).max(), 1.0)
        for p, tt, o in zip(phi, t, off):
            svg.circle(x0 + p / lim * width / 2, yc + o / spread * row_h * 0.4, 2.2, color(tt, palette), stroke="none",
                       cls="point")
    ya = top + len(rows) * row_h + 14
    svg.text(left, ya, label(-lim), size=9, anchor="start")
    svg.text(x0, ya, "0.00", size=9, anchor="middle")
    svg.text(left + width, ya, label(lim), size=9, anchor="end")
    svg.text(x0, ya + 14, "SHAP value", size=10, anchor="middle")
    svg.colorbar(left + width + 20, top, 10, len(rows) * row_h, 0.0, 1.0, palette)
    return svg.document()


# ---------------------------------------------------------------------------
# artifacts -> figures

def read_table(path: str | Path) -> tuple[list[str], list[str], np.ndarray]:
    """(row labels, value column names, values) from a ``group,<col>...`` CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        header = rows[0]
        labels = [r[0] for r in rows[1:]]
        values = np.array([[float(v) for v in r[1:]] for r in rows[1:]], dtype=float).reshape(len(labels), -1)
    except (OSError, IndexError, ValueError) as exc:
        raise RenderError(f"{path}: not an importance table ({exc})") from None
    if values.shape[1] != len(header) - 1 or not labels:
        raise RenderError(f"{path}: ragged or empty importance table")
    return labels, header[1:], values


def write_table(path: str | Path, labels: Sequence[str], columns: Sequence[str], values: np.ndarray) -> None:
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["group"] + list(columns))
        for lab, row in zip(labels, np.atleast_2d(values)):
            w.writerow([lab] + [fmt_float(v) for v in row])


@dataclass
class RenderSpec:
    """What to draw and from which artifact.

    ``options`` by kind: heatmap none; ranked_bars ``column``; topo_map
    ``montage`` and ``regions`` file paths (bundled defaults otherwise);
    shap_scatter ``features`` (feature CSV), ``feature`` (for example
    ``alpha_pow_freq_bands``) and ``max_rows``.
    """

    kind: str
    input: str | Path
    vmin: float | None = None
    vmax: float | None = None
    palette: str | None = None
    title: str | None = None
    options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise RenderError(f"kind must be one of {KINDS}")
        self.palette = self.palette or DEFAULT_PALETTE[self.kind]
        if self.palette not in PALETTES:
            raise RenderError(f"unknown palette {self.palette!r}")
        if self.vmin is not None and self.vmax is not None and not self.vmin < self.vmax:
            raise RenderError("colour scale needs vmin < vmax")
        if not Path(self.input).exists():
            raise RenderError(f"input {self.input} does not exist")


def _scatter_rows(spec: RenderSpec) -> list[tuple[str, np.ndarray, np.ndarray]]:
    try:
        shap = ShapMatrix.from_csv(spec.input)
    except Exception as exc:  # noqa: BLE001 - any parse failure is a schema mismatch
        raise RenderError(f"{spec.input}: not a SHAP matrix ({exc})") from None
    feats_path = spec.options.get("features")
    if not feats_path:
        raise RenderError("shap_scatter needs the 'features' option")
    fm = FeatureMatrix.from_csv(feats_path)
    band, _, measure = str(spec.options.get("feature", "")).partition("_")
    pos = {s: i for i, s in enumerate(fm.subject_ids)}
    col = {c: j for j, c in enumerate(fm.columns)}
    rows = []
    for j, c in enumerate(shap.columns):
        d = FeatureDescriptor.parse(c)
        full = f"{d.measure}.{d.component}" if d.component else d.measure
        if d.band != band or full != measure:
            continue
        if c not in col or any(s not in pos for s in shap.sample_ids):
            raise RenderError("feature matrix does not cover the SHAP matrix")
        vals = fm.X[[pos[s] for s in shap.sample_ids], col[c]]
        rows.append((f"{d.state} {d.channel}", shap.values[:, j], vals))
    if not rows:
        raise RenderError(f"no SHAP column matches feature {spec.options.get('feature')!r}")
    rows.sort(key=lambda r: (-float(np.abs(r[1]).mean()), r[0]))
    return rows[: int(spec.options.get("max_rows", 12))]


def render(spec: RenderSpec) -> str:
    """SVG document for ``spec``; raises RenderError on schema mismatch."""
    vmin = spec.vmin
    vmax = spec.vmax
    if spec.kind == "heatmap":
        try:
            am = AgreementMatrix.from_csv(spec.input, Path(spec.input).stem.replace("agreement_", ""))
        except Exception as exc:  # noqa: BLE001
            raise RenderError(f"{spec.input}: not an agreement matrix ({exc})") from None
        return heatmap_svg(am, -1.0 if vmin is None else vmin, 1.0 if vmax is None else vmax, spec.palette, spec.title)
    if spec.kind == "ranked_bars":
        labels, cols, values = read_table(spec.input)
        column = spec.options.get("column", cols[0])
        if column not in cols:
            raise RenderError(f"column {column!r} not in {spec.input}")
        scores = dict(zip(labels, values[:, cols.index(column)]))
        if any(v < 0 for v in scores.values()):
            raise RenderError("importance scores must be non-negative")
        return ranked_bars_svg(scores, spec.title or f"Group importance ({column})", spec.palette)
    if spec.kind == "topo_map":
        labels, cols, values = read_table(spec.input)
        montage = sig.Montage.load(spec.options["montage"]) if spec.options.get("montage") else sig.default_montage()
        regions = sig.RegionMap.load(spec.options["regions"]) if spec.options.get("regions") else sig.default_region_map()
        centroids = regions.centroids(montage)
        panels = {c: dict(zip(labels, values[:, k])) for k, c in enumerate(cols)}
        return topo_map_svg(panels, centroids, spec.title or "Regional importance", spec.palette)
    rows = _scatter_rows(spec)
    return shap_scatter_svg(rows, spec.title or f"SHAP values: {spec.options.get('feature')}", spec.palette)


def render_to_file(spec: RenderSpec, out: str | Path) -> Path:
    """Render then move into place, so a failed render leaves no file."""
    doc = render(spec)
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=out.parent, suffix=".svg.tmp")
    with os.fdopen(fd, "w") as fh:
        fh.write(doc)
    os.replace(tmp, out)
    return out
