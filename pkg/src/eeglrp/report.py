"""Aggregation of relevance maps and SVG figures (scalp maps, temporal traces, heatmaps)."""
from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence
from xml.sax.saxutils import escape

import numpy as np

from .io import read_container, write_container
from .lrp import AttributionResult
from .signal.recording import Montage

__all__ = [
    "AggregatePattern",
    "SpatialAggregate",
    "TemporalAggregate",
    "aggregate",
    "spatial_aggregate",
    "temporal_aggregate",
    "shortcut_score",
    "voronoi_cells",
    "render_scalp",
    "render_temporal",
    "render_heatmap",
    "FIGURE_SET",
    "render_figures",
    "save_aggregate",
    "load_aggregate",
]


@dataclass
class AggregatePattern:
    """Mean of many relevance maps, shape (n_channels, t_in), signed and absolute."""

    signed: np.ndarray
    absolute: np.ndarray
    n_maps: int
    channel_names: tuple[str, ...]
    metadata: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self):
        if self.signed.shape != self.absolute.shape or self.signed.ndim != 2:
            raise ValueError("signed and absolute maps must share a (channels, samples) shape")
        if self.n_maps < 1:
            raise ValueError("an aggregate needs at least one map")
        if len(self.channel_names) != self.signed.shape[0]:
            raise ValueError("one channel name per map row is required")

    def normalized(self) -> "AggregatePattern":
        """Copy with each variant divided by its largest magnitude (zero maps stay zero)."""

        def scale(a):
            m = np.max(np.abs(a))
            return a / m if m > 0 else a.copy()

        return AggregatePattern(scale(self.signed), scale(self.absolute), self.n_maps, self.channel_names, dict(self.metadata))


@dataclass
class SpatialAggregate:
    signed: np.ndarray
    absolute: np.ndarray
    channel_names: tuple[str, ...]


@dataclass
class TemporalAggregate:
    signed: np.ndarray
    absolute: np.ndarray


def aggregate(
    results: Sequence[AttributionResult | np.ndarray],
    channel_names: Sequence[str] | None = None,
    metadata: dict[str, Any] | None = None,
) -> AggregatePattern:
    """Elementwise mean and mean-absolute over every stored map.

    ``results`` may mix :class:`AttributionResult` objects (all of their
    maps count) and bare (channels, samples) arrays.
    """
    maps = []
    for r in results:
        m = r.maps if isinstance(r, AttributionResult) else np.asarray(r, dtype=np.float64)
        maps.extend(m if m.ndim == 3 else [m])
    if not maps:
        raise ValueError("no relevance maps to aggregate")
    shape = maps[0].shape
    if any(m.shape != shape for m in maps):
        raise ValueError("all relevance maps must share one shape")
    stack = np.stack(maps)
    names = tuple(channel_names) if channel_names is not None else tuple(f"ch{i}" for i in range(shape[0]))
    return AggregatePattern(stack.mean(0), np.abs(stack).mean(0), len(maps), names, dict(metadata or {}))


def spatial_aggregate(p: AggregatePattern) -> SpatialAggregate:
    return SpatialAggregate(p.signed.mean(1), p.absolute.mean(1), p.channel_names)


def temporal_aggregate(p: AggregatePattern) -> TemporalAggregate:
    return TemporalAggregate(p.signed.mean(0), p.absolute.mean(0))


def shortcut_score(sa: SpatialAggregate, planted: Sequence[str], variant: str = "absolute") -> tuple[float, bool]:
    """Share of spatial relevance magnitude on the planted channels.

    Returns ``(fraction, degenerate)``; an all-zero aggregate gives
    ``(0.0, True)``.
    """
    planted = list(planted)
    if not planted:
        raise ValueError("planted channel set is empty")
    missing = [c for c in planted if c not in sa.channel_names]
    if missing:
        raise ValueError(f"planted channel(s) not in montage: {', '.join(missing)}")
    v = np.abs(getattr(sa, variant))
    total = float(v.sum())
    if total == 0.0:
        return 0.0, True
    idx = sorted({sa.channel_names.index(c) for c in planted})
    return float(v[idx].sum() / total), False


# -- geometry ----------------------------------------------------------------

_DISC_VERTICES = 256


def _clip(poly: np.ndarray, normal: np.ndarray, offset: float) -> np.ndarray:
    """Keep the part of a convex polygon with ``normal . x <= offset``."""
    if len(poly) == 0:
        return poly
    d = poly @ normal - offset
    out = []
    n = len(poly)
    for i in range(n):
        a, b = poly[i], poly[(i + 1) % n]
        da, db = d[i], d[(i + 1) % n]
        if da <= 0:
            out.append(a)
        if (da < 0 < db) or (db < 0 < da):
            out.append(a + (b - a) * (da / (da - db)))
    return np.array(out).reshape(-1, 2)


def voronoi_cells(coords: np.ndarray, radius: float = 1.0) -> list[np.ndarray]:
    """Exact Voronoi cells of ``coords`` clipped to a disc (approximated by a regular 256-gon)."""
    coords = np.asarray(coords, dtype=np.float64)
    if len(np.unique(np.round(coords, 12), axis=0)) != len(coords):
        raise ValueError("duplicate electrode coordinates")
    ang = 2 * np.pi * np.arange(_DISC_VERTICES) / _DISC_VERTICES
    disc = radius * np.column_stack([np.cos(ang), np.sin(ang)])
    cells = []
    for i, p in enumerate(coords):
        poly = disc
        for j, q in enumerate(coords):
            if j != i:
                poly = _clip(poly, q - p, (q @ q - p @ p) / 2.0)
        cells.append(poly)
    return cells


# -- colors ------------------------------------------------------------------

_WHITE = np.array([255.0, 255.0, 255.0])
_RED = np.array([178.0, 24.0, 43.0])
_BLUE = np.array([33.0, 102.0, 172.0])
MIDPOINT_COLOR = "#ffffff"


def _hex(rgb: np.ndarray) -> str:
    r, g, b = (int(round(c)) for c in np.clip(rgb, 0, 255))
    return f"#{r:02x}{g:02x}{b:02x}"


def _colors(values: np.ndarray, signed: bool) -> list[str]:
    """Diverging white-centred scale anchored at max|v|, or a sequential white-to-red scale from 0."""
    values = np.asarray(values, dtype=np.float64)
    vmax = float(np.max(np.abs(values))) if values.size else 0.0
    out = []
    for v in values:
        t = 0.0 if vmax == 0 else v / vmax
        if not signed:
            t = max(t, 0.0)
        end = _RED if t >= 0 else _BLUE
        out.append(_hex(_WHITE + abs(t) * (end - _WHITE)))
    return out


# -- SVG ---------------------------------------------------------------------


def _f(x: float) -> str:
    s = f"{x:.3f}"
    return "0.000" if s == "-0.000" else s


def _svg(width: int, height: int, body: list[str]) -> str:
    head = (
        '<?xml version="1.0" encoding="UTF-8"?>\n'
        f'<svg xmlns="http://www.w3.org/2000/svg" version="1.1" width="{width}" height="{height}" '
        f'viewBox="0 0 {width} {height}">\n'
    )
    return head + "\n".join(body) + "\n</svg>\n"


_SCALP_SIZE = 240
_SCALP_R = 100.0


def _to_px(xy: np.ndarray) -> np.ndarray:
    c = _SCALP_SIZE / 2
    return np.column_stack([c + _SCALP_R * xy[:, 0], c - _SCALP_R * xy[:, 1]])


def render_scalp(
    sa: SpatialAggregate | np.ndarray,
    montage: Montage,
    variant: str = "signed",
    labels: bool = True,
    title: str | None = None,
) -> str:
    """Head-outline scalp map with one flat-colored Voronoi cell per electrode.

    Pixel coordinates are ``(120 + 100 x, 120 - 100 y)`` for scalp
    coordinates ``(x, y)``; the nose points up.
    """
    if isinstance(sa, SpatialAggregate):
        values = np.asarray(getattr(sa, variant), dtype=np.float64)
    else:
        values = np.asarray(sa, dtype=np.float64)
    if len(values) != len(montage):
        raise ValueError(f"{len(values)} values for {len(montage)} electrodes")
    cells = voronoi_cells(montage.coords)
    colors = _colors(values, signed=(variant == "signed"))
    c = _SCALP_SIZE / 2
    body = [f'<g id="cells" data-variant="{variant}">']
    for name, cell, color, v in zip(montage.names, cells, colors, values):
        pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in _to_px(cell))
        body.append(
            f'<polygon class="cell" data-channel="{escape(name)}" data-value="{v:.6e}" '
            f'fill="{color}" stroke="#606060" stroke-width="0.5" points="{pts}"/>'
        )
    body.append("</g>")
    nose = f"{_f(c - 10)},{_f(c - _SCALP_R + 1)} {_f(c)},{_f(c - _SCALP_R - 12)} {_f(c + 10)},{_f(c - _SCALP_R + 1)}"
    body.append(f'<polyline id="nose" fill="none" stroke="#000000" stroke-width="1.5" points="{nose}"/>')
    body.append(f'<circle id="head" cx="{_f(c)}" cy="{_f(c)}" r="{_f(_SCALP_R)}" fill="none" stroke="#000000" stroke-width="1.5"/>')
    for (x, y) in _to_px(montage.coords):
        body.append(f'<circle class="electrode" cx="{_f(x)}" cy="{_f(y)}" r="1.5" fill="#000000"/>')
    if labels:
        for name, (x, y) in zip(montage.names, _to_px(montage.coords)):
            body.append(f'<text x="{_f(x)}" y="{_f(y - 4)}" font-size="8" text-anchor="middle">{escape(name)}</text>')
        if title:
            body.append(f'<text x="{_f(c)}" y="10" font-size="9" text-anchor="middle">{escape(title)}</text>')
    return _svg(_SCALP_SIZE, _SCALP_SIZE, body)


def render_temporal(
    ta: TemporalAggregate | np.ndarray,
    sample_rate: float,
    variant: str = "signed",
    labels: bool = True,
    width: int = 480,
    height: int = 160,
) -> str:
    """Relevance trace over the window with a time axis in seconds."""
    trace = np.asarray(getattr(ta, variant) if isinstance(ta, TemporalAggregate) else ta, dtype=np.float64)
    n = len(trace)
    duration = n / sample_rate
    ml, mr, mt, mb = 40.0, 10.0, 10.0, 25.0
    pw, ph = width - ml - mr, height - mt - mb
    lo, hi = float(trace.min()), float(trace.max())
    if variant == "signed":
        m = max(abs(lo), abs(hi))
        lo, hi = -m, m
    else:
        lo = min(lo, 0.0)
    span = hi - lo if hi > lo else 1.0
    t = np.arange(n) / sample_rate
    xs = ml + pw * t / duration
    ys = mt + ph * (1.0 - (trace - lo) / span)
    body = [f'<rect x="{_f(ml)}" y="{_f(mt)}" width="{_f(pw)}" height="{_f(ph)}" fill="none" stroke="#000000" stroke-width="0.5"/>']
    if lo < 0 < hi:
        y0 = mt + ph * (1.0 - (0 - lo) / span)
        body.append(f'<line x1="{_f(ml)}" y1="{_f(y0)}" x2="{_f(ml + pw)}" y2="{_f(y0)}" stroke="#a0a0a0" stroke-width="0.5"/>')
    pts = " ".join(f"{_f(x)},{_f(y)}" for x, y in zip(xs, ys))
    body.append(f'<polyline id="trace" data-variant="{variant}" fill="none" stroke="#b2182b" stroke-width="1" points="{pts}"/>')
    ticks = np.arange(0.0, duration + 1e-9, 1.0 if duration >= 1 else duration)
    body.append(f'<g id="time-axis" data-start="0" data-end="{duration:g}" data-unit="s">')
    for tick in ticks:
        x = ml + pw * tick / duration
        body.append(f'<line x1="{_f(x)}" y1="{_f(mt + ph)}" x2="{_f(x)}" y2="{_f(mt + ph + 4)}" stroke="#000000" stroke-width="0.5"/>')
        if labels:
            body.append(f'<text x="{_f(x)}" y="{_f(mt + ph + 14)}" font-size="8" text-anchor="middle">{tick:g}</text>')
    body.append("</g>")
    if labels:
        body.append(f'<text x="{_f(ml + pw / 2)}" y="{_f(height - 2)}" font-size="8" text-anchor="middle">time (s)</text>')
    return _svg(width, height, body)


def render_heatmap(
    p: AggregatePattern,
    variant: str = "signed",
    labels: bool = True,
    max_columns: int = 200,
    cell_height: int = 14,
) -> str:
    """Channels-by-time heatmap, rows in montage order.

    Time is averaged into at most ``max_columns`` near-equal bins.
    """
    a = np.asarray(getattr(p, variant), dtype=np.float64)
    C, n = a.shape
    bins = np.array_split(np.arange(n), min(n, max_columns))
    binned = np.stack([a[:, b].mean(1) for b in bins], axis=1)
    colors = np.array(_colors(binned.ravel(), signed=(variant == "signed"))).reshape(binned.shape)
    ml, mt, cw = 40.0, 5.0, 2.0
    width = int(ml + cw * len(bins) + 5)
    height = int(mt + cell_height * C + 5)
    body = [f'<g id="heatmap" data-variant="{variant}">']
    for i in range(C):
        y = mt + cell_height * i
        row = [f'<g class="row" data-channel="{escape(p.channel_names[i])}">']
        for j in range(len(bins)):
            row.append(f'<rect x="{_f(ml + cw * j)}" y="{_f(y)}" width="{_f(cw)}" height="{cell_height}" fill="{colors[i, j]}"/>')
        row.append("</g>")
        body.append("".join(row))
        if labels:
            body.append(f'<text x="{_f(ml - 3)}" y="{_f(y + cell_height * 0.7)}" font-size="8" text-anchor="end">{escape(p.channel_names[i])}</text>')
    body.append("</g>")
    return _svg(width, height, body)


FIGURE_SET = (
    "scalp_signed.svg",
    "scalp_absolute.svg",
    "temporal_signed.svg",
    "temporal_absolute.svg",
    "heatmap_signed.svg",
    "heatmap_absolute.svg",
)


def render_figures(p: AggregatePattern, montage: Montage, sample_rate: float, out_dir: str | Path, labels: bool = True) -> list[Path]:
    """Write the declared figure set into ``out_dir``; returns the written paths in :data:`FIGURE_SET` order."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    sa, ta = spatial_aggregate(p), temporal_aggregate(p)
    docs = {}
    for variant in ("signed", "absolute"):
        docs[f"scalp_{variant}.svg"] = render_scalp(sa, montage, variant, labels)
        docs[f"temporal_{variant}.svg"] = render_temporal(ta, sample_rate, variant, labels)
        docs[f"heatmap_{variant}.svg"] = render_heatmap(p, variant, labels)
    paths = []
    for name in FIGURE_SET:
        path = out_dir / name
        path.write_text(docs[name], encoding="utf-8")
        paths.append(path)
    return paths


def save_aggregate(path: str | Path, p: AggregatePattern) -> None:
    meta = {"n_maps": p.n_maps, "channel_names": list(p.channel_names), "metadata": p.metadata}
    sa, ta = spatial_aggregate(p), temporal_aggregate(p)
    tensors = {
        "signed": p.signed,
        "absolute": p.absolute,
        "spatial_signed": sa.signed,
        "spatial_absolute": sa.absolute,
        "temporal_signed": ta.signed,
        "temporal_absolute": ta.absolute,
    }
    write_container(path, "aggregate", meta, tensors)


def load_aggregate(path: str | Path) -> AggregatePattern:
    meta, t = read_container(path, kind="aggregate")
    return AggregatePattern(t["signed"], t["absolute"], meta["n_maps"], tuple(meta["channel_names"]), meta["metadata"])
