"""On-disk formats: float sidecars, heatmap PNGs, run-length encoded
segment sets, trajectory JSON, CSV tables and small hand-written SVG plots.

Every writer is deterministic: the same inputs give the same bytes.
"""

from __future__ import annotations

import csv
import io
import json
import struct
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from pyxrai.core import ParameterError, write_image
from pyxrai.segmentation import Segment, SegmentSet
from pyxrai.xrai import SaliencyTrajectory

_MAP_MAGIC = b"PXAF"
_SEG_MAGIC = b"PXSG"
_FORMAT_VERSION = 1


# --- attribution maps --------------------------------------------------------


def write_float_map(path, arr) -> None:
    """Little-endian file: magic, version, H, W (uint32), then H*W float32
    values in raster order."""
    a = np.asarray(arr, dtype=np.float64)
    if a.ndim != 2:
        raise ParameterError(f"expected a 2-D map, got shape {a.shape}")
    header = _MAP_MAGIC + struct.pack("<3I", _FORMAT_VERSION, *a.shape)
    Path(path).write_bytes(header + np.ascontiguousarray(a, dtype="<f4").tobytes())


def read_float_map(path) -> np.ndarray:
    data = Path(path).read_bytes()
    if data[:4] != _MAP_MAGIC:
        raise ParameterError(f"{path}: not a float map file")
    version, h, w = struct.unpack("<3I", data[4:16])
    if version != _FORMAT_VERSION:
        raise ParameterError(f"{path}: unsupported float map version {version}")
    if len(data) != 16 + 4 * h * w:
        raise ParameterError(f"{path}: truncated float map")
    return np.frombuffer(data, dtype="<f4", offset=16).astype(np.float64).reshape(h, w)


def diverging_colormap(attr) -> np.ndarray:
    """Map signed values to RGB in [0, 1].

    Values are divided by the largest magnitude. Zero is white, +1 is pure
    red (1, 0, 0) and -1 pure blue (0, 0, 1), interpolating linearly in
    between. An all-zero map renders white.
    """
    a = np.asarray(attr, dtype=np.float64)
    peak = np.abs(a).max() if a.size else 0.0
    v = a / peak if peak > 0 else np.zeros_like(a)
    pos, neg = np.clip(v, 0, 1), np.clip(-v, 0, 1)
    r = 1.0 - neg
    g = 1.0 - pos - neg
    b = 1.0 - pos
    return np.clip(np.stack([r, g, b], axis=-1), 0.0, 1.0)


def write_heatmap(path, attr) -> None:
    write_image(path, diverging_colormap(attr))


# --- segment sets ------------------------------------------------------------


def mask_runs(mask) -> np.ndarray:
    """``(n, 2)`` array of (start, length) runs of set pixels in raster order."""
    flat = np.asarray(mask, dtype=bool).ravel().astype(np.int8)
    edges = np.diff(np.concatenate([[0], flat, [0]]))
    starts = np.flatnonzero(edges == 1)
    ends = np.flatnonzero(edges == -1)
    return np.stack([starts, ends - starts], axis=1)


def runs_to_mask(runs, shape) -> np.ndarray:
    flat = np.zeros(int(np.prod(shape)), dtype=bool)
    for start, length in np.asarray(runs).reshape(-1, 2):
        flat[start:start + length] = True
    return flat.reshape(shape)


def _encode_segments(segments: Iterable[Segment], shape) -> bytes:
    segs = list(segments)
    out = [_SEG_MAGIC, struct.pack("<4I", _FORMAT_VERSION, shape[0], shape[1], len(segs))]
    for s in segs:
        for m in (s.mask, s.mask if s.core is None else s.core):
            runs = mask_runs(m)
            out.append(struct.pack("<2I", s.id, len(runs)))
            out.append(np.ascontiguousarray(runs, dtype="<u4").tobytes())
    return b"".join(out)


def write_segments(directory, segset: SegmentSet, stem: str = "segments", seed: int = 0) -> None:
    """Write ``<stem>.rle`` (binary), ``<stem>.json`` (manifest) and
    ``<stem>.png`` (debug rendering) into ``directory``.

    The binary holds magic, version, H, W, count, then for each segment
    the runs of its dilated mask followed by the runs of its pre-dilation
    mask, each as (id, n_runs) and n_runs (start, length) uint32 pairs.
    """
    d = Path(directory)
    shape = tuple(segset.shape)
    (d / f"{stem}.rle").write_bytes(_encode_segments(segset.segments, shape))
    manifest = {
        "shape": list(shape),
        "dropped_area": {str(k): v for k, v in segset.dropped_area.items()},
        "segments": [
            {"id": s.id, "scale": s.scale, "area": s.area, "core_area": s.core_area}
            for s in segset.segments
        ],
    }
    write_json(d / f"{stem}.json", manifest)
    write_image(d / f"{stem}.png", render_segments(segset, seed))


def read_segments(directory, stem: str = "segments") -> SegmentSet:
    d = Path(directory)
    data = (d / f"{stem}.rle").read_bytes()
    manifest = json.loads((d / f"{stem}.json").read_text())
    if data[:4] != _SEG_MAGIC:
        raise ParameterError(f"{d / stem}.rle: not a segment file")
    version, h, w, n = struct.unpack("<4I", data[4:20])
    if version != _FORMAT_VERSION:
        raise ParameterError(f"unsupported segment file version {version}")
    if n != len(manifest["segments"]):
        raise ParameterError("segment file and manifest disagree on segment count")
    offset, segments = 20, []
    for entry in manifest["segments"]:
        masks = []
        for _ in range(2):
            _, n_runs = struct.unpack("<2I", data[offset:offset + 8])
            offset += 8
            runs = np.frombuffer(data, dtype="<u4", count=2 * n_runs, offset=offset)
            offset += 8 * n_runs
            masks.append(runs_to_mask(runs.astype(np.int64), (h, w)))
        segments.append(Segment(masks[0], entry["scale"], entry["id"], core=masks[1]))
    dropped = {float(k): v for k, v in manifest.get("dropped_area", {}).items()}
    return SegmentSet(segments, (h, w), dropped)


def render_segments(segset: SegmentSet, seed: int = 0) -> np.ndarray:
    """One panel per scale, left to right; each pre-dilation segment of that
    scale is painted a random color. Panels are separated by a white column."""
    h, w = segset.shape
    scales = sorted({s.scale for s in segset.segments})
    if not scales:
        return np.zeros((h, w, 3))
    rng = np.random.default_rng(seed)
    panels = []
    for scale in scales:
        panel = np.zeros((h, w, 3))
        for s in segset.segments:
            if s.scale == scale:
                panel[s.core if s.core is not None else s.mask] = rng.uniform(0.15, 1.0, size=3)
        panels.append(panel)
        panels.append(np.ones((h, 1, 3)))
    return np.concatenate(panels[:-1], axis=1)


# --- trajectories, JSON, CSV -------------------------------------------------


def trajectory_json(traj: SaliencyTrajectory) -> dict:
    total = traj.shape[0] * traj.shape[1]
    return {
        "shape": list(traj.shape),
        "steps": [
            {"segment_id": r["segment_id"], "gain": r["gain"], "area": r["area"],
             "area_fraction": r["area"] / total}
            for r in traj.to_records()
        ],
    }


def _clean(obj):
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return _clean(obj.tolist())
    if isinstance(obj, (np.bool_, bool)):
        return bool(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    if isinstance(obj, (np.floating, float)):
        f = float(obj)
        return f if np.isfinite(f) else None
    return obj


def write_json(path, obj) -> None:
    """Sorted keys, two-space indent, non-finite floats written as null."""
    Path(path).write_text(json.dumps(_clean(obj), indent=2, sort_keys=True) + "\n")


def write_csv(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(header)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).write_text(buf.getvalue())


def _fmt(v):
    if isinstance(v, (bool, np.bool_)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return v


# --- SVG ---------------------------------------------------------------------

_PALETTE = ("#1b9e77", "#d95f02", "#7570b3", "#e7298a", "#66a61e", "#e6ab02", "#a6761d", "#666666")


def _svg(width: int, height: int, body: list[str]) -> str:
    return "\n".join(
        [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
         f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
         f'<rect width="{width}" height="{height}" fill="white"/>']
        + body + ["</svg>", ""]
    )


def _axes(x0, y0, size, xlabel, ylabel, title, lo=(0.0, 0.0), hi=(1.0, 1.0)) -> list[str]:
    out = [f'<rect x="{x0}" y="{y0}" width="{size}" height="{size}" fill="none" stroke="black"/>',
           f'<text x="{x0 + size / 2:.1f}" y="{y0 - 8}" text-anchor="middle" font-size="13">{title}</text>',
           f'<text x="{x0 + size / 2:.1f}" y="{y0 + size + 32}" text-anchor="middle">{xlabel}</text>',
           f'<text x="{x0 - 36}" y="{y0 + size / 2:.1f}" text-anchor="middle" '
           f'transform="rotate(-90 {x0 - 36} {y0 + size / 2:.1f})">{ylabel}</text>']
    for k in range(6):
        t = k / 5
        px, py = x0 + t * size, y0 + size - t * size
        xv = lo[0] + t * (hi[0] - lo[0])
        yv = lo[1] + t * (hi[1] - lo[1])
        out.append(f'<line x1="{px:.1f}" y1="{y0 + size}" x2="{px:.1f}" y2="{y0 + size + 4}" stroke="black"/>')
        out.append(f'<text x="{px:.1f}" y="{y0 + size + 16}" text-anchor="middle">{xv:.3g}</text>')
        out.append(f'<line x1="{x0 - 4}" y1="{py:.1f}" x2="{x0}" y2="{py:.1f}" stroke="black"/>')
        out.append(f'<text x="{x0 - 6}" y="{py + 4:.1f}" text-anchor="end">{yv:.3g}</text>')
    return out


def curves_svg(panels: Sequence[tuple[str, dict]]) -> str:
    """Side-by-side panels, each overlaying named curves on [0, 1]^2.

    ``panels`` is a list of ``(title, {name: (levels, performance)})``.
    """
    size, margin = 260, 60
    width = len(panels) * (size + margin + 20) + margin
    body = []
    for p, (title, curves) in enumerate(panels):
        x0, y0 = margin + p * (size + margin + 20), 30
        body += _axes(x0, y0, size, "information level", "performance", title)
        for i, (name, (xs, ys)) in enumerate(curves.items()):
            color = _PALETTE[i % len(_PALETTE)]
            pts = " ".join(f"{x0 + x * size:.2f},{y0 + size - y * size:.2f}" for x, y in zip(xs, ys))
            body.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
            ly = y0 + size - 14 * (len(curves) - i)
            body.append(f'<text x="{x0 + size - 6}" y="{ly}" text-anchor="end" fill="{color}">{name}</text>')
    return _svg(width, size + 80, body)


def scatter_svg(xs, ys, passed, title: str, xlabel: str, ylabel: str) -> str:
    """Scatter plot; passing points are hollow circles, failing ones crosses."""
    xs, ys = np.asarray(xs, dtype=np.float64), np.asarray(ys, dtype=np.float64)
    size, margin = 300, 70
    lo = (min(0.0, float(xs.min())), min(0.0, float(ys.min()))) if xs.size else (0.0, 0.0)
    hi = (max(1.0, float(xs.max())), max(1.0, float(ys.max()))) if xs.size else (1.0, 1.0)
    body = _axes(margin, 30, size, xlabel, ylabel, title, lo, hi)

    def px(v, axis):
        t = (v - lo[axis]) / (hi[axis] - lo[axis])
        return margin + t * size if axis == 0 else 30 + size - t * size

    for x, y, ok in zip(xs, ys, passed):
        cx, cy = px(x, 0), px(y, 1)
        if ok:
            body.append(f'<circle cx="{cx:.2f}" cy="{cy:.2f}" r="3" fill="none" stroke="#1b9e77"/>')
        else:
            body.append(f'<path d="M{cx - 3:.2f},{cy - 3:.2f}L{cx + 3:.2f},{cy + 3:.2f}'
                        f'M{cx - 3:.2f},{cy + 3:.2f}L{cx + 3:.2f},{cy - 3:.2f}" stroke="#d95f02"/>')
    return _svg(size + 2 * margin, size + 80, body)


def write_text(path, text: str) -> None:
    Path(path).write_text(text)
