"""Felzenszwalb-Huttenlocher graph segmentation and the multi-scale,
dilated segment pool that XRAI selects from."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from pyxrai.core import ParameterError, as_image, dilate, gaussian_blur

SCALES = (50, 100, 150, 250, 500, 1200)
MIN_SEGMENT_AREA = 20
DILATION_RADIUS = 5
PRE_SIGMA = 0.8
# Image side for which the pixel-valued defaults above were chosen.
REFERENCE_SIDE = 224


def scaled_dilation_radius(shape, radius: int = DILATION_RADIUS) -> int:
    """``radius`` rescaled from a 224-px image to one of the given
    ``(H, W, ...)`` shape, never below 1. Mirrors how the bokeh blur sigma
    scales with image size."""
    return max(1, int(round(radius * max(shape[0], shape[1]) / REFERENCE_SIDE)))


@dataclass(eq=False)
class Segment:
    mask: np.ndarray
    scale: float
    id: int
    # pre-dilation mask; equal to ``mask`` for raw segmenter output
    core: np.ndarray | None = None

    @property
    def area(self) -> int:
        return int(self.mask.sum())

    @property
    def core_area(self) -> int:
        return int((self.mask if self.core is None else self.core).sum())


@dataclass(eq=False)
class SegmentSet:
    segments: list[Segment]
    shape: tuple[int, int]
    dropped_area: dict[float, int] = field(default_factory=dict)

    def __len__(self) -> int:
        return len(self.segments)

    def __iter__(self):
        return iter(self.segments)

    def masks(self) -> np.ndarray:
        """``(n, H, W)`` boolean stack of the segment masks."""
        if not self.segments:
            return np.zeros((0,) + tuple(self.shape), dtype=bool)
        return np.stack([s.mask for s in self.segments])


def _grid_edges(h: int, w: int) -> tuple[np.ndarray, np.ndarray]:
    """8-connected edges, each listed once with source < target."""
    idx = np.arange(h * w).reshape(h, w)
    src = [idx[:, :-1], idx[:-1, :], idx[:-1, :-1], idx[:-1, 1:]]
    tgt = [idx[:, 1:], idx[1:, :], idx[1:, 1:], idx[1:, :-1]]
    return (np.concatenate([a.ravel() for a in src]),
            np.concatenate([b.ravel() for b in tgt]))


def felzenszwalb_labels(img, scale: float, min_size: int = MIN_SEGMENT_AREA,
                        pre_sigma: float = PRE_SIGMA) -> np.ndarray:
    """Label image from graph-based segmentation.

    Edge weights are Euclidean color distances on the 0-255 intensity
    scale after Gaussian smoothing (skipped when ``pre_sigma`` is 0).
    Edges are processed in (weight, source, target) order; two components
    merge when the edge weight is at most ``Int(C) + scale / |C|`` for both.
    Labels are numbered in raster order of first appearance.
    """
    x = as_image(img)
    if not scale > 0:
        raise ParameterError(f"scale must be positive, got {scale}")
    if min_size < 0:
        raise ParameterError(f"min_size must be >= 0, got {min_size}")
    if pre_sigma > 0:
        x = gaussian_blur(x, pre_sigma)
    h, w = x.shape[:2]
    n = h * w
    colors = x.reshape(n, -1) * 255.0
    src, tgt = _grid_edges(h, w)
    weights = np.sqrt(((colors[src] - colors[tgt]) ** 2).sum(axis=1))
    order = np.lexsort((tgt, src, weights))
    src_l, tgt_l, w_l = src[order].tolist(), tgt[order].tolist(), weights[order].tolist()

    parent = list(range(n))
    size = [1] * n
    thresh = [float(scale)] * n

    def find(a):
        while parent[a] != a:
            parent[a] = parent[parent[a]]
            a = parent[a]
        return a

    def union(a, b):
        if size[a] < size[b]:
            a, b = b, a
        parent[b] = a
        size[a] += size[b]
        return a

    for a, b, wt in zip(src_l, tgt_l, w_l):
        ra, rb = find(a), find(b)
        if ra != rb and wt <= thresh[ra] and wt <= thresh[rb]:
            r = union(ra, rb)
            thresh[r] = wt + scale / size[r]

    if min_size > 1:
        for a, b in zip(src_l, tgt_l):
            ra, rb = find(a), find(b)
            if ra != rb and (size[ra] < min_size or size[rb] < min_size):
                union(ra, rb)

    roots = np.fromiter((find(i) for i in range(n)), dtype=np.int64, count=n)
    _, first, inverse = np.unique(roots, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse].reshape(h, w)


def felzenszwalb(img, scale: float, min_size: int = MIN_SEGMENT_AREA,
                 pre_sigma: float = PRE_SIGMA) -> list[Segment]:
    """Partition ``img`` into segments; see :func:`felzenszwalb_labels`."""
    labels = felzenszwalb_labels(img, scale, min_size, pre_sigma)
    return [Segment(labels == k, scale, k) for k in range(labels.max() + 1)]


def multi_scale_segments(
    img,
    scales=SCALES,
    min_area: int = MIN_SEGMENT_AREA,
    dilation_radius: int = DILATION_RADIUS,
    min_size: int = MIN_SEGMENT_AREA,
    pre_sigma: float = PRE_SIGMA,
) -> SegmentSet:
    """Segment at every scale, drop segments under ``min_area`` pixels,
    dilate the survivors and pool them. Ids are positions in the pool."""
    x = as_image(img)
    segments: list[Segment] = []
    dropped: dict[float, int] = {}
    for scale in scales:
        dropped[scale] = 0
        for seg in felzenszwalb(x, scale, min_size, pre_sigma):
            area = seg.area
            if area < min_area:
                dropped[scale] += area
                continue
            segments.append(Segment(dilate(seg.mask, dilation_radius), scale, len(segments), core=seg.mask))
    return SegmentSet(segments, x.shape[:2], dropped)
