"""Greedy region selection over an attribution map.

Starting from an empty mask, repeatedly add the candidate segment with the
highest attribution density gain until the mask covers the image or the pool
runs out. The ordered list of cumulative masks is the region ranking.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from pyxrai.attribution import DEFAULT_STEPS, BaselineSpec, ig_multi_baseline
from pyxrai.core import ParameterError, as_mask
from pyxrai.segmentation import Segment, SegmentSet, multi_scale_segments

UNION = "union"
SUBTRACT = "subtract"
NO_GAIN = -np.inf


@dataclass(eq=False)
class TrajectoryStep:
    segment_id: int
    mask: np.ndarray
    gain: float

    @property
    def area(self) -> int:
        return int(self.mask.sum())


@dataclass(eq=False)
class SaliencyTrajectory:
    steps: list[TrajectoryStep]
    shape: tuple[int, int]

    def __len__(self) -> int:
        return len(self.steps)

    @property
    def areas(self) -> list[int]:
        return [s.area for s in self.steps]

    def to_records(self) -> list[dict]:
        return [{"segment_id": s.segment_id, "gain": s.gain, "area": s.area} for s in self.steps]


def _check_mode(mode: str) -> str:
    mode = mode.lower()
    if mode not in (UNION, SUBTRACT):
        raise ParameterError(f"gain mode must be 'union' or 'subtract', got {mode!r}")
    return mode


def xrai_gain(segment, mask, attr, mode: str = UNION) -> float:
    """Attribution density of adding ``segment`` to ``mask``.

    ``subtract``: mean attribution over the pixels the segment would add,
    or ``-inf`` when it adds none. ``union``: mean attribution over the
    union of segment and mask.
    """
    mode = _check_mode(mode)
    a = np.asarray(attr, dtype=np.float64)
    s = as_mask(segment.mask if isinstance(segment, Segment) else segment, a.shape)
    m = as_mask(mask, a.shape)
    region = (s & ~m) if mode == SUBTRACT else (s | m)
    area = region.sum()
    if mode == SUBTRACT and area == 0:
        return NO_GAIN
    return float(a[region].sum() / area)


def xrai_trajectory(attr, segments, mode: str = UNION) -> SaliencyTrajectory:
    """Run the greedy selection loop.

    Ties on gain go to the smaller segment id. Segments that would add no
    new pixels are dropped from the pool when encountered.
    """
    mode = _check_mode(mode)
    a = np.asarray(attr, dtype=np.float64)
    if not np.all(np.isfinite(a)):
        raise ParameterError("attribution map contains non-finite values")
    segs = list(segments)
    if not segs:
        raise ParameterError("segment pool is empty")
    shape = a.shape
    for s in segs:
        if s.mask.shape != shape:
            raise ParameterError(f"segment {s.id} has shape {s.mask.shape}, attribution map is {shape}")
    segs.sort(key=lambda s: s.id)
    ids = np.array([s.id for s in segs])
    flat = a.ravel()
    stack = np.stack([s.mask.ravel() for s in segs])
    alive = np.ones(len(segs), dtype=bool)
    covered = np.zeros(flat.size, dtype=bool)
    mask_sum, mask_area = 0.0, 0
    steps: list[TrajectoryStep] = []

    while alive.any() and mask_area < flat.size:
        cand = np.flatnonzero(alive)
        inc = stack[cand] & ~covered
        inc_area = inc.sum(axis=1)
        empty = inc_area == 0
        alive[cand[empty]] = False
        cand, inc, inc_area = cand[~empty], inc[~empty], inc_area[~empty]
        if len(cand) == 0:
            break
        # row-wise reduction (not a matrix product) so identical increments
        # give bit-identical sums and ties resolve by id
        inc_sum = np.where(inc, flat, 0.0).sum(axis=1)
        if mode == SUBTRACT:
            gains = inc_sum / inc_area
        else:
            gains = (mask_sum + inc_sum) / (mask_area + inc_area)
        best = int(np.argmax(gains))  # first maximum -> smallest id
        covered |= inc[best]
        mask_sum += inc_sum[best]
        mask_area += int(inc_area[best])
        alive[cand[best]] = False
        steps.append(TrajectoryStep(int(ids[cand[best]]), covered.reshape(shape).copy(), float(gains[best])))
    return SaliencyTrajectory(steps, shape)


def heatmap_from_trajectory(traj: SaliencyTrajectory) -> np.ndarray:
    """Each pixel takes the gain of the step that first covered it;
    uncovered pixels get the minimum gain minus one."""
    if not traj.steps:
        return np.zeros(traj.shape)
    gains = [s.gain for s in traj.steps]
    heat = np.full(traj.shape, min(gains) - 1.0)
    seen = np.zeros(traj.shape, dtype=bool)
    for s in traj.steps:
        new = s.mask & ~seen
        heat[new] = s.gain
        seen |= new
    return heat


def mask_at_area(traj: SaliencyTrajectory, fraction: float) -> np.ndarray:
    """Smallest cumulative mask covering at least ``fraction`` of the image,
    or the final mask if none does."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"area fraction must be in (0, 1], got {fraction}")
    if not traj.steps:
        raise ParameterError("trajectory has no steps")
    target = fraction * traj.shape[0] * traj.shape[1]
    for s in traj.steps:
        if s.area >= target:
            return s.mask.copy()
    return traj.steps[-1].mask.copy()


@dataclass(eq=False)
class XraiResult:
    attribution: np.ndarray
    segments: SegmentSet
    trajectory: SaliencyTrajectory
    heatmap: np.ndarray


def xrai(
    oracle,
    img,
    class_index: int,
    baseline: BaselineSpec | None = None,
    steps: int = DEFAULT_STEPS,
    mode: str = UNION,
    segments: SegmentSet | None = None,
) -> XraiResult:
    """Full pipeline: integrated gradients, segmentation, greedy selection."""
    attr = ig_multi_baseline(oracle, img, baseline or BaselineSpec("black+white"), class_index, steps)
    if segments is None:
        segments = multi_scale_segments(img)
    traj = xrai_trajectory(attr, segments, mode)
    return XraiResult(attr, segments, traj, heatmap_from_trajectory(traj))
