"""Performance information curves (accuracy and softmax variants) and
weakly-supervised localization metrics."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import stats

from pyxrai.core import (
    ParameterError,
    as_mask,
    compose_bokeh,
    compressed_size,
    default_blur_sigma,
    gaussian_blur,
)
from pyxrai.xrai import SaliencyTrajectory, mask_at_area

log = logging.getLogger(__name__)

AIC = "aic"
SIC = "sic"
DEFAULT_BINS = 20
DEFAULT_FRACTIONS = tuple(
    [round(0.01 * k, 2) for k in range(1, 11)] + [round(0.05 * k, 2) for k in range(3, 21)]
)
F1_THRESHOLDS = 256


def information_level(bokeh, original) -> tuple[float, bool]:
    """Compressed-size ratio of ``bokeh`` to ``original``, clamped to 1.

    Returns ``(level, clamped)``.
    """
    b, o = np.asarray(bokeh), np.asarray(original)
    if b.shape != o.shape:
        raise ParameterError(f"image shapes differ: {b.shape} vs {o.shape}")
    ratio = compressed_size(b) / compressed_size(o)
    if ratio > 1.0:
        return 1.0, True
    return ratio, False


@dataclass
class PICPoint:
    information_level: float
    accuracy_bit: int
    softmax_ratio: float
    fraction: float = 1.0
    degenerate: bool = False
    clamped: bool = False


@dataclass
class ImagePIC:
    """Datapoints for one image plus its fully-blurred and original ends."""

    points: list[PICPoint]
    blurred: PICPoint
    original: PICPoint


def top_fraction_mask(attr, fraction: float) -> np.ndarray:
    """The ``ceil(fraction * pixels)`` highest-attribution pixels
    (ties go to the earlier raster position)."""
    if not 0 < fraction <= 1:
        raise ParameterError(f"area fraction must be in (0, 1], got {fraction}")
    a = np.asarray(attr, dtype=np.float64)
    k = int(np.ceil(fraction * a.size - 1e-9))
    order = np.argsort(-a.ravel(), kind="stable")
    mask = np.zeros(a.size, dtype=bool)
    mask[order[:k]] = True
    return mask.reshape(a.shape)


def saliency_mask(saliency, fraction: float) -> np.ndarray:
    """Mask for a trajectory (region method) or a pixel attribution map."""
    if isinstance(saliency, SaliencyTrajectory):
        return mask_at_area(saliency, fraction)
    return top_fraction_mask(saliency, fraction)


def _performance(probs, label, p_orig, level, fraction, clamped=False) -> PICPoint:
    acc = int(np.argmax(probs) == label)
    if p_orig <= 0:
        return PICPoint(level, acc, 0.0, fraction, degenerate=True, clamped=clamped)
    ratio = float(probs[label] / p_orig)
    if ratio > 1.0:
        log.debug("softmax ratio %.4f clamped to 1", ratio)
        ratio = 1.0
    return PICPoint(level, acc, ratio, fraction, clamped=clamped)


def pic_datapoints(
    oracle,
    img,
    label: int,
    saliency,
    area_fractions: Sequence[float] = DEFAULT_FRACTIONS,
    blur_sigma: float | None = None,
) -> ImagePIC:
    """Build bokeh images at each area fraction and score them.

    ``saliency`` is a :class:`SaliencyTrajectory` or an attribution map.
    """
    x = np.asarray(img, dtype=np.float64)
    fractions = list(area_fractions)
    if any(b < a for a, b in zip(fractions, fractions[1:])):
        raise ParameterError("area fractions must be sorted ascending")
    sigma = default_blur_sigma(x.shape) if blur_sigma is None else blur_sigma
    blurred = gaussian_blur(x, sigma)
    orig_size = compressed_size(x)

    bokehs = [compose_bokeh(x, blurred, saliency_mask(saliency, f)) for f in fractions]
    probs = oracle.predict(np.stack([x, blurred] + bokehs))
    if not 0 <= label < probs.shape[1]:
        raise ParameterError(f"label {label} out of range for {probs.shape[1]} classes")
    p_orig = float(probs[0, label])

    def level(b):
        ratio = compressed_size(b) / orig_size
        return (1.0, True) if ratio > 1.0 else (ratio, False)

    original = _performance(probs[0], label, p_orig, 1.0, 1.0)
    blur_level, blur_clamped = level(blurred)
    blurred_pt = _performance(probs[1], label, p_orig, blur_level, 0.0, blur_clamped)
    points = []
    for f, b, p in zip(fractions, bokehs, probs[2:]):
        lv, clamped = level(b)
        points.append(_performance(p, label, p_orig, lv, f, clamped))
    n_clamped = sum(p.clamped for p in points)
    if n_clamped:
        log.info("%d information levels above 1 clamped", n_clamped)
    return ImagePIC(points, blurred_pt, original)


@dataclass
class PICCurve:
    levels: np.ndarray
    performance: np.ndarray
    kind: str
    auc: float = field(init=False)

    def __post_init__(self):
        self.auc = auc(self)


def _reduce(values, kind: str, reducer: str | None) -> float:
    reducer = reducer or ("mean" if kind == AIC else "median")
    return float(np.median(values) if reducer == "median" else np.mean(values))


def aggregate_curve(
    images: Sequence[ImagePIC],
    kind: str = SIC,
    n_bins: int = DEFAULT_BINS,
    reducer: str | None = None,
) -> PICCurve:
    """Bin datapoints by information level and aggregate per bin.

    AIC averages accuracy bits, SIC takes the median softmax ratio (override
    with ``reducer``). Empty bins repeat the previous value. The curve starts
    at (0, fully-blurred performance), ends at (1, original performance) and
    samples bins at their centers.
    """
    kind = kind.lower()
    if kind not in (AIC, SIC):
        raise ParameterError(f"curve kind must be 'aic' or 'sic', got {kind!r}")
    if not images or not any(im.points for im in images):
        raise ParameterError("no datapoints to aggregate")
    if n_bins < 1:
        raise ParameterError("n_bins must be >= 1")

    def perf(p: PICPoint) -> float:
        return float(p.accuracy_bit) if kind == AIC else p.softmax_ratio

    start = _reduce([perf(im.blurred) for im in images], kind, reducer)
    end = _reduce([perf(im.original) for im in images], kind, reducer)
    buckets: list[list[float]] = [[] for _ in range(n_bins)]
    for im in images:
        for p in im.points:
            b = min(int(np.floor(p.information_level * n_bins)), n_bins - 1)
            buckets[b].append(perf(p))
    values, prev = [], start
    for bucket in buckets:
        if bucket:
            prev = _reduce(bucket, kind, reducer)
        values.append(prev)
    centers = (np.arange(n_bins) + 0.5) / n_bins
    levels = np.concatenate([[0.0], centers, [1.0]])
    return PICCurve(levels, np.array([start] + values + [end]), kind)


def auc(curve: PICCurve) -> float:
    """Trapezoidal area under the curve over information level."""
    x, y = np.asarray(curve.levels), np.asarray(curve.performance)
    return float(np.sum(0.5 * (y[1:] + y[:-1]) * np.diff(x)))


# --- localization ----------------------------------------------------------


@dataclass
class LocalizationReport:
    auc: float
    f1: float
    mae: float


def normalize_map(attr) -> np.ndarray:
    """Min-max scale to [0, 1]; a constant map becomes all zeros."""
    a = np.asarray(attr, dtype=np.float64)
    lo, hi = a.min(), a.max()
    if hi == lo:
        return np.zeros_like(a)
    return (a - lo) / (hi - lo)


def roc_auc(scores, truth) -> float:
    """Area under the ROC curve via the rank-sum statistic (ties count 1/2),
    which equals the trapezoidal ROC area over all distinct thresholds."""
    s = np.asarray(scores, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=bool).ravel()
    n_pos, n_neg = int(t.sum()), int((~t).sum())
    ranks = stats.rankdata(s)
    return float((ranks[t].sum() - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg))


def best_f1(norm, truth, n_thresholds: int = F1_THRESHOLDS) -> float:
    """Max F1 of ``norm >= t`` over ``n_thresholds`` uniform t in [0, 1]."""
    s = np.asarray(norm, dtype=np.float64).ravel()
    t = np.asarray(truth, dtype=bool).ravel()
    thresholds = np.linspace(0.0, 1.0, n_thresholds)
    pred = s[None, :] >= thresholds[:, None]
    tp = (pred & t).sum(axis=1)
    fp = (pred & ~t).sum(axis=1)
    fn = t.sum() - tp
    denom = 2 * tp + fp + fn
    f1 = np.where(denom > 0, 2 * tp / np.maximum(denom, 1), 0.0)
    return float(f1.max())


def localization_metrics(attr, truth) -> LocalizationReport:
    a = np.asarray(attr, dtype=np.float64)
    t = as_mask(truth, a.shape)
    if t.all() or not t.any():
        raise ParameterError("ground-truth mask needs both positive and negative pixels")
    norm = normalize_map(a)
    area = 0.5 if np.ptp(a) == 0 else roc_auc(norm, t)
    return LocalizationReport(area, best_f1(norm, t), float(np.abs(norm - t).mean()))
