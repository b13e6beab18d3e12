"""Synthetic labeled image corpus with ground-truth object masks.

Each image holds one object (ellipse or rectangle) on a smooth noise
background. The class is carried only by the object's fine texture, which
the bokeh blur erases; object color and background are class-independent.
The background is overlaid with faint clutter: small cells of randomly
chosen class textures, so that evidence for a class is only conclusive
where it is dense and contiguous.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from pyxrai.core import ParameterError

TEXTURES = ("horizontal", "vertical", "checker", "dots")


def _texture(kind: str, h: int, w: int, phase: tuple[int, int]) -> np.ndarray:
    yy, xx = np.mgrid[0:h, 0:w]
    yy, xx = yy + phase[0], xx + phase[1]
    if kind == "horizontal":
        t = yy % 2
    elif kind == "vertical":
        t = xx % 2
    elif kind == "checker":
        t = (xx + yy) % 2
    elif kind == "dots":
        # +1 on one pixel of every 2x2 cell, -1/3 on the rest: zero mean
        dots = ((xx % 2) == 0) & ((yy % 2) == 0)
        return np.where(dots, 1.0, -1.0 / 3.0)
    else:
        raise ParameterError(f"unknown texture {kind!r}")
    return t.astype(np.float64) * 2.0 - 1.0


def _clutter(rng: np.random.Generator, size: int, cell: int) -> np.ndarray:
    out = np.empty((size, size))
    for top in range(0, size, cell):
        for left in range(0, size, cell):
            kind = TEXTURES[rng.integers(len(TEXTURES))]
            h, w = min(cell, size - top), min(cell, size - left)
            out[top:top + h, left:left + w] = _texture(kind, h, w, (top, left))
    return out


@dataclass(eq=False)
class Corpus:
    images: np.ndarray  # (N, H, W, 3)
    labels: np.ndarray  # (N,)
    masks: np.ndarray  # (N, H, W) bool
    n_classes: int


def generate_corpus(
    n: int = 200,
    size: int = 32,
    n_classes: int = 4,
    seed: int = 0,
    contrast: float = 0.25,
    noise: float = 0.06,
    clutter: float = 0.1,
    clutter_cell: int = 4,
) -> Corpus:
    """Balanced corpus; labels cycle through the classes in order."""
    if not 1 <= n_classes <= len(TEXTURES):
        raise ParameterError(f"n_classes must be in [1, {len(TEXTURES)}]")
    if size < 16:
        raise ParameterError("image size must be at least 16")
    rng = np.random.default_rng(seed)
    images = np.empty((n, size, size, 3))
    masks = np.zeros((n, size, size), dtype=bool)
    labels = np.arange(n) % n_classes
    lo, hi = int(round(size * 0.3)), int(round(size * 0.5))
    for i in range(n):
        field = rng.random((size, size, 3))
        bg = ndimage.gaussian_filter(field, sigma=(3, 3, 0), mode="wrap")
        bg = (bg - bg.mean()) / (bg.std() + 1e-12)
        img = 0.5 + 0.12 * bg + rng.uniform(-0.1, 0.1, size=3)
        if clutter > 0:
            img += clutter * _clutter(rng, size, clutter_cell)[:, :, None]
        img = np.clip(img, 0.0, 1.0)

        oh, ow = rng.integers(lo, hi + 1, size=2)
        top = rng.integers(0, size - oh + 1)
        left = rng.integers(0, size - ow + 1)
        if rng.random() < 0.5:
            yy, xx = np.mgrid[0:oh, 0:ow]
            shape = ((yy - (oh - 1) / 2) / (oh / 2)) ** 2 + ((xx - (ow - 1) / 2) / (ow / 2)) ** 2 <= 1.0
        else:
            shape = np.ones((oh, ow), dtype=bool)
        color = rng.uniform(0.3, 0.7, size=3)
        tex = _texture(TEXTURES[labels[i]], oh, ow, (top, left))
        patch = np.clip(color + contrast * tex[:, :, None], 0.0, 1.0)
        region = img[top:top + oh, left:left + ow]
        region[shape] = patch[shape]
        masks[i, top:top + oh, left:left + ow] = shape
        img += rng.normal(0.0, noise, size=img.shape)
        images[i] = np.clip(img, 0.0, 1.0)
    return Corpus(images, labels, masks, n_classes)
