"""Image primitives shared by every other module.

Images are ``float64`` arrays of shape ``(height, width, channels)`` with
values in ``[0, 1]``; masks are boolean ``(height, width)`` arrays and
attribution maps are finite ``float64`` ``(height, width)`` arrays.
"""

from __future__ import annotations

import math
import zlib
from pathlib import Path

import numpy as np
from scipy import ndimage

# Fraction of the larger image side used as the bokeh blur sigma
# (10 px on a 224 px image).
BOKEH_SIGMA_FRACTION = 0.045

COMPRESSION_LEVEL = 9


class ParameterError(ValueError):
    """Raised for invalid arguments (bad sigma, mismatched shapes, ...)."""


def as_image(img) -> np.ndarray:
    """Validate ``img`` and return it as an ``(H, W, C)`` float64 array.

    2-D input is treated as a single-channel image.
    """
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim == 2:
        arr = arr[:, :, None]
    if arr.ndim != 3 or arr.shape[2] not in (1, 3):
        raise ParameterError(f"expected (H, W, 1|3) image, got shape {arr.shape}")
    if arr.size == 0:
        raise ParameterError("image has no pixels")
    if not np.all(np.isfinite(arr)) or arr.min() < 0.0 or arr.max() > 1.0:
        raise ParameterError("image values must lie in [0, 1]")
    return arr


def as_mask(mask, shape: tuple[int, int] | None = None) -> np.ndarray:
    m = np.asarray(mask, dtype=bool)
    if m.ndim != 2:
        raise ParameterError(f"expected a 2-D mask, got shape {m.shape}")
    if shape is not None and m.shape != tuple(shape):
        raise ParameterError(f"mask shape {m.shape} does not match {tuple(shape)}")
    return m


def gaussian_kernel(sigma: float) -> np.ndarray:
    """1-D Gaussian truncated at +-3 sigma and renormalized to sum 1."""
    if not sigma > 0:
        raise ParameterError(f"sigma must be positive, got {sigma}")
    radius = max(1, int(math.ceil(3.0 * sigma)))
    x = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * (x / sigma) ** 2)
    return k / k.sum()


def gaussian_blur(img, sigma: float) -> np.ndarray:
    """Separable Gaussian blur with mirrored borders."""
    arr = as_image(img)
    k = gaussian_kernel(sigma)
    out = ndimage.correlate1d(arr, k, axis=0, mode="reflect")
    out = ndimage.correlate1d(out, k, axis=1, mode="reflect")
    return np.clip(out, 0.0, 1.0)


def default_blur_sigma(shape) -> float:
    """Bokeh blur sigma for an image of the given ``(H, W, ...)`` shape."""
    return BOKEH_SIGMA_FRACTION * max(shape[0], shape[1])


def dilate(mask, radius: int) -> np.ndarray:
    """Binary dilation with a ``(2r+1) x (2r+1)`` square (Chebyshev ball)."""
    m = as_mask(mask)
    if radius < 0:
        raise ParameterError(f"radius must be >= 0, got {radius}")
    if radius == 0 or not m.any():
        return m.copy()
    footprint = np.ones((2 * radius + 1, 2 * radius + 1), dtype=bool)
    return ndimage.binary_dilation(m, structure=footprint)


def compose_bokeh(original, blurred, mask) -> np.ndarray:
    """Keep ``original`` where ``mask`` is set and ``blurred`` elsewhere."""
    orig = np.asarray(original, dtype=np.float64)
    blur = np.asarray(blurred, dtype=np.float64)
    if orig.ndim == 2:
        orig = orig[:, :, None]
    if blur.ndim == 2:
        blur = blur[:, :, None]
    if orig.shape != blur.shape:
        raise ParameterError(f"image shapes differ: {orig.shape} vs {blur.shape}")
    m = as_mask(mask, orig.shape[:2])
    return np.where(m[:, :, None], orig, blur)


def quantize(img) -> np.ndarray:
    """Map [0, 1] floats to uint8 via round(v * 255), clamped."""
    arr = np.asarray(img, dtype=np.float64)
    return np.clip(np.rint(arr * 255.0), 0, 255).astype(np.uint8)


def paeth_residuals(q: np.ndarray) -> np.ndarray:
    """PNG Paeth-filter residuals (mod 256) of a ``(H, W, C)`` uint8 image."""
    q = q.astype(np.int16)
    left = np.zeros_like(q)
    left[:, 1:] = q[:, :-1]
    up = np.zeros_like(q)
    up[1:] = q[:-1]
    diag = np.zeros_like(q)
    diag[1:, 1:] = q[:-1, :-1]
    p = left + up - diag
    pa, pb, pc = np.abs(p - left), np.abs(p - up), np.abs(p - diag)
    pred = np.where((pa <= pb) & (pa <= pc), left, np.where(pb <= pc, up, diag))
    return ((q - pred) % 256).astype(np.uint8)


def compressed_size(img) -> int:
    """Byte count of a deflate-compressed, 8-bit quantized copy of ``img``.

    Pixels are Paeth-predicted per channel (as in PNG filter type 4) and
    the residuals deflated at a fixed level with no container metadata.
    """
    q = quantize(as_image(img))
    return len(zlib.compress(paeth_residuals(q).tobytes(), COMPRESSION_LEVEL))


# --- image I/O -------------------------------------------------------------


def read_image(path) -> np.ndarray:
    """Read an 8-bit PNG or binary PPM as an ``(H, W, C)`` float image."""
    from PIL import Image

    with Image.open(path) as im:
        if im.mode not in ("L", "RGB"):
            im = im.convert("RGB")
        arr = np.asarray(im, dtype=np.float64) / 255.0
    return as_image(arr)


def write_image(path, img) -> None:
    """Write ``img`` as PNG or binary PPM depending on the file suffix."""
    from PIL import Image

    arr = quantize(as_image(img))
    path = Path(path)
    suffix = path.suffix.lower()
    if arr.shape[2] == 1:
        im = Image.fromarray(arr[:, :, 0], mode="L")
    else:
        im = Image.fromarray(arr, mode="RGB")
    if suffix in (".ppm", ".pgm", ".pnm"):
        im.save(path, format="PPM")
    else:
        im.save(path, format="PNG", optimize=False)


def read_mask(path) -> np.ndarray:
    img = read_image(path)
    return img.mean(axis=2) >= 0.5


def write_mask(path, mask) -> None:
    m = as_mask(mask)
    write_image(path, m.astype(np.float64))
