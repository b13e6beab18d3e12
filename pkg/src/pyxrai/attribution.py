"""Pixel-level attribution methods.

Every public method returns an ``(H, W)`` float map except
:func:`integrated_gradients`, which keeps the per-channel field so that
callers can check completeness channel by channel.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable

import numpy as np

from pyxrai.core import ParameterError, as_image

DEFAULT_STEPS = 128
DEFAULT_RANDOM_BASELINES = 4

# Rec. 601 luma weights for grayscale conversion.
_LUMA = np.array([0.299, 0.587, 0.114])


def gradient_saliency(oracle, img, class_index: int) -> np.ndarray:
    """Max over channels of the absolute input gradient."""
    x = np.asarray(img, dtype=np.float64)
    return np.abs(oracle.gradient(x, class_index)).max(axis=-1)


def gradient_times_input(oracle, img, class_index: int) -> np.ndarray:
    x = np.asarray(img, dtype=np.float64)
    return (oracle.gradient(x, class_index) * x).sum(axis=-1)


def midpoint_alphas(steps: int) -> np.ndarray:
    if steps < 1:
        raise ParameterError(f"steps must be >= 1, got {steps}")
    return (np.arange(steps) + 0.5) / steps


def path_integral(
    grad_fn: Callable[[np.ndarray], np.ndarray],
    x,
    baseline,
    steps: int,
    batch_size: int = 64,
) -> np.ndarray:
    """Integrated gradients along the straight line from ``baseline`` to ``x``.

    ``grad_fn`` maps a batch of points ``(n, *x.shape)`` to their gradients.
    The integral uses the midpoint rule with ``steps`` samples; batch sums
    are accumulated in a fixed order so results are reproducible.
    """
    x = np.asarray(x, dtype=np.float64)
    base = np.asarray(baseline, dtype=np.float64)
    if x.shape != base.shape:
        raise ParameterError(f"input {x.shape} and baseline {base.shape} differ in shape")
    alphas = midpoint_alphas(steps)
    diff = x - base
    total = np.zeros_like(x)
    for start in range(0, steps, batch_size):
        a = alphas[start:start + batch_size].reshape((-1,) + (1,) * x.ndim)
        total += np.asarray(grad_fn(base + a * diff)).sum(axis=0)
    return diff * total / steps


def integrated_gradients(oracle, img, baseline_img, class_index: int, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Signed per-pixel-per-channel integrated gradients of ``oracle.score``."""
    return path_integral(lambda pts: oracle.gradient(pts, class_index), img, baseline_img, steps)


@dataclass(frozen=True)
class BaselineSpec:
    """Which reference images integrated gradients starts from.

    ``kind`` is one of ``black``, ``white``, ``black+white`` or ``random``;
    random baselines are ``count`` uniform [0, 1) images drawn from ``seed``.
    """

    kind: str = "black+white"
    count: int = 1
    seed: int = 0

    def __post_init__(self):
        if self.kind not in ("black", "white", "black+white", "random"):
            raise ParameterError(f"unknown baseline kind {self.kind!r}")
        if self.kind == "random" and self.count < 1:
            raise ParameterError("random baseline count must be >= 1")

    @classmethod
    def parse(cls, text: str, seed: int = 0) -> "BaselineSpec":
        """Parse ``black``, ``white``, ``black+white`` or ``random:N``."""
        text = text.strip().lower()
        if text.startswith("random"):
            _, _, n = text.partition(":")
            return cls("random", int(n) if n else DEFAULT_RANDOM_BASELINES, seed)
        return cls(text)

    def __str__(self) -> str:
        return f"random:{self.count}" if self.kind == "random" else self.kind

    def images(self, shape) -> list[np.ndarray]:
        shape = tuple(shape)
        if self.kind == "black":
            return [np.zeros(shape)]
        if self.kind == "white":
            return [np.ones(shape)]
        if self.kind == "black+white":
            return [np.zeros(shape), np.ones(shape)]
        rng = np.random.default_rng(self.seed)
        return [rng.random(shape) for _ in range(self.count)]


def baseline_weight(img, spec: BaselineSpec) -> np.ndarray:
    """Mean over baselines of ``|x - x'|``: the path-length factor each
    input value receives. For black+white this is 0.5 everywhere."""
    x = np.asarray(img, dtype=np.float64)
    return np.mean([np.abs(x - b) for b in spec.images(x.shape)], axis=0)


def ig_multi_baseline(oracle, img, spec: BaselineSpec, class_index: int, steps: int = DEFAULT_STEPS) -> np.ndarray:
    """Channel-summed mean of the integrated-gradient fields over all
    baselines in ``spec``."""
    x = np.asarray(img, dtype=np.float64)
    fields = [integrated_gradients(oracle, x, b, class_index, steps) for b in spec.images(x.shape)]
    return np.mean(fields, axis=0).sum(axis=-1)


def grayscale(img) -> np.ndarray:
    x = as_image(img)
    if x.shape[2] == 1:
        return x[:, :, 0]
    return x @ _LUMA


SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
SOBEL_Y = SOBEL_X.T


def sobel(gray: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Horizontal and vertical Sobel responses with replicated borders.

    Computed separably (smooth, then central difference) so that flat
    regions give exactly zero.
    """
    p = np.pad(np.asarray(gray, dtype=np.float64), 1, mode="edge")
    rows = p[:-2] + 2.0 * p[1:-1] + p[2:]
    cols = p[:, :-2] + 2.0 * p[:, 1:-1] + p[:, 2:]
    return rows[:, 2:] - rows[:, :-2], cols[2:] - cols[:-2]


def edge_attribution(img) -> np.ndarray:
    """Sobel gradient magnitude of the luma image, scaled so the maximum is 1."""
    gx, gy = sobel(grayscale(img))
    mag = np.hypot(gx, gy)
    peak = mag.max()
    return mag / peak if peak > 0 else mag


def random_attribution(img, seed: int) -> np.ndarray:
    x = np.asarray(img)
    return np.random.default_rng(seed).random(x.shape[:2])


METHODS = ("gradient", "grad-input", "ig", "edges", "random")


def compute_attribution(
    method: str,
    oracle,
    img,
    class_index: int,
    *,
    baseline: BaselineSpec | None = None,
    steps: int = DEFAULT_STEPS,
    seed: int = 0,
) -> np.ndarray:
    """Dispatch a pixel-level method by its CLI name."""
    if method == "gradient":
        return gradient_saliency(oracle, img, class_index)
    if method == "grad-input":
        return gradient_times_input(oracle, img, class_index)
    if method == "ig":
        return ig_multi_baseline(oracle, img, baseline or BaselineSpec(), class_index, steps)
    if method == "edges":
        return edge_attribution(img)
    if method == "random":
        return random_attribution(img, seed)
    raise ParameterError(f"unknown attribution method {method!r}")
