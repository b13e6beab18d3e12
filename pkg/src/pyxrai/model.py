"""Differentiable classifiers used as gradient oracles.

Any object with ``predict``, ``score`` and ``gradient`` methods (see
:class:`GradientOracle`) can be explained. Two concrete oracles ship here:
:class:`TinyNet`, a one-hidden-layer ReLU network trained with SGD, and
:class:`LinearModel`, whose attributed score is an affine function of the
input (handy for exact checks). :class:`GridFunction` is the two-input
synthetic function used by the perturbation sanity check.
"""

from __future__ import annotations

import logging
import struct
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np

from pyxrai.core import ParameterError

log = logging.getLogger(__name__)


class GradientOracle(Protocol):
    """Behavioral contract for explainable models.

    All methods accept a single image ``(H, W, C)`` or a batch
    ``(N, H, W, C)``. ``score`` is the scalar that attributions explain and
    ``gradient`` is its derivative with respect to every input value.
    """

    input_shape: tuple[int, int, int]

    def predict(self, images) -> np.ndarray: ...

    def score(self, images, class_index: int) -> np.ndarray: ...

    def gradient(self, images, class_index: int) -> np.ndarray: ...


def softmax(z: np.ndarray) -> np.ndarray:
    z = z - z.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _flatten(images, input_shape) -> tuple[np.ndarray, bool]:
    x = np.asarray(images, dtype=np.float64)
    single = x.shape == tuple(input_shape)
    if single:
        x = x[None]
    if x.shape[1:] != tuple(input_shape):
        raise ParameterError(f"input shape {x.shape} does not match model input {input_shape}")
    return x.reshape(x.shape[0], -1), single


# --- TinyNet ---------------------------------------------------------------


@dataclass(eq=False)
class TinyNet:
    """input -> hidden (ReLU) -> logits -> softmax. The attributed score is
    the softmax probability of the requested class."""

    input_shape: tuple[int, int, int]
    w1: np.ndarray  # (D, hidden)
    b1: np.ndarray  # (hidden,)
    w2: np.ndarray  # (hidden, classes)
    b2: np.ndarray  # (classes,)
    train_accuracy: float | None = field(default=None, compare=False)

    @property
    def hidden(self) -> int:
        return self.w1.shape[1]

    @property
    def n_classes(self) -> int:
        return self.w2.shape[1]

    @classmethod
    def initialize(cls, input_shape, n_classes: int, hidden: int = 64, seed: int = 0) -> "TinyNet":
        """He-normal first layer, Glorot-scaled output layer, zero biases."""
        input_shape = tuple(int(s) for s in input_shape)
        d = int(np.prod(input_shape))
        rng = np.random.default_rng(seed)
        w1 = rng.normal(0.0, np.sqrt(2.0 / d), size=(d, hidden))
        w2 = rng.normal(0.0, np.sqrt(1.0 / hidden), size=(hidden, n_classes))
        return cls(input_shape, w1, np.zeros(hidden), w2, np.zeros(n_classes))

    def _hidden(self, x):
        a = x @ self.w1 + self.b1
        return a, np.maximum(a, 0.0)

    def logits(self, images) -> np.ndarray:
        x, single = _flatten(images, self.input_shape)
        _, h = self._hidden(x)
        z = h @ self.w2 + self.b2
        return z[0] if single else z

    def predict(self, images) -> np.ndarray:
        return softmax(self.logits(images))

    def score(self, images, class_index: int) -> np.ndarray:
        return self.predict(images)[..., class_index]

    def gradient(self, images, class_index: int) -> np.ndarray:
        x, single = _flatten(images, self.input_shape)
        a, h = self._hidden(x)
        p = softmax(h @ self.w2 + self.b2)
        # d p_c / d z_j = p_c (delta_cj - p_j)
        dz = -p * p[:, [class_index]]
        dz[:, class_index] += p[:, class_index]
        dh = (dz @ self.w2.T) * (a > 0)
        g = (dh @ self.w1.T).reshape((-1,) + self.input_shape)
        return g[0] if single else g


def tinynet_train(
    images,
    labels,
    epochs: int = 50,
    learning_rate: float = 0.01,
    seed: int = 0,
    hidden: int = 64,
    batch_size: int = 16,
    n_classes: int | None = None,
) -> TinyNet:
    """Train a TinyNet with minibatch SGD on softmax cross-entropy.

    Initialization uses ``seed`` directly, so ``epochs=0`` returns exactly
    ``TinyNet.initialize(..., seed=seed)``.
    """
    x = np.asarray(images, dtype=np.float64)
    y = np.asarray(labels, dtype=np.int64)
    if x.ndim != 4 or len(x) == 0:
        raise ParameterError("dataset must be a nonempty (N, H, W, C) array")
    if len(y) != len(x):
        raise ParameterError(f"{len(x)} images but {len(y)} labels")
    if n_classes is None:
        n_classes = int(y.max()) + 1
    net = TinyNet.initialize(x.shape[1:], n_classes, hidden=hidden, seed=seed)
    flat = x.reshape(len(x), -1)
    onehot = np.eye(n_classes)[y]
    rng = np.random.default_rng([seed, 1])
    w1, b1, w2, b2 = net.w1.copy(), net.b1.copy(), net.w2.copy(), net.b2.copy()
    for _ in range(epochs):
        order = rng.permutation(len(x))
        for start in range(0, len(x), batch_size):
            idx = order[start:start + batch_size]
            xb, tb = flat[idx], onehot[idx]
            a = xb @ w1 + b1
            h = np.maximum(a, 0.0)
            p = softmax(h @ w2 + b2)
            dz = (p - tb) / len(idx)
            dh = (dz @ w2.T) * (a > 0)
            w2 -= learning_rate * (h.T @ dz)
            b2 -= learning_rate * dz.sum(axis=0)
            w1 -= learning_rate * (xb.T @ dh)
            b1 -= learning_rate * dh.sum(axis=0)
    net = TinyNet(net.input_shape, w1, b1, w2, b2)
    net.train_accuracy = float(np.mean(net.predict(x).argmax(axis=1) == y))
    log.info("tinynet trained: %d epochs, train accuracy %.4f", epochs, net.train_accuracy)
    return net


def tinynet_randomize(net: TinyNet, seed: int) -> TinyNet:
    """Fresh weights from the initialization distribution, same architecture."""
    return TinyNet.initialize(net.input_shape, net.n_classes, hidden=net.hidden, seed=seed)


_MAGIC = b"TNYN"
_VERSION = 1


def save_tinynet(net: TinyNet, path) -> None:
    """Little-endian: magic, version, H, W, C, hidden, classes (uint32),
    then float32 w1, b1, w2, b2 in row-major order."""
    h, w, c = net.input_shape
    header = _MAGIC + struct.pack("<6I", _VERSION, h, w, c, net.hidden, net.n_classes)
    body = b"".join(np.ascontiguousarray(a, dtype="<f4").tobytes() for a in (net.w1, net.b1, net.w2, net.b2))
    Path(path).write_bytes(header + body)


def load_tinynet(path) -> TinyNet:
    data = Path(path).read_bytes()
    if data[:4] != _MAGIC:
        raise ParameterError(f"{path}: not a TinyNet weight file")
    version, h, w, c, hidden, k = struct.unpack("<6I", data[4:28])
    if version != _VERSION:
        raise ParameterError(f"{path}: unsupported weight file version {version}")
    d = h * w * c
    sizes = [(d, hidden), (hidden,), (hidden, k), (k,)]
    arrays, offset = [], 28
    for shape in sizes:
        n = int(np.prod(shape))
        arr = np.frombuffer(data, dtype="<f4", count=n, offset=offset).astype(np.float64)
        arrays.append(arr.reshape(shape))
        offset += 4 * n
    if offset != len(data):
        raise ParameterError(f"{path}: truncated or oversized weight file")
    return TinyNet((h, w, c), *arrays)


# --- linear model ----------------------------------------------------------


@dataclass(eq=False)
class LinearModel:
    """Affine classifier. ``score`` is the raw logit, so gradients are the
    weight columns and integrated gradients are exact at any step count."""

    input_shape: tuple[int, int, int]
    weights: np.ndarray  # (D, classes)
    bias: np.ndarray  # (classes,)

    def logits(self, images) -> np.ndarray:
        x, single = _flatten(images, self.input_shape)
        z = x @ self.weights + self.bias
        return z[0] if single else z

    def predict(self, images) -> np.ndarray:
        return softmax(self.logits(images))

    def score(self, images, class_index: int) -> np.ndarray:
        return self.logits(images)[..., class_index]

    def gradient(self, images, class_index: int) -> np.ndarray:
        x, single = _flatten(images, self.input_shape)
        g = np.broadcast_to(self.weights[:, class_index], x.shape).reshape((-1,) + tuple(self.input_shape))
        return g[0].copy() if single else g.copy()


def finite_diff_gradient(oracle, img, class_index: int, h: float = 1e-5, chunk: int = 256) -> np.ndarray:
    """Central-difference gradient of ``oracle.score`` for every input value."""
    if not h > 0:
        raise ParameterError(f"step must be positive, got {h}")
    x = np.asarray(img, dtype=np.float64)
    flat = x.ravel()
    n = flat.size
    grad = np.empty(n)
    for start in range(0, n, chunk):
        idx = np.arange(start, min(start + chunk, n))
        plus = np.repeat(flat[None], len(idx), axis=0)
        minus = plus.copy()
        plus[np.arange(len(idx)), idx] += h
        minus[np.arange(len(idx)), idx] -= h
        fp = oracle.score(plus.reshape((-1,) + x.shape), class_index)
        fm = oracle.score(minus.reshape((-1,) + x.shape), class_index)
        grad[idx] = (fp - fm) / (2.0 * h)
    return grad.reshape(x.shape)


# --- grid function ---------------------------------------------------------

GRID_SIZE = 20
PEAK = 127.0
PEAK_NODE = 9
# Uniform spacing chosen so lattice node 9 sits exactly on 127; the 20
# nodes span [0, 268.2], which contains the [0, 255] input domain.
GRID_STEP = PEAK / PEAK_NODE
INPUT_MAX = 255.0


def _catmull_rom(t):
    t2, t3 = t * t, t * t * t
    return np.stack([
        0.5 * (-t3 + 2.0 * t2 - t),
        0.5 * (3.0 * t3 - 5.0 * t2 + 2.0),
        0.5 * (-3.0 * t3 + 4.0 * t2 + t),
        0.5 * (t3 - t2),
    ])


def _catmull_rom_deriv(t):
    t2 = t * t
    return np.stack([
        0.5 * (-3.0 * t2 + 4.0 * t - 1.0),
        0.5 * (9.0 * t2 - 10.0 * t),
        0.5 * (-9.0 * t2 + 8.0 * t + 1.0),
        0.5 * (3.0 * t2 - 2.0 * t),
    ])


@dataclass(frozen=True, eq=False)
class GridFunction:
    """Bicubic (Catmull-Rom) surface over a 20 x 20 lattice.

    The node at (127, 127) holds 1.0; every other node holds a value in
    [0, 0.5). Its four axis neighbours are mirrored pairwise so the
    surface has zero gradient at the peak. Lattice indices beyond the
    border are clamped to the edge node.
    """

    grid: np.ndarray

    @classmethod
    def sample(cls, seed: int) -> "GridFunction":
        rng = np.random.default_rng(seed)
        g = rng.uniform(0.0, 0.5, size=(GRID_SIZE, GRID_SIZE))
        p = PEAK_NODE
        g[p + 1, p] = g[p - 1, p]
        g[p, p + 1] = g[p, p - 1]
        g[p, p] = 1.0
        return cls(g)

    @classmethod
    def constant(cls, value: float) -> "GridFunction":
        return cls(np.full((GRID_SIZE, GRID_SIZE), float(value)))

    def _locate(self, x):
        x = np.asarray(x, dtype=np.float64)
        if np.any(~np.isfinite(x)) or np.any(x < 0.0) or np.any(x > INPUT_MAX):
            raise ParameterError(f"grid function inputs must lie in [0, {INPUT_MAX:g}]")
        u = x * PEAK_NODE / PEAK
        i = np.minimum(np.floor(u).astype(np.int64), GRID_SIZE - 2)
        t = u - i
        idx = np.clip(i[..., None] + np.arange(-1, 3), 0, GRID_SIZE - 1)
        return idx, t

    def _patch(self, i1, i2):
        return self.grid[i1[..., :, None], i2[..., None, :]]

    def __call__(self, x1, x2) -> np.ndarray:
        i1, t1 = self._locate(x1)
        i2, t2 = self._locate(x2)
        i1, i2 = np.broadcast_arrays(i1, i2)
        w1 = np.moveaxis(_catmull_rom(t1), 0, -1)
        w2 = np.moveaxis(_catmull_rom(t2), 0, -1)
        w1, w2 = np.broadcast_arrays(w1, w2)
        return np.einsum("...a,...ab,...b->...", w1, self._patch(i1, i2), w2)

    def gradient(self, x1, x2) -> tuple[np.ndarray, np.ndarray]:
        i1, t1 = self._locate(x1)
        i2, t2 = self._locate(x2)
        i1, i2 = np.broadcast_arrays(i1, i2)
        w1 = np.moveaxis(_catmull_rom(t1), 0, -1)
        w2 = np.moveaxis(_catmull_rom(t2), 0, -1)
        d1 = np.moveaxis(_catmull_rom_deriv(t1), 0, -1)
        d2 = np.moveaxis(_catmull_rom_deriv(t2), 0, -1)
        w1, w2, d1, d2 = np.broadcast_arrays(w1, w2, d1, d2)
        patch = self._patch(i1, i2)
        g1 = np.einsum("...a,...ab,...b->...", d1, patch, w2) / GRID_STEP
        g2 = np.einsum("...a,...ab,...b->...", w1, patch, d2) / GRID_STEP
        return g1, g2


def grid_eval(g: GridFunction, x1, x2) -> np.ndarray:
    return g(x1, x2)


def grid_gradient(g: GridFunction, x1, x2) -> tuple[np.ndarray, np.ndarray]:
    return g.gradient(x1, x2)


__all__ = [
    "GradientOracle",
    "GridFunction",
    "LinearModel",
    "TinyNet",
    "finite_diff_gradient",
    "grid_eval",
    "grid_gradient",
    "load_tinynet",
    "save_tinynet",
    "softmax",
    "tinynet_randomize",
    "tinynet_train",
]
