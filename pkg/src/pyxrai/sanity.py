"""Perturbation-epsilon axiom checks on synthetic two-input functions, and
the trained-vs-random model comparison."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import stats

from pyxrai.attribution import path_integral
from pyxrai.core import ParameterError
from pyxrai.model import PEAK, GridFunction

GRADIENT = "gradient"
GRAD_INPUT = "grad-input"
IG_BLACK = "ig-black"
AXIOM_METHODS = (GRADIENT, GRAD_INPUT, IG_BLACK)

RANDOMIZATION_THRESHOLD = 0.3

_PEAK_INPUT = np.array([PEAK, PEAK])


def delta_y(g: GridFunction, i: int) -> float:
    """Output drop when input ``i`` (1 or 2) is set to 0 at the peak."""
    if i not in (1, 2):
        raise ParameterError(f"feature index must be 1 or 2, got {i}")
    removed = (0.0, PEAK) if i == 1 else (PEAK, 0.0)
    return float(g(PEAK, PEAK) - g(*removed))


def _grid_grad_fn(g: GridFunction):
    def grad(points):
        g1, g2 = g.gradient(points[..., 0], points[..., 1])
        return np.stack([g1, g2], axis=-1)
    return grad


def grid_attribution(g: GridFunction, method: str, steps: int = 500) -> np.ndarray:
    """Attributions of (x1, x2) at the peak input for ``method``."""
    grad_fn = _grid_grad_fn(g)
    if method == GRADIENT:
        return grad_fn(_PEAK_INPUT[None])[0]
    if method == GRAD_INPUT:
        return grad_fn(_PEAK_INPUT[None])[0] * _PEAK_INPUT
    if method == IG_BLACK:
        return path_integral(grad_fn, _PEAK_INPUT, np.zeros(2), steps)
    raise ParameterError(f"unknown axiom-check method {method!r}")


@dataclass
class AxiomRecord:
    seed: int
    attr_x1: float
    attr_x2: float
    delta_y_x1: float
    delta_y_x2: float
    passed: bool
    # f(peak) - f(0, 0): the completeness target for path methods
    output_change: float


@dataclass
class AxiomResult:
    method: str
    epsilon: float
    steps: int
    records: list[AxiomRecord] = field(default_factory=list)

    @property
    def failures(self) -> int:
        return sum(not r.passed for r in self.records)

    @property
    def failure_rate(self) -> float:
        return self.failures / len(self.records) if self.records else 0.0


def satisfies_axiom(attr: float, dy: float, epsilon: float) -> bool:
    return attr >= epsilon * dy


def run_axiom_check(
    method: str,
    n_seeds: int = 100,
    epsilon: float = 0.3,
    steps: int = 500,
    seeds: Iterable[int] | None = None,
) -> AxiomResult:
    """Sample grid functions and test the axiom for both inputs of each.

    ``seeds`` overrides the default seed list ``range(n_seeds)``.
    """
    if method not in AXIOM_METHODS:
        raise ParameterError(f"unknown axiom-check method {method!r}")
    if not 0 < epsilon <= 1:
        raise ParameterError(f"epsilon must be in (0, 1], got {epsilon}")
    seed_list = list(range(n_seeds)) if seeds is None else list(seeds)
    if not seed_list:
        raise ParameterError("need at least one seed")
    result = AxiomResult(method, epsilon, steps)
    for seed in seed_list:
        g = GridFunction.sample(seed)
        a1, a2 = (float(v) for v in grid_attribution(g, method, steps))
        d1, d2 = delta_y(g, 1), delta_y(g, 2)
        ok = satisfies_axiom(a1, d1, epsilon) and satisfies_axiom(a2, d2, epsilon)
        change = float(g(PEAK, PEAK) - g(0.0, 0.0))
        result.records.append(AxiomRecord(seed, a1, a2, d1, d2, ok, change))
    return result


@dataclass
class RandomizationReport:
    correlations: list[float]
    degenerate: list[bool]
    threshold: float

    @property
    def mean_abs_correlation(self) -> float:
        vals = [abs(c) for c, d in zip(self.correlations, self.degenerate) if not d]
        return float(np.mean(vals)) if vals else float("nan")

    @property
    def passed(self) -> bool:
        if any(self.degenerate):
            return False
        return self.mean_abs_correlation < self.threshold


def spearman(a, b) -> float | None:
    """Spearman rank correlation, or ``None`` if either input is constant."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise ParameterError(f"attribution shapes differ: {a.shape} vs {b.shape}")
    if np.ptp(a) == 0 or np.ptp(b) == 0:
        return None
    return float(stats.spearmanr(a, b).statistic)


def randomization_check(
    oracle_trained,
    oracle_random,
    images: Sequence[np.ndarray],
    method: Callable[[object, np.ndarray, int], np.ndarray],
    class_indices: Sequence[int] | None = None,
    threshold: float = RANDOMIZATION_THRESHOLD,
) -> RandomizationReport:
    """Compare ``method`` maps under the trained and the random model.

    Each image is explained for ``class_indices[i]`` if given, otherwise for
    the trained model's top class. The check passes when the mean absolute
    Spearman correlation is below ``threshold`` and no pair is degenerate.
    """
    if tuple(oracle_trained.input_shape) != tuple(oracle_random.input_shape):
        raise ParameterError("oracles have different input shapes")
    corrs, degenerate = [], []
    for i, img in enumerate(images):
        c = int(class_indices[i]) if class_indices is not None else int(np.argmax(oracle_trained.predict(img)))
        rho = spearman(method(oracle_trained, img, c), method(oracle_random, img, c))
        corrs.append(float("nan") if rho is None else rho)
        degenerate.append(rho is None)
    return RandomizationReport(corrs, degenerate, threshold)
