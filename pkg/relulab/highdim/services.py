"""
Monte-Carlo risk and generalized-gradient estimators on [a, b]^d.

Samples come in fixed-size blocks. Block k draws from a Philox stream keyed by
(seed, k), and per-block moments are merged in block order, so an estimate
depends on the seed and the block size only, never on the worker count.
"""
import logging
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

from relulab import settings
from network.models import DomainMeasure, ParamVector, Target
from network.services import active_mask, preactivations
from highdim.models import LinearTarget, MCEstimate


logger = logging.getLogger(__name__)


TargetFunction = Callable[[np.ndarray], np.ndarray]

DEFAULT_BLOCK_SIZE = 65_536


def linear_target(slopes: Sequence[float], intercept: float = 0.0) -> LinearTarget:
    return LinearTarget(slopes=tuple(float(s) for s in slopes), intercept=float(intercept))


class UnivariateTarget:
    """Adapts a piecewise-affine Target to the (n, 1) batch convention"""

    def __init__(self, target: Target):
        self.target = target

    def __call__(self, points: np.ndarray) -> np.ndarray:
        return np.asarray(self.target.evaluate(points[:, 0]), dtype=float)


class _BlockMoments(NamedTuple):
    count: int
    mean: np.ndarray
    m2: np.ndarray


def block_generator(seed: int, block: int) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(key=np.array([seed, block], dtype=np.uint64)))


def _risk_integrand(theta: ParamVector, points: np.ndarray, f: TargetFunction) -> np.ndarray:
    pre = preactivations(theta, points)
    res = theta.c + np.maximum(pre, 0.0) @ theta.v - f(points)
    return (res ** 2)[:, None]


def _gradient_integrand(theta: ParamVector, points: np.ndarray, f: TargetFunction) -> np.ndarray:
    pre = preactivations(theta, points)
    res = theta.c + np.maximum(pre, 0.0) @ theta.v - f(points)
    gate = active_mask(pre) * theta.v * (2.0 * res)[:, None]
    n, H = gate.shape
    dw = (gate[:, :, None] * points[:, None, :]).reshape(n, -1)
    dv = 2.0 * np.maximum(pre, 0.0) * res[:, None]
    return np.hstack([dw, gate, dv, 2.0 * res[:, None]])


_INTEGRANDS = {
    'risk': _risk_integrand,
    'gradient': _gradient_integrand,
}


def _block_moments(task: tuple) -> _BlockMoments:
    kind, theta, f, a, b, seed, block, size = task
    rng = block_generator(seed, block)
    points = a + (b - a) * rng.random((size, theta.shape.d))
    values = _INTEGRANDS[kind](theta, points, f)
    mean = values.mean(axis=0)
    return _BlockMoments(size, mean, np.sum((values - mean) ** 2, axis=0))


def merge_moments(first: _BlockMoments, second: _BlockMoments) -> _BlockMoments:
    """Pairwise update of count, mean and sum of squared deviations."""
    count = first.count + second.count
    delta = second.mean - first.mean
    mean = first.mean + delta * (second.count / count)
    m2 = first.m2 + second.m2 + delta ** 2 * (first.count * second.count / count)
    return _BlockMoments(count, mean, m2)


class MonteCarloService:
    """Uniform-sampling estimators for the risk and the generalized gradient"""

    def __init__(self, block_size: int = DEFAULT_BLOCK_SIZE, workers: Optional[int] = None):
        if block_size < 2:
            raise ValueError(f'block_size must be at least 2, got {block_size}')
        self.block_size = block_size
        self.workers = settings.WORKERS if workers is None else workers

    def _estimate(
        self,
        kind: str,
        theta: ParamVector,
        f: TargetFunction,
        dom: DomainMeasure,
        n: int,
        seed: int,
    ) -> tuple[np.ndarray, np.ndarray]:
        if n < 2:
            raise ValueError(f'Monte-Carlo estimates need n >= 2 samples, got {n}')
        sizes = [min(self.block_size, n - start) for start in range(0, n, self.block_size)]
        tasks = [(kind, theta, f, dom.a, dom.b, seed, k, size) for k, size in enumerate(sizes)]

        if self.workers > 1 and len(tasks) > 1:
            with ProcessPoolExecutor(max_workers=self.workers) as pool:
                parts = list(pool.map(_block_moments, tasks))
        else:
            parts = [_block_moments(task) for task in tasks]

        total = parts[0]
        for part in parts[1:]:
            total = merge_moments(total, part)

        scale = dom.mass(theta.shape.d)
        variance = total.m2 / (total.count - 1)
        logger.debug(f"{kind} estimate from {len(parts)} blocks of up to {self.block_size} samples, seed {seed}")
        return scale * total.mean, scale * np.sqrt(variance / total.count)

    def mc_risk(self, theta: ParamVector, f: TargetFunction, dom: DomainMeasure, n: int, seed: int) -> MCEstimate:
        mean, err = self._estimate('risk', theta, f, dom, n, seed)
        return MCEstimate(mean=float(mean[0]), std_error=float(err[0]), n_samples=n, seed=seed)

    def mc_gradient(self, theta: ParamVector, f: TargetFunction, dom: DomainMeasure, n: int, seed: int) -> MCEstimate:
        """Gradient components in the ParamVector layout (w, b, v, c)."""
        mean, err = self._estimate('gradient', theta, f, dom, n, seed)
        return MCEstimate(mean=tuple(mean.tolist()), std_error=tuple(err.tolist()), n_samples=n, seed=seed)
