"""Realization, active regions and the algebraic quantities of a parameter vector."""
import logging
from typing import Sequence

import numpy as np

from relulab import settings
from relulab.exceptions import DimensionError, ShapeError
from network.models import (
    ActivationConvention,
    Breakpoints,
    DomainMeasure,
    Interval,
    NetworkShape,
    ParamVector,
)


logger = logging.getLogger(__name__)


def require_univariate(theta: ParamVector, operation: str) -> None:
    if theta.shape.d != 1:
        raise DimensionError(operation, theta.shape.d)


# ========== Realization ==========

def preactivations(theta: ParamVector, points: np.ndarray) -> np.ndarray:
    """(n, H) matrix of b_i + <w_i, x> for an (n, d) batch of inputs."""
    return points @ theta.w.T + theta.b


def as_points(theta: ParamVector, x: np.ndarray | float | Sequence[float]) -> np.ndarray:
    """
    Normalize inputs to an (n, d) batch. A trailing axis of length d holds the
    coordinates; for d = 1 it may be omitted.
    """
    d = theta.shape.d
    arr = np.asarray(x, dtype=float)
    if d == 1 and (arr.ndim == 0 or arr.shape[-1] != 1):
        arr = arr[..., np.newaxis]
    if arr.shape[-1] != d:
        raise ShapeError(f'input points need {d} coordinates, got shape {arr.shape}')
    return arr.reshape(-1, d)


def realization(theta: ParamVector, x: np.ndarray | float | Sequence[float]) -> np.ndarray | float:
    """
    c + sum_i v_i max{b_i + <w_i, x>, 0}.

    A single point gives a float; a batch gives an array.
    """
    arr = np.asarray(x, dtype=float)
    points = as_points(theta, arr)
    values = theta.c + np.maximum(preactivations(theta, points), 0.0) @ theta.v
    single = arr.ndim == 0 or (arr.ndim == 1 and theta.shape.d > 1)
    return float(values[0]) if single else values


def active_mask(
    preact: np.ndarray,
    convention: ActivationConvention = ActivationConvention.STRICT,
) -> np.ndarray:
    if convention is ActivationConvention.CLOSED:
        return preact >= 0.0
    return preact > 0.0


# ========== Geometry of active regions (d = 1) ==========

def breakpoints(theta: ParamVector, dom: DomainMeasure) -> Breakpoints:
    """Sorted kinks -b_i/w_i inside (a, b) and the active set on every segment."""
    require_univariate(theta, 'breakpoints')
    w, b = theta.w[:, 0], theta.b

    candidates: list[tuple[float, int]] = []
    for i in np.flatnonzero(w != 0.0):
        kink = -b[i] / w[i]
        if dom.a < kink < dom.b:
            candidates.append((float(kink), int(i) + 1))
    candidates.sort()

    kinks: list[float] = []
    owners: list[set[int]] = []
    for kink, neuron in candidates:
        if kinks and kink - kinks[-1] <= settings.KINK_TOLERANCE:
            owners[-1].add(neuron)
        else:
            kinks.append(kink)
            owners.append({neuron})

    edges = np.array([dom.a, *kinks, dom.b])
    midpoints = 0.5 * (edges[:-1] + edges[1:])
    active = np.outer(midpoints, w) + b > 0.0
    patterns = tuple(frozenset((np.flatnonzero(row) + 1).tolist()) for row in active)

    return Breakpoints(
        a=dom.a,
        b=dom.b,
        kinks=tuple(kinks),
        kink_neurons=tuple(frozenset(o) for o in owners),
        patterns=patterns,
    )


def segment_affine(theta: ParamVector, pattern: frozenset[int]) -> tuple[float, float]:
    """(slope, intercept) of the realization on a segment with the given active set."""
    require_univariate(theta, 'segment_affine')
    idx = np.array(sorted(pattern), dtype=int) - 1
    if idx.size == 0:
        return 0.0, theta.c
    v = theta.v[idx]
    return float(v @ theta.w[idx, 0]), float(theta.c + v @ theta.b[idx])


def active_interval(theta: ParamVector, i: int, dom: DomainMeasure) -> Interval:
    """The set {x in [a, b] : w_i x + b_i > 0}."""
    require_univariate(theta, 'active_interval')
    w, b = theta.w_at(i, 1), theta.b_at(i)
    whole = Interval(lo=dom.a, hi=dom.b)

    if w == 0.0:
        # No kink: the neuron is active everywhere or nowhere.
        return whole if b > 0.0 else Interval.empty()

    kink = -b / w
    if w > 0.0:
        half_line = Interval(lo=kink, hi=np.inf, lo_closed=False, hi_closed=False)
    else:
        half_line = Interval(lo=-np.inf, hi=kink, lo_closed=False, hi_closed=False)
    return whole.intersection(half_line)


def symdiff_length(first: Interval, second: Interval) -> float:
    """Lebesgue length of the symmetric difference of two intervals."""
    overlap = first.intersection(second).length
    return max(first.length + second.length - 2.0 * overlap, 0.0)


# ========== Conserved and Lyapunov quantities ==========

def balancedness(theta: ParamVector, i: int) -> float:
    """W_i = |w_i|^2 + b_i^2 - v_i^2, conserved along the gradient flow."""
    theta.shape.check_neuron(i)
    return float(balancedness_all(theta)[i - 1])


def balancedness_all(theta: ParamVector) -> np.ndarray:
    return np.sum(theta.w ** 2, axis=1) + theta.b ** 2 - theta.v ** 2


def lyapunov(theta: ParamVector, xi: float) -> float:
    """V(theta) = |theta|^2 + (c - 2 xi)^2."""
    return theta.norm_squared() + (theta.c - 2.0 * xi) ** 2


def parameter_norm(theta: ParamVector) -> float:
    return float(np.sqrt(theta.norm_squared()))


def is_degenerate(theta: ParamVector) -> frozenset[int]:
    """Neurons with w_i = 0 and b_i = 0 (1-based)."""
    dead = (np.abs(theta.b) + np.sum(np.abs(theta.w), axis=1)) == 0.0
    return frozenset((np.flatnonzero(dead) + 1).tolist())


# ========== Constructions ==========

def exact_fit(shape: NetworkShape, alpha: float, beta: float, dom: DomainMeasure) -> ParamVector:
    """
    A zero-risk parameter for f(x) = alpha x + beta on [a, b]: neuron 1 is the
    ramp max{x - a, 0} scaled by alpha, c = beta + alpha a, the rest is zero.
    """
    if shape.d != 1:
        raise DimensionError('exact_fit', shape.d)
    w = np.zeros(shape.H)
    b = np.zeros(shape.H)
    v = np.zeros(shape.H)
    w[0], b[0], v[0] = 1.0, -dom.a, alpha
    return ParamVector.from_parts(w, b, v, beta + alpha * dom.a)


def exact_fit_linear(
    shape: NetworkShape,
    slopes: Sequence[float],
    intercept: float,
    dom: DomainMeasure,
) -> ParamVector:
    """Zero-risk parameter for x -> <slopes, x> + intercept on [a, b]^d using one neuron per coordinate."""
    slopes_arr = np.asarray(slopes, dtype=float)
    if slopes_arr.size != shape.d:
        raise ShapeError(f'need {shape.d} slopes, got {slopes_arr.size}')
    if shape.H < shape.d:
        raise ShapeError(f'exact linear fit needs H >= d, got H={shape.H}, d={shape.d}')
    w = np.zeros((shape.H, shape.d))
    b = np.zeros(shape.H)
    v = np.zeros(shape.H)
    for j in range(shape.d):
        w[j, j] = 1.0
        b[j] = -dom.a
        v[j] = slopes_arr[j]
    c = intercept + dom.a * float(slopes_arr.sum())
    return ParamVector.from_parts(w, b, v, c)
