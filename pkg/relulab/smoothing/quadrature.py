"""Adaptive Gauss-Legendre quadrature for vector-valued integrands."""
import logging
from functools import lru_cache
from typing import Callable, Tuple

import numpy as np
from numpy.polynomial.legendre import leggauss


logger = logging.getLogger(__name__)


Integrand = Callable[[np.ndarray], np.ndarray]


@lru_cache(maxsize=8)
def gauss_legendre(n: int) -> Tuple[np.ndarray, np.ndarray]:
    """Nodes and weights of the n-point rule on [-1, 1] (read-only)."""
    nodes, weights = leggauss(n)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def fixed_rule(func: Integrand, lo: float, hi: float, n: int) -> np.ndarray:
    """
    n-point Gauss-Legendre estimate of the integral of func over [lo, hi].
    func maps an (m,) array of nodes to an (m,) or (m, k) array of values.
    """
    nodes, weights = gauss_legendre(n)
    half = 0.5 * (hi - lo)
    values = np.asarray(func(0.5 * (hi + lo) + half * nodes), dtype=float)
    return half * np.tensordot(weights, values, axes=(0, 0))


def adaptive_gauss_legendre(
    func: Integrand,
    lo: float,
    hi: float,
    abs_tol: float = 1e-13,
    rel_tol: float = 1e-13,
    coarse: int = 16,
    fine: int = 32,
    max_depth: int = 40,
) -> np.ndarray:
    """
    Integrate func over [lo, hi], bisecting any subinterval on which the
    coarse and fine rules disagree by more than abs_tol + rel_tol |fine|
    (componentwise maximum). The tolerance is halved with every bisection.
    """
    def refine(left: float, right: float, tol: float, depth: int) -> np.ndarray:
        estimate = fixed_rule(func, left, right, fine)
        discrepancy = np.max(np.abs(estimate - fixed_rule(func, left, right, coarse)))
        allowed = tol + rel_tol * float(np.max(np.abs(estimate)))
        if discrepancy <= allowed:
            return estimate
        if depth >= max_depth:
            logger.warning(f"Quadrature depth limit on [{left:.6g}, {right:.6g}]: discrepancy {discrepancy:.3e}")
            return estimate
        middle = 0.5 * (left + right)
        return refine(left, middle, 0.5 * tol, depth + 1) + refine(middle, right, 0.5 * tol, depth + 1)

    return refine(lo, hi, abs_tol, 0)
