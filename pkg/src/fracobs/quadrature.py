"""Cached Gaussian quadrature rules on the unit interval.

Singular factors of the form x**p (p > -1) are absorbed into Gauss-Jacobi
weights so integrands handed to the rules are smooth.  Rules are cached and
returned as read-only arrays; callers must not mutate them.
"""

from functools import lru_cache

import numpy as np
from scipy.special import roots_jacobi, roots_legendre

__all__ = ["legendre_01", "jacobi_01"]


def _freeze(nodes: np.ndarray, weights: np.ndarray):
    nodes.setflags(write=False)
    weights.setflags(write=False)
    return nodes, weights


@lru_cache(maxsize=None)
def legendre_01(npts: int):
    """Gauss-Legendre rule transplanted to [0, 1]: sum w_i f(x_i) ~ int_0^1 f."""
    t, w = roots_legendre(npts)
    return _freeze(0.5 * (t + 1.0), 0.5 * w)


@lru_cache(maxsize=None)
def jacobi_01(npts: int, power: float):
    """Rule for weighted integrals int_0^1 x**power f(x) dx with power > -1.

    Returns (nodes, weights) such that sum w_i f(x_i) approximates the
    weighted integral; the singular factor is inside the weights, so f
    should be the smooth part only.
    """
    if power <= -1.0:
        raise ValueError(f"weight exponent must exceed -1, got {power}")
    if power == 0.0:
        return legendre_01(npts)
    t, w = roots_jacobi(npts, 0.0, power)
    nodes = 0.5 * (t + 1.0)
    weights = w * 0.5 ** (power + 1.0)
    return _freeze(nodes, weights)
