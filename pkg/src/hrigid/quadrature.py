"""Tensor-product Gauss-Legendre quadrature over coordinate boxes."""

from __future__ import annotations

from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.legendre import leggauss

__all__ = ["tensor_gauss_legendre"]

# reference grids up to this many nodes are cached (about 50 MB at the cap)
_CACHE_NODES = 1 << 20


@lru_cache(maxsize=8)
def _reference_grid(order: int, d: int) -> tuple[np.ndarray, np.ndarray]:
    x, w = leggauss(order)
    idx = np.stack(np.unravel_index(np.arange(order**d), (order,) * d), axis=-1)
    nodes, weights = x[idx], np.prod(w[idx], axis=-1)
    nodes.flags.writeable = False
    weights.flags.writeable = False
    return nodes, weights


def tensor_gauss_legendre(
    fn: Callable[[np.ndarray], np.ndarray],
    lower: np.ndarray,
    upper: np.ndarray,
    order: int,
    chunk: int = 1 << 17,
) -> np.ndarray:
    """Integrate ``fn`` over the box ``prod [lower_k, upper_k]``.

    Parameters
    ----------
    fn : callable
        Maps nodes of shape ``(N, d)`` to values of shape ``(N, ...)``.
    lower, upper : array_like, shape (d,)
        Box corners.
    order : int
        Nodes per axis; the rule is exact for polynomials of degree
        ``2 * order - 1`` in each variable.
    chunk : int
        Maximum number of nodes evaluated at once.

    Returns
    -------
    ndarray
        Integral with the trailing shape of ``fn``'s output.
    """
    lower = np.asarray(lower, dtype=float)
    upper = np.asarray(upper, dtype=float)
    d = lower.shape[0]
    if order < 1:
        raise ValueError("quadrature order must be positive")
    x, w = leggauss(order)
    half = 0.5 * (upper - lower)
    mid = 0.5 * (upper + lower)
    jac = float(np.prod(half))
    total = order**d
    acc = None
    cached = _reference_grid(order, d) if total <= _CACHE_NODES else None
    for start in range(0, total, chunk):
        stop = min(start + chunk, total)
        if cached is not None:
            ref, weights = cached[0][start:stop], cached[1][start:stop]
        else:
            idx = np.stack(np.unravel_index(np.arange(start, stop), (order,) * d), axis=-1)
            ref, weights = x[idx], np.prod(w[idx], axis=-1)
        nodes = mid + half * ref
        vals = np.asarray(fn(nodes))
        if not np.all(np.isfinite(vals)):
            raise FloatingPointError("integrand produced non-finite values")
        part = np.tensordot(weights, vals, axes=(0, 0))
        acc = part if acc is None else acc + part
    return jac * acc
