"""Symbolic checks of the left-invariant frame against the group law."""

from __future__ import annotations

import numpy as np
import sympy as sp

from .hgroup import frame_vectors, mul

__all__ = ["frame_matrix", "bracket_table", "bracket_violations", "left_invariance_defect"]


def frame_matrix(n: int) -> tuple[sp.Matrix, list[sp.Symbol]]:
    """Symbolic frame coefficients; row ``i`` holds the components of ``X_i``."""
    xs = list(sp.symbols(f"x0:{2 * n + 1}", real=True))
    F = sp.eye(2 * n + 1)
    for i in range(n):
        F[i, 2 * n] = 2 * xs[i + n]
        F[i + n, 2 * n] = -2 * xs[i]
    return F, xs


def bracket_table(n: int) -> dict[tuple[int, int], sp.Matrix]:
    """Lie brackets ``[X_a, X_b]`` for ``a < b`` as coordinate vectors."""
    F, xs = frame_matrix(n)
    m = 2 * n + 1
    out = {}
    for a in range(m):
        for b in range(a + 1, m):
            vec = sp.zeros(m, 1)
            for k in range(m):
                vec[k] = sp.expand(
                    sum(F[a, j] * sp.diff(F[b, k], xs[j]) - F[b, j] * sp.diff(F[a, k], xs[j]) for j in range(m))
                )
            out[(a, b)] = vec
    return out


def bracket_violations(n: int) -> list[tuple[int, int]]:
    """Index pairs whose bracket differs from ``[X_j, X_{j+n}] = -4 T``, others zero."""
    m = 2 * n + 1
    T = sp.zeros(m, 1)
    T[m - 1] = 1
    bad = []
    for (a, b), vec in bracket_table(n).items():
        expected = -4 * T if (a < n and b == a + n) else sp.zeros(m, 1)
        if sp.simplify(vec - expected) != sp.zeros(m, 1):
            bad.append((a, b))
    return bad


def left_invariance_defect(n: int, points: np.ndarray) -> float:
    """Compare ``d/dh (p . h)`` at ``h = 0`` with the frame at ``p``.

    The product is the numerical :func:`~hrigid.hgroup.mul` applied to symbols,
    so the check certifies the implemented group law itself.
    """
    m = 2 * n + 1
    ps = sp.symbols(f"p0:{m}", real=True)
    hs = sp.symbols(f"h0:{m}", real=True)
    prod = mul(np.array(ps, dtype=object), np.array(hs, dtype=object))
    jac = sp.Matrix(prod.tolist()).jacobian(sp.Matrix(hs)).subs({h: 0 for h in hs})
    # column i of jac is the pushforward of e_i; transpose to match frame rows
    fn = sp.lambdify(ps, jac.T, "numpy")
    worst = 0.0
    for p in np.atleast_2d(points):
        pushed = np.asarray(fn(*p), dtype=float)
        worst = max(worst, float(np.max(np.abs(pushed - frame_vectors(p)))))
    return worst
