"""Horizontal calculus of maps: differentials, contact defect, orientation and Q.

Conventions
-----------
The horizontal differential is the real ``2n x 2n`` matrix ``M`` with
``M[j, i] = X_i f_j``: rows index output components and columns index the
frame fields, so a complex-linear map ``z -> A z`` has ``M = real_form(A)``.
All functions accept batches of points with shape ``(..., 2n + 1)``.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np

from .hgroup import (
    Ball,
    Isometry,
    as_coords,
    dilate,
    dim_of,
    frame_vectors,
    imag_inner,
    inv,
    kdist,
    mul,
    sample_ball,
)

__all__ = [
    "SmoothMap",
    "HorizontalDifferential",
    "QValue",
    "QIProbe",
    "symplectic_unit",
    "identity_map",
    "dilation_map",
    "isometry_map",
    "right_translation_map",
    "compose",
    "horiz_diff",
    "frame_derivatives",
    "q_apply",
    "displacement",
    "main_estimate_residual",
    "contact_residual",
    "qi_probe",
    "bilipschitz_probe",
]


# --------------------------------------------------------------------------
# Maps


@dataclass(frozen=True, eq=False)
class SmoothMap:
    """Closed-form map on the group.

    Attributes
    ----------
    evaluator : callable
        Maps points ``(..., 2n+1)`` to outputs ``(..., m)``.  For
        ``kind="group"`` the output is a point (``m = 2n + 1``); for
        ``kind="vector"`` it is a real packing of a ``C^n``-valued map
        (``m = 2n``).
    n : int
        Complex dimension of the source.
    jacobian : callable, optional
        Euclidean Jacobian ``(..., m, 2n+1)``.
    domain : object, optional
        Anything with a ``contains`` method; finite-difference stencils are
        checked against it.
    label : str
        Human-readable description.
    kind : {"group", "vector"}
    """

    evaluator: Callable[[np.ndarray], np.ndarray]
    n: int
    jacobian: Callable[[np.ndarray], np.ndarray] | None = None
    domain: object | None = None
    label: str = ""
    kind: str = "group"

    def __post_init__(self):
        if self.kind not in ("group", "vector"):
            raise ValueError(f"unknown map kind {self.kind!r}")

    def __call__(self, x) -> np.ndarray:
        return self.evaluator(as_coords(x))

    @property
    def out_dim(self) -> int:
        return 2 * self.n + 1 if self.kind == "group" else 2 * self.n

    def with_domain(self, domain) -> "SmoothMap":
        return SmoothMap(self.evaluator, self.n, self.jacobian, domain, self.label, self.kind)

    def without_jacobian(self) -> "SmoothMap":
        return SmoothMap(self.evaluator, self.n, None, self.domain, self.label, self.kind)


def identity_map(n: int) -> SmoothMap:
    m = 2 * n + 1

    def jac(x):
        return np.broadcast_to(np.eye(m), x.shape[:-1] + (m, m)).copy()

    return SmoothMap(lambda x: np.array(x, dtype=float, copy=True), n, jac, label="identity")


def dilation_map(s: float, n: int) -> SmoothMap:
    """``delta_s``; ``s = 1`` gives the identity."""
    if not s > 0:
        raise ValueError(f"dilation factor must be positive, got {s}")
    diag = np.concatenate([np.full(2 * n, s), [s * s]])

    def jac(x):
        return np.broadcast_to(np.diag(diag), x.shape[:-1] + (2 * n + 1, 2 * n + 1)).copy()

    return SmoothMap(lambda x: dilate(s, x), n, jac, label=f"dilation({s:.12g})")


def isometry_map(theta: Isometry) -> SmoothMap:
    return SmoothMap(theta.__call__, theta.n, theta.jacobian, label="isometry")


def right_translation_map(b) -> SmoothMap:
    """``x -> x b``, a left-invariant but non-contact map when ``b_z != 0``."""
    b = np.array(as_coords(b), dtype=float)
    n = dim_of(b)
    m = 2 * n + 1
    J = np.eye(m)
    J[-1, :n] = -2.0 * b[n : 2 * n]
    J[-1, n : 2 * n] = 2.0 * b[:n]

    def jac(x):
        return np.broadcast_to(J, x.shape[:-1] + (m, m)).copy()

    return SmoothMap(lambda x: mul(x, b), n, jac, label="right-translation")


def compose(outer: SmoothMap, inner: SmoothMap) -> SmoothMap:
    """``outer o inner`` with the chain rule when both Jacobians are known."""
    if inner.kind != "group":
        raise ValueError("inner map must be group-valued")
    if outer.n != inner.n:
        raise ValueError("dimension mismatch in composition")
    jac = None
    if outer.jacobian is not None and inner.jacobian is not None:

        def jac(x):
            return outer.jacobian(inner.evaluator(x)) @ inner.jacobian(x)

    def ev(x):
        return outer.evaluator(inner.evaluator(x))

    return SmoothMap(ev, inner.n, jac, inner.domain, f"{outer.label} o {inner.label}", outer.kind)


# --------------------------------------------------------------------------
# Differentials


def symplectic_unit(n: int) -> np.ndarray:
    """``J = [[0, I], [-I, 0]]``."""
    Z = np.zeros((n, n))
    I = np.eye(n)
    return np.block([[Z, I], [-I, Z]])


@dataclass(frozen=True, eq=False)
class HorizontalDifferential:
    """Horizontal differential ``M`` and vertical multiplier ``lam`` at ``at``.

    Arrays carry the batch shape of ``at``; ``lam`` is NaN for
    vector-valued maps.
    """

    M: np.ndarray
    lam: np.ndarray
    at: np.ndarray

    @property
    def n(self) -> int:
        return self.M.shape[-1] // 2

    def det_defect(self) -> np.ndarray:
        """``|lam^n - det M|``."""
        return np.abs(self.lam**self.n - np.linalg.det(self.M))

    def symplectic_defect(self) -> np.ndarray:
        """Operator norm of ``M^T J M - lam J``."""
        J = symplectic_unit(self.n)
        D = np.swapaxes(self.M, -1, -2) @ J @ self.M - self.lam[..., None, None] * J
        return np.linalg.norm(D, 2, axis=(-2, -1))


def _check_stencil(f: SmoothMap, pts: np.ndarray) -> None:
    if f.domain is not None and not np.all(f.domain.contains(pts)):
        raise ValueError("finite-difference stencil leaves the map's domain")


def _default_step(f: SmoothMap) -> float:
    scale = 1.0
    dom = f.domain
    if dom is not None and hasattr(dom, "radius"):
        scale = max(1.0, float(dom.radius))
    return 1e-5 * scale


def frame_derivatives(f: SmoothMap, x, scheme: str | None = None, h: float | None = None) -> np.ndarray:
    """All frame derivatives ``D[..., j, i] = X_i f_j`` for ``i = 0..2n``.

    Parameters
    ----------
    scheme : {"analytic", "flow_fd", None}
        ``None`` picks ``"analytic"`` when a Jacobian is available.
    h : float, optional
        Step for ``"flow_fd"``; the central difference is taken along the
        group flow ``x (+-h e_i)``.
    """
    x = as_coords(x)
    n = f.n
    m = 2 * n + 1
    if scheme is None:
        scheme = "analytic" if f.jacobian is not None else "flow_fd"
    if scheme == "analytic":
        if f.jacobian is None:
            raise ValueError("map has no analytic Jacobian")
        Jf = f.jacobian(x)
        return Jf @ np.swapaxes(frame_vectors(x), -1, -2)
    if scheme != "flow_fd":
        raise ValueError(f"unknown differentiation scheme {scheme!r}")
    h = _default_step(f) if h is None else float(h)
    if not h > 0:
        raise ValueError("finite-difference step must be positive")
    steps = np.concatenate([h * np.eye(m), -h * np.eye(m)])
    pts = mul(x[..., None, :], steps)
    _check_stencil(f, pts)
    vals = f(pts)
    plus, minus = vals[..., :m, :], vals[..., m:, :]
    return np.swapaxes((plus - minus) / (2.0 * h), -1, -2)


def _vertical_multiplier(fx: np.ndarray, dfdt: np.ndarray) -> np.ndarray:
    # vertical frame component of the tangent vector dfdt at the point fx
    n = dim_of(fx)
    return dfdt[..., -1] - 2.0 * imag_inner(fx[..., : 2 * n], dfdt[..., : 2 * n])


def horiz_diff(f: SmoothMap, x, scheme: str | None = None, h: float | None = None) -> HorizontalDifferential:
    """Horizontal differential and vertical multiplier of ``f`` at ``x``."""
    x = as_coords(x)
    n = f.n
    D = frame_derivatives(f, x, scheme, h)
    M = D[..., : 2 * n, : 2 * n]
    if f.kind != "group":
        return HorizontalDifferential(M, np.full(x.shape[:-1], np.nan), x)
    fx = f(x)
    if scheme == "flow_fd" or (scheme is None and f.jacobian is None):
        step = _default_step(f) if h is None else float(h)
        e_t = np.zeros(2 * n + 1)
        e_t[-1] = step
        pts = np.stack([mul(x, e_t), mul(x, -e_t)], axis=-2)
        _check_stencil(f, pts)
        vals = f(pts)
        up = mul(inv(fx), vals[..., 0, :])[..., -1]
        down = mul(inv(fx), vals[..., 1, :])[..., -1]
        lam = (up - down) / (2.0 * step)
    else:
        lam = _vertical_multiplier(fx, D[..., :, -1])
    return HorizontalDifferential(M, lam, x)


# --------------------------------------------------------------------------
# The operator Q


@dataclass(frozen=True, eq=False)
class QValue:
    """Value of ``Q u`` in real and complex packings.

    Attributes
    ----------
    sym_part : ndarray
        ``(M + M^T) / 2``.
    antisymplectic_part : ndarray
        ``(M + J M J) / 2``, the conjugate-linear part of ``M``.
    complex_sym : ndarray
        ``(Zu + (Zu)^*) / 2``.
    complex_antiholo : ndarray
        ``Zbar u``.
    """

    sym_part: np.ndarray
    antisymplectic_part: np.ndarray
    complex_sym: np.ndarray
    complex_antiholo: np.ndarray

    @classmethod
    def from_matrix(cls, M: np.ndarray) -> "QValue":
        M = np.asarray(M, dtype=float)
        n = M.shape[-1] // 2
        J = symplectic_unit(n)
        Mt = np.swapaxes(M, -1, -2)
        # X_j u_k and X_{j+n} u_k as complex numbers, rows k and columns j
        Xu = M[..., :n, :n] + 1j * M[..., n:, :n]
        Yu = M[..., :n, n:] + 1j * M[..., n:, n:]
        Zu = 0.5 * (Xu - 1j * Yu)
        Zbar = 0.5 * (Xu + 1j * Yu)
        return cls(
            sym_part=0.5 * (M + Mt),
            antisymplectic_part=0.5 * (M + J @ M @ J),
            complex_sym=0.5 * (Zu + np.conj(np.swapaxes(Zu, -1, -2))),
            complex_antiholo=Zbar,
        )

    @property
    def norm(self) -> np.ndarray:
        """Operator norm of the stacked real ``4n x 2n`` matrix."""
        S = np.concatenate([self.sym_part, self.antisymplectic_part], axis=-2)
        return np.linalg.norm(S, 2, axis=(-2, -1))

    @property
    def complex_norm(self) -> np.ndarray:
        """Operator norm of the stacked complex ``2n x n`` matrix."""
        S = np.concatenate([self.complex_sym, self.complex_antiholo], axis=-2)
        return np.linalg.norm(S, 2, axis=(-2, -1))

    def packing_defect(self) -> np.ndarray:
        """Disagreement between the real and complex packings.

        The complex-linear part of ``sym_part`` must be the real form of
        ``complex_sym``, and ``|antisymplectic_part| = |complex_antiholo|``.
        """
        n = self.complex_sym.shape[-1]
        J = symplectic_unit(n)
        lin = 0.5 * (self.sym_part - J @ self.sym_part @ J)
        C = self.complex_sym
        RC = np.concatenate(
            [np.concatenate([C.real, -C.imag], axis=-1), np.concatenate([C.imag, C.real], axis=-1)], axis=-2
        )
        d1 = np.max(np.abs(lin - RC), axis=(-2, -1))
        d2 = np.abs(
            np.linalg.norm(self.antisymplectic_part, 2, axis=(-2, -1))
            - np.linalg.norm(self.complex_antiholo, 2, axis=(-2, -1))
        )
        return np.maximum(d1, d2)


def q_apply(u: SmoothMap, x, scheme: str | None = None, h: float | None = None) -> QValue:
    """``Q u`` at ``x``; for group-valued maps the horizontal part is used."""
    D = frame_derivatives(u, x, scheme, h)
    n = u.n
    return QValue.from_matrix(D[..., : 2 * n, : 2 * n])


def displacement(f: SmoothMap, x) -> np.ndarray:
    """``x^-1 f(x)``; its first ``2n`` coordinates are ``f_z - z``."""
    x = as_coords(x)
    return mul(inv(x), f(x))


def _opnorm(M: np.ndarray) -> np.ndarray:
    return np.linalg.norm(M, 2, axis=(-2, -1))


def main_estimate_residual(
    f: SmoothMap, x, L: float, scheme: str | None = None, h: float | None = None
) -> np.ndarray:
    """Right minus left side of the pointwise estimate for ``Q(x^-1 f(x))``.

    The left side is ``|Q psi|`` for the horizontal part ``psi`` of the
    displacement, whose horizontal differential is ``D_h f - I``.  The right
    side is ``(L^2 - 1)/2 (|D_h f - I| + 2) + |D_h f - I|^2 / 2``.

    Raises
    ------
    ValueError
        If the vertical multiplier is not positive at some point.
    """
    hd = horiz_diff(f, x, scheme, h)
    if np.any(~(hd.lam > 0)):
        raise ValueError("map reverses orientation (vertical multiplier <= 0); estimate not applicable")
    E = hd.M - np.eye(2 * f.n)
    lhs = QValue.from_matrix(E).norm
    e = _opnorm(E)
    rhs = 0.5 * (L * L - 1.0) * (e + 2.0) + 0.5 * e * e
    return rhs - lhs


def contact_residual(f: SmoothMap, x, scheme: str | None = None, h: float | None = None) -> np.ndarray:
    """Max over ``i`` of ``|X_i f_t - 2 sum_j (f_{j+n} X_i f_j - f_j X_i f_{j+n})|``."""
    if f.kind != "group":
        raise ValueError("contact residual needs a group-valued map")
    x = as_coords(x)
    n = f.n
    D = frame_derivatives(f, x, scheme, h)[..., :, : 2 * n]
    fx = f(x)
    P = fx[..., :n, None]
    Q = fx[..., n : 2 * n, None]
    res = D[..., -1, :] - 2.0 * np.sum(Q * D[..., :n, :] - P * D[..., n : 2 * n, :], axis=-2)
    return np.max(np.abs(res), axis=-1)


# --------------------------------------------------------------------------
# Probes


class QIProbe(NamedTuple):
    L_lower: float
    sign_ok: bool
    lam_sign: int


def qi_probe(
    f: SmoothMap, B: Ball, samples: int, scheme: str | None = None, method: str = "sobol"
) -> QIProbe:
    """Empirical quasi-isometry constant and orientation on ``B``.

    Returns ``max(sigma_max, 1/sigma_min)`` over the samples (``inf`` when a
    differential is singular) and whether the vertical multiplier keeps its
    sign.
    """
    if samples < 1:
        raise ValueError("samples must be positive")
    x = sample_ball(B, samples, method=method)
    hd = horiz_diff(f, x, scheme)
    sv = np.linalg.svd(hd.M, compute_uv=False)
    smin = sv[:, -1]
    with np.errstate(divide="ignore"):
        L = np.max(np.maximum(sv[:, 0], np.where(smin > 0, 1.0 / smin, np.inf)))
    signs = np.sign(hd.lam)
    ok = bool(np.all(signs == signs[0]) and signs[0] != 0)
    return QIProbe(float(L), ok, int(signs[0]))


def bilipschitz_probe(f: SmoothMap, V: Ball, pairs: int, seed: int = 0) -> tuple[float, float]:
    """Max and min of ``rho(f x, f y) / rho(x, y)`` over random pairs in ``V``."""
    if pairs < 1:
        raise ValueError("pairs must be positive")
    x = sample_ball(V, pairs, method="random", seed=seed)
    y = sample_ball(V, pairs, method="random", seed=seed + 1)
    d = kdist(x, y)
    rng = np.random.default_rng(seed + 2)
    while np.any(d < 1e-12):
        bad = d < 1e-12
        y[bad] = sample_ball(V, int(bad.sum()), method="random", seed=int(rng.integers(1 << 31)))
        d = kdist(x, y)
    ratio = kdist(f(x), f(y)) / d
    return float(ratio.max()), float(ratio.min())
