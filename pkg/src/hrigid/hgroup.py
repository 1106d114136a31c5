"""Heisenberg group arithmetic, Koranyi geometry and the isometry group.

Points of the group of complex dimension ``n`` are stored as real arrays whose
last axis has length ``2n + 1``: the first ``n`` entries are the real parts of
``z``, the next ``n`` the imaginary parts and the last entry is ``t``.  All
core functions broadcast over leading axes.  :class:`HPoint` is a thin
immutable wrapper for single points.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special

__all__ = [
    "GroupDim",
    "HPoint",
    "Ball",
    "Box",
    "Isometry",
    "dim_of",
    "as_coords",
    "origin",
    "mul",
    "inv",
    "dilate",
    "knorm",
    "kdist",
    "imag_inner",
    "ball_volume",
    "unit_ball_volume",
    "box_volume",
    "box_second_moment",
    "frame_vectors",
    "realify",
    "complexify",
    "real_form",
    "flip_matrix",
    "isometry_apply",
    "isometry_compose",
    "isometry_invert",
    "isometry_dh",
    "random_unitary",
    "random_points",
    "sample_ball",
    "sample_ball_boundary",
]

UNITARY_TOL = 1e-12


@dataclass(frozen=True)
class GroupDim:
    """Dimension constants of the group.

    Attributes
    ----------
    n : int
        Complex dimension.
    nu : int
        Homogeneous dimension ``2n + 2``.
    kappa : float
        Box-in-ball ratio ``(4n^2 + 1)^(-1/4)``.
    """

    n: int
    nu: int = field(init=False)
    kappa: float = field(init=False)

    def __post_init__(self):
        if int(self.n) != self.n or self.n < 1:
            raise ValueError(f"complex dimension must be a positive integer, got {self.n}")
        object.__setattr__(self, "nu", 2 * self.n + 2)
        object.__setattr__(self, "kappa", float((4 * self.n**2 + 1) ** -0.25))

    @property
    def real_dim(self) -> int:
        return 2 * self.n + 1


def dim_of(x: np.ndarray) -> int:
    """Complex dimension ``n`` encoded by the last axis of ``x``."""
    m = np.shape(x)[-1]
    if m < 3 or m % 2 == 0:
        raise ValueError(f"coordinate axis must have odd length >= 3, got {m}")
    return (m - 1) // 2


def as_coords(x) -> np.ndarray:
    """Return real coordinates for an :class:`HPoint` or array-like."""
    if isinstance(x, HPoint):
        return x.coords
    arr = np.asarray(x)
    if arr.dtype == object:
        # symbolic entries pass through untouched
        return arr
    return arr.astype(float, copy=False)


def origin(n: int) -> np.ndarray:
    return np.zeros(2 * n + 1)


def complexify(x: np.ndarray) -> np.ndarray:
    """Complex ``z`` part of points (or of real 2n-vectors)."""
    x = np.asarray(x)
    m = x.shape[-1]
    n = m // 2
    return x[..., :n] + 1j * x[..., n : 2 * n]


def realify(z: np.ndarray) -> np.ndarray:
    """Stack real and imaginary parts of complex n-vectors into 2n-vectors."""
    z = np.asarray(z)
    return np.concatenate([z.real, z.imag], axis=-1)


def imag_inner(p: np.ndarray, q: np.ndarray) -> np.ndarray:
    """``Im <p, q>`` with ``<p, q> = sum p_j conj(q_j)``, on real 2n-packings."""
    n = p.shape[-1] // 2
    return np.sum(p[..., n : 2 * n] * q[..., :n] - p[..., :n] * q[..., n : 2 * n], axis=-1)


def _check_same_dim(x: np.ndarray, y: np.ndarray) -> None:
    if x.shape[-1] != y.shape[-1]:
        raise ValueError(f"dimension mismatch: {x.shape[-1]} vs {y.shape[-1]} coordinates")
    dim_of(x)


def mul(x, y) -> np.ndarray:
    """Group product ``(z, t)(w, s) = (z + w, t + s + 2 Im<z, w>)``."""
    x = as_coords(x)
    y = as_coords(y)
    _check_same_dim(x, y)
    n = dim_of(x)
    hz = x[..., : 2 * n] + y[..., : 2 * n]
    t = np.asarray(x[..., -1] + y[..., -1] + 2.0 * imag_inner(x[..., : 2 * n], y[..., : 2 * n]))
    return np.concatenate([hz, t[..., None]], axis=-1)


def inv(x) -> np.ndarray:
    """Group inverse, ``(z, t)^-1 = (-z, -t)``."""
    return -as_coords(x)


def dilate(s: float, x) -> np.ndarray:
    """Anisotropic dilation ``(z, t) -> (s z, s^2 t)``."""
    if not np.all(np.asarray(s) > 0):
        raise ValueError(f"dilation factor must be positive, got {s}")
    x = as_coords(x)
    s = np.asarray(s, dtype=float)[..., None]
    out = x * s
    out[..., -1] = out[..., -1] * s[..., 0]
    return out


def knorm(x) -> np.ndarray:
    """Koranyi norm ``(|z|^4 + t^2)^(1/4)``."""
    x = as_coords(x)
    n = dim_of(x)
    r2 = np.sum(x[..., : 2 * n] ** 2, axis=-1)
    return np.sqrt(np.sqrt(r2 * r2 + x[..., -1] ** 2))


def kdist(x, y) -> np.ndarray:
    """Left-invariant distance ``knorm(x^-1 y)``."""
    return knorm(mul(inv(x), y))


# --------------------------------------------------------------------------
# Point wrapper and balls


@dataclass(frozen=True, eq=False)
class HPoint:
    """Single point ``(z, t)`` of the group."""

    z: np.ndarray
    t: float

    def __post_init__(self):
        z = np.atleast_1d(np.asarray(self.z, dtype=complex)).copy()
        if z.ndim != 1:
            raise ValueError("z must be a complex vector")
        if not (np.all(np.isfinite(z)) and np.isfinite(self.t)):
            raise ValueError("point coordinates must be finite")
        z.setflags(write=False)
        object.__setattr__(self, "z", z)
        object.__setattr__(self, "t", float(self.t))

    @classmethod
    def from_coords(cls, x) -> "HPoint":
        x = np.asarray(x, dtype=float)
        dim_of(x)
        return cls(complexify(x), x[-1])

    @classmethod
    def identity(cls, n: int) -> "HPoint":
        return cls(np.zeros(n, complex), 0.0)

    @property
    def n(self) -> int:
        return self.z.shape[0]

    @property
    def coords(self) -> np.ndarray:
        return np.concatenate([self.z.real, self.z.imag, [self.t]])

    def __mul__(self, other: "HPoint") -> "HPoint":
        return HPoint.from_coords(mul(self.coords, other.coords))

    def inverse(self) -> "HPoint":
        return HPoint(-self.z, -self.t)

    def dilate(self, s: float) -> "HPoint":
        return HPoint.from_coords(dilate(s, self.coords))

    def norm(self) -> float:
        return float(knorm(self.coords))

    def __eq__(self, other) -> bool:
        return isinstance(other, HPoint) and np.array_equal(self.coords, other.coords)

    def __hash__(self) -> int:
        return hash(self.coords.tobytes())

    def __repr__(self) -> str:
        return f"HPoint(z={np.array2string(self.z, precision=6)}, t={self.t:.6g})"


def _frozen_center(center) -> np.ndarray:
    c = np.array(as_coords(center), dtype=float)
    dim_of(c)
    c.setflags(write=False)
    return c


@dataclass(frozen=True, eq=False)
class Ball:
    """Open Koranyi ball ``B(center, radius)``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", _frozen_center(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return dim_of(self.center)

    def contains(self, x) -> np.ndarray:
        return kdist(self.center, x) < self.radius

    def scaled(self, s: float) -> "Ball":
        return Ball(self.center, s * self.radius)

    @property
    def volume(self) -> float:
        return ball_volume(self.radius, self.n)


@dataclass(frozen=True, eq=False)
class Box:
    """``Box(a, r) = {a y : |y_i| < r, |y_t| < r^2}``."""

    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not self.radius > 0:
            raise ValueError(f"radius must be positive, got {self.radius}")
        object.__setattr__(self, "center", _frozen_center(self.center))
        object.__setattr__(self, "radius", float(self.radius))

    @property
    def n(self) -> int:
        return dim_of(self.center)

    def contains(self, x) -> np.ndarray:
        y = mul(inv(self.center), x)
        r = self.radius
        return np.all(np.abs(y[..., :-1]) < r, axis=-1) & (np.abs(y[..., -1]) < r * r)

    @property
    def volume(self) -> float:
        return box_volume(self.radius, self.n)


# --------------------------------------------------------------------------
# Volumes


@lru_cache(maxsize=None)
def unit_ball_volume(n: int) -> float:
    """Lebesgue measure of the unit Koranyi ball, by adaptive quadrature.

    The ball is ``{|z|^4 + t^2 < 1}``; integrating out ``t`` leaves
    ``2 sqrt(1 - |z|^4)`` over the unit disc of ``C^n``, reduced to a radial
    integral.
    """
    g = GroupDim(n)
    sphere = 2.0 * np.pi**g.n / special.gamma(g.n)
    val, _ = integrate.quad(
        lambda r: 2.0 * r ** (2 * g.n - 1) * np.sqrt(1.0 - r**4), 0.0, 1.0, epsabs=0.0, epsrel=1e-12
    )
    return float(sphere * val)


def _positive_radius(r) -> None:
    if not np.all(np.asarray(r) > 0):
        raise ValueError(f"radius must be positive, got {r}")


def ball_volume(r: float, n: int) -> float:
    """``|B(x, r)| = r^nu |B(0, 1)|``."""
    _positive_radius(r)
    return unit_ball_volume(n) * r ** GroupDim(n).nu


def box_volume(r: float, n: int) -> float:
    """``|Box(a, r)| = 2^(2n+1) r^nu``."""
    _positive_radius(r)
    return 2.0 ** (2 * n + 1) * r ** GroupDim(n).nu


def box_second_moment(r: float, n: int, i: int = 0) -> float:
    """``int_{Box(0, r)} |z_i|^2 dx = 2^nu r^(nu+2) / 3`` for any ``i``."""
    _positive_radius(r)
    if not 0 <= i < n:
        raise ValueError(f"index {i} out of range for n={n}")
    nu = GroupDim(n).nu
    return 2.0**nu * r ** (nu + 2) / 3.0


# --------------------------------------------------------------------------
# Left-invariant frame


def frame_vectors(x) -> np.ndarray:
    """Euclidean components of ``X_1, ..., X_{2n+1}`` at ``x``.

    Returns an array of shape ``(..., 2n+1, 2n+1)`` whose row ``i`` is the
    coordinate vector of the ``i``-th field.
    """
    x = as_coords(x)
    n = dim_of(x)
    m = 2 * n + 1
    F = np.broadcast_to(np.eye(m), x.shape[:-1] + (m, m)).copy()
    F[..., :n, -1] = 2.0 * x[..., n : 2 * n]
    F[..., n : 2 * n, -1] = -2.0 * x[..., :n]
    return F


# --------------------------------------------------------------------------
# Isometries


def real_form(A: np.ndarray) -> np.ndarray:
    """Real ``2n x 2n`` matrix of the complex-linear map ``z -> A z``."""
    A = np.asarray(A)
    return np.block([[A.real, -A.imag], [A.imag, A.real]])


def flip_matrix(n: int) -> np.ndarray:
    """Real form of complex conjugation, ``diag(I, -I)``."""
    return np.diag(np.concatenate([np.ones(n), -np.ones(n)]))


def _reflect(x: np.ndarray) -> np.ndarray:
    n = dim_of(x)
    out = np.array(x, dtype=float, copy=True)
    out[..., n:] *= -1.0
    return out


def _rotate(A: np.ndarray, x: np.ndarray) -> np.ndarray:
    n = dim_of(x)
    hz = x[..., : 2 * n] @ real_form(A).T
    return np.concatenate([hz, x[..., -1:]], axis=-1)


@dataclass(frozen=True, eq=False)
class Isometry:
    """Rigid motion ``iota^reflect o pi_a o phi_A``.

    Attributes
    ----------
    rotation : ndarray
        Unitary ``n x n`` complex matrix ``A``; ``phi_A(z, t) = (A z, t)``.
    translation : ndarray
        Real coordinates of ``a``; ``pi_a(x) = a x``.
    reflect : bool
        Whether ``iota(z, t) = (conj z, -t)`` is applied last.
    """

    rotation: np.ndarray
    translation: np.ndarray
    reflect: bool = False

    def __post_init__(self):
        A = np.array(self.rotation, dtype=complex)
        if A.ndim != 2 or A.shape[0] != A.shape[1]:
            raise ValueError("rotation must be a square matrix")
        a = np.array(as_coords(self.translation), dtype=float)
        n = dim_of(a)
        if A.shape[0] != n:
            raise ValueError(f"rotation is {A.shape[0]}x{A.shape[0]} but translation has n={n}")
        dev = np.linalg.norm(A.conj().T @ A - np.eye(n), 2)
        if not dev <= UNITARY_TOL:
            raise ValueError(f"rotation is not unitary: |A*A - I| = {dev:.3e}")
        A.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "rotation", A)
        object.__setattr__(self, "translation", a)
        object.__setattr__(self, "reflect", bool(self.reflect))

    @classmethod
    def identity(cls, n: int) -> "Isometry":
        return cls(np.eye(n, dtype=complex), origin(n), False)

    @classmethod
    def translation_by(cls, a) -> "Isometry":
        a = as_coords(a)
        return cls(np.eye(dim_of(a), dtype=complex), a, False)

    @classmethod
    def rotation_by(cls, A) -> "Isometry":
        A = np.asarray(A, dtype=complex)
        return cls(A, origin(A.shape[0]), False)

    @classmethod
    def conjugation(cls, n: int) -> "Isometry":
        return cls(np.eye(n, dtype=complex), origin(n), True)

    @property
    def n(self) -> int:
        return self.rotation.shape[0]

    def __call__(self, x) -> np.ndarray:
        return isometry_apply(self, x)

    def __matmul__(self, other: "Isometry") -> "Isometry":
        return isometry_compose(self, other)

    def inverse(self) -> "Isometry":
        return isometry_invert(self)

    def dh(self) -> np.ndarray:
        return isometry_dh(self)

    def jacobian(self, x) -> np.ndarray:
        """Euclidean Jacobian of the action at ``x``, shape ``(..., m, m)``."""
        x = as_coords(x)
        n = self.n
        m = 2 * n + 1
        R = real_form(self.rotation)
        J = np.zeros(x.shape[:-1] + (m, m))
        J[..., : 2 * n, : 2 * n] = R
        J[..., -1, -1] = 1.0
        # d(a y)/dy has t-row (2 Im a, -2 Re a, 1) in (Re, Im, t) order
        a = self.translation
        L = np.eye(m)
        L[-1, :n] = 2.0 * a[n : 2 * n]
        L[-1, n : 2 * n] = -2.0 * a[:n]
        J = L @ J
        if self.reflect:
            J = flip_full(n) @ J
        return J

    def close_to(self, other: "Isometry", tol: float = 1e-10) -> bool:
        return (
            self.reflect == other.reflect
            and np.linalg.norm(self.rotation - other.rotation, 2) <= tol
            and np.max(np.abs(self.translation - other.translation)) <= tol
        )

    def __repr__(self) -> str:
        return (
            f"Isometry(n={self.n}, reflect={self.reflect}, "
            f"translation={np.array2string(self.translation, precision=6)})"
        )


def flip_full(n: int) -> np.ndarray:
    """Euclidean matrix of ``iota`` on all ``2n + 1`` coordinates."""
    return np.diag(np.concatenate([np.ones(n), -np.ones(n), [-1.0]]))


def isometry_apply(theta: Isometry, x) -> np.ndarray:
    x = as_coords(x)
    if x.shape[-1] != 2 * theta.n + 1:
        raise ValueError("dimension mismatch between isometry and point")
    y = mul(theta.translation, _rotate(theta.rotation, x))
    return _reflect(y) if theta.reflect else y


def isometry_compose(first: Isometry, second: Isometry) -> Isometry:
    """Normal form of ``first o second``.

    Uses ``phi_A o iota = iota o phi_conj(A)``, ``pi_a o iota = iota o pi_iota(a)``
    and ``phi_A o pi_b = pi_(phi_A b) o phi_A``.
    """
    if first.n != second.n:
        raise ValueError("dimension mismatch between isometries")
    A1, a1 = first.rotation, first.translation
    if second.reflect:
        A1 = A1.conj()
        a1 = _reflect(a1)
    a = mul(a1, _rotate(A1, second.translation))
    A = A1 @ second.rotation
    return Isometry(_reunitarize(A), a, first.reflect != second.reflect)


def isometry_invert(theta: Isometry) -> Isometry:
    A_inv = theta.rotation.conj().T
    a_inv = _rotate(A_inv, inv(theta.translation))
    if theta.reflect:
        A_inv = A_inv.conj()
        a_inv = _reflect(a_inv)
    return Isometry(_reunitarize(A_inv), a_inv, theta.reflect)


def _reunitarize(A: np.ndarray) -> np.ndarray:
    # products of unitaries drift by rounding; one Newton step of the polar
    # iteration restores unitarity to machine precision
    return 0.5 * (A + np.linalg.inv(A).conj().T)


def isometry_dh(theta: Isometry) -> np.ndarray:
    """Constant horizontal differential, rows indexed by output component."""
    R = real_form(theta.rotation)
    return flip_matrix(theta.n) @ R if theta.reflect else R


# --------------------------------------------------------------------------
# Random generation and sampling


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed unitary matrix via QR of a complex Gaussian."""
    G = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(G)
    d = np.diag(R)
    return _reunitarize(Q * (d / np.abs(d)))


def random_points(n: int, count: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    """Gaussian points with horizontal scale ``scale`` and vertical ``scale^2``."""
    x = rng.standard_normal((count, 2 * n + 1))
    x[:, : 2 * n] *= scale
    x[:, -1] *= scale * scale
    return x


def _box_to_ball_fraction(n: int) -> float:
    return unit_ball_volume(n) / box_volume(1.0, n)


def sample_ball(
    ball: Ball, count: int, method: str = "sobol", seed: int | None = 0
) -> np.ndarray:
    """Points in ``ball`` by rejection from the enclosing box.

    ``method`` is ``"sobol"`` or ``"halton"`` for deterministic unscrambled
    low-discrepancy points, or ``"random"`` for seeded uniform points.
    """
    from scipy.stats import qmc

    n = ball.n
    m = 2 * n + 1
    frac = _box_to_ball_fraction(n)
    need = int(np.ceil(count / frac * 1.1)) + 16
    chunks = []
    have = 0
    offset = 0
    if method == "random":
        rng = np.random.default_rng(seed)
    elif method == "sobol":
        engine = qmc.Sobol(m, scramble=False)
        engine.fast_forward(1)  # skip the corner point at the origin of the cube
    elif method == "halton":
        engine = qmc.Halton(m, scramble=False)
        engine.fast_forward(1)
    else:
        raise ValueError(f"unknown sampling method {method!r}")
    while have < count:
        if method == "random":
            u = rng.random((need, m))
        else:
            u = engine.random(need)
        y = 2.0 * u - 1.0
        y = y[knorm(y) < 1.0]
        chunks.append(y)
        have += len(y)
        offset += need
    y = np.concatenate(chunks)[:count]
    return mul(ball.center, dilate(ball.radius, y))


def sample_ball_boundary(ball: Ball, count: int, rng: np.random.Generator) -> np.ndarray:
    """Random points on the Koranyi sphere ``{rho(c, x) = r}``."""
    n = ball.n
    y = rng.standard_normal((count, 2 * n + 1))
    y /= knorm(y)[:, None] ** np.concatenate([np.ones(2 * n), [2.0]])
    return mul(ball.center, dilate(ball.radius, y))
