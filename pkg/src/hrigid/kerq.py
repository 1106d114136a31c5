"""Kernel of Q, box moments, the projection P, unitary correction and fitting."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import optimize
from scipy.linalg import expm
from scipy.special import logsumexp

from .hcalc import (
    SmoothMap,
    compose,
    dilation_map,
    horiz_diff,
    isometry_map,
    symplectic_unit,
)
from .hgroup import (
    Ball,
    GroupDim,
    Isometry,
    as_coords,
    complexify,
    dilate,
    dim_of,
    inv,
    kdist,
    mul,
    origin,
    random_unitary,
    realify,
    sample_ball,
)
from .jacobi import jacobi_eigh, unitary_polar
from .quadrature import tensor_gauss_legendre

__all__ = [
    "KernelElement",
    "MomentData",
    "UnitaryCorrection",
    "CoerciveFit",
    "OracleFit",
    "random_kernel_element",
    "complex_field",
    "moments",
    "kernel_projection",
    "unitary_correction",
    "correction_bound",
    "correction_eps_limit",
    "normalize_map",
    "denormalize_isometry",
    "coercive_fit",
    "fit_isometry_coercive",
    "oracle_fit",
    "fit_isometry_oracle",
    "sup_deviation",
    "sobolev_deviation",
    "exp_integrability",
    "log_exp_integrability",
    "exp_threshold",
]

HERMITIAN_TOL = 1e-12


# --------------------------------------------------------------------------
# Kernel elements


@dataclass(frozen=True, eq=False)
class KernelElement:
    """Element of the kernel of Q.

    ``mode="general_n"``: ``u(z, t) = a + K z`` with ``K`` skew-Hermitian.
    ``mode="special_n1"`` (``n = 1`` only):
    ``u = a + i k z + t b + i z^2 conj(b) + i |z|^2 b``.
    """

    mode: str
    a: np.ndarray
    K: np.ndarray | None = None
    b: complex = 0j
    k: float = 0.0

    def __post_init__(self):
        a = np.atleast_1d(np.asarray(self.a, dtype=complex)).copy()
        object.__setattr__(self, "a", a)
        n = a.shape[0]
        if self.mode == "general_n":
            if self.K is None:
                raise ValueError("general_n kernel element needs K")
            K = np.array(self.K, dtype=complex)
            if K.shape != (n, n):
                raise ValueError(f"K must be {n}x{n}")
            if np.max(np.abs(K + K.conj().T)) > HERMITIAN_TOL:
                raise ValueError("K must be skew-Hermitian")
            object.__setattr__(self, "K", K)
        elif self.mode == "special_n1":
            if n != 1:
                raise ValueError("special_n1 family exists only for n = 1")
            object.__setattr__(self, "b", complex(self.b))
            object.__setattr__(self, "k", float(self.k))
        else:
            raise ValueError(f"unknown kernel mode {self.mode!r}")

    @property
    def n(self) -> int:
        return self.a.shape[0]

    def evaluate(self, x) -> np.ndarray:
        """Complex values ``(..., n)``."""
        x = as_coords(x)
        z = complexify(x[..., :-1])
        if self.mode == "general_n":
            return self.a + z @ self.K.T
        t = x[..., -1:]
        b = self.b
        return (
            self.a
            + 1j * self.k * z
            + t * b
            + 1j * z * z * np.conj(b)
            + 1j * np.abs(z) ** 2 * b
        )

    def complex_jacobian(self, x) -> np.ndarray:
        """Derivatives ``(..., n, 2n+1)`` with respect to real coordinates."""
        x = as_coords(x)
        n = self.n
        shape = x.shape[:-1]
        J = np.zeros(shape + (n, 2 * n + 1), dtype=complex)
        if self.mode == "general_n":
            J[..., :, :n] = self.K
            J[..., :, n : 2 * n] = 1j * self.K
            return J
        z = complexify(x[..., :-1])[..., 0]
        xr, yi = z.real, z.imag
        b = self.b
        J[..., 0, 0] = 1j * self.k + 2j * z * np.conj(b) + 2j * xr * b
        J[..., 0, 1] = -self.k - 2.0 * z * np.conj(b) + 2j * yi * b
        J[..., 0, 2] = b
        return J

    def as_map(self) -> SmoothMap:
        n = self.n

        def jac(x):
            J = self.complex_jacobian(x)
            return np.concatenate([J.real, J.imag], axis=-2)

        return SmoothMap(lambda x: realify(self.evaluate(x)), n, jac, label=f"kernel[{self.mode}]", kind="vector")

    def close_to(self, other: "KernelElement", tol: float) -> bool:
        if self.mode != other.mode:
            return False
        ok = np.max(np.abs(self.a - other.a)) <= tol
        if self.mode == "general_n":
            return bool(ok and np.max(np.abs(self.K - other.K)) <= tol)
        return bool(ok and abs(self.b - other.b) <= tol and abs(self.k - other.k) <= tol)


def _random_skew_hermitian(n: int, rng: np.random.Generator, scale: float = 1.0) -> np.ndarray:
    G = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return scale * 0.5 * (G - G.conj().T)


def random_kernel_element(n: int, rng: np.random.Generator, mode: str | None = None) -> KernelElement:
    if mode is None:
        mode = "special_n1" if n == 1 else "general_n"
    a = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    if mode == "general_n":
        return KernelElement("general_n", a, K=_random_skew_hermitian(n, rng))
    return KernelElement(
        "special_n1", a, b=complex(rng.standard_normal(), rng.standard_normal()), k=float(rng.standard_normal())
    )


def complex_field(fn: Callable[[np.ndarray], np.ndarray], n: int, label: str = "field") -> SmoothMap:
    """Wrap a ``C^n``-valued function of points as a vector-valued map."""
    return SmoothMap(lambda x: realify(fn(x)), n, None, label=label, kind="vector")


def _as_complex_fn(u) -> Callable[[np.ndarray], np.ndarray]:
    if isinstance(u, KernelElement):
        return u.evaluate
    if isinstance(u, SmoothMap):
        if u.kind == "group":
            n = u.n
            return lambda x: complexify(u(x)[..., : 2 * n])
        return lambda x: complexify(u(x))
    return u


# --------------------------------------------------------------------------
# Moments and the projection


@dataclass(frozen=True, eq=False)
class MomentData:
    """Box moments ``A(u)`` (n x n) and ``a(u)`` (n) of a ``C^n``-valued map."""

    A: np.ndarray
    a_vec: np.ndarray
    quad_order: int
    quad_error_estimate: float

    @property
    def K(self) -> np.ndarray:
        """Skew-Hermitian part ``(A - A^*) / 2``."""
        return 0.5 * (self.A - self.A.conj().T)


def _moment_integrals(fn, n: int, order: int) -> tuple[np.ndarray, np.ndarray]:
    g = GroupDim(n)
    r = g.kappa / 4.0
    lower = np.concatenate([np.full(2 * n, -r), [-r * r]])

    def integrand(x):
        u = np.asarray(fn(x), dtype=complex)
        if u.shape != x.shape[:-1] + (n,):
            raise ValueError(f"map must return complex values of shape (..., {n})")
        z = complexify(x[..., :-1])
        outer = u[:, :, None] * np.conj(z)[:, None, :]
        return np.concatenate([outer.reshape(len(x), n * n), u], axis=1)

    tot = tensor_gauss_legendre(integrand, lower, -lower, order)
    A = tot[: n * n].reshape(n, n) * (2.0 ** (g.nu + 4) * 3.0 / g.kappa ** (g.nu + 2))
    a = tot[n * n :] * (2.0 ** (g.nu + 1) / g.kappa**g.nu)
    return A, a


def moments(u, n: int, quad_order: int = 12, estimate_error: bool = True) -> MomentData:
    """Box moments over ``Box(0, kappa/4)`` by tensor Gauss-Legendre.

    Parameters
    ----------
    u : callable, KernelElement or SmoothMap
        ``C^n``-valued map of points.
    n : int
        Complex dimension.
    quad_order : int
        Nodes per axis, at least 4.
    estimate_error : bool
        When true the rule is repeated at ``quad_order + 4`` and the largest
        entry change is reported as the error estimate; otherwise the
        estimate is NaN.
    """
    if quad_order < 4:
        raise ValueError("quad_order must be at least 4")
    fn = _as_complex_fn(u)
    A, a = _moment_integrals(fn, n, quad_order)
    err = float("nan")
    if estimate_error:
        A2, a2 = _moment_integrals(fn, n, quad_order + 4)
        err = float(max(np.max(np.abs(A2 - A)), np.max(np.abs(a2 - a))))
    return MomentData(A, a, quad_order, err)


def kernel_projection(u, n: int, quad_order: int = 12) -> KernelElement:
    """``P u = K(u) z + a(u)`` with ``K(u) = (A(u) - A(u)^*) / 2``."""
    if n == 1:
        raise ValueError("the projection P is defined only for n > 1")
    md = moments(u, n, quad_order, estimate_error=False)
    return KernelElement("general_n", md.a_vec, K=md.K)


# --------------------------------------------------------------------------
# Unitary correction


def correction_bound(n: int, eps: float) -> float:
    """Target deviation ``n kappa^(n+1) 2^(-n) eps`` for the correction."""
    k = GroupDim(n).kappa
    return n * k ** (n + 1) * 2.0**-n * eps


def correction_eps_limit(n: int) -> float:
    """Admissible size ``sqrt(2/n) (2/kappa)^(n+1)`` of ``sup |u - z|``."""
    k = GroupDim(n).kappa
    return float(np.sqrt(2.0 / n) * (2.0 / k) ** (n + 1))


@dataclass(frozen=True, eq=False)
class UnitaryCorrection:
    """Unitary ``V`` with ``V A(u)`` Hermitian.

    Attributes
    ----------
    V : ndarray
    deviation_bound : float
        ``n kappa^(n+1) 2^(-n) eps``.
    deviation : float
        Measured ``|V - I|``.
    mu, lam : ndarray
        Eigenvalues of ``A^* A`` and their square roots.
    w, v : ndarray
        Columns ``w_i`` (eigenvectors of ``A^* A``) and ``v_i = A w_i / lam_i``.
    moments : MomentData
    """

    V: np.ndarray
    deviation_bound: float
    deviation: float
    mu: np.ndarray
    lam: np.ndarray
    w: np.ndarray
    v: np.ndarray
    moments: MomentData = field(repr=False)

    @property
    def within_bound(self) -> bool:
        return bool(self.deviation < self.deviation_bound)

    @property
    def hermitian_defect(self) -> float:
        VA = self.V @ self.moments.A
        return float(np.max(np.abs(VA - VA.conj().T)))

    @property
    def unitary_defect(self) -> float:
        return float(np.linalg.norm(self.V.conj().T @ self.V - np.eye(len(self.V)), 2))


def unitary_correction(u, n: int, eps: float, quad_order: int = 12) -> UnitaryCorrection:
    """Unitary ``V`` making ``A(V u)`` Hermitian, so that ``K(V u) = 0``.

    ``A^* A = sum mu_i w_i w_i^*`` by Jacobi rotations, ``lam_i = sqrt(mu_i)``,
    ``v_i = A w_i / lam_i`` and ``V = sum w_i v_i^*``.  The deviation
    ``|V - I|`` is measured and compared with :func:`correction_bound`, but a
    violation is reported through ``within_bound`` rather than raised.

    Raises
    ------
    ValueError
        If ``n == 1`` or ``eps`` is outside the admissible range.
    numpy.linalg.LinAlgError
        If ``A(u)`` is singular.
    """
    if n == 1:
        raise ValueError("the unitary correction needs n > 1")
    if not 0 <= eps < correction_eps_limit(n):
        raise ValueError(f"eps={eps} outside [0, {correction_eps_limit(n):.6g})")
    md = moments(u, n, quad_order, estimate_error=False)
    A = md.A
    mu, W = jacobi_eigh(A.conj().T @ A)
    if np.min(mu) <= 1e-300:
        raise np.linalg.LinAlgError(f"moment matrix is singular (smallest eigenvalue {np.min(mu):.3e})")
    lam = np.sqrt(mu)
    Vc = (A @ W) / lam
    V = W @ Vc.conj().T
    dev = float(np.linalg.norm(V - np.eye(n), 2))
    out = UnitaryCorrection(V, correction_bound(n, eps), dev, mu, lam, W, Vc, md)
    if out.hermitian_defect > 1e-9 or out.unitary_defect > 1e-10:
        raise RuntimeError("unitary correction lost accuracy")
    return out


# --------------------------------------------------------------------------
# Fitting


def normalize_map(f: SmoothMap, B: Ball) -> SmoothMap:
    """``g = delta_(1/r) o pi_(a^-1) o f o pi_a o delta_r`` for ``B = B(a, r)``."""
    n = B.n
    a = np.asarray(B.center)
    r = B.radius
    left = compose(dilation_map(1.0 / r, n), isometry_map(Isometry.translation_by(inv(a))))
    right = compose(isometry_map(Isometry.translation_by(a)), dilation_map(r, n))
    g = compose(left, compose(f, right))
    return SmoothMap(g.evaluator, n, g.jacobian if f.jacobian is not None else None, Ball(origin(n), 1.0), "normalized")


def denormalize_isometry(theta: Isometry, B: Ball) -> Isometry:
    """Conjugate a fit on ``B(0, 1)`` back to ``B(a, r)``."""
    a = np.asarray(B.center)
    core = Isometry(theta.rotation, dilate(B.radius, theta.translation), theta.reflect)
    return Isometry.translation_by(a) @ core @ Isometry.translation_by(inv(a))


def _reflected(g: SmoothMap) -> SmoothMap:
    return compose(isometry_map(Isometry.conjugation(g.n)), g)


@dataclass(frozen=True, eq=False)
class CoerciveFit:
    """Result of :func:`coercive_fit`."""

    isometry: Isometry
    fallback: bool
    reflect: bool
    sup_u_dev: float
    correction: UnitaryCorrection | None
    initial: Isometry


def coercive_fit(
    f: SmoothMap,
    B: Ball,
    quad_order: int = 12,
    mean_samples: int = 1024,
    check_samples: int = 4096,
    oracle_kwargs: dict | None = None,
) -> CoerciveFit:
    """Fit an isometry by normalization, an initial guess and unitary correction.

    Steps: normalize ``f`` to ``g`` on ``B(0, 1)``; compose with ``iota`` if
    the mean vertical multiplier is negative; take ``phi = pi_(g(0)) o phi_A0``
    with ``A0`` the unitary polar factor of the complex-linear part of the mean
    horizontal differential over ``B(0, 1/2)``; correct ``phi^-1 o g`` by the
    unitary ``V`` and return the denormalized ``phi o phi_(V^*)``.  If
    ``sup |u - z|`` on ``B(0, 3/10)`` leaves the admissible range the oracle
    fitter is used instead.
    """
    n = B.n
    if n == 1:
        raise ValueError("coercive fitting needs n > 1")
    g = normalize_map(f, B)
    half = sample_ball(Ball(origin(n), 0.5), mean_samples)
    hd = horiz_diff(g, half)
    reflect = bool(np.mean(hd.lam) < 0)
    M = np.mean(hd.M, axis=0)
    if reflect:
        g = _reflected(g)
        M = np.diag(np.concatenate([np.ones(n), -np.ones(n)])) @ M
    J = symplectic_unit(n)
    Lin = 0.5 * (M - J @ M @ J)
    A0 = unitary_polar(Lin[:n, :n] + 1j * Lin[n:, :n])
    phi = Isometry(A0, g(origin(n)), False)
    phi_inv = phi.inverse()

    def pulled_back(x):
        return complexify(phi_inv(g(x))[..., : 2 * n])

    probe = sample_ball(Ball(origin(n), 0.3), check_samples)
    sup_u = float(np.max(np.linalg.norm(pulled_back(probe) - complexify(probe[..., : 2 * n]), axis=-1)))
    if not sup_u < correction_eps_limit(n):
        res = oracle_fit(f, B, **(oracle_kwargs or {}))
        return CoerciveFit(res.isometry, True, res.isometry.reflect, sup_u, None, phi)
    corr = unitary_correction(pulled_back, n, sup_u, quad_order)
    theta_norm = phi @ Isometry.rotation_by(corr.V.conj().T)
    if reflect:
        theta_norm = Isometry.conjugation(n) @ theta_norm
    return CoerciveFit(denormalize_isometry(theta_norm, B), False, reflect, sup_u, corr, phi)


def fit_isometry_coercive(f: SmoothMap, B: Ball, quad_order: int = 12) -> Isometry:
    return coercive_fit(f, B, quad_order).isometry


@dataclass(frozen=True, eq=False)
class OracleFit:
    """Result of :func:`oracle_fit`; ``residual`` is the sampled max distance."""

    isometry: Isometry
    residual: float
    converged: bool


def _skew_from_params(p: np.ndarray, n: int) -> np.ndarray:
    S = np.zeros((n, n), dtype=complex)
    S[np.diag_indices(n)] = 1j * p[:n]
    k = n
    for i in range(n):
        for j in range(i + 1, n):
            S[i, j] = p[k] + 1j * p[k + 1]
            S[j, i] = -np.conj(S[i, j])
            k += 2
    return S


def _procrustes_start(h: SmoothMap, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    n = dim_of(x)
    a0 = h(origin(n))
    w = complexify(mul(inv(a0), h(x))[..., : 2 * n])
    z = complexify(x[..., : 2 * n])
    U, _, Vh = np.linalg.svd(w.T @ z.conj())
    return U @ Vh, a0


def oracle_fit(
    f: SmoothMap, B: Ball, samples: int = 256, restarts: int = 3, seed: int = 0, polish_iter: int = 3000
) -> OracleFit:
    """Minimize the sampled max of ``rho(f x, theta x)`` over isometries.

    The search runs on the normalized map over ``B(0, 1)``.  For both
    reflection flags it starts from a Procrustes estimate and ``restarts``
    random unitaries, solves a least-squares problem on displacement
    coordinates, and then polishes the best candidate with Nelder-Mead on the
    max-distance objective.
    """
    n = B.n
    if samples < 2 * n + 2:
        raise ValueError(f"need at least {2 * n + 2} samples")
    g = normalize_map(f, B)
    x = sample_ball(Ball(origin(n), 1.0), samples, method="halton")
    rng = np.random.default_rng(seed)
    npar = n * n + 2 * n + 1

    def build(p, A0, a0, reflect):
        A = A0 @ expm(_skew_from_params(p[: n * n], n))
        return Isometry(0.5 * (A + np.linalg.inv(A).conj().T), a0 + p[n * n :], reflect)

    candidates = []
    gx = g(x)
    for reflect in (False, True):
        h = _reflected(g) if reflect else g
        hx = _reflected(g)(x) if reflect else gx
        A_p, a0 = _procrustes_start(h, x)
        starts = [A_p] + [random_unitary(n, rng) for _ in range(restarts)]
        for A0 in starts:

            def resid(p):
                th = build(p, A0, a0, False)
                d = mul(inv(th(x)), hx)
                return d.ravel()

            sol = optimize.least_squares(resid, np.zeros(npar), method="lm", xtol=1e-13, ftol=1e-13, gtol=1e-13, max_nfev=100 * (npar + 1))
            th = build(sol.x, A0, a0, False)
            theta = Isometry.conjugation(n) @ th if reflect else th
            err = float(np.max(kdist(theta(x), gx)))
            candidates.append((err, theta))
    candidates.sort(key=lambda c: c[0])
    best_err, best = candidates[0]
    converged = True
    if best_err > 1e-12:
        A0, a0, reflect = best.rotation, best.translation, best.reflect

        def objective(p):
            return float(np.max(kdist(build(p, A0, a0, reflect)(x), gx)))

        sol = optimize.minimize(
            objective,
            np.zeros(npar),
            method="Nelder-Mead",
            options={"maxiter": polish_iter, "xatol": 1e-12, "fatol": 1e-14, "adaptive": True},
        )
        converged = bool(sol.success)
        if sol.fun < best_err:
            best_err, best = float(sol.fun), build(sol.x, A0, a0, reflect)
    return OracleFit(denormalize_isometry(best, B), best_err * B.radius, converged)


def fit_isometry_oracle(f: SmoothMap, B: Ball, samples: int = 256, restarts: int = 3, seed: int = 0) -> Isometry:
    return oracle_fit(f, B, samples, restarts, seed).isometry


# --------------------------------------------------------------------------
# Deviation functionals


def _region_points(region, samples: int, method: str = "sobol") -> np.ndarray:
    if isinstance(region, Ball):
        return sample_ball(region, samples, method=method)
    if hasattr(region, "sample"):
        return region.sample(samples)
    raise TypeError("region must be a Ball or provide sample(count)")


def sup_deviation(f: SmoothMap, theta: Isometry, region, samples: int = 100_000) -> float:
    """Max of ``rho(f x, theta x)`` over low-discrepancy samples of ``region``."""
    x = _region_points(region, samples)
    best = 0.0
    for chunk in np.array_split(x, max(1, len(x) // 20000)):
        best = max(best, float(np.max(kdist(f(chunk), theta(chunk)))))
    return best


def _dh_gap(f: SmoothMap, theta: Isometry, x: np.ndarray) -> np.ndarray:
    M = horiz_diff(f, x).M
    return np.linalg.norm(M - theta.dh(), 2, axis=(-2, -1))


def sobolev_deviation(f: SmoothMap, theta: Isometry, B, p: float, samples: int = 4096) -> float:
    """``(mean_B |D_h f - D_h theta|^p)^(1/p)`` by quasi-Monte Carlo."""
    if not p >= 1:
        raise ValueError("p must be at least 1")
    gap = _dh_gap(f, theta, _region_points(B, samples))
    m = float(np.max(gap))
    if m == 0.0:
        return 0.0
    return m * float(np.mean((gap / m) ** p)) ** (1.0 / p)


def log_exp_integrability(f: SmoothMap, theta: Isometry, U, N: float, eps: float, samples: int = 4096) -> float:
    """Logarithm of ``mean_U exp(N |D_h f - D_h theta| / eps)``."""
    if not (N > 0 and eps > 0):
        raise ValueError("N and eps must be positive")
    gap = _dh_gap(f, theta, _region_points(U, samples))
    return float(logsumexp(N * gap / eps) - np.log(len(gap)))


def exp_integrability(f: SmoothMap, theta: Isometry, U, N: float, eps: float, samples: int = 4096) -> float:
    """``mean_U exp(N |D_h f - D_h theta| / eps)``; ``inf`` on overflow."""
    val = log_exp_integrability(f, theta, U, N, eps, samples)
    with np.errstate(over="ignore"):
        return float(np.exp(val))


def exp_threshold(f: SmoothMap, theta: Isometry, U, eps: float, level: float = 16.0, samples: int = 4096) -> float:
    """Largest ``N`` with ``mean_U exp(N |D_h f - D_h theta| / eps) <= level``."""
    gap = _dh_gap(f, theta, _region_points(U, samples)) / eps
    if np.max(gap) == 0.0:
        return float("inf")
    target = np.log(level)

    def excess(N):
        return float(logsumexp(N * gap) - np.log(len(gap))) - target

    # Jensen and the max bound bracket the root
    lo = target / np.max(gap)
    hi = target / np.mean(gap)
    if hi - lo <= 1e-15 * hi:
        return float(lo)
    return float(optimize.brentq(excess, lo, hi, xtol=1e-14, rtol=1e-13))
