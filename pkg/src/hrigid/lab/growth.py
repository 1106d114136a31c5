"""Growth of isometric displacement and the fixed-point embedding estimate."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.linalg import expm

from ..hcalc import SmoothMap, compose, dilation_map, isometry_map
from ..hgroup import Ball, Isometry, dilate, inv, kdist, mul, origin, random_points, sample_ball, sample_ball_boundary

__all__ = [
    "GROWTH_SCALES",
    "GrowthRow",
    "GrowthTable",
    "EmbeddingReport",
    "embedding_check",
    "embedding_suite",
    "isometry_growth_suite",
    "recentered_dilation",
    "unit_template",
]

GROWTH_SCALES = (1.0, 2.0, 5.0)
TRANSLATION_FACTOR = 3.0
ISOMETRY_FACTOR = 5.0
EMBEDDING_EPS = (1e-2, 1e-3, 1e-4)
EMBEDDING_SPREAD = 1.5
RHO_FLOOR = 1e-7


def unit_template(n: int, interior: int = 2048, boundary: int = 2048, seed: int = 0) -> np.ndarray:
    """Dense sample of the closed unit ball: Sobol interior plus sphere points."""
    B = Ball(origin(n), 1.0)
    rng = np.random.default_rng(seed)
    return np.concatenate([sample_ball(B, interior), sample_ball_boundary(B, boundary, rng)])


def _in_ball(template: np.ndarray, center: np.ndarray, radius: float) -> np.ndarray:
    return mul(center, dilate(radius, template))


def _sup_move(theta, template, center, radius) -> float:
    x = _in_ball(template, center, radius)
    return float(np.max(kdist(theta(x), x)))


@dataclass(frozen=True)
class GrowthRow:
    """One (trial, scale) check: ``sup_scaled <= factor * s * eps_measured``."""

    kind: str
    trial: int
    s: float
    eps_measured: float
    sup_scaled: float
    bound: float
    passed: bool


@dataclass(frozen=True)
class GrowthTable:
    rows: tuple[GrowthRow, ...]

    @property
    def passed(self) -> bool:
        return all(r.passed for r in self.rows)

    def failures(self) -> list[GrowthRow]:
        return [r for r in self.rows if not r.passed]

    def worst_ratio(self, kind: str) -> float:
        vals = [r.sup_scaled / r.bound for r in self.rows if r.kind == kind and r.bound > 0]
        return max(vals) if vals else 0.0

    def format(self) -> str:
        lines = [f"{'kind':<12}{'trials':>8}{'s':>6}{'worst sup/bound':>18}{'status':>8}"]
        for kind in dict.fromkeys(r.kind for r in self.rows):
            for s in GROWTH_SCALES:
                sel = [r for r in self.rows if r.kind == kind and r.s == s]
                if not sel:
                    continue
                worst = max((r.sup_scaled / r.bound if r.bound > 0 else 0.0) for r in sel)
                ok = all(r.passed for r in sel)
                lines.append(f"{kind:<12}{len(sel):>8}{s:>6g}{worst:>18.6f}{'PASS' if ok else 'FAIL':>8}")
        return "\n".join(lines)


def _calibrate(make, template, center, radius, target, lo=0.0, hi=1.0, iters=40):
    """Bisect the scale ``t`` of ``make(t)`` so the sup on ``B(center, radius)`` hits ``target``."""
    while _sup_move(make(hi), template, center, radius) < target:
        lo, hi = hi, 2.0 * hi
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _sup_move(make(mid), template, center, radius) < target:
            lo = mid
        else:
            hi = mid
    return make(lo)


def _check(kind, trial, theta, template, center, radius, factor) -> list[GrowthRow]:
    eps = _sup_move(theta, template, center, radius)
    rows = []
    for s in GROWTH_SCALES:
        sup = _sup_move(theta, template, center, s * radius)
        bound = factor * s * eps
        rows.append(GrowthRow(kind, trial, s, eps, sup, bound, bool(sup <= bound * (1 + 1e-12) + 1e-15)))
    return rows


def isometry_growth_suite(seed: int = 0, trials: int = 100, n: int = 2, template_size: int = 2048) -> GrowthTable:
    """Check displacement growth of isometries on concentric balls.

    Each trial draws a ball ``B(a, r)`` and an isometry whose sampled sup of
    ``rho(theta x, x)`` on the ball equals ``eps_measured``, a random fraction
    in ``[0.05, 0.45]`` of ``r``.  Pure translations are checked against
    ``3 s eps_measured`` on ``B(a, s r)``, rotation-dominant isometries
    against ``5 s eps_measured``.  The identity is included as a control.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rng = np.random.default_rng(seed)
    template = unit_template(n, template_size, template_size, seed)
    rows = _check("identity", 0, Isometry.identity(n), template, origin(n), 1.0, TRANSLATION_FACTOR)
    for trial in range(trials):
        a = random_points(n, 1, rng, 1.0)[0]
        r = float(rng.uniform(0.5, 2.0))
        target = r * float(rng.uniform(0.05, 0.45))
        b0 = random_points(n, 1, rng, 1.0)[0]
        trans = _calibrate(lambda t: Isometry.translation_by(t * b0), template, a, r, target)
        rows += _check("translation", trial, trans, template, a, r, TRANSLATION_FACTOR)

        a = random_points(n, 1, rng, 1.0)[0]
        r = float(rng.uniform(0.5, 2.0))
        target = r * float(rng.uniform(0.05, 0.45))
        K = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
        K = 0.5 * (K - K.conj().T)
        K /= np.linalg.norm(K, 2)
        c0 = random_points(n, 1, rng, 0.1)[0]

        def rot(t, K=K, c0=c0):
            return Isometry(expm(t * K), dilate(t, c0), False)

        iso = _calibrate(rot, template, a, r, target, hi=0.1)
        rows += _check("rotation", trial, iso, template, a, r, ISOMETRY_FACTOR)
    return GrowthTable(tuple(rows))


def recentered_dilation(a, eps: float) -> SmoothMap:
    """``pi_a o delta_(1+eps) o pi_(a^-1)``, which fixes ``a``."""
    a = np.asarray(a, dtype=float)
    n = (a.shape[-1] - 1) // 2
    core = compose(dilation_map(1.0 + eps, n), isometry_map(Isometry.translation_by(inv(a))))
    return compose(isometry_map(Isometry.translation_by(a)), core)


@dataclass(frozen=True)
class EmbeddingReport:
    """Ratios ``sup rho(f x, x) / (r (sqrt eps + eps))`` on ``B(a, r/2)`` per trial."""

    epsilons: tuple[float, ...]
    ratios: np.ndarray
    spread: np.ndarray

    @property
    def constant(self) -> float:
        return float(np.max(self.ratios))

    @property
    def passed(self) -> bool:
        return bool(np.all(np.isfinite(self.ratios)) and np.all(self.spread <= EMBEDDING_SPREAD))


def embedding_check(
    maps, a, r: float, epsilons=EMBEDDING_EPS, s: float = 0.5, template: np.ndarray | None = None
) -> np.ndarray:
    """Ratios for ``maps(eps)`` about the fixed point ``a``.

    Raises ``ValueError`` if some ``maps(eps)`` moves ``a``.  At ``eps = 0``
    the ratio is ``0`` for a map that moves nothing beyond the rounding floor
    of ``rho`` (a square root of rounding in ``t``, about ``1e-8``) and
    ``inf`` otherwise.
    """
    a = np.asarray(a, dtype=float)
    n = (a.shape[-1] - 1) // 2
    if template is None:
        template = unit_template(n)
    out = []
    for eps in epsilons:
        f = maps(eps)
        if kdist(f(a), a) > RHO_FLOOR * max(1.0, r):
            raise ValueError(f"map does not fix the base point at eps={eps:g}")
        sup = _sup_move(f, template, a, s * r)
        if eps == 0.0:
            out.append(0.0 if sup <= RHO_FLOOR * max(1.0, r) else math.inf)
        else:
            out.append(sup / (r * (math.sqrt(eps) + eps)))
    return np.asarray(out)


def embedding_suite(seed: int = 0, trials: int = 20, n: int = 2, p: float | None = None) -> EmbeddingReport:
    """Empirical constant of ``rho(f x, x) <= C r (sqrt eps + eps)`` on ``B(a, r/2)``.

    The dilation family is re-centered at random base points ``a``.  A trial
    passes when the ratio stays within a factor 1.5 across the ``eps`` sweep.
    ``p`` is the integrability exponent of the setting and must exceed the
    homogeneous dimension ``2n + 2``.
    """
    nu = 2 * n + 2
    if p is None:
        p = nu + 1.0
    if not p > nu:
        raise ValueError(f"the exponent p must exceed {nu}")
    rng = np.random.default_rng(seed)
    template = unit_template(n, seed=seed)
    ratios = []
    for _ in range(trials):
        a = random_points(n, 1, rng, 1.0)[0]
        r = float(rng.uniform(0.3, 1.5))
        ratios.append(embedding_check(lambda e, a=a: recentered_dilation(a, e), a, r, template=template))
    ratios = np.asarray(ratios)
    with np.errstate(divide="ignore", invalid="ignore"):
        spread = np.where(ratios.min(axis=1) > 0, ratios.max(axis=1) / ratios.min(axis=1), np.inf)
    return EmbeddingReport(EMBEDDING_EPS, ratios, spread)
