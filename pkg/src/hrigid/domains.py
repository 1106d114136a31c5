"""John and Holder domain machinery: curves, ball chains, Whitney families.

Distances are Koranyi distances throughout.  Curves to the base point are
horizontal and parameterized by arc length ``s`` measured from the starting
point, so ``s`` also equals their Koranyi length.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Callable, NamedTuple, Sequence

import numpy as np
from scipy import optimize
from scipy.spatial import cKDTree

from .hgroup import (
    Ball,
    as_coords,
    ball_volume,
    box_volume,
    dilate,
    dim_of,
    inv,
    kdist,
    knorm,
    mul,
    origin,
)

__all__ = [
    "Curve",
    "Polyline",
    "MetricDomain",
    "BallDomain",
    "BoxDomain",
    "DumbbellDomain",
    "BallChain",
    "WhitneyFamily",
    "IntegralEstimate",
    "make_ball_domain",
    "make_box_domain",
    "make_dumbbell",
    "descent_curve",
    "cone_constants",
    "estimate_john_params",
    "calibrate_holder",
    "build_chain",
    "certify_chain",
    "whitney_cover",
    "multiplicity",
    "quasihyperbolic_length",
    "holder_check",
    "boundary_integral",
]

# tilt of the first phase of the descent curve and the switch ratio |z| / rho
TILT = np.pi / 4
SWITCH_RATIO = 0.6


# --------------------------------------------------------------------------
# Curves


class Curve:
    """Piecewise unit-speed curve ``s -> point`` on ``[0, length]``."""

    def __init__(self, pieces: Sequence[tuple[float, Callable[[np.ndarray], np.ndarray]]], n: int):
        self.n = n
        self.pieces = [(float(L), fn) for L, fn in pieces if L > 0]
        self.offsets = np.concatenate([[0.0], np.cumsum([L for L, _ in self.pieces])])
        self._start = None
        if not self.pieces:
            self._start = pieces[0][1](np.zeros(1))[0] if pieces else origin(n)

    @classmethod
    def constant(cls, x: np.ndarray) -> "Curve":
        x = np.array(x, dtype=float)
        return cls([(0.0, lambda s: np.broadcast_to(x, np.shape(s) + x.shape).copy())], dim_of(x))

    @property
    def length(self) -> float:
        return float(self.offsets[-1])

    def __call__(self, s) -> np.ndarray:
        s = np.asarray(s, dtype=float)
        flat = np.atleast_1d(s).ravel()
        m = 2 * self.n + 1
        if not self.pieces:
            out = np.broadcast_to(self._start, (flat.size, m)).copy()
            return out.reshape(s.shape + (m,))
        flat = np.clip(flat, 0.0, self.length)
        idx = np.clip(np.searchsorted(self.offsets, flat, side="right") - 1, 0, len(self.pieces) - 1)
        out = np.empty((flat.size, m))
        for k, (L, fn) in enumerate(self.pieces):
            sel = idx == k
            if np.any(sel):
                out[sel] = fn(np.clip(flat[sel] - self.offsets[k], 0.0, L))
        return out.reshape(s.shape + (m,))

    def then(self, other: "Curve") -> "Curve":
        return Curve(self.pieces + other.pieces, self.n)

    def mapped(self, center, scale: float) -> "Curve":
        """Image under ``y -> center delta_scale(y)``, lengths scaled by ``scale``."""
        c = np.asarray(center, dtype=float)
        pieces = [
            (L * scale, (lambda fn: lambda s: mul(c, dilate(scale, fn(s / scale))))(fn)) for L, fn in self.pieces
        ]
        out = Curve(pieces, self.n)
        if not self.pieces:
            out._start = mul(c, dilate(scale, self._start))
        return out


def _line_points(u: np.ndarray, w: np.ndarray, t: np.ndarray) -> np.ndarray:
    # points (w u, t) of the complex line spanned by the unit vector u
    z = w[:, None] * u[None, :]
    return np.concatenate([z.real, z.imag, t[:, None]], axis=1)


def descent_curve(y: np.ndarray) -> Curve:
    """Horizontal unit-speed curve from ``y`` to the origin along which the
    Koranyi norm never increases.

    The curve stays in the complex line through ``z``.  While ``|z|`` is
    small compared with the norm it moves outward along a spiral tilted by
    :data:`TILT`, which lowers ``|t|`` quickly; afterwards it follows the
    steepest-descent spiral ``t / |z|^2 = const`` into the origin, on which
    the norm decreases at the constant rate ``(1 + C^2)^(-1/4)``.
    """
    y = np.asarray(y, dtype=float)
    n = dim_of(y)
    z = y[:n] + 1j * y[n : 2 * n]
    t0 = float(y[-1])
    r0 = float(np.linalg.norm(z))
    rho0 = float(knorm(y))
    if rho0 == 0.0:
        return Curve.constant(y)
    if r0 > 0:
        u = z / r0
    else:
        u = np.zeros(n, complex)
        u[0] = 1.0
    pieces = []
    theta_a, r_a, t_a = 0.0, r0, t0
    if r0 < SWITCH_RATIO * rho0:
        a, b = np.sin(TILT), np.cos(TILT)
        sg = np.sign(t0)
        ref = r0 if r0 > 0 else rho0

        def state(s):
            s = np.asarray(s, dtype=float)
            r = r0 + a * s
            t = t0 - sg * b * (2.0 * r0 * s + a * s * s)
            return r, t

        def gap(s):
            r, t = state(s)
            return r - SWITCH_RATIO * (r**4 + t * t) ** 0.25

        # |t| reaches zero at s_max, where gap > 0
        s_max = (-2 * r0 + np.sqrt(4 * r0 * r0 + 4 * a * abs(t0) / b)) / (2 * a)
        s_a = optimize.brentq(gap, 0.0, s_max, xtol=1e-15, rtol=1e-14)

        def phase_a(s):
            r, t = state(s)
            with np.errstate(divide="ignore"):
                th = np.where(r > 0, (b * sg / a) * np.log(np.maximum(r, 1e-300) / ref), 0.0)
            return _line_points(u, r * np.exp(1j * th), t)

        pieces.append((s_a, phase_a))
        r_a, t_a = (float(v) for v in state(s_a))
        theta_a = float((b * sg / a) * np.log(r_a / ref))
    C = t_a / (r_a * r_a)
    k = (1.0 + C * C) ** -0.25
    length_b = r_a / (k * k)

    def phase_b(s):
        r = np.maximum(r_a - k * k * np.asarray(s, dtype=float), 0.0)
        with np.errstate(divide="ignore"):
            th = np.where(r > 0, theta_a - C * np.log(np.maximum(r, 1e-300) / r_a), theta_a)
        return _line_points(u, r * np.exp(1j * th), C * r * r)

    pieces.append((length_b, phase_b))
    return Curve(pieces, n)


def _horizontal_segment(start: np.ndarray, direction: np.ndarray) -> Curve:
    """Unit-speed curve ``s -> start (s v / |v|, 0)`` of length ``|v|``."""
    n = dim_of(start)
    v = np.concatenate([direction[: 2 * n], [0.0]])
    L = float(np.linalg.norm(v))
    if L == 0.0:
        return Curve.constant(start)
    e = v / L
    return Curve([(L, lambda s: mul(start, np.asarray(s)[:, None] * e[None, :]))], n)


def _vertical_loop(start: np.ndarray) -> Curve:
    """Horizontal circle from ``start = (0, t1)`` to the origin."""
    n = dim_of(start)
    t1 = float(start[-1])
    if t1 == 0.0:
        return Curve.constant(start)
    radius = np.sqrt(abs(t1) / (4.0 * np.pi))
    om = np.sign(t1) / radius
    u = np.zeros(n, complex)
    u[0] = 1.0

    def loop(s):
        s = np.asarray(s, dtype=float)
        w = radius * (1.0 - np.exp(1j * om * s))
        t = t1 - 2.0 * om * radius**2 * (s - np.sin(om * s) / om)
        return _line_points(u, w, t)

    return Curve([(2.0 * np.pi * radius, loop)], n)


@dataclass(frozen=True, eq=False)
class Polyline:
    """Vertices of a curve with their arc-length parameters.

    ``length`` is the sum of Koranyi distances between consecutive vertices.
    When ``curve`` is set, ``params`` are exact arc-length values on it.
    """

    vertices: np.ndarray
    params: np.ndarray
    curve: Curve | None = None

    def __post_init__(self):
        v = np.asarray(self.vertices, dtype=float)
        p = np.asarray(self.params, dtype=float)
        if len(v) > 1:
            keep = np.concatenate([[True], kdist(v[:-1], v[1:]) > 0])
            v, p = v[keep], p[keep]
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "params", p)

    @classmethod
    def from_vertices(cls, vertices) -> "Polyline":
        v = np.asarray(vertices, dtype=float)
        chords = kdist(v[:-1], v[1:]) if len(v) > 1 else np.zeros(0)
        return cls(v, np.concatenate([[0.0], np.cumsum(chords)]))

    @property
    def chords(self) -> np.ndarray:
        return kdist(self.vertices[:-1], self.vertices[1:])

    @property
    def length(self) -> float:
        return float(np.sum(self.chords))

    @property
    def cumulative(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.chords)])


def _adaptive_params(length: float, depth: float, coarse: int = 2000, growth: float = 1.0 / 1024) -> np.ndarray:
    # fine spacing near s = 0 (where the domain is thinnest), geometric
    # growth afterwards, capped by a uniform coarse spacing
    if length == 0.0:
        return np.zeros(1)
    h0 = max(depth / 64.0, length * 1e-9)
    hmax = length / coarse
    s = [0.0]
    while s[-1] < length:
        s.append(s[-1] + min(hmax, max(h0, growth * s[-1])))
    s[-1] = length
    return np.asarray(s)


# --------------------------------------------------------------------------
# Domains


class MetricDomain:
    """Bounded domain with a working boundary distance ``rho_U``.

    Subclasses implement :meth:`contains`, :meth:`boundary_distance`,
    :meth:`base_curve` and :meth:`bounding_box`.
    """

    n: int
    base_point: np.ndarray
    john_params: tuple[float, float] | None = None
    holder_param: float | None = None
    volume: float
    label: str = "domain"

    def contains(self, x) -> np.ndarray:
        return self.boundary_distance(x) > 0

    def boundary_distance(self, x) -> np.ndarray:
        raise NotImplementedError

    def base_curve(self, x) -> Curve:
        raise NotImplementedError

    def bounding_box(self) -> tuple[np.ndarray, float]:
        """``(c, R)`` with the domain inside ``Box(c, R)``."""
        raise NotImplementedError

    def curve_to_base(self, x) -> Polyline:
        """Polyline along :meth:`base_curve`, refined near ``x``."""
        x = as_coords(x)
        if not self.contains(x):
            raise ValueError("point is not in the domain")
        curve = self.base_curve(x)
        s = _adaptive_params(curve.length, float(self.boundary_distance(x)))
        return Polyline(curve(s), s, curve)

    def sample(self, count: int, seed: int = 0) -> np.ndarray:
        """Uniform random points of the domain, by rejection."""
        c, R = self.bounding_box()
        rng = np.random.default_rng(seed)
        m = 2 * self.n + 1
        got, have = [], 0
        while have < count:
            y = rng.uniform(-1.0, 1.0, size=(max(4 * count, 1024), m))
            y[:, :-1] *= R
            y[:, -1] *= R * R
            x = mul(c, y)
            x = x[self.contains(x)]
            got.append(x)
            have += len(x)
        return np.concatenate(got)[:count]

    def _monte_carlo_volume(self, samples: int = 200_000, seed: int = 0) -> float:
        c, R = self.bounding_box()
        rng = np.random.default_rng(seed)
        m = 2 * self.n + 1
        y = rng.uniform(-1.0, 1.0, size=(samples, m))
        y[:, :-1] *= R
        y[:, -1] *= R * R
        return box_volume(R, self.n) * float(np.mean(self.contains(mul(c, y))))


class BallDomain(MetricDomain):
    """Koranyi ball with ``rho_U(x) = r - rho(c, x)`` and base point ``c``."""

    def __init__(self, center, radius: float):
        self.ball = Ball(center, radius)
        self.n = self.ball.n
        self.center = np.asarray(self.ball.center)
        self.radius = self.ball.radius
        self.base_point = self.center
        self.volume = ball_volume(self.radius, self.n)
        self.label = "ball"

    def contains(self, x) -> np.ndarray:
        return kdist(self.center, x) < self.radius

    def boundary_distance(self, x) -> np.ndarray:
        return np.maximum(self.radius - kdist(self.center, x), 0.0)

    def base_curve(self, x) -> Curve:
        y = dilate(1.0 / self.radius, mul(inv(self.center), x))
        return descent_curve(y).mapped(self.center, self.radius)

    def bounding_box(self) -> tuple[np.ndarray, float]:
        return self.center, self.radius


class BoxDomain(MetricDomain):
    """``Box(c, r)``; ``rho_U`` is the largest radius certified by the box
    inequalities, ``min(min_i (r - |y_i|), sqrt(|y_z|^2 + r^2 - |y_t|) - |y_z|)``
    for ``y = c^-1 x``."""

    def __init__(self, center, radius: float):
        if not radius > 0:
            raise ValueError("radius must be positive")
        self.center = np.array(as_coords(center), dtype=float)
        self.n = dim_of(self.center)
        self.radius = float(radius)
        self.base_point = self.center
        self.volume = box_volume(self.radius, self.n)
        self.label = "box"

    def _local(self, x) -> np.ndarray:
        return mul(inv(self.center), as_coords(x))

    def contains(self, x) -> np.ndarray:
        y = self._local(x)
        r = self.radius
        return np.all(np.abs(y[..., :-1]) < r, axis=-1) & (np.abs(y[..., -1]) < r * r)

    def boundary_distance(self, x) -> np.ndarray:
        y = self._local(x)
        n = self.n
        r = self.radius
        side = r - np.max(np.abs(y[..., :-1]), axis=-1)
        zr = np.linalg.norm(y[..., : 2 * n], axis=-1)
        disc = zr * zr + r * r - np.abs(y[..., -1])
        top = np.sqrt(np.maximum(disc, 0.0)) - zr
        d = np.minimum(side, top)
        return np.where(self.contains(x), np.maximum(d, 0.0), 0.0)

    def base_curve(self, x) -> Curve:
        y = self._local(x)
        leg = _horizontal_segment(y, -y)
        mid = y.copy()
        mid[:-1] = 0.0
        return leg.then(_vertical_loop(mid)).mapped(self.center, 1.0)

    def bounding_box(self) -> tuple[np.ndarray, float]:
        return self.center, self.radius


class DumbbellDomain(MetricDomain):
    """Two balls joined by a chain of neck balls along a horizontal segment.

    ``rho_U`` is the largest depth inside any member ball, a lower bound of
    the distance to the boundary of the union.
    """

    def __init__(self, c1, c2, r1: float, r2: float, neck: float):
        c1 = np.array(as_coords(c1), dtype=float)
        c2 = np.array(as_coords(c2), dtype=float)
        if c1.shape != c2.shape:
            raise ValueError("centers have different dimensions")
        if not (r1 > 0 and r2 > 0 and neck > 0):
            raise ValueError("radii must be positive")
        if neck > min(r1, r2):
            raise ValueError("neck radius must not exceed the ball radii")
        self.n = dim_of(c1)
        d = mul(inv(c1), c2)
        if abs(d[-1]) > 1e-12 * max(1.0, float(knorm(d)) ** 2):
            raise ValueError("centers must be joined by a horizontal segment (c1^-1 c2 with zero t)")
        d[-1] = 0.0
        self.c1, self.c2, self.r1, self.r2, self.neck = c1, c2, float(r1), float(r2), float(neck)
        self.offset = d
        L = float(np.linalg.norm(d[:-1]))
        count = max(2, int(np.ceil(L / (0.5 * neck))) + 1)
        self.neck_params = np.linspace(0.0, 1.0, count)
        self.neck_centers = mul(c1, self.neck_params[:, None] * d[None, :])
        self.centers = np.vstack([c1, c2, self.neck_centers])
        self.radii = np.concatenate([[r1, r2], np.full(count, neck)])
        self.base_point = c1
        self.label = "dumbbell"
        self.volume = self._monte_carlo_volume()

    def _depths(self, x) -> np.ndarray:
        x = as_coords(x)
        return self.radii - kdist(self.centers, x[..., None, :])

    def contains(self, x) -> np.ndarray:
        return np.max(self._depths(x), axis=-1) > 0

    def boundary_distance(self, x) -> np.ndarray:
        return np.maximum(np.max(self._depths(x), axis=-1), 0.0)

    def base_curve(self, x) -> Curve:
        x = as_coords(x)
        j = int(np.argmax(self._depths(x)))
        c, r = self.centers[j], self.radii[j]
        into = BallDomain(c, r).base_curve(x)
        if j == 0:
            return into
        lam = 1.0 if j == 1 else self.neck_params[j - 2]
        return into.then(_horizontal_segment(c, -lam * self.offset))

    def bounding_box(self) -> tuple[np.ndarray, float]:
        R = 0.0
        for c, r in zip(self.centers, self.radii):
            d = mul(inv(self.c1), c)
            dz = float(np.linalg.norm(d[:-1]))
            R = max(R, dz + r, np.sqrt(abs(d[-1]) + r * r + 2.0 * dz * r))
        return self.c1, R * (1.0 + 1e-12)


def make_ball_domain(c, r: float, calibrate: bool = True) -> BallDomain:
    U = BallDomain(c, r)
    if calibrate:
        _calibrate(U)
    return U


def make_box_domain(c, r: float, calibrate: bool = True) -> BoxDomain:
    U = BoxDomain(c, r)
    if calibrate:
        _calibrate(U)
    return U


def make_dumbbell(c1, c2, r1: float, r2: float, neck: float, calibrate: bool = True) -> DumbbellDomain:
    U = DumbbellDomain(c1, c2, r1, r2, neck)
    if calibrate:
        _calibrate(U)
    return U


def _calibrate(U: MetricDomain, samples: int = 128, seed: int = 0) -> None:
    pts = np.vstack([U.base_point[None, :], U.sample(samples, seed)])
    U.john_params = estimate_john_params(U, pts)
    U.holder_param = calibrate_holder(U, pts)


# --------------------------------------------------------------------------
# Cone and quasihyperbolic constants


class ConeConstants(NamedTuple):
    alpha: float
    beta: float


def cone_constants(U: MetricDomain, poly: Polyline) -> ConeConstants:
    """Per-curve twisted-cone constants.

    ``beta`` is the curve length ``l`` and ``alpha = l min_s rho_U(gamma(s)) / s``
    over the vertices, so that ``rho_U(gamma(s)) >= alpha s / l``.
    """
    l = float(poly.params[-1]) if poly.curve is not None else poly.length
    if l == 0.0:
        d = float(U.boundary_distance(poly.vertices[0]))
        return ConeConstants(d, d)
    s = poly.params if poly.curve is not None else poly.cumulative
    sel = s > 0
    depth = U.boundary_distance(poly.vertices[sel])
    return ConeConstants(float(l * np.min(depth / s[sel])), l)


def estimate_john_params(U: MetricDomain, points: np.ndarray) -> tuple[float, float]:
    """``(min alpha_x, max beta_x)`` over curves from the given points."""
    consts = [cone_constants(U, U.curve_to_base(x)) for x in np.atleast_2d(points)]
    alpha = min(c.alpha for c in consts)
    beta = max(c.beta for c in consts)
    return alpha, max(alpha, beta)


def quasihyperbolic_length(U: MetricDomain, path: Polyline) -> float:
    """Trapezoid rule for ``int ds / rho_U`` along a polyline."""
    d = U.boundary_distance(path.vertices)
    if np.any(d <= 0):
        raise ValueError("path touches the boundary; quasihyperbolic integrand blows up")
    if len(path.vertices) < 2:
        return 0.0
    w = 1.0 / d
    return float(np.sum(path.chords * 0.5 * (w[:-1] + w[1:])))


def _holder_needed(q: float, depth: float) -> float:
    # smallest H >= max(1, depth) with H ln(H / depth) >= q
    lo = max(depth * np.e, 1.0)
    if lo * np.log(lo / depth) >= q:
        return lo
    hi = 2.0 * lo
    while hi * np.log(hi / depth) < q:
        hi *= 2.0
    return float(optimize.brentq(lambda H: H * np.log(H / depth) - q, lo, hi, xtol=1e-14, rtol=1e-12))


def calibrate_holder(U: MetricDomain, points: np.ndarray) -> float:
    """Smallest ``H`` making the quasihyperbolic bound hold on the points."""
    H = 1.0
    for x in np.atleast_2d(points):
        poly = U.curve_to_base(x)
        H = max(H, _holder_needed(quasihyperbolic_length(U, poly), float(U.boundary_distance(x))))
    return H


def holder_check(U: MetricDomain, x) -> tuple[float, float]:
    """``(int_gamma ds / rho_U, H ln(H / rho_U(x)))`` for the stored ``H``."""
    if U.holder_param is None:
        raise ValueError("domain has no Holder parameter")
    x = as_coords(x)
    H = U.holder_param
    return quasihyperbolic_length(U, U.curve_to_base(x)), H * float(np.log(H / U.boundary_distance(x)))


# --------------------------------------------------------------------------
# Chains of balls


def _ball_json(b: Ball) -> dict:
    return {"center": [float(v) for v in b.center], "radius": float(b.radius)}


@dataclass(frozen=True, eq=False)
class BallChain:
    """Chain ``B_0 .. B_k`` from the base point to ``x`` with connectors ``G_i``.

    ``certificate`` maps each chain property to a boolean; ``alpha``,
    ``beta`` and ``holder`` are the constants used to certify it.
    """

    balls: list[Ball]
    connectors: list[Ball]
    k: int
    alpha: float
    beta: float
    holder: float | None
    certificate: dict = field(default_factory=dict)

    @property
    def certified(self) -> bool:
        return bool(self.certificate) and all(self.certificate.values())

    @property
    def radii(self) -> np.ndarray:
        return np.array([b.radius for b in self.balls])

    def to_dict(self) -> dict:
        return {
            "balls": [_ball_json(b) for b in self.balls],
            "connectors": [_ball_json(b) for b in self.connectors],
            "k": self.k,
            "alpha": self.alpha,
            "beta": self.beta,
            "holder": self.holder,
            "properties": {k: bool(v) for k, v in self.certificate.items()},
            "certified": self.certified,
        }

    def to_json(self, **kw) -> str:
        return json.dumps(self.to_dict(), **kw)


def _exit_param(curve: Curve, center: np.ndarray, radius: float, s_in: float, s_out: float, tol: float) -> float:
    # bisection for the crossing of rho(., center) = radius between an inside
    # parameter s_in and an outside parameter s_out; returns an inside point
    while abs(s_out - s_in) > tol:
        mid = 0.5 * (s_in + s_out)
        if kdist(center, curve(np.array([mid]))[0]) < radius:
            s_in = mid
        else:
            s_out = mid
    return s_in


def _best_witness(cands: np.ndarray, centers: Sequence[np.ndarray], radii: Sequence[float]):
    margin = np.min([r - kdist(c, cands) for c, r in zip(centers, radii)], axis=0)
    j = int(np.argmax(margin))
    return cands[j], float(margin[j])


def build_chain(U: MetricDomain, x, max_steps: int = 10_000) -> BallChain:
    """Chain of balls from the base point to ``x`` along :meth:`curve_to_base`.

    Starting at the base point with ``B_0 = B(x*, rho_U(x*)/4)``, the next
    centre is the last exit of the curve (walking back towards ``x``) from
    the half ball ``B(x_i, r_i/2)``.  The chain stops once a curve point lies
    in both ``B(x_i, r_i/2)`` and ``B(x, rho_U(x)/8)``.

    Raises
    ------
    ValueError
        If ``x`` is outside ``U`` or the curve leaves ``U``.
    RuntimeError
        If the chain does not close within ``max_steps`` or fails
        certification.
    """
    x = np.array(as_coords(x), dtype=float)
    poly = U.curve_to_base(x)
    curve = poly.curve
    s, V = poly.params, poly.vertices
    depth = U.boundary_distance(V)
    if np.any(depth <= 0):
        raise ValueError("curve to the base point leaves the domain")
    l = float(s[-1])
    r_end = float(U.boundary_distance(x)) / 4.0
    spacing = np.max(np.diff(s)) if len(s) > 1 else 0.0

    # the norm is a square root in t, so rounding shows up at the 1e-8 level
    if kdist(V[-1], U.base_point) > 1e-6 * max(1.0, l):
        raise ValueError("curve does not end at the base point")
    centers = [np.array(U.base_point, dtype=float)]
    radii = [float(U.boundary_distance(U.base_point)) / 4.0]
    connectors: list[Ball] = []
    s_c = l
    for _ in range(max_steps):
        c, r = centers[-1], radii[-1]
        if kdist(c, x) < r / 2 + r_end / 2:
            sel = s <= s_c
            y, margin = _best_witness(V[sel], [c, x], [r / 2, r_end / 2])
            if margin > 0:
                if kdist(c, x) == 0.0:
                    break
                connectors.append(Ball(y, 0.5 * min(r, r_end)))
                centers.append(x)
                radii.append(r_end)
                break
        below = np.nonzero(s < s_c)[0]
        if len(below) == 0:
            raise RuntimeError("chain reached the start of the curve without closing")
        dist = kdist(c, V[below])
        outside = np.nonzero(dist >= r / 2)[0]
        if len(outside) == 0:
            raise RuntimeError("curve stays inside the half ball but the stop rule failed")
        j = below[outside[-1]]
        s_next_vertex = s[j + 1] if j + 1 < len(s) and s[j + 1] < s_c else s_c
        s_new = _exit_param(curve, c, r / 2, s_next_vertex, s[j], 1e-6 * r)
        x_new = curve(np.array([s_new]))[0]
        r_new = float(U.boundary_distance(x_new)) / 4.0
        cands = curve(np.linspace(s_new, s_c, 65))
        y, margin = _best_witness(cands, [c, x_new], [r / 2, r_new / 2])
        if margin <= 0:
            raise RuntimeError(
                f"no connector centre found; curve spacing {spacing:.3e} too coarse for radius {r:.3e}"
            )
        connectors.append(Ball(y, 0.5 * min(r, r_new)))
        centers.append(x_new)
        radii.append(r_new)
        s_c = s_new
    else:
        raise RuntimeError(f"chain did not close within {max_steps} steps")

    cone = cone_constants(U, poly)
    H = None
    if U.holder_param is not None:
        q = quasihyperbolic_length(U, poly) if l > 0 else 0.0
        H = max(U.holder_param, _holder_needed(q, 4.0 * r_end)) if l > 0 else U.holder_param
    chain = BallChain(
        [Ball(c, r) for c, r in zip(centers, radii)],
        connectors,
        len(centers) - 1,
        cone.alpha,
        cone.beta,
        H,
    )
    cert = certify_chain(U, chain, x)
    object.__setattr__(chain, "certificate", cert)
    if not chain.certified:
        failed = [k for k, v in cert.items() if not v]
        raise RuntimeError(f"chain failed certification: {failed}")
    return chain


def certify_chain(U: MetricDomain, chain: BallChain, x, tol: float = 1e-12) -> dict:
    """Check the chain properties with triangle-inequality sufficient conditions.

    Keys: ``endpoints``, ``radius_law``, ``radius_ratio``,
    ``connector_radius``, ``connector_inclusion``, ``inside``,
    ``count_bound_john``, ``count_bound_holder``, ``tail_inclusion``.
    """
    x = as_coords(x)
    B, G, k = chain.balls, chain.connectors, chain.k
    c = np.array([b.center for b in B])
    r = chain.radii
    depth = U.boundary_distance(c)
    out = {}
    out["endpoints"] = bool(np.array_equal(c[0], U.base_point) and np.array_equal(c[-1], x) and len(G) == k)
    out["radius_law"] = bool(np.all(np.abs(r - depth / 4.0) <= tol * np.maximum(1.0, depth)))
    ratio = r[:-1] / r[1:] if k > 0 else np.ones(1)
    out["radius_ratio"] = bool(np.all((ratio >= 7.0 / 9.0 - tol) & (ratio <= 9.0 / 7.0 + tol)))
    ok_g, ok_gi = True, True
    for i, g in enumerate(G):
        ok_g &= abs(g.radius - 0.5 * min(r[i], r[i + 1])) <= tol * r[i]
        ok_gi &= float(kdist(c[i], g.center)) + g.radius <= r[i] * (1 + tol)
        ok_gi &= float(kdist(c[i + 1], g.center)) + g.radius <= r[i + 1] * (1 + tol)
    out["connector_radius"] = bool(ok_g)
    out["connector_inclusion"] = bool(ok_gi)
    out["inside"] = bool(np.all(4.0 * r <= depth * (1 + tol)) and np.all(depth > 0))
    a, b = chain.alpha, chain.beta
    rk = r[-1]
    out["count_bound_john"] = bool(k < 9.0 * (b / a) * np.log(8.0 * b / rk)) if k > 0 else True
    if chain.holder is not None:
        H = chain.holder
        out["count_bound_holder"] = bool(k < 9.0 * H * np.log(H / (4.0 * rk))) if k > 0 else True
    tail = True
    for i in range(k + 1):
        tail &= float(kdist(c[i], c[-1])) + rk <= (1.0 + 5.0 * b / a) * r[i] * (1 + tol)
    for i, g in enumerate(G):
        tail &= float(kdist(g.center, c[-1])) + rk <= (3.0 + 10.0 * b / a) * g.radius * (1 + tol)
    out["tail_inclusion"] = bool(tail)
    return out


# --------------------------------------------------------------------------
# Whitney-type families


@dataclass(frozen=True, eq=False)
class WhitneyFamily:
    """Balls ``D = B(x, rho_U(x)/4)`` with pairwise disjoint fifth-balls."""

    balls: list[Ball]
    multiplicity_bound: int
    grid_points: int
    covered: bool
    disjoint: bool

    def to_dict(self) -> dict:
        return {
            "balls": [_ball_json(b) for b in self.balls],
            "multiplicity": self.multiplicity_bound,
            "grid_points": self.grid_points,
            "covered": self.covered,
            "disjoint": self.disjoint,
        }


def _grid(U: MetricDomain, resolution: int) -> np.ndarray:
    c, R = U.bounding_box()
    m = 2 * U.n + 1
    axis = (np.arange(resolution) + 0.5) / resolution * 2.0 - 1.0
    mesh = np.stack(np.meshgrid(*([axis] * m), indexing="ij"), axis=-1).reshape(-1, m)
    mesh[:, :-1] *= R
    mesh[:, -1] *= R * R
    pts = mul(c, mesh)
    return pts[U.contains(pts)]


def _euclidean_reach(d: np.ndarray, zmax: float) -> np.ndarray:
    # rho(x, y) < d with |x_z| <= zmax implies |x - y| < this Euclidean radius
    return np.sqrt(d * d + (d * d + 2.0 * zmax * d) ** 2)


def _zmax(points: np.ndarray) -> float:
    n = dim_of(points)
    return float(np.max(np.linalg.norm(points[:, : 2 * n], axis=1)))


def multiplicity(balls: Sequence[Ball], points: np.ndarray) -> np.ndarray:
    """Number of balls containing each point."""
    points = np.atleast_2d(points)
    counts = np.zeros(len(points), dtype=int)
    if not balls:
        return counts
    tree = cKDTree(points)
    centers = np.array([b.center for b in balls])
    zmax = max(_zmax(points), _zmax(centers))
    for b in balls:
        idx = np.asarray(tree.query_ball_point(b.center, _euclidean_reach(b.radius, zmax)), dtype=int)
        if len(idx):
            counts[idx[kdist(b.center, points[idx]) < b.radius]] += 1
    return counts


def whitney_cover(U: MetricDomain, grid_resolution: int) -> WhitneyFamily:
    """Greedy selection of ``B(x, rho_U(x)/4)`` over grid candidates.

    Candidates are visited by decreasing radius and accepted when
    ``rho(x, y) >= (r_x + r_y) / 5`` for every accepted ``y``, which makes
    the fifth-balls disjoint.  A rejected candidate lies within ``2 r_y / 5``
    of a larger accepted ball, so every grid point ends up covered.

    Raises
    ------
    ValueError
        If the grid has no points inside ``U`` or some grid point is left
        uncovered.
    """
    pts = _grid(U, grid_resolution)
    if len(pts) == 0:
        raise ValueError("grid resolution too coarse: no candidate centres inside the domain")
    rad = U.boundary_distance(pts) / 4.0
    order = np.argsort(-rad, kind="stable")
    pts, rad = pts[order], rad[order]
    zmax = _zmax(pts)
    tree = cKDTree(pts)
    blocked = np.zeros(len(pts), dtype=bool)
    accepted = []
    for i in range(len(pts)):
        if blocked[i]:
            continue
        accepted.append(i)
        near = np.asarray(tree.query_ball_point(pts[i], _euclidean_reach(0.4 * rad[i], zmax)), dtype=int)
        near = near[(near > i) & ~blocked[near]]
        if len(near):
            hit = kdist(pts[i], pts[near]) < (rad[near] + rad[i]) / 5.0
            blocked[near[hit]] = True
    acc = np.asarray(accepted)
    acc_c, acc_r = pts[acc], rad[acc]
    balls = [Ball(c, r) for c, r in zip(acc_c, acc_r)]
    counts = multiplicity(balls, pts)
    disjoint = True
    acc_tree = cKDTree(acc_c)
    for i in range(len(acc)):
        near = np.asarray(acc_tree.query_ball_point(acc_c[i], _euclidean_reach(0.4 * acc_r[i], zmax)), dtype=int)
        near = near[near > i]
        disjoint &= bool(np.all(kdist(acc_c[i], acc_c[near]) >= (acc_r[near] + acc_r[i]) / 5.0))
    covered = bool(np.all(counts >= 1))
    if not covered:
        raise ValueError("grid points left uncovered; refine the grid")
    return WhitneyFamily(balls, int(np.max(counts)), len(pts), covered, bool(disjoint))


# --------------------------------------------------------------------------
# Boundary integrals


class IntegralEstimate(NamedTuple):
    value: float
    stderr: float
    samples: int


def boundary_integral(U: MetricDomain, tau: float, mc_samples: int = 1_000_000, seed: int = 0) -> IntegralEstimate:
    """Monte Carlo estimate of ``int_U rho_U^(-tau) dx`` from the bounding box."""
    if not 0 < tau < 1:
        raise ValueError("tau must lie in (0, 1)")
    c, R = U.bounding_box()
    m = 2 * U.n + 1
    rng = np.random.default_rng(seed)
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < mc_samples:
        size = min(1 << 18, mc_samples - done)
        y = rng.uniform(-1.0, 1.0, size=(size, m))
        y[:, :-1] *= R
        y[:, -1] *= R * R
        d = U.boundary_distance(mul(c, y))
        with np.errstate(divide="ignore"):
            v = np.where(d > 0, np.power(np.maximum(d, 1e-300), -tau), 0.0)
        total += float(np.sum(v))
        total_sq += float(np.sum(v * v))
        done += size
    vol = box_volume(R, U.n)
    mean = total / done
    var = max(total_sq / done - mean * mean, 0.0)
    return IntegralEstimate(vol * mean, vol * np.sqrt(var / done), done)
