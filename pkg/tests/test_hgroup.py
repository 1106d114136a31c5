import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from hrigid.hgroup import (
    Ball,
    Box,
    GroupDim,
    HPoint,
    Isometry,
    ball_volume,
    box_second_moment,
    box_volume,
    complexify,
    dilate,
    flip_matrix,
    frame_vectors,
    inv,
    kdist,
    knorm,
    mul,
    origin,
    random_points,
    random_unitary,
    real_form,
    realify,
    sample_ball,
    sample_ball_boundary,
    unit_ball_volume,
)

from strategies import dims, isometries, points


def test_group_dim_constants():
    g = GroupDim(2)
    assert g.nu == 6
    assert g.real_dim == 5
    assert g.kappa == pytest.approx(17 ** -0.25, rel=1e-15)


def test_product_formula_against_complex_form(rng):
    n = 2
    x, y = random_points(n, 2, rng)
    z, w = complexify(x[:-1]), complexify(y[:-1])
    t = x[-1] + y[-1] + 2 * np.imag(np.vdot(w, z))
    expect = np.concatenate([realify(z + w), [t]])
    np.testing.assert_allclose(mul(x, y), expect, atol=1e-14)


@given(dims.flatmap(lambda n: points(n, 3)))
def test_associativity(p):
    x, y, z = p
    np.testing.assert_allclose(mul(mul(x, y), z), mul(x, mul(y, z)), atol=1e-11)


@given(dims.flatmap(lambda n: points(n)))
def test_inverse(p):
    x = p[0]
    np.testing.assert_allclose(mul(x, inv(x)), 0 * x, atol=1e-13)


@given(dims.flatmap(lambda n: points(n, 3)))
def test_triangle_inequality(p):
    x, y, z = p
    assert kdist(x, z) <= kdist(x, y) + kdist(y, z) + 1e-12


@given(dims.flatmap(lambda n: points(n, 3)), st.floats(0.01, 50))
def test_left_invariance_and_homogeneity(p, s):
    a, x, y = p
    assert kdist(mul(a, x), mul(a, y)) == pytest.approx(kdist(x, y), rel=1e-9, abs=1e-9)
    assert knorm(dilate(s, x)) == pytest.approx(s * knorm(x), rel=1e-12, abs=1e-300)
    np.testing.assert_allclose(dilate(s, mul(x, y)), mul(dilate(s, x), dilate(s, y)), rtol=1e-10, atol=1e-10)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(isometries(n), points(n, 2))))
def test_isometries_preserve_distance(arg):
    th, (x, y) = arg
    assert kdist(th(x), th(y)) == pytest.approx(kdist(x, y), rel=1e-9, abs=1e-9)


@given(st.integers(1, 3).flatmap(lambda n: st.tuples(isometries(n), isometries(n), points(n, 4))))
def test_compose_and_invert(arg):
    a, b, x = arg
    np.testing.assert_allclose((a @ b)(x), a(b(x)), atol=1e-9)
    np.testing.assert_allclose(a.inverse()(a(x)), x, atol=1e-9)


def test_isometry_rejects_non_unitary():
    with pytest.raises(ValueError):
        Isometry(np.array([[2.0 + 0j]]), origin(1), False)


def test_conjugation_is_involution(rng):
    iota = Isometry.conjugation(2)
    x = random_points(2, 10, rng)
    np.testing.assert_allclose(iota(iota(x)), x, atol=0)
    assert kdist(iota(x[0]), iota(x[1])) == pytest.approx(kdist(x[0], x[1]), rel=1e-12)


def test_isometry_jacobian_matches_finite_differences(rng):
    th = Isometry(random_unitary(2, rng), random_points(2, 1, rng)[0], True)
    x = random_points(2, 1, rng)[0]
    h = 1e-6
    fd = np.stack([(th(x + h * e) - th(x - h * e)) / (2 * h) for e in np.eye(5)], axis=-1)
    np.testing.assert_allclose(th.jacobian(x), fd, atol=1e-8)


def test_frame_vectors_contact_structure(rng):
    # X_j t-component equals 2 y_j, Y_j t-component equals -2 x_j
    x = random_points(2, 1, rng)[0]
    F = frame_vectors(x)
    np.testing.assert_allclose(F[:2, -1], 2 * x[2:4])
    np.testing.assert_allclose(F[2:4, -1], -2 * x[:2])
    np.testing.assert_allclose(F[-1], np.eye(5)[-1])


def test_real_form_is_multiplicative(rng):
    A, B = random_unitary(3, rng), random_unitary(3, rng)
    np.testing.assert_allclose(real_form(A @ B), real_form(A) @ real_form(B), atol=1e-14)
    z = rng.standard_normal(3) + 1j * rng.standard_normal(3)
    np.testing.assert_allclose(real_form(A) @ realify(z), realify(A @ z), atol=1e-14)
    assert np.allclose(flip_matrix(3) @ realify(z), realify(np.conj(z)))


def test_unit_ball_volume_oracle():
    # independent oracle: the t-slice of the unit ball is a 2n-ball of radius (1 - t^2)^(1/4)
    n = 2
    omega = np.pi**n / 2.0  # volume of the unit 4-ball
    val, _ = integrate.quad(lambda t: omega * (1 - t * t) ** (n / 2.0), -1, 1)
    assert unit_ball_volume(n) == pytest.approx(val, rel=1e-10)
    assert ball_volume(2.0, n) == pytest.approx(val * 2.0**6, rel=1e-10)


def test_box_closed_forms():
    assert box_volume(1.0, 2) == 32.0
    assert box_second_moment(1.0, 2, 0) == pytest.approx(64.0 / 3.0, rel=1e-14)
    assert Box(origin(2), 0.5).volume == pytest.approx(32 * 0.5**6)


def test_hpoint_api():
    p = HPoint.from_coords([1.0, 0.0, 0.5])
    q = HPoint(np.array([1j]), 0.0)
    assert (p * p.inverse()).norm() == 0
    assert p.dilate(2.0).norm() == pytest.approx(2 * p.norm())
    assert isinstance(q * p, HPoint)
    assert HPoint.identity(1) == HPoint(np.zeros(1, complex), 0.0)


def test_sampling_stays_inside(rng):
    B = Ball(random_points(2, 1, rng)[0], 0.7)
    for method in ("sobol", "halton", "random"):
        x = sample_ball(B, 500, method=method)
        assert x.shape == (500, 5)
        assert np.all(B.contains(x))
    s = sample_ball_boundary(B, 200, rng)
    np.testing.assert_allclose(kdist(B.center, s), 0.7, rtol=1e-12)
    with pytest.raises(ValueError):
        sample_ball(B, 10, method="bogus")
