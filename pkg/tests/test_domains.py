import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import integrate, special

from hrigid.domains import (
    Polyline,
    boundary_integral,
    build_chain,
    certify_chain,
    cone_constants,
    descent_curve,
    holder_check,
    make_ball_domain,
    make_box_domain,
    make_dumbbell,
    multiplicity,
    quasihyperbolic_length,
    whitney_cover,
)
from hrigid.hgroup import Ball, inv, kdist, knorm, mul, origin, random_points, unit_ball_volume


@pytest.fixture(scope="module")
def ball():
    return make_ball_domain(origin(2), 1.0)


def _curve_checks(y):
    c = descent_curve(y)
    s = np.linspace(0, c.length, 4001)
    pts = c(s)
    h = s[1] - s[0]
    steps = mul(inv(pts[:-1]), pts[1:])
    return c, pts, h, steps


@settings(max_examples=25)
@given(st.integers(0, 2**32 - 1))
def test_descent_curve_is_horizontal_unit_speed_and_monotone(seed):
    y = random_points(2, 1, np.random.default_rng(seed), 1.0)[0]
    c, pts, h, steps = _curve_checks(y)
    np.testing.assert_allclose(pts[0], y, atol=1e-12)
    assert knorm(pts[-1]) <= 1e-6 * max(1.0, c.length)
    # horizontal with unit speed: each group step has |dz| = h and dt = O(h^2)
    # (chords fall short of arcs only where the spiral winds tightly near z = 0)
    chord = np.linalg.norm(steps[:, :4], axis=1)
    assert np.all(chord <= h * (1 + 1e-9))
    wide = np.linalg.norm(pts[:-1, :4], axis=1) > 0.05
    # steps straddling a junction between pieces cut the corner
    assert np.sum(np.abs(chord[wide] / h - 1) > 1e-3) <= len(c.pieces) - 1
    assert np.max(np.abs(steps[:, -1])) <= 50 * h * h
    r = knorm(pts)
    assert np.all(np.diff(r) <= 1e-9)


def test_descent_curve_on_vertical_axis():
    y = np.array([0, 0, 0, 0, 0.7])
    c, pts, h, _ = _curve_checks(y)
    assert knorm(pts[-1]) < 1e-6
    assert np.all(np.diff(knorm(pts)) <= 1e-9)


def test_polyline_dedupes():
    p = Polyline.from_vertices(np.array([[0, 0, 0], [0, 0, 0], [1, 0, 0.0]]))
    assert len(p.vertices) == 2 and p.length == pytest.approx(1.0)
    np.testing.assert_allclose(p.cumulative, [0, 1])


def test_ball_domain_basics(ball):
    x = np.array([0.3, 0, 0, 0, 0])
    assert ball.boundary_distance(x) == pytest.approx(0.7)
    assert not ball.contains(np.array([0, 0, 0, 0, 1.01]))
    alpha, beta = ball.john_params
    assert 0 < alpha <= beta
    q, bound = holder_check(ball, x)
    assert q <= bound


def test_cone_constants_for_radial_segment(ball):
    x = np.array([0.5, 0, 0, 0, 0])
    c = cone_constants(ball, ball.curve_to_base(x))
    # straight segment of length 1/2: rho_U(gamma(s)) = 1/2 + s, so alpha = l min (1/2+s)/s = 1/2 + l
    assert c.beta == pytest.approx(0.5, rel=1e-9)
    assert c.alpha == pytest.approx(1.0, rel=1e-3)


def test_quasihyperbolic_length_radial(ball):
    x = np.array([0.5, 0, 0, 0, 0])
    # integral of 1/(1 - r) from 0 to 1/2 is ln 2
    assert quasihyperbolic_length(ball, ball.curve_to_base(x)) == pytest.approx(np.log(2), rel=1e-4)


def test_chains_certified_ball(ball):
    for x in ball.sample(40, seed=11):
        ch = build_chain(ball, x)
        assert ch.certified, ch.certificate
        cert = certify_chain(ball, ch, x)
        assert all(cert.values())
        r = ch.radii
        if ch.k:
            assert np.all((r[:-1] / r[1:] >= 7 / 9 - 1e-12) & (r[:-1] / r[1:] <= 9 / 7 + 1e-12))
            assert ch.k < 9 * (ch.beta / ch.alpha) * np.log(8 * ch.beta / r[-1])


def test_chain_at_base_point(ball):
    ch = build_chain(ball, origin(2))
    assert ch.k == 0 and ch.certified


def test_chain_json_roundtrip(ball):
    ch = build_chain(ball, np.array([0.9, 0, 0, 0, 0]))
    d = json.loads(ch.to_json())
    assert d["certified"] is True
    assert set(d["properties"]) >= {"radius_ratio", "count_bound_john", "inside", "connector_inclusion"}
    assert len(d["balls"]) == d["k"] + 1


def test_chain_rejects_outside_point(ball):
    with pytest.raises(ValueError):
        build_chain(ball, np.array([2.0, 0, 0, 0, 0]))


def test_box_and_dumbbell_chains():
    box = make_box_domain(origin(2), 1.0)
    for x in box.sample(15, seed=3):
        assert build_chain(box, x).certified
    c2 = origin(2)
    c2[0] = 2.0
    db = make_dumbbell(origin(2), c2, 1.0, 1.0, 0.4)
    assert db.contains(np.array([1.0, 0, 0, 0, 0]))
    for x in db.sample(15, seed=4):
        assert build_chain(db, x).certified


def test_dumbbell_requires_horizontal_axis():
    with pytest.raises(ValueError):
        make_dumbbell(origin(2), np.array([0, 0, 0, 0, 2.0]), 1.0, 1.0, 0.4)


def test_boundary_distance_is_one_lipschitz(ball):
    rng = np.random.default_rng(5)
    for U in (ball, make_box_domain(origin(2), 1.0)):
        x = U.sample(400, seed=1)
        y = mul(x, 0.02 * random_points(2, 400, rng, 1.0))
        keep = U.contains(y)
        gap = np.abs(U.boundary_distance(x[keep]) - U.boundary_distance(y[keep]))
        assert np.all(gap <= kdist(x[keep], y[keep]) * (1 + 1e-9))


def test_whitney_cover_properties(ball):
    w = whitney_cover(ball, 7)
    assert w.covered and w.disjoint
    c = np.array([b.center for b in w.balls])
    r = np.array([b.radius for b in w.balls])
    np.testing.assert_allclose(r, ball.boundary_distance(c) / 4)
    # brute-force oracle for the fifth-ball disjointness on a subset
    idx = np.argsort(-r)[:300]
    for i in idx:
        d = kdist(c[i], c[idx])
        ok = (d >= (r[i] + r[idx]) / 5) | (idx == i)
        assert np.all(ok)


def test_multiplicity_brute_force(rng):
    balls = [Ball(p, 0.3) for p in random_points(2, 20, rng, 0.5)]
    pts = random_points(2, 300, rng, 0.5)
    brute = np.sum([kdist(b.center, pts) < b.radius for b in balls], axis=0)
    np.testing.assert_array_equal(multiplicity(balls, pts), brute)


def test_boundary_integral_against_beta_oracle(ball):
    tau = 0.1
    # independent 1-d oracle: |B_r| = r^6 |U| gives int (1 - r)^(-tau) 6 r^5 dr
    oracle, _ = integrate.quad(lambda r: 6 * r**5 * (1 - r) ** -tau, 0, 1)
    assert oracle == pytest.approx(6 * special.beta(6, 1 - tau), rel=1e-10)
    est = boundary_integral(ball, tau, 200_000, seed=1)
    vol = unit_ball_volume(2)
    assert est.value == pytest.approx(oracle * vol, rel=0.02)
    alpha = ball.john_params[0]
    assert est.value <= 2 * vol / alpha**tau


def test_boundary_integral_rejects_bad_tau(ball):
    with pytest.raises(ValueError):
        boundary_integral(ball, 1.5)


def test_whitney_multiplicity_under_refinement_n1():
    # the count grows with resolution toward the packing limit but stays
    # below the volume bound 10^nu from disjoint fifth-balls of comparable size
    U = make_ball_domain(origin(1), 1.0)
    mults = []
    for res in (15, 25):
        w = whitney_cover(U, res)
        assert w.covered and w.disjoint
        mults.append(w.multiplicity_bound)
    assert max(mults) <= 10**4
