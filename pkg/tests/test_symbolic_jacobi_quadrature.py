import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hrigid.hgroup import random_points
from hrigid.jacobi import jacobi_eigh, unitary_polar
from hrigid.quadrature import tensor_gauss_legendre
from hrigid.symbolic import bracket_table, bracket_violations, frame_matrix, left_invariance_defect


@pytest.mark.parametrize("n", [1, 2, 3])
def test_brackets(n):
    assert bracket_violations(n) == []
    table = bracket_table(n)
    m = 2 * n + 1
    _, syms = frame_matrix(n)
    # [X_1, X_(n+1)] is -4 times the vertical field
    expect = [0] * (m - 1) + [-4]
    assert [int(v) for v in table[(0, n)]] == expect


def test_left_invariance_symbolic(rng):
    assert left_invariance_defect(2, random_points(2, 20, rng)) <= 1e-12


@st.composite
def hermitian(draw):
    n = draw(st.integers(1, 6))
    rng = np.random.default_rng(draw(st.integers(0, 2**32 - 1)))
    A = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))
    return A + A.conj().T


@given(hermitian())
def test_jacobi_matches_lapack(H):
    w, W = jacobi_eigh(H)
    np.testing.assert_allclose(w, np.linalg.eigvalsh(H), atol=1e-12 * max(1, np.abs(w).max()))
    np.testing.assert_allclose(W.conj().T @ W, np.eye(len(w)), atol=1e-12)
    np.testing.assert_allclose(H @ W, W * w, atol=1e-11 * max(1, np.abs(w).max()))


def test_jacobi_is_deterministic(rng):
    A = rng.standard_normal((4, 4)) + 1j * rng.standard_normal((4, 4))
    H = A @ A.conj().T
    a, b = jacobi_eigh(H), jacobi_eigh(H)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


def test_jacobi_rejects_non_hermitian():
    with pytest.raises(ValueError):
        jacobi_eigh(np.array([[1.0, 2.0], [0.0, 1.0]]))


def test_unitary_polar(rng):
    C = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    U = unitary_polar(C)
    np.testing.assert_allclose(U.conj().T @ U, np.eye(3), atol=1e-12)
    P = U.conj().T @ C
    np.testing.assert_allclose(P, P.conj().T, atol=1e-12)
    assert np.all(np.linalg.eigvalsh(0.5 * (P + P.conj().T)) > 0)


def test_gauss_legendre_exactness():
    # order-k rule integrates degree 2k-1 exactly per axis
    fn = lambda x: x[:, 0] ** 5 * x[:, 1] ** 2 + x[:, 2] ** 4  # noqa: E731
    lo, hi = np.array([0.0, -1.0, 0.0]), np.array([1.0, 2.0, 0.5])
    exact = (1 / 6) * 3.0 * 0.5 + 1.0 * 3.0 * (0.5**5 / 5)
    assert tensor_gauss_legendre(fn, lo, hi, 4) == pytest.approx(exact, rel=1e-13)


def test_gauss_legendre_chunking_consistent():
    fn = lambda x: np.cos(x.sum(axis=1))  # noqa: E731
    lo, hi = -np.ones(4), np.ones(4)
    a = tensor_gauss_legendre(fn, lo, hi, 6)
    b = tensor_gauss_legendre(fn, lo, hi, 6, chunk=37)
    assert a == pytest.approx(b, rel=1e-13)
    assert a == pytest.approx((2 * np.sin(1)) ** 4, rel=1e-8)
