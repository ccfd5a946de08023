import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from hiersim import matkit
from hiersim.errors import NonFinite, NotPositiveDefinite, NotSymmetric, SingularSystem

from oracles import kron_lyapunov, random_hurwitz, random_spd


# ---------------------------------------------------------------- lyapunov

def test_lyapunov_scalar():
    assert matkit.solve_lyapunov([[-1.0]], [[2.0]]) == pytest.approx(np.array([[1.0]]))


def test_lyapunov_diagonal():
    x = matkit.solve_lyapunov(-np.eye(2), 2 * np.eye(2))
    np.testing.assert_allclose(x, np.eye(2), atol=1e-14)


def test_lyapunov_companion_hand_solved():
    # Symmetric unknowns (a, b, c): -4b = -1, a - 3b - 2c = 0, 2b - 6c = -1.
    x = matkit.solve_lyapunov([[0.0, 1.0], [-2.0, -3.0]], np.eye(2))
    np.testing.assert_allclose(x, [[1.25, 0.25], [0.25, 0.25]], atol=1e-13)


def test_lyapunov_singular_for_imaginary_axis():
    with pytest.raises(SingularSystem):
        matkit.solve_lyapunov([[0.0]], [[1.0]])
    with pytest.raises(SingularSystem):
        matkit.solve_lyapunov([[0.0, 1.0], [-1.0, 0.0]], np.eye(2))


def test_lyapunov_rejects_asymmetric_rhs():
    with pytest.raises(NotSymmetric):
        matkit.solve_lyapunov(-np.eye(2), [[1.0, 0.5], [0.0, 1.0]])


def test_nonfinite_rejected():
    with pytest.raises(NonFinite):
        matkit.solve_lyapunov([[np.nan]], [[1.0]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_lyapunov_round_trip(seed, n):
    rng = np.random.default_rng(seed)
    a = random_hurwitz(rng, n)
    q = random_spd(rng, n)
    x = matkit.solve_lyapunov(a, q)
    residual = np.linalg.norm(a.T @ x + x @ a + q)
    assert residual <= 1e-8 * (1 + np.linalg.norm(q))
    assert np.array_equal(x, x.T)
    assert np.linalg.eigvalsh(x).min() > 0


def test_lyapunov_matches_kron_oracle():
    rng = np.random.default_rng(7)
    for _ in range(20):
        n = int(rng.integers(1, 6))
        a = random_hurwitz(rng, n)
        q = random_spd(rng, n)
        np.testing.assert_allclose(matkit.solve_lyapunov(a, q), kron_lyapunov(a, q), atol=1e-9, rtol=0)


def test_gauss_solve_matches_lapack():
    rng = np.random.default_rng(3)
    a = rng.normal(size=(8, 8))
    b = rng.normal(size=(8, 3))
    np.testing.assert_allclose(matkit.gauss_solve(a, b), np.linalg.solve(a, b), atol=1e-10)


def test_gauss_solve_needs_pivoting():
    x = matkit.gauss_solve([[0.0, 1.0], [1.0, 0.0]], [2.0, 3.0])
    np.testing.assert_allclose(x, [3.0, 2.0])


# ---------------------------------------------------------------- sym_eig

def test_sym_eig_diag():
    w, v = matkit.sym_eig(np.diag([3.0, 1.0]))
    np.testing.assert_allclose(w, [1.0, 3.0])
    np.testing.assert_allclose(np.abs(v), [[0.0, 1.0], [1.0, 0.0]], atol=1e-15)


def test_sym_eig_identity():
    w, _ = matkit.sym_eig(np.eye(3))
    np.testing.assert_allclose(w, [1.0, 1.0, 1.0])


def test_sym_eig_2x2_characteristic_polynomial():
    # (2 - x)^2 - 1 = 0  ->  x in {1, 3}
    w, v = matkit.sym_eig([[2.0, 1.0], [1.0, 2.0]])
    np.testing.assert_allclose(w, [1.0, 3.0], atol=1e-14)
    np.testing.assert_allclose(np.abs(v), np.full((2, 2), 1 / math.sqrt(2)), atol=1e-14)


def test_sym_eig_rejects_nonsymmetric():
    with pytest.raises(NotSymmetric):
        matkit.sym_eig([[1.0, 2.0], [0.0, 1.0]])


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 12))
def test_sym_eig_reconstruction(seed, n):
    rng = np.random.default_rng(seed)
    g = rng.normal(size=(n, n)) * 10 ** rng.uniform(-3, 3)
    s = g + g.T
    w, v = matkit.sym_eig(s)
    norm_s = np.linalg.norm(s, 2)
    assert np.all(np.diff(w) >= 0)
    np.testing.assert_allclose(v.T @ v, np.eye(n), atol=1e-9)
    for i in range(n):
        assert np.linalg.norm(s @ v[:, i] - w[i] * v[:, i]) <= 1e-9 * (1 + norm_s)
    np.testing.assert_allclose(v @ np.diag(w) @ v.T, s, atol=1e-8 * (1 + norm_s))


# ---------------------------------------------------------------- sqrtm

def test_sqrtm_trivial():
    np.testing.assert_allclose(matkit.sqrtm_spd(np.eye(2)), np.eye(2))
    np.testing.assert_allclose(matkit.sqrtm_spd(np.diag([4.0, 9.0])), np.diag([2.0, 3.0]), atol=1e-14)


def test_sqrtm_random_multiply_back():
    m = random_spd(np.random.default_rng(11), 3)
    s = matkit.sqrtm_spd(m)
    np.testing.assert_allclose(s @ s, m, atol=1e-9 * (1 + np.linalg.norm(m, 2)))
    assert np.array_equal(s, s.T)
    assert np.linalg.eigvalsh(s).min() > 0


def test_sqrtm_rejects_semidefinite():
    with pytest.raises(NotPositiveDefinite):
        matkit.sqrtm_spd(np.diag([1.0, 0.0]))


@settings(max_examples=40, deadline=None)
@given(seed=st.integers(0, 2**32 - 1), n=st.integers(1, 6))
def test_sqrtm_idempotence(seed, n):
    s = random_spd(np.random.default_rng(seed), n, floor=0.5)
    np.testing.assert_allclose(matkit.sqrtm_spd(s @ s), s, atol=1e-8)


def test_inv_sqrtm():
    m = random_spd(np.random.default_rng(5), 4)
    r = matkit.inv_sqrtm_spd(m)
    np.testing.assert_allclose(r @ m @ r, np.eye(4), atol=1e-9)


# ---------------------------------------------------------------- norms

def test_spectral_norm_examples():
    assert matkit.spectral_norm(np.eye(3)) == pytest.approx(1.0)
    assert matkit.spectral_norm(np.diag([3.0, -4.0])) == pytest.approx(4.0)
    assert matkit.spectral_norm([[0.0, 2.0], [0.0, 0.0]]) == pytest.approx(2.0)


def test_spectral_norm_rectangular():
    a = np.random.default_rng(2).normal(size=(5, 2))
    assert matkit.spectral_norm(a) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)
    assert matkit.spectral_norm(a.T) == pytest.approx(np.linalg.norm(a, 2), rel=1e-10)


@settings(max_examples=50, deadline=None)
@given(seed=st.integers(0, 2**32 - 1))
def test_spectral_norm_submultiplicative(seed):
    rng = np.random.default_rng(seed)
    k, l, r = rng.integers(1, 6, size=3)
    a = rng.normal(size=(k, l))
    b = rng.normal(size=(l, r))
    assert matkit.spectral_norm(a @ b) <= matkit.spectral_norm(a) * matkit.spectral_norm(b) + 1e-9


# ---------------------------------------------------------------- hurwitz

@pytest.mark.parametrize(
    "a, expected",
    [
        ([[-1.0]], True),
        ([[1.0]], False),
        ([[0.0, 1.0], [-1.0, -1.0]], True),  # -0.5 +- i sqrt(3)/2
        ([[0.0, 1.0], [-1.0, 0.0]], False),  # +- i
        ([[0.0, 1.0], [1.0, 0.0]], False),  # +- 1
        ([[-1.0, 5.0], [0.0, -2.0]], True),
    ],
)
def test_is_hurwitz_examples(a, expected):
    assert matkit.is_hurwitz(a) is expected


@settings(max_examples=60, deadline=None)
@given(
    tr=st.floats(-4, 4, allow_nan=False),
    det=st.floats(-4, 4, allow_nan=False),
    off=st.floats(-3, 3, allow_nan=False),
)
def test_is_hurwitz_agrees_with_trace_det(tr, det, off):
    # 2x2 eigenvalues are roots of x^2 - tr x + det: stable iff tr < 0 < det.
    if abs(tr) < 1e-3 or abs(det) < 1e-3:
        return
    b = off if abs(off) > 1e-3 else 1.0
    a = np.array([[0.0, b], [-det / b, tr]])
    assert matkit.is_hurwitz(a) is (tr < 0 and det > 0)


# ---------------------------------------------------------------- least squares

def test_least_squares_identity():
    b = np.array([[1.0, 2.0], [3.0, 4.0]])
    np.testing.assert_allclose(matkit.least_squares(np.eye(2), b), b)


def test_least_squares_mean():
    np.testing.assert_allclose(matkit.least_squares([[1.0], [1.0]], [[1.0], [3.0]]), [[2.0]])


def test_least_squares_minimum_norm():
    # Solution line x1 + x2 = 2; closest point to the origin is (1, 1).
    x = matkit.least_squares([[1.0, 1.0], [0.0, 0.0]], [[2.0], [0.0]])
    np.testing.assert_allclose(x, [[1.0], [1.0]], atol=1e-12)


def test_least_squares_matches_pinv():
    rng = np.random.default_rng(9)
    a = rng.normal(size=(7, 4)) @ np.diag([1.0, 1.0, 1.0, 0.0]) @ rng.normal(size=(4, 5))
    b = rng.normal(size=(7, 2))
    np.testing.assert_allclose(matkit.least_squares(a, b), np.linalg.pinv(a) @ b, atol=1e-8)


def test_least_squares_zero_matrix():
    np.testing.assert_array_equal(matkit.least_squares(np.zeros((3, 2)), np.ones((3, 1))), np.zeros((2, 1)))
