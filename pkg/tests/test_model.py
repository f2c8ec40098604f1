import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from numpy.testing import assert_allclose

from gwi2.model import (
    CriticalityKind,
    MeanMatrix,
    ModelError,
    classify,
    eigen_decompose,
    grad_spectral_radius,
    kron2,
    matrix_power_putzer,
    spectral_radius,
    sqrt_psd_2x2,
)

entry = st.floats(0.01, 1.5)
matrices = st.builds(MeanMatrix, entry, entry, entry, entry)


@pytest.mark.parametrize(
    "abcd, rho",
    [((0.2, 0.3, 1.6, 0.4), 1.0), ((0.2, 0.3, 0.3, 0.2), 0.5), ((0.3, 0.7, 0.7, 0.3), 1.0)],
)
def test_spectral_radius_hand_values(abcd, rho):
    assert_allclose(spectral_radius(MeanMatrix(*abcd)), rho, atol=1e-14)


def test_mean_matrix_validation():
    with pytest.raises(ModelError):
        MeanMatrix(1.0, 0.0, 0.0, 1.0)
    with pytest.raises(ModelError):
        MeanMatrix(0.0, 0.5, 0.5, 0.0)
    with pytest.raises(ModelError):
        MeanMatrix(0.5, float("nan"), 0.5, 0.5)
    m = MeanMatrix.from_array([[0.3, 0.7], [0.7, 0.3]])
    assert_allclose(m.array, [[0.3, 0.7], [0.7, 0.3]])


def test_critical_constructor():
    m = MeanMatrix.critical(0.2, 0.4, 0.3)
    assert_allclose(m.gamma, 1.6)
    assert_allclose(spectral_radius(m), 1.0, atol=1e-14)


def test_eigen_symmetric_example():
    s = eigen_decompose(MeanMatrix(0.3, 0.7, 0.7, 0.3))
    assert_allclose(s.u_right, [0.5, 0.5], atol=1e-14)
    assert_allclose(s.u_left, [1, 1], atol=1e-14)
    assert_allclose(s.v_right, [-1, 1], atol=1e-14)
    assert_allclose(s.v_left, [-0.5, 0.5], atol=1e-14)
    assert_allclose(s.lambda_minus, -0.4, atol=1e-14)


def test_eigen_asymmetric_example():
    s = eigen_decompose(MeanMatrix(0.2, 0.3, 1.6, 0.4))
    assert_allclose(s.u_right, [3 / 11, 8 / 11], atol=1e-14)
    assert_allclose(s.u_left, [11 / 7, 11 / 14], atol=1e-14)


def test_eigen_rank_one_example():
    s = eigen_decompose(MeanMatrix(0.5, 0.5, 0.5, 0.5))
    assert_allclose([s.lambda_plus, s.lambda_minus], [1, 0], atol=1e-14)
    assert_allclose(s.v_left, [-0.5, 0.5], atol=1e-14)


@given(matrices)
def test_eigen_relations(m):
    s = eigen_decompose(m)
    a = m.array
    tol = 1e-12 * max(1.0, np.max(np.abs(a)))
    assert_allclose(a @ s.u_right, s.lambda_plus * s.u_right, atol=tol)
    assert_allclose(s.u_left @ a, s.lambda_plus * s.u_left, atol=tol)
    assert_allclose(a @ s.v_right, s.lambda_minus * s.v_right, atol=tol)
    assert_allclose(s.v_left @ a, s.lambda_minus * s.v_left, atol=tol)
    assert_allclose(s.u_right.sum(), 1, atol=1e-12)
    assert_allclose(s.u_right @ s.u_left, 1, atol=1e-12)
    assert_allclose(np.linalg.det(s.basis), 1, atol=1e-12)
    assert s.lambda_plus > 0 and -s.lambda_plus < s.lambda_minus < s.lambda_plus
    assert spectral_radius(m) == s.lambda_plus


@given(matrices, st.integers(0, 20))
def test_putzer_matches_iteration(m, k):
    expected = np.linalg.matrix_power(m.array, k)
    err = np.max(np.abs(matrix_power_putzer(m, k) - expected)) / max(1.0, np.max(np.abs(expected)))
    assert err < 1e-10


def test_putzer_small_powers():
    m = MeanMatrix(0.3, 0.7, 0.7, 0.3)
    assert_allclose(matrix_power_putzer(m, 0), np.eye(2), atol=0)
    assert_allclose(matrix_power_putzer(m, 1), m.array, atol=1e-12)
    assert_allclose(matrix_power_putzer(m, 10), np.linalg.matrix_power(m.array, 10), atol=1e-10)
    with pytest.raises(ValueError):
        matrix_power_putzer(m, -1)


@pytest.mark.parametrize(
    "abcd, kind, ident",
    [
        ((0.3, 0.7, 0.7, 0.3), CriticalityKind.CRITICAL, True),
        ((0.2, 0.3, 0.3, 0.2), CriticalityKind.SUBCRITICAL, False),
        ((0.9, 0.5, 0.5, 0.9), CriticalityKind.SUPERCRITICAL, False),
    ],
)
def test_classify_examples(abcd, kind, ident):
    c = classify(MeanMatrix(*abcd), 1e-9)
    assert c.kind is kind
    assert c.critical_identity is ident


def test_classify_identity_agrees_with_rho():
    rng = np.random.default_rng(0)
    for _ in range(1000):
        a, d = rng.uniform(0.01, 0.99, 2)
        b = rng.uniform(0.05, 2)
        c = classify(MeanMatrix.critical(a, d, b), 1e-9)
        assert c.critical_identity
        assert c.kind is CriticalityKind.CRITICAL
        assert abs(c.rho - 1) <= 10 * 1e-9


def test_grad_examples():
    assert_allclose(grad_spectral_radius(MeanMatrix(0.2, 0.3, 0.3, 0.2)), np.full((2, 2), 0.5), atol=1e-14)
    assert_allclose(grad_spectral_radius(MeanMatrix(0.4, 0.9, 0.9, 0.4)), np.full((2, 2), 0.5), atol=1e-14)


def _fd_grad(m, h=1e-6):
    # g[j, i] = d rho / d m[j, i]
    g = np.empty((2, 2))
    base = m.array
    for j in range(2):
        for i in range(2):
            up, dn = base.copy(), base.copy()
            up[j, i] += h
            dn[j, i] -= h
            g[j, i] = (spectral_radius(MeanMatrix.from_array(up)) - spectral_radius(MeanMatrix.from_array(dn))) / (2 * h)
    return g


def test_grad_is_transposed_gradient():
    m = MeanMatrix(0.2, 0.3, 1.6, 0.4)
    assert_allclose(grad_spectral_radius(m), _fd_grad(m).T, atol=1e-6)
    rng = np.random.default_rng(5)
    for _ in range(50):
        m = MeanMatrix(*rng.uniform(0.05, 1.5, 4))
        assert_allclose(grad_spectral_radius(m), _fd_grad(m).T, atol=1e-6)


def test_sqrt_psd_examples():
    assert_allclose(sqrt_psd_2x2(np.zeros((2, 2))), np.zeros((2, 2)), atol=0)
    assert_allclose(sqrt_psd_2x2(np.eye(2)), np.eye(2), atol=1e-15)
    v = np.full((2, 2), 0.25)
    s = sqrt_psd_2x2(v)
    assert_allclose(s @ s, v, atol=1e-10)
    assert_allclose(s, v * np.sqrt(2), atol=1e-12)


@given(st.floats(0, 3), st.floats(0, 3), st.floats(-1, 1))
def test_sqrt_psd_squares_back(p, q, r):
    c = r * np.sqrt(p * q)
    v = np.array([[p, c], [c, q]])
    s = sqrt_psd_2x2(v)
    assert_allclose(s, s.T, atol=1e-14)
    assert_allclose(s @ s, v, atol=1e-9)


def test_sqrt_psd_rejects_bad_input():
    with pytest.raises(ValueError):
        sqrt_psd_2x2(np.array([[1.0, 0.5], [0.0, 1.0]]))
    with pytest.raises(ValueError):
        sqrt_psd_2x2(-np.eye(2))


def test_kron2():
    assert_allclose(kron2(np.eye(2), np.eye(2)), np.eye(4))
    assert_allclose(kron2(np.ones((2, 2)), np.zeros((2, 2))), np.zeros((4, 4)))
    assert_allclose(kron2(np.diag([1, 2]), np.diag([3, 4])), np.diag([3, 4, 6, 8]))
