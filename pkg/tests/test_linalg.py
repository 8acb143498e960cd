import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from s3gnn.linalg import (ConvergenceError, entrywise_l1, frobenius, kron,
                          matmul, power_iteration_sym, sigma_min,
                          spectral_norm, sym_eig)
from s3gnn.rng import Rng


def rand_mat(rows, cols, seed):
    return Rng(seed).uniform_matrix(rows, cols, -1.0, 1.0)


# --- matmul ---------------------------------------------------------------

def test_matmul_identity():
    b = np.array([[2.0, 3.0], [4.0, 5.0]])
    assert np.array_equal(matmul(np.eye(2), b), b)


def test_matmul_dot():
    assert matmul(np.array([[1.0, 2.0]]), np.array([[3.0], [4.0]]))[0, 0] == 11.0


def test_matmul_shape_error_names_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\) x \(2, 3\)"):
        matmul(np.ones((2, 3)), np.ones((2, 3)))


# --- spectral norm --------------------------------------------------------

def test_spectral_norm_identity():
    assert spectral_norm(np.eye(3)) == pytest.approx(1.0, abs=1e-12)


def test_spectral_norm_diagonal():
    assert spectral_norm(np.diag([3.0, -5.0])) == pytest.approx(5.0, abs=1e-9)


def test_spectral_norm_vs_jacobi_oracle():
    m = rand_mat(6, 6, 42)
    w, _ = sym_eig(m.T @ m)
    assert spectral_norm(m, tol=1e-13) == pytest.approx(np.sqrt(w[-1]), abs=1e-8)


def test_spectral_norm_nonconvergence_carries_estimate():
    m = np.diag([2.0, 1.0])
    with pytest.raises(ConvergenceError) as exc:
        spectral_norm(m, tol=1e-300, max_iter=3)
    assert exc.value.last_estimate > 0


def test_spectral_norm_agrees_with_jacobi_up_to_20x20():
    for n in (2, 5, 11, 20):
        m = rand_mat(n, n, 100 + n)
        w, _ = sym_eig(m.T @ m)
        assert spectral_norm(m, tol=1e-13, max_iter=100000) == pytest.approx(
            np.sqrt(max(w[-1], 0.0)), abs=1e-8)


# --- sym_eig --------------------------------------------------------------

def test_sym_eig_diagonal():
    w, v = sym_eig(np.diag([3.0, 1.0, 2.0]))
    assert np.allclose(w, [1.0, 2.0, 3.0])
    # eigenvector columns are permutation of identity columns up to sign
    assert np.allclose(np.abs(v), np.eye(3)[:, [1, 2, 0]])


def test_sym_eig_2x2_closed_form():
    w, _ = sym_eig(np.array([[0.0, 1.0], [1.0, 0.0]]))
    assert np.allclose(w, [-1.0, 1.0])


def test_sym_eig_path3_laplacian_kernel():
    # oracle: characteristic polynomial of P3 Laplacian is x(x-1)(x-3)
    lap = np.array([[1.0, -1.0, 0.0], [-1.0, 2.0, -1.0], [0.0, -1.0, 1.0]])
    w, v = sym_eig(lap)
    assert np.allclose(w, [0.0, 1.0, 3.0], atol=1e-12)
    kernel = v[:, 0]
    assert np.allclose(np.abs(kernel), 1.0 / np.sqrt(3.0), atol=1e-10)


def test_sym_eig_rejects_asymmetric():
    with pytest.raises(ValueError, match="asymmetric"):
        sym_eig(np.array([[0.0, 1.0], [0.0, 0.0]]))


def test_sym_eig_reconstruction_and_orthonormality():
    for n in (2, 3, 7, 13, 20):
        m = rand_mat(n, n, n)
        m = m + m.T
        w, v = sym_eig(m)
        assert np.linalg.norm(v @ np.diag(w) @ v.T - m) <= 1e-10 * max(np.linalg.norm(m), 1)
        assert np.linalg.norm(v.T @ v - np.eye(n)) <= 1e-10
        assert np.all(np.diff(w) >= -1e-14)


# --- kron -----------------------------------------------------------------

def test_kron_identity():
    assert np.array_equal(kron(np.eye(2), np.eye(2)), np.eye(4))


def test_kron_scalar_block():
    got = kron(np.array([[0.0, 1.0], [-1.0, 0.0]]), np.array([[2.0]]))
    assert np.array_equal(got, np.array([[0.0, 2.0], [-2.0, 0.0]]))


def test_kron_cap():
    with pytest.raises(ValueError, match="implicit"):
        kron(np.ones((100, 100)), np.ones((100, 100)), cap=4096)


def test_kron_vec_identity():
    # vec(M H W) == (W^T kron M) vec(H) with column stacking
    m, h, w = rand_mat(3, 3, 1), rand_mat(3, 3, 2), rand_mat(3, 3, 3)
    lhs = (m @ h @ w).T.ravel()
    rhs = kron(w.T, m) @ h.T.ravel()
    assert np.max(np.abs(lhs - rhs)) <= 1e-12


def test_kron_antisym_with_symmetric_is_antisym():
    s = rand_mat(4, 4, 5)
    s = s - s.T
    m = rand_mat(5, 5, 6)
    m = m + m.T
    k = kron(s.T, m)
    assert np.linalg.norm(k + k.T) == 0.0


# --- helpers --------------------------------------------------------------

def test_power_iteration_psd():
    m = rand_mat(8, 8, 9)
    gram = m.T @ m
    w, _ = sym_eig(gram)
    assert power_iteration_sym(gram, tol=1e-14, max_iter=100000) == pytest.approx(
        w[-1], abs=1e-9)


def test_sigma_min_matches_oracle():
    m = rand_mat(5, 5, 12)
    w, _ = sym_eig(m.T @ m)
    assert sigma_min(m) == pytest.approx(np.sqrt(max(w[0], 0.0)), abs=1e-10)


def test_norm_helpers():
    m = np.array([[1.0, -2.0], [2.0, 1.0]])
    assert frobenius(m) == pytest.approx(np.sqrt(10.0))
    assert entrywise_l1(m) == 6.0


@given(st.integers(2, 6), st.integers(0, 10_000))
@settings(max_examples=25, deadline=None)
def test_sym_eig_property_reconstruction(n, seed):
    m = rand_mat(n, n, seed)
    m = 0.5 * (m + m.T)
    w, v = sym_eig(m)
    assert np.linalg.norm(v @ np.diag(w) @ v.T - m) <= 1e-10 * max(1.0, np.linalg.norm(m))
