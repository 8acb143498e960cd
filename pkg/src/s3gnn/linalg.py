"""Dense kernels shared by the graph operators, dynamics, and analyses.

Matrices are plain float64 ``numpy`` arrays in C (row-major) order; numpy
carries the products and norms, while the two solvers this package actually
depends on for its verification routes are implemented here in full:

* :func:`sym_eig` -- cyclic Jacobi for symmetric matrices (the oracle route
  for projectors, spectral norms, and singular values),
* :func:`spectral_norm` / :func:`power_iteration_sym` -- power iteration
  (the independent route the Jacobi results are checked against).

Everything is pure and single-threaded; callers may parallelize across
independent calls.
"""

from __future__ import annotations

import numpy as np

DENSE_CAP = 4096
JACOBI_CAP = 256


class ConvergenceError(RuntimeError):
    """Iteration budget exhausted; carries the last estimate."""

    def __init__(self, message: str, last_estimate: float):
        super().__init__(message)
        self.last_estimate = last_estimate


def as_matrix(a) -> np.ndarray:
    m = np.ascontiguousarray(np.asarray(a, dtype=np.float64))
    if m.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got ndim={m.ndim}")
    return m


def check_finite(m: np.ndarray, what: str = "matrix") -> np.ndarray:
    if not np.all(np.isfinite(m)):
        raise FloatingPointError(f"{what} contains non-finite entries")
    return m


def matmul(a, b) -> np.ndarray:
    a = as_matrix(a)
    b = as_matrix(b)
    if a.shape[1] != b.shape[0]:
        raise ValueError(f"matmul dimension mismatch: {a.shape} x {b.shape}")
    return a @ b


def kron(a, b, cap: int = DENSE_CAP) -> np.ndarray:
    """Kronecker product with a guard on the dense output size."""
    a = as_matrix(a)
    b = as_matrix(b)
    rows = a.shape[0] * b.shape[0]
    cols = a.shape[1] * b.shape[1]
    if rows > cap or cols > cap:
        raise ValueError(
            f"kron output {rows}x{cols} exceeds the dense cap {cap}; "
            "use the implicit operator path instead"
        )
    return np.kron(a, b)


def spectral_norm(m, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Largest singular value via power iteration on ``m.T @ m``.

    Starts from the normalized all-ones vector (no RNG, reproducible) and
    stops when successive Rayleigh-quotient estimates of the top eigenvalue
    of the Gram matrix differ by less than ``tol``.  The all-ones start can
    in principle be orthogonal to the top eigenspace; for the random and
    graph-derived matrices used here it never is.
    """
    m = as_matrix(m)
    if m.size == 0:
        raise ValueError("spectral_norm of an empty matrix")
    if tol <= 0:
        raise ValueError(f"tol must be positive, got {tol}")
    gram = m.T @ m
    lam = power_iteration_sym(gram, tol=tol, max_iter=max_iter)
    return float(np.sqrt(max(lam, 0.0)))


def power_iteration_sym(a: np.ndarray, tol: float = 1e-10, max_iter: int = 10000) -> float:
    """Dominant eigenvalue (by magnitude) of a symmetric matrix.

    Rayleigh-quotient estimates; successive-difference stopping rule.
    For positive semidefinite input this is the maximum eigenvalue.
    """
    n = a.shape[0]
    v = np.full(n, 1.0 / np.sqrt(n))
    lam = float(v @ (a @ v))
    for _ in range(max_iter):
        w = a @ v
        norm = float(np.linalg.norm(w))
        if norm == 0.0:
            return 0.0
        v = w / norm
        lam_new = float(v @ (a @ v))
        if abs(lam_new - lam) < tol:
            return lam_new
        lam = lam_new
    raise ConvergenceError(
        f"power iteration did not converge within {max_iter} iterations "
        f"(last estimate {lam})",
        last_estimate=lam,
    )


def power_iteration_sym_robust(a: np.ndarray, tol: float = 1e-11,
                               max_iter: int = 300000,
                               seeds: tuple = (0x5EED0001, 0x5EED0002)) -> float:
    """Largest eigenvalue of a symmetric PSD matrix, hardened power iteration.

    The all-ones start of :func:`power_iteration_sym` can be exactly
    orthogonal to the top eigenspace for Kronecker-structured matrices, so
    this variant starts from fixed seeded pseudo-random vectors (still fully
    deterministic), stops on the eigenpair residual |A v - lam v| rather
    than on successive Rayleigh differences, and keeps the best of the
    restarts.
    """
    from .rng import Rng

    n = a.shape[0]
    best = 0.0
    for seed in seeds:
        v = Rng(seed).uniform_array(n, -1.0, 1.0)
        norm = float(np.linalg.norm(v))
        if norm == 0.0:
            continue
        v /= norm
        lam = 0.0
        for _ in range(max_iter):
            w = a @ v
            wnorm = float(np.linalg.norm(w))
            if wnorm == 0.0:
                lam = 0.0
                break
            v = w / wnorm
            av = a @ v
            lam = float(v @ av)
            if float(np.linalg.norm(av - lam * v)) <= tol * max(1.0, abs(lam)):
                break
        best = max(best, lam)
    return best


def sym_eig(m, off_tol: float = 1e-12, max_sweeps: int = 100):
    """Full eigendecomposition of a symmetric matrix by cyclic Jacobi.

    Returns ``(eigenvalues, eigenvectors)`` with eigenvalues ascending and
    eigenvectors in the matching columns.  Sweeps run until every
    off-diagonal entry is below ``off_tol`` times the matrix scale.

    Raises ``ValueError`` if the input is asymmetric beyond 1e-12 (the
    message carries the worst asymmetry) and ``ConvergenceError`` if the
    sweep budget runs out.
    """
    m = as_matrix(m)
    n = m.shape[0]
    if n == 0:
        raise ValueError("sym_eig of an empty matrix")
    if m.shape[0] != m.shape[1]:
        raise ValueError(f"sym_eig requires a square matrix, got {m.shape}")
    asym = float(np.max(np.abs(m - m.T))) if n > 1 else 0.0
    if asym > 1e-12:
        raise ValueError(f"sym_eig input is asymmetric by {asym:.3e}")
    if n > JACOBI_CAP:
        raise ValueError(f"sym_eig capped at {JACOBI_CAP}x{JACOBI_CAP}, got {n}")

    a = 0.5 * (m + m.T)
    v = np.eye(n)
    scale = max(1.0, float(np.linalg.norm(a)))
    thresh = off_tol * scale

    for _ in range(max_sweeps):
        off = _max_offdiag(a, n)
        if off < thresh:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) < thresh:
                    continue
                _jacobi_rotate(a, v, p, q)
    else:
        raise ConvergenceError(
            f"Jacobi sweeps did not reduce off-diagonal below {thresh:.3e} "
            f"within {max_sweeps} sweeps",
            last_estimate=_max_offdiag(a, n),
        )

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], np.ascontiguousarray(v[:, order])


def _max_offdiag(a: np.ndarray, n: int) -> float:
    if n == 1:
        return 0.0
    mask = ~np.eye(n, dtype=bool)
    return float(np.max(np.abs(a[mask])))


def _jacobi_rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    apq = a[p, q]
    tau = (a[q, q] - a[p, p]) / (2.0 * apq)
    if tau >= 0.0:
        t = 1.0 / (tau + np.sqrt(1.0 + tau * tau))
    else:
        t = -1.0 / (-tau + np.sqrt(1.0 + tau * tau))
    c = 1.0 / np.sqrt(1.0 + t * t)
    s = t * c

    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    # the rotation annihilates this pair by construction
    a[p, q] = 0.0
    a[q, p] = 0.0

    vcol_p = v[:, p].copy()
    vcol_q = v[:, q].copy()
    v[:, p] = c * vcol_p - s * vcol_q
    v[:, q] = s * vcol_p + c * vcol_q


def sigma_min(m: np.ndarray) -> float:
    """Smallest singular value via the Jacobi eigensolve of the Gram matrix."""
    m = as_matrix(m)
    w, _ = sym_eig(m.T @ m)
    return float(np.sqrt(max(w[0], 0.0)))


def frobenius(m: np.ndarray) -> float:
    return float(np.linalg.norm(m))


def entrywise_l1(m: np.ndarray) -> float:
    return float(np.sum(np.abs(m)))
