"""Dense linear algebra for the small matrices that appear in certificates.

Everything here works on 2-D float ``numpy`` arrays, but the solvers are
written out explicitly (Gaussian elimination, cyclic Jacobi) instead of
calling LAPACK, so that their tolerances and failure modes are fixed and
documented. Sizes are assumed to be desk scale, ``n <= ~20``.
"""

from __future__ import annotations

import math

import numpy as np

from .errors import NonFinite, NotPositiveDefinite, NotSymmetric, SingularSystem

__all__ = [
    "as_matrix",
    "check_symmetric",
    "symmetrize",
    "gauss_solve",
    "solve_lyapunov",
    "sym_eig",
    "max_eig",
    "min_eig",
    "sqrtm_spd",
    "inv_sqrtm_spd",
    "spectral_norm",
    "is_hurwitz",
    "least_squares",
]

SYM_RTOL = 1e-10
JACOBI_TOL = 1e-12
PINV_RTOL = 1e-10
PD_FLOOR = 1e-12
_PIVOT_RTOL = 1e-13
_MAX_SWEEPS = 100


def as_matrix(a, name: str = "matrix") -> np.ndarray:
    """Return ``a`` as a finite 2-D float array (scalars and vectors are promoted)."""
    arr = np.array(a, dtype=float)
    if arr.ndim == 0:
        arr = arr.reshape(1, 1)
    elif arr.ndim == 1:
        arr = arr.reshape(-1, 1)
    elif arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise NonFinite(f"{name} contains NaN or Inf")
    return arr


def _require_square(a: np.ndarray, name: str) -> None:
    if a.shape[0] != a.shape[1]:
        raise ValueError(f"{name} must be square, got shape {a.shape}")


def check_symmetric(s: np.ndarray, name: str = "matrix", rtol: float = SYM_RTOL) -> None:
    """Raise NotSymmetric unless ``max|S - S^T| <= rtol * max(1, max|S|)``."""
    _require_square(s, name)
    scale = max(1.0, float(np.max(np.abs(s))) if s.size else 0.0)
    if s.size and float(np.max(np.abs(s - s.T))) > rtol * scale:
        raise NotSymmetric(f"{name} is not symmetric within {rtol:g} (relative)")


def symmetrize(s: np.ndarray) -> np.ndarray:
    return 0.5 * (s + s.T)


def gauss_solve(a, b) -> np.ndarray:
    """Solve ``a @ x = b`` by Gaussian elimination with partial pivoting.

    ``b`` may hold several right-hand sides as columns. A pivot smaller than
    ``1e-13 * max|a|`` is treated as exact singularity.
    """
    a = as_matrix(a, "a")
    _require_square(a, "a")
    b = np.array(b, dtype=float)
    vector_rhs = b.ndim == 1
    b = as_matrix(b, "b")
    n = a.shape[0]
    if b.shape[0] != n:
        raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {n}")

    work = np.hstack([a, b])
    scale = float(np.max(np.abs(a))) if a.size else 0.0
    tol = _PIVOT_RTOL * scale
    if scale == 0.0:
        raise SingularSystem("coefficient matrix is zero")
    for k in range(n):
        piv = k + int(np.argmax(np.abs(work[k:, k])))
        if abs(work[piv, k]) <= tol:
            raise SingularSystem(f"zero pivot in column {k}")
        if piv != k:
            work[[k, piv]] = work[[piv, k]]
        factors = work[k + 1:, k] / work[k, k]
        work[k + 1:, k:] -= np.outer(factors, work[k, k:])

    x = np.zeros((n, b.shape[1]))
    for k in range(n - 1, -1, -1):
        x[k] = (work[k, n:] - work[k, k + 1:n] @ x[k + 1:]) / work[k, k]
    return x[:, 0] if vector_rhs else x


def solve_lyapunov(a, qs) -> np.ndarray:
    """Solve ``A^T X + X A = -Qs`` for symmetric ``X``.

    The equation is vectorized row-major, ``(A^T kron I + I kron A^T) vec(X) =
    -vec(Qs)``, and the ``n^2 x n^2`` system is solved densely.

    Raises
    ------
    SingularSystem
        If ``lambda_i(A) + lambda_j(A) = 0`` for some pair, which includes
        every ``A`` with an eigenvalue on the imaginary axis.
    """
    a = as_matrix(a, "A")
    qs = as_matrix(qs, "Qs")
    _require_square(a, "A")
    if qs.shape != a.shape:
        raise ValueError(f"Qs has shape {qs.shape}, expected {a.shape}")
    check_symmetric(qs, "Qs")
    n = a.shape[0]
    eye = np.eye(n)
    lyap = np.kron(a.T, eye) + np.kron(eye, a.T)
    x = gauss_solve(lyap, -qs.reshape(-1)).reshape(n, n)
    return symmetrize(x)


def sym_eig(s) -> tuple[np.ndarray, np.ndarray]:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Returns
    -------
    w : ndarray, shape (n,)
        Eigenvalues in ascending order.
    v : ndarray, shape (n, n)
        Orthonormal eigenvectors as columns, ``s @ v[:, i] = w[i] * v[:, i]``.
    """
    s = as_matrix(s, "S")
    check_symmetric(s, "S")
    a = symmetrize(s).copy()
    n = a.shape[0]
    v = np.eye(n)
    scale = float(np.linalg.norm(a))
    if scale == 0.0 or n == 1:
        return np.diag(a).copy(), v

    offdiag = ~np.eye(n, dtype=bool)
    for _ in range(_MAX_SWEEPS):
        if float(np.linalg.norm(a[offdiag])) <= JACOBI_TOL * scale:
            break
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= 1e-300:
                    continue
                theta = (a[q, q] - a[p, p]) / (2.0 * apq)
                if abs(theta) > 1e150:
                    t = 0.5 / theta
                else:
                    t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
                c = 1.0 / math.sqrt(t * t + 1.0)
                sn = t * c
                col_p = a[:, p].copy()
                col_q = a[:, q]
                a[:, p] = c * col_p - sn * col_q
                a[:, q] = sn * col_p + c * col_q
                row_p = a[p, :].copy()
                row_q = a[q, :]
                a[p, :] = c * row_p - sn * row_q
                a[q, :] = sn * row_p + c * row_q
                a[p, q] = a[q, p] = 0.0
                vec_p = v[:, p].copy()
                vec_q = v[:, q]
                v[:, p] = c * vec_p - sn * vec_q
                v[:, q] = sn * vec_p + c * vec_q
    else:
        raise ArithmeticError("Jacobi iteration did not converge")

    w = np.diag(a).copy()
    order = np.argsort(w, kind="stable")
    return w[order], v[:, order]


def max_eig(s) -> float:
    return float(sym_eig(s)[0][-1])


def min_eig(s) -> float:
    return float(sym_eig(s)[0][0])


def _spd_eig(m) -> tuple[np.ndarray, np.ndarray]:
    w, v = sym_eig(m)
    if w[0] <= PD_FLOOR:
        raise NotPositiveDefinite(f"smallest eigenvalue {w[0]:.3e} <= {PD_FLOOR:g}")
    return w, v


def sqrtm_spd(m) -> np.ndarray:
    """Principal square root of a symmetric positive definite matrix."""
    w, v = _spd_eig(m)
    return symmetrize((v * np.sqrt(w)) @ v.T)


def inv_sqrtm_spd(m) -> np.ndarray:
    w, v = _spd_eig(m)
    return symmetrize((v / np.sqrt(w)) @ v.T)


def spectral_norm(a) -> float:
    """Induced 2-norm, ``sqrt(lambda_max(A^T A))``."""
    a = as_matrix(a, "A")
    if a.size == 0:
        return 0.0
    gram = a.T @ a if a.shape[1] <= a.shape[0] else a @ a.T
    return math.sqrt(max(0.0, max_eig(symmetrize(gram))))


def is_hurwitz(a) -> bool:
    """Lyapunov test: ``A`` is Hurwitz iff ``A^T X + X A = -I`` has a PD solution."""
    a = as_matrix(a, "A")
    _require_square(a, "A")
    try:
        x = solve_lyapunov(a, np.eye(a.shape[0]))
        return min_eig(x) > 0.0
    except (SingularSystem, ArithmeticError):
        return False


def least_squares(a, b) -> np.ndarray:
    """Minimum-Frobenius-norm minimizer of ``||A X - B||_F``.

    Uses the eigendecomposition of ``A^T A``; eigenvalues below
    ``1e-10 * lambda_max`` are treated as zero. One step of iterative
    refinement is applied, which keeps the solution in the row space of ``A``.
    """
    a = as_matrix(a, "A")
    b = np.array(b, dtype=float)
    vector_rhs = b.ndim == 1
    b = as_matrix(b, "B")
    if b.shape[0] != a.shape[0]:
        raise ValueError(f"B has {b.shape[0]} rows, expected {a.shape[0]}")
    w, v = sym_eig(symmetrize(a.T @ a))
    if w.size == 0 or w[-1] <= 0.0:
        x = np.zeros((a.shape[1], b.shape[1]))
        return x[:, 0] if vector_rhs else x
    keep = w > PINV_RTOL * w[-1]
    vk = v[:, keep]
    pinv_gram = (vk / w[keep]) @ vk.T

    x = pinv_gram @ (a.T @ b)
    x = x + pinv_gram @ (a.T @ (b - a @ x))
    return x[:, 0] if vector_rhs else x
