"""Small dense linear-algebra kernel.

Matrices are plain ``numpy.ndarray`` objects (row-major, float64). Everything
here is a pure function of its inputs.
"""

from __future__ import annotations

import warnings

import numpy as np
import scipy.linalg

from .errors import NoConvergence, SingularMatrix

PIVOT_RTOL = 1e-14


def _as_matrix(A) -> np.ndarray:
    A = np.asarray(A, dtype=float)
    if A.ndim != 2:
        raise ValueError(f"expected a 2-D matrix, got shape {A.shape}")
    if not np.all(np.isfinite(A)):
        raise ValueError("matrix has non-finite entries")
    return A


class LUFactorization:
    """LU factorization with partial pivoting, reusable for many right-hand sides.

    Raises
    ------
    SingularMatrix
        If a pivot magnitude falls below ``1e-14`` times the largest entry of
        its (permuted) row of ``A``.
    """

    def __init__(self, A):
        A = _as_matrix(A)
        n, m = A.shape
        if n != m:
            raise ValueError(f"LU needs a square matrix, got {A.shape}")
        self.n = n
        if n == 0:
            self._lu = (np.zeros((0, 0)), np.zeros(0, dtype=np.int32))
            return
        with warnings.catch_warnings():
            warnings.simplefilter("ignore")
            lu, piv = scipy.linalg.lu_factor(A, check_finite=False)
        # LAPACK pivots are sequential row swaps; replay them to find which
        # original row ended up at each position.
        perm = np.arange(n)
        for k, p in enumerate(piv):
            perm[k], perm[p] = perm[p], perm[k]
        row_scale = np.max(np.abs(A), axis=1)[perm]
        pivots = np.abs(np.diag(lu))
        bad = np.nonzero(~(pivots >= PIVOT_RTOL * row_scale) | (row_scale == 0.0))[0]
        if bad.size:
            k = int(bad[0])
            raise SingularMatrix(
                f"pivot {k} has magnitude {pivots[k]:.3e} "
                f"(row scale {row_scale[k]:.3e})",
                pivot_index=k,
            )
        self._lu = (lu, piv)

    def solve(self, b) -> np.ndarray:
        b = np.asarray(b, dtype=float)
        if b.shape[0] != self.n:
            raise ValueError(f"right-hand side has {b.shape[0]} rows, expected {self.n}")
        if self.n == 0:
            return b.copy()
        return scipy.linalg.lu_solve(self._lu, b, check_finite=False)


def lu_solve(A, b) -> np.ndarray:
    """Solve ``A x = b`` by LU with partial pivoting."""
    return LUFactorization(A).solve(b)


def inverse(A) -> np.ndarray:
    A = _as_matrix(A)
    return LUFactorization(A).solve(np.eye(A.shape[0]))


def solve_tridiagonal(lower, diag, upper, b) -> np.ndarray:
    """Banded fast path for tridiagonal systems.

    ``lower`` and ``upper`` have length ``n-1``; ``lower[i]`` sits at
    ``(i+1, i)`` and ``upper[i]`` at ``(i, i+1)``.
    """
    diag = np.asarray(diag, dtype=float)
    n = diag.size
    ab = np.zeros((3, n))
    ab[0, 1:] = upper
    ab[1, :] = diag
    ab[2, :-1] = lower
    row_scale = np.abs(diag).copy()
    row_scale[1:] = np.maximum(row_scale[1:], np.abs(lower))
    row_scale[:-1] = np.maximum(row_scale[:-1], np.abs(upper))
    if np.any(row_scale == 0.0):
        raise SingularMatrix("tridiagonal matrix has a zero row")
    try:
        return scipy.linalg.solve_banded((1, 1), ab, b, check_finite=False)
    except np.linalg.LinAlgError as exc:
        raise SingularMatrix(str(exc)) from exc


def thin_svd(S) -> tuple[np.ndarray, np.ndarray]:
    """Thin SVD of a tall matrix by the method of snapshots.

    The small ``m x m`` correlation matrix ``S^T S`` is diagonalised; left
    singular vectors are recovered from ``S V`` and re-orthonormalised with a
    QR sweep so that ``U^T U = I`` to machine precision even for tiny singular
    values.

    Parameters
    ----------
    S : (n, m) array_like with ``m <= n``

    Returns
    -------
    U : (n, m) ndarray
        Orthonormal columns.
    sigma : (m,) ndarray
        Non-negative singular values in descending order.
    """
    S = _as_matrix(S)
    n, m = S.shape
    if m > n:
        raise ValueError(f"thin_svd expects n >= m, got {S.shape}")
    if m == 0:
        return np.zeros((n, 0)), np.zeros(0)
    C = S.T @ S
    C = 0.5 * (C + C.T)
    _, V = np.linalg.eigh(C)
    W = S @ V
    # ||S v_i|| is accurate to eps * sigma_1 in absolute terms, whereas
    # sqrt(lambda_i) is only good to sqrt(eps) * sigma_1.
    sigma = np.linalg.norm(W, axis=0)
    idx = np.argsort(-sigma, kind="stable")
    sigma, W = sigma[idx], W[:, idx]
    if sigma[0] > 0.0:
        sigma[sigma <= max(n, m) * np.finfo(float).eps * sigma[0]] = 0.0
    Q, R = np.linalg.qr(W)
    d = np.diag(R)
    signs = np.where(d < 0.0, -1.0, 1.0)
    # Zero-energy columns of W still come out of QR as unit vectors
    # orthogonal to the rest, so U stays orthonormal for rank-deficient S.
    U = Q * signs
    return U, sigma


def power_norm(A, rtol=1e-8, max_iter=500) -> tuple[float, bool, int]:
    """Spectral norm by power iteration on ``A^T A``.

    Returns ``(estimate, converged, iterations)``. The estimate is a Rayleigh
    quotient, so it never exceeds the true norm.
    """
    A = _as_matrix(A)
    n = A.shape[1]
    if A.size == 0 or not np.any(A):
        return 0.0, True, 0
    rng = np.random.default_rng(12345)
    v = rng.standard_normal(n)
    v /= np.linalg.norm(v)
    lam_old = 0.0
    for it in range(1, max_iter + 1):
        w = A.T @ (A @ v)
        lam = float(v @ w)
        nw = np.linalg.norm(w)
        if nw == 0.0:
            return 0.0, True, it
        v = w / nw
        if it > 1 and abs(lam - lam_old) <= rtol * abs(lam):
            Av = A @ v
            return float(np.sqrt(Av @ Av)), True, it
        lam_old = lam
    Av = A @ v
    return float(np.sqrt(Av @ Av)), False, max_iter


def operator_norm(A, rtol=1e-8, max_iter=500) -> float:
    """Spectral (2-)norm of ``A``.

    Emits a ``NoConvergence`` warning and returns the best estimate when the
    power iteration stalls.
    """
    value, converged, iterations = power_norm(A, rtol=rtol, max_iter=max_iter)
    if not converged:
        warnings.warn(
            f"power iteration did not converge in {iterations} iterations; "
            f"returning estimate {value:.6e}",
            NoConvergence,
            stacklevel=2,
        )
    return value


def frobenius_norm(A) -> float:
    return float(np.sqrt(np.sum(np.asarray(A, dtype=float) ** 2)))
