"""Dense linear-algebra kernels: Householder QR, least squares, Cholesky.

The factorizations are written directly against float64 numpy arrays so
that the LP/QP solvers and the regression paths do not depend on LAPACK
behavior.  All instances in this project are tiny (a few hundred rows at
most), so dense storage and O(n^3) factorizations are fine.
"""

from __future__ import annotations

import numpy as np

RANK_TOL = 1e-10


class LinAlgError(ValueError):
    """Rank deficiency, asymmetry, or a non-positive-definite pivot."""


def _as_matrix(a, name: str = "matrix") -> np.ndarray:
    m = np.asarray(a, dtype=float)
    if m.ndim != 2:
        raise LinAlgError(f"{name} must be 2-D, got shape {m.shape}")
    if not np.all(np.isfinite(m)):
        raise LinAlgError(f"{name} contains non-finite entries")
    return m


def _as_vector(b, name: str = "vector") -> np.ndarray:
    v = np.asarray(b, dtype=float)
    if v.ndim != 1:
        raise LinAlgError(f"{name} must be 1-D, got shape {v.shape}")
    if not np.all(np.isfinite(v)):
        raise LinAlgError(f"{name} contains non-finite entries")
    return v


def householder_qr(a) -> tuple[np.ndarray, np.ndarray]:
    """Full Householder QR of an m x n matrix: A = Q @ R.

    Q is m x m orthogonal, R is m x n upper triangular.  Used where the
    explicit orthogonal factor is needed (null-space bases in the QP
    solver); `least_squares` applies the reflectors implicitly instead.
    """
    r = _as_matrix(a).copy()
    m, n = r.shape
    q = np.eye(m)
    for j in range(min(m - 1, n)):
        x = r[j:, j]
        norm_x = np.sqrt(x @ x)
        if norm_x <= 1e-300:
            continue
        v = x.copy()
        v[0] += np.copysign(norm_x, x[0] if x[0] != 0.0 else 1.0)
        v /= np.sqrt(v @ v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        q[:, j:] -= 2.0 * np.outer(q[:, j:] @ v, v)
    # reflectors leave roundoff noise below the diagonal
    r[np.tril_indices(m, -1, n)] = 0.0
    return q, r


def solve_upper(r, y) -> np.ndarray:
    """Back substitution for upper-triangular R x = y (y may be 2-D)."""
    r = np.asarray(r, dtype=float)
    x = np.array(y, dtype=float)
    n = r.shape[0]
    for i in range(n - 1, -1, -1):
        if i + 1 < n:
            x[i] -= r[i, i + 1:] @ x[i + 1:]
        x[i] /= r[i, i]
    return x

def solve_lower(l, y) -> np.ndarray:
    """Forward substitution for lower-triangular L x = y (y may be 2-D)."""
    l = np.asarray(l, dtype=float)
    x = np.array(y, dtype=float)
    n = l.shape[0]
    for i in range(n):
        if i > 0:
            x[i] -= l[i, :i] @ x[:i]
        x[i] /= l[i, i]
    return x


def least_squares(a, b) -> np.ndarray:
    """argmin ||A x - b||_2 by Householder QR.

    Requires m >= k and full column rank; a column whose R diagonal falls
    below RANK_TOL times the largest one is reported as deficient.
    """
    r = _as_matrix(a, "A").copy()
    rhs = _as_vector(b, "b").copy()
    m, k = r.shape
    if rhs.shape[0] != m:
        raise LinAlgError(f"shape mismatch: A is {m}x{k}, b has length {rhs.shape[0]}")
    if m < k:
        raise LinAlgError(f"underdetermined system: {m} rows < {k} columns")
    for j in range(min(m - 1, k) if m > k else k - 1):
        x = r[j:, j]
        norm_x = np.sqrt(x @ x)
        if norm_x <= 1e-300:
            continue
        v = x.copy()
        v[0] += np.copysign(norm_x, x[0] if x[0] != 0.0 else 1.0)
        v /= np.sqrt(v @ v)
        r[j:, j:] -= 2.0 * np.outer(v, v @ r[j:, j:])
        rhs[j:] -= 2.0 * v * (v @ rhs[j:])
    diag = np.abs(np.diag(r[:k, :k]))
    scale = diag.max() if diag.size else 0.0
    if scale <= 0.0:
        raise LinAlgError("rank-deficient system: column 0 (zero matrix)")
    bad = np.nonzero(diag < RANK_TOL * scale)[0]
    if bad.size:
        raise LinAlgError(f"rank-deficient system: column {int(bad[0])}")
    return solve_upper(r[:k, :k], rhs[:k])


def solve_square(a, b) -> np.ndarray:
    """Solve a nonsingular square system A x = b via QR; b may be 2-D."""
    a = _as_matrix(a, "A")
    n = a.shape[0]
    if a.shape[1] != n:
        raise LinAlgError(f"matrix is not square: {a.shape}")
    if n == 0:
        return np.array(b, dtype=float)
    q, r = householder_qr(a)
    diag = np.abs(np.diag(r[:n, :n]))
    scale = diag.max() if diag.size else 0.0
    if scale <= 0.0 or np.any(diag < RANK_TOL * scale):
        raise LinAlgError("singular matrix in solve_square")
    return solve_upper(r[:n, :n], q.T @ np.asarray(b, dtype=float))


def invert(a) -> np.ndarray:
    """Dense inverse for the simplex basis refactorizations.

    Delegates to LAPACK: refactorization dominates branch-and-bound node
    cost and needs a real GETRF, not a textbook elimination.  Callers treat
    a singular basis as a recoverable condition, hence the error mapping.
    """
    a = _as_matrix(a, "A")
    n = a.shape[0]
    if a.shape[1] != n:
        raise LinAlgError(f"matrix is not square: {a.shape}")
    if n == 0:
        return np.zeros((0, 0))
    try:
        return np.linalg.inv(a)
    except np.linalg.LinAlgError:
        raise LinAlgError("singular matrix in invert") from None


def cholesky_factor(s) -> np.ndarray:
    """Lower-triangular L with L @ L.T = S for symmetric positive definite S."""
    s = _as_matrix(s, "S")
    n = s.shape[0]
    if s.shape[1] != n:
        raise LinAlgError(f"matrix is not square: {s.shape}")
    scale = max(1.0, np.abs(s).max())
    if np.abs(s - s.T).max() > 1e-10 * scale:
        raise LinAlgError("matrix is not symmetric within 1e-10")
    l = np.zeros_like(s)
    for j in range(n):
        d = s[j, j] - l[j, :j] @ l[j, :j]
        if d <= 0.0:
            raise LinAlgError(f"non-positive pivot at index {j}")
        l[j, j] = np.sqrt(d)
        if j + 1 < n:
            l[j + 1:, j] = (s[j + 1:, j] - l[j + 1:, :j] @ l[j, :j]) / l[j, j]
    return l


def cholesky_solve(s, r) -> np.ndarray:
    """Solve S x = r for symmetric positive definite S."""
    l = cholesky_factor(s)
    rhs = np.asarray(r, dtype=float)
    if rhs.shape[0] != l.shape[0]:
        raise LinAlgError("right-hand side length mismatch")
    return solve_upper(l.T, solve_lower(l, rhs))
