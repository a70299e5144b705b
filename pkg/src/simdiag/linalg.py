"""Dense matrix utilities shared by every test statistic.

All matrices are real ``numpy`` arrays. Vectorization is column-major
(``vec`` stacks columns), which fixes the index layout used by every
covariance matrix in the package: entry ``(r, s)`` of a ``d x d`` matrix
sits at position ``s * d + r`` of its ``vec``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import block_diag

# singular values below this fraction of the largest are numerical zeros
SVD_ZERO_RTOL = 1e-14
# relative distance at which epsilon is considered to collide with a singular value
COLLISION_RTOL = 1e-12
COLLISION_NUDGE = 1e-9


def vec(A):
    """Stack the columns of ``A`` into a 1-d array."""
    A = np.asarray(A, dtype=float)
    return A.reshape(-1, order="F")


def mat(v, d=None):
    """Inverse of :func:`vec` for square matrices."""
    v = np.asarray(v, dtype=float)
    if d is None:
        d = int(round(np.sqrt(v.size)))
    if d * d != v.size:
        raise ValueError(f"vector of length {v.size} is not a vectorized {d}x{d} matrix")
    return v.reshape((d, d), order="F")


def kron(A, B):
    return np.kron(np.asarray(A, dtype=float), np.asarray(B, dtype=float))


def _square(X, name="X"):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[0] != X.shape[1]:
        raise ValueError(f"{name} must be square, got shape {X.shape}")
    return X


def commutator(A, B):
    """Return ``AB - BA``."""
    A = _square(A, "A")
    B = _square(B, "B")
    if A.shape != B.shape:
        raise ValueError(f"dimension mismatch: {A.shape} vs {B.shape}")
    return A @ B - B @ A


def lambda_op(X):
    """``I_d (x) X - X' (x) I_d``, the derivative of ``vec([A, X])`` in ``vec(A)`` up to sign."""
    X = _square(X)
    eye = np.eye(X.shape[0])
    return np.kron(eye, X) - np.kron(X.T, eye)


@dataclass(frozen=True)
class TruncatedSvd:
    """Singular value decomposition with singular values ``<= epsilon`` dropped.

    ``epsilon`` is the threshold actually applied, which may differ from the
    requested one by a small upward nudge when the request sits on top of a
    singular value (``nudged`` records this).
    """

    u: np.ndarray
    singular_values: np.ndarray
    w: np.ndarray
    epsilon: float
    requested_epsilon: float
    shape: tuple
    nudged: bool = False
    _keep: np.ndarray = field(default=None, repr=False)

    @property
    def effective_rank(self):
        return int(np.count_nonzero(self._keep))

    @property
    def truncated(self):
        s = np.where(self._keep, self.singular_values, 0.0)
        return (self.u * s) @ self.w.T

    @property
    def pinv(self):
        s = self.singular_values
        inv = np.zeros_like(s)
        inv[self._keep] = 1.0 / s[self._keep]
        return (self.w * inv) @ self.u.T

    @property
    def retained(self):
        """Singular triplets ``(u_r, s_r, w_r)`` that survive truncation."""
        k = self._keep
        return self.u[:, k], self.singular_values[k], self.w[:, k]


def truncated_svd(Psi, epsilon=0.0):
    """Truncated SVD of ``Psi`` at threshold ``epsilon``.

    Singular values below ``1e-14`` times the largest are set to zero before
    truncation. If ``epsilon > 0`` lies within relative distance ``1e-12`` of
    a singular value it is moved up by ``1e-9`` times the largest singular
    value, so the threshold never coincides with the spectrum.
    """
    Psi = np.asarray(Psi, dtype=float)
    if Psi.ndim != 2:
        raise ValueError("Psi must be a matrix")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    if not np.all(np.isfinite(Psi)):
        raise ValueError("Psi has non-finite entries")
    u, s, wt = np.linalg.svd(Psi, full_matrices=False)
    smax = s[0] if s.size else 0.0
    s = np.where(s <= SVD_ZERO_RTOL * smax, 0.0, s)

    eps = float(epsilon)
    nudged = False
    if eps > 0 and smax > 0:
        for _ in range(8):
            if np.any(np.abs(s - eps) <= COLLISION_RTOL * max(eps, 1e-300)):
                eps += COLLISION_NUDGE * smax
                nudged = True
            else:
                break
    keep = s > eps
    return TruncatedSvd(
        u=u,
        singular_values=s,
        w=wt.T,
        epsilon=eps,
        requested_epsilon=float(epsilon),
        shape=Psi.shape,
        nudged=nudged,
        _keep=keep,
    )


def offdiag_selector(d):
    """0/1 matrix ``S_d`` with ``S_d @ vec(X)`` = off-diagonal entries of ``X``.

    Rows follow column-major order of ``vec(X)`` with diagonal slots skipped,
    so for ``d = 2`` the output is ``(X[1, 0], X[0, 1])``.
    """
    if d < 2:
        raise ValueError("offdiag_selector needs d >= 2")
    idx = [j * d + i for j in range(d) for i in range(d) if i != j]
    S = np.zeros((len(idx), d * d))
    S[np.arange(len(idx)), idx] = 1.0
    return S


def offvec(X):
    X = _square(X)
    d = X.shape[0]
    mask = ~np.eye(d, dtype=bool)
    return X.T[mask.T]  # column-major traversal skipping the diagonal


def duplication_matrix(d):
    """``G_d`` with ``G_d @ vech(A) = vec(A)`` for symmetric ``A``."""
    if d < 1:
        raise ValueError("d must be positive")
    G = np.zeros((d * d, d * (d + 1) // 2))
    col = 0
    for j in range(d):
        for i in range(j, d):
            G[j * d + i, col] = 1.0
            G[i * d + j, col] = 1.0
            col += 1
    return G


def vech(A):
    """Lower-triangular half of a symmetric matrix, column by column."""
    A = _square(A, "A")
    d = A.shape[0]
    return np.concatenate([A[j:, j] for j in range(d)])


def power_basis(M):
    """Columns ``vec(M^j) / ||M^j||_F`` for ``j = 1..d``."""
    M = _square(M, "M")
    d = M.shape[0]
    cols = []
    power = np.eye(d)
    for j in range(1, d + 1):
        power = power @ M
        norm = np.linalg.norm(power)
        if norm == 0.0 or not np.isfinite(norm):
            raise ValueError(f"matrix power {j} is zero or non-finite; M must have non-zero eigenvalues")
        cols.append(vec(power) / norm)
    return np.column_stack(cols)


def blkdiag(blocks):
    return block_diag(*[np.atleast_2d(np.asarray(b, dtype=float)) for b in blocks])


def off2(X):
    """Sum of squared off-diagonal entries."""
    X = np.asarray(X, dtype=float)
    return float(np.sum(X[~np.eye(X.shape[0], dtype=bool)] ** 2))


def solve_similarity(V, A):
    """``V^{-1} A V`` via a linear solve."""
    return np.linalg.solve(V, A @ V)


def householder_completion(x):
    """Orthogonal matrix whose first column is ``x / ||x||``."""
    x = np.asarray(x, dtype=float).ravel()
    n = x.size
    norm = np.linalg.norm(x)
    if norm == 0:
        raise ValueError("cannot complete a zero vector")
    u = x / norm
    e1 = np.zeros(n)
    e1[0] = 1.0
    v = u - e1
    vn = np.linalg.norm(v)
    if vn < 1e-15:
        return np.eye(n)
    v /= vn
    return np.eye(n) - 2.0 * np.outer(v, v)
