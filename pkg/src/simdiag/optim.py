"""Optimizers used to supply eigenvector guesses to the tests.

* :func:`joint_diagonalize` -- non-orthogonal approximate joint diagonalizer
  minimizing ``sum_i off2(V^{-1} A_i V)``.
* :func:`partial_subspace` -- orthogonal ``Q`` whose first ``k`` columns span a
  subspace invariant under every ``A_i'`` (column-by-column warm-up followed by
  Gauss-Newton on the orthogonal group).
* :func:`fit_partial_eigvecs` -- ``(Q, V~)`` for the partial test: the two
  optimizers above, then a joint least-squares polish of both.
* :func:`simplex_qp_stationary` -- common stationary vector of several
  transition matrices by away-step Frank-Wolfe.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import expm, schur
from scipy.optimize import least_squares

from . import linalg as la


COND_LIMIT = 1e12


@dataclass
class OptimOptions:
    max_iter: int = 200
    tol: float = 1e-10
    seed: int = 0


@dataclass(frozen=True)
class JointDiagResult:
    v_hat: np.ndarray
    off_value: float
    iterations: int
    converged: bool
    initial_off_value: float = float("nan")
    history: list = field(default_factory=list, repr=False)


@dataclass(frozen=True)
class PartialSubspaceResult:
    q_hat: np.ndarray
    k: int
    objective: float
    warmup_objective: float
    converged: bool
    iterations: int = 0


def _as_stack(matrices):
    As = np.asarray([np.asarray(m, dtype=float) for m in matrices])
    if As.ndim != 3 or As.shape[1] != As.shape[2]:
        raise ValueError("matrices must be a non-empty list of equal-size square matrices")
    return As


def off_criterion(V, matrices):
    """``sum_i off2(V^{-1} A_i V)``."""
    V = np.asarray(V, dtype=float)
    return float(sum(la.off2(la.solve_similarity(V, A)) for A in matrices))


def normalize_columns(V):
    """Unit-norm columns with the largest-magnitude entry of each made positive."""
    V = np.array(V, dtype=float)
    V /= np.linalg.norm(V, axis=0)
    idx = np.argmax(np.abs(V), axis=0)
    signs = np.sign(V[idx, np.arange(V.shape[1])])
    signs[signs == 0] = 1.0
    return V * signs


def _real_eigvecs(A, imag_tol=1e-10):
    evals, evecs = np.linalg.eig(A)
    if np.max(np.abs(evals.imag), initial=0.0) > imag_tol * max(1.0, np.max(np.abs(evals))):
        return None
    V = np.real(evecs)
    if np.linalg.cond(V) > COND_LIMIT:
        return None
    return V


def _initial_diagonalizer(As, rng):
    V = _real_eigvecs(As[0])
    if V is not None:
        return V
    for _ in range(5):
        w = rng.dirichlet(np.ones(len(As)))
        V = _real_eigvecs(np.tensordot(w, As, axes=1))
        if V is not None:
            return V
    warnings.warn("complex eigenvalues in every initialization; starting from real Schur vectors", RuntimeWarning, stacklevel=3)
    _, Z = schur(As[0], output="real")
    return Z


def joint_diagonalize(matrices, max_iter=200, tol=1e-10, seed=0):
    """Approximate joint diagonalizer of possibly asymmetric matrices.

    Each sweep linearizes ``V <- V (I + W)`` (``W`` with zero diagonal), solves
    the least-squares problem for the off-diagonal entries of all
    ``V^{-1} A_i V`` at once and halves the step until the criterion drops.
    """
    As = _as_stack(matrices)
    if not np.any(As):
        raise ValueError("all input matrices are zero")
    d = As.shape[1]
    rng = np.random.default_rng(seed)
    V = normalize_columns(_initial_diagonalizer(As, rng))
    if d == 1:
        return JointDiagResult(np.ones((1, 1)), 0.0, 0, True, 0.0)
    S = la.offdiag_selector(d)
    f = off_criterion(V, As)
    f0 = f
    history = [f]
    converged = f == 0.0
    it = 0
    while not converged and it < max_iter:
        it += 1
        Xs = [la.solve_similarity(V, A) for A in As]
        J = np.vstack([S @ la.lambda_op(X) @ S.T for X in Xs])
        r = np.concatenate([la.offvec(X) for X in Xs])
        w, *_ = np.linalg.lstsq(J, -r, rcond=None)
        W = la.mat(S.T @ w, d)
        step, accepted = 1.0, False
        for _ in range(30):
            cand = V @ (np.eye(d) + step * W)
            if np.linalg.cond(cand) < COND_LIMIT:
                cand = normalize_columns(cand)
                f_new = off_criterion(cand, As)
                if f_new < f:
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            converged = True
            break
        rel = (f - f_new) / f
        V, f = cand, f_new
        history.append(f)
        if rel < tol or f < 1e-30:
            converged = True
    # column order: descending eigenvalue estimate of the first matrix
    order = np.argsort(-np.diag(la.solve_similarity(V, As[0])), kind="stable")
    V = V[:, order]
    return JointDiagResult(V, off_criterion(V, As), it, converged, f0, history)


def partial_objective(Q, matrices, k):
    """``sum_i ||Q_k' A_i Q_rest||_F^2``, the top-right block energy."""
    Q = np.asarray(Q, dtype=float)
    return float(sum(np.sum((Q[:, :k].T @ A @ Q[:, k:]) ** 2) for A in matrices))


def _single_vector_objective(p, As):
    # ||p' A P||^2 with [p P] orthogonal equals ||A' p||^2 - (p' A p)^2
    Atp = np.einsum("iba,b->ia", As, p)
    pap = np.einsum("a,iab,b->i", p, As, p)
    return float(np.sum(Atp**2) - np.sum(pap**2))


def _single_vector_grad(p, As):
    G = np.einsum("iab,icb->ac", As, As)  # sum A A'
    pap = np.einsum("a,iab,b->i", p, As, p)
    H = G - np.einsum("i,iab->ab", pap, As + As.transpose(0, 2, 1))
    return 2.0 * H @ p


def _refine_single_vector(p, As, max_iter=100, tol=1e-14):
    p = p / np.linalg.norm(p)
    f = _single_vector_objective(p, As)
    for _ in range(max_iter):
        g = _single_vector_grad(p, As)
        g -= (g @ p) * p  # project onto the tangent space of the sphere
        gn = g @ g
        if gn < tol * max(f, 1e-300) or f < 1e-30:
            break
        step = 1.0 / max(np.sqrt(gn), 1e-12)
        step = min(step, 1.0)
        for _ in range(40):
            cand = p - step * g
            cand /= np.linalg.norm(cand)
            fc = _single_vector_objective(cand, As)
            if fc <= f - 1e-4 * step * gn:
                break
            step *= 0.5
        else:
            break
        p, f = cand, fc
    return p, f


def _best_single_vector(As):
    """Unit vector ``p`` minimizing ``sum_i ||p' A_i P||^2`` over the sphere.

    Candidates are real parts of the eigenvectors of every ``A_i'`` (exact
    minimizers when a left eigenvector is shared) plus the bottom eigenvector
    of ``sum A_i A_i'``; the best few are refined by Riemannian descent.
    """
    m = As.shape[1]
    cands = []
    for A in As:
        _, vecs = np.linalg.eig(A.T)
        for j in range(m):
            v = np.real(vecs[:, j])
            nv = np.linalg.norm(v)
            if nv > 1e-12:
                cands.append(v / nv)
    _, ev = np.linalg.eigh(np.einsum("iab,icb->ac", As, As))
    cands.append(ev[:, 0])
    scored = sorted(((_single_vector_objective(c, As), i) for i, c in enumerate(cands)))
    best_p, best_f = None, np.inf
    for f, i in scored[:3]:
        p, fr = _refine_single_vector(cands[i], As)
        if fr < best_f:
            best_p, best_f = p, fr
    return best_p, best_f


def _warmup(As, k):
    d = As.shape[1]
    Q = np.eye(d)
    cur = As.copy()
    for i in range(k):
        p, _ = _best_single_vector(cur)
        O = la.householder_completion(p)  # first column p, rest complete the basis
        Q[:, i:] = Q[:, i:] @ O
        P = O[:, 1:]
        cur = np.einsum("ab,iac,cd->ibd", P, cur, P)
    return Q


def _gn_parts(Q, As, k):
    d = Q.shape[0]
    res, jac = [], []
    eye_k, eye_r = np.eye(k), np.eye(d - k)
    for A in As:
        T = Q.T @ A @ Q
        B, C, F = T[:k, :k], T[:k, k:], T[k:, k:]
        res.append(la.vec(C))
        jac.append(np.kron(eye_r, B) - np.kron(F.T, eye_k))
    return np.concatenate(res), np.vstack(jac)


def _rotation(X, k, d):
    S = np.zeros((d, d))
    S[:k, k:] = X
    S[k:, :k] = -X.T
    return expm(S)


def _reorthogonalize(Q):
    U, _, Wt = np.linalg.svd(Q)
    return U @ Wt


def partial_subspace(matrices, k, max_iter=200, tol=1e-10, seed=0):
    """Orthogonal ``Q`` approximately zeroing the top-right ``k x (d-k)`` block of every ``Q' A_i Q``."""
    As = _as_stack(matrices)
    d = As.shape[1]
    if not 1 <= k < d:
        raise ValueError(f"k must satisfy 1 <= k < d, got k={k}, d={d}")
    Q = _reorthogonalize(_warmup(As, k))
    f_warm = partial_objective(Q, As, k)
    f = f_warm
    converged = f < 1e-30
    it = 0
    while not converged and it < max_iter:
        it += 1
        r, J = _gn_parts(Q, As, k)
        x, *_ = np.linalg.lstsq(J, -r, rcond=None)
        X = x.reshape((k, d - k), order="F")
        step, accepted = 1.0, False
        for _ in range(30):
            cand = _reorthogonalize(Q @ _rotation(step * X, k, d))
            f_new = partial_objective(cand, As, k)
            if f_new < f:
                accepted = True
                break
            step *= 0.5
        if not accepted:
            # no descent along the Gauss-Newton direction: a stationary point
            converged = True
            break
        rel = (f - f_new) / f
        Q, f = cand, f_new
        if rel < tol or f < 1e-30:
            converged = True
    if not np.isfinite(f):
        Q = _reorthogonalize(_warmup(As, k))
        return PartialSubspaceResult(Q, k, partial_objective(Q, As, k), f_warm, False, it)
    return PartialSubspaceResult(Q, k, partial_objective(Q, As, k), f_warm, converged, it)


@dataclass(frozen=True)
class PartialFit:
    q_hat: np.ndarray
    v_tilde: np.ndarray
    k: int
    residual_norm2: float
    subspace: PartialSubspaceResult = field(repr=False)

    @property
    def shared_vectors(self):
        """Estimated shared left eigenvectors ``Q_k V~^{-T}`` (``V~`` acts on the right of the blocks)."""
        return self.q_hat[:, : self.k] @ np.linalg.inv(self.v_tilde).T


def partial_joint_residual(Q, V, matrices, k):
    """Stacked ``(offvec(V^{-1} B_i V), vec(C_i))`` over all ``Q' A_i Q = [[B_i, C_i], ...]``."""
    out = []
    for A in matrices:
        T = Q.T @ A @ Q
        if k >= 2:
            out.append(la.offvec(la.solve_similarity(V, T[:k, :k])))
        out.append(la.vec(T[:k, k:]))
    return np.concatenate(out)


def fit_partial_eigvecs(matrices, k, max_iter=200, tol=1e-10, seed=0, polish=True):
    """Estimate ``Q`` and ``V~`` for the partial test; see :attr:`PartialFit.shared_vectors`.

    The subspace comes from :func:`partial_subspace` and ``V~`` from
    :func:`joint_diagonalize` on the top-left blocks. Fitting ``Q`` to the
    top-right blocks alone leaves its error in the top-left blocks, so with
    ``polish`` both are refined together on the full residual
    (``Q <- Q expm(S)``, ``V~`` free).
    """
    As = _as_stack(matrices)
    d = As.shape[1]
    sub = partial_subspace(As, k, max_iter=max_iter, tol=tol, seed=seed)
    Q = sub.q_hat
    if k == 1:
        V = np.ones((1, 1))
    else:
        V = joint_diagonalize([(Q.T @ A @ Q)[:k, :k] for A in As], max_iter=max_iter, tol=tol, seed=seed).v_hat
    r0 = partial_joint_residual(Q, V, As, k)
    if polish and np.any(r0):
        m = k * (d - k)

        def unpack(z):
            return Q @ _rotation(z[:m].reshape((k, d - k), order="F"), k, d), z[m:].reshape((k, k), order="F")

        def fun(z):
            Qz, Vz = unpack(z)
            return partial_joint_residual(Qz, Vz, As, k)

        z0 = np.concatenate([np.zeros(m), la.vec(V)])
        try:
            sol = least_squares(fun, z0, method="trf", xtol=tol, ftol=tol, max_nfev=50 * max_iter)
            Qn, Vn = unpack(sol.x)
            Qn = _reorthogonalize(Qn)
            if np.linalg.cond(Vn) < COND_LIMIT and np.sum(fun(sol.x) ** 2) <= np.sum(r0**2):
                Q, V = Qn, Vn
        except np.linalg.LinAlgError:
            pass
    if k >= 2:
        V = normalize_columns(V)
    r = partial_joint_residual(Q, V, As, k)
    return PartialFit(Q, V, k, float(r @ r), sub)


@dataclass(frozen=True)
class SimplexQpResult:
    x: np.ndarray
    objective: float
    gap: float
    iterations: int
    converged: bool
    history: list = field(default_factory=list, repr=False)


def stationarity_objective(x, p_hats):
    """``sum_i ||(P_i' - I) x||^2``."""
    x = np.asarray(x, dtype=float)
    return float(sum(np.sum((P.T @ x - x) ** 2) for P in p_hats))


def simplex_qp_stationary(p_hats, max_iter=100000, tol=None, record=False):
    """Minimize ``sum_i x'(P_i - I)(P_i' - I)x`` over the probability simplex.

    Away-step Frank-Wolfe with exact line search on the quadratic; stops once
    the Frank-Wolfe duality gap falls below ``tol`` (default ``1e-12 * p * d``).
    """
    Ps = [np.asarray(P, dtype=float) for P in p_hats]
    if not Ps:
        raise ValueError("need at least one transition matrix")
    d = Ps[0].shape[0]
    if d < 2:
        raise ValueError("need d >= 2")
    for P in Ps:
        if P.shape != (d, d) or np.any(P < -1e-6) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-6):
            raise ValueError("inputs must be row-stochastic matrices of equal size")
    if tol is None:
        tol = 1e-12 * len(Ps) * d
    eye = np.eye(d)
    H = sum((P - eye) @ (P.T - eye) for P in Ps)
    H = 0.5 * (H + H.T)

    x = np.full(d, 1.0 / d)
    history = [float(x @ H @ x)] if record else []
    gap, it, converged = np.inf, 0, False
    for it in range(1, max_iter + 1):
        grad = 2.0 * H @ x
        s = int(np.argmin(grad))
        gap = float(grad @ x - grad[s])
        if gap < tol:
            converged = True
            break
        active = np.flatnonzero(x > 0)
        a = active[int(np.argmax(grad[active]))]
        away_gap = float(grad[a] - grad @ x)
        if gap >= away_gap:
            direction = -x.copy()
            direction[s] += 1.0
            gmax = 1.0
        else:
            direction = x.copy()
            direction[a] -= 1.0
            gmax = x[a] / (1.0 - x[a]) if x[a] < 1.0 else np.inf
        curv = float(direction @ H @ direction)
        slope = float(grad @ direction)
        gamma = gmax if curv <= 0 else min(-slope / (2.0 * curv), gmax)
        if gamma <= 0:
            converged = True
            break
        x = x + gamma * direction
        x[np.abs(x) < 1e-300] = 0.0
        x = np.clip(x, 0.0, None)
        x /= x.sum()
        if record:
            history.append(float(x @ H @ x))
    return SimplexQpResult(x, stationarity_objective(x, Ps), gap, it, converged, history)
