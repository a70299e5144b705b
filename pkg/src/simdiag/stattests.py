"""Wald-type tests for shared eigenvectors.

Every test returns a :class:`TestReport`. Statistics are quadratic forms
``c_n^2 r' W r`` in a residual ``r`` that vanishes under the null; the
weight ``W`` is either a truncated pseudo-inverse of the residual's
estimated covariance (chi-squared reference) or the identity (two-moment
gamma reference).
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from .estimators import MatrixEstimate
from .statdist import (
    ChiSquared,
    Degenerate,
    as_distribution,
    box_gamma_params,
    chi2_sf,
)

LLR_WARNING = (
    "LLR reference law assumes the power bases come from known reference matrices; "
    "plugging in estimated matrices can invalidate it"
)
COND_LIMIT = 1e12
_ROUNDOFF = 64 * np.finfo(float).eps


@dataclass
class TestReport:
    """Outcome of one hypothesis test."""

    __test__ = False  # not a pytest class

    name: str
    statistic: float
    distribution: object
    p_value: float
    epsilon_used: float | None = None
    p_lower: float | None = None
    p_upper: float | None = None
    rank_diagnostics: list = field(default_factory=list)
    warnings: list = field(default_factory=list)

    def reject(self, alpha=0.05):
        return self.p_value < alpha

    def to_dict(self):
        return {
            "name": self.name,
            "statistic": float(self.statistic),
            "distribution": self.distribution.to_dict(),
            "p_value": float(self.p_value),
            "p_lower": None if self.p_lower is None else float(self.p_lower),
            "p_upper": None if self.p_upper is None else float(self.p_upper),
            "epsilon_used": None if self.epsilon_used is None else float(self.epsilon_used),
            "rank_diagnostics": [[str(k), int(v)] for k, v in self.rank_diagnostics],
            "warnings": list(self.warnings),
        }

    @classmethod
    def from_dict(cls, d):
        from .statdist import distribution_from_dict

        return cls(
            name=d["name"],
            statistic=d["statistic"],
            distribution=distribution_from_dict(d["distribution"]),
            p_value=d["p_value"],
            epsilon_used=d.get("epsilon_used"),
            p_lower=d.get("p_lower"),
            p_upper=d.get("p_upper"),
            rank_diagnostics=[tuple(x) for x in d.get("rank_diagnostics", [])],
            warnings=list(d.get("warnings", [])),
        )


def default_epsilon(n):
    return float(n) ** (-1.0 / 3.0)


def _resolve_epsilon(epsilon, estimates):
    if epsilon is None or epsilon < 0:
        return default_epsilon(min(e.n for e in estimates))
    return float(epsilon)


def _snap(residual, scale):
    """Zero residual entries that are floating-point noise relative to ``scale``."""
    r = np.array(residual, dtype=float)
    r[np.abs(r) <= _ROUNDOFF * scale] = 0.0
    return r


def _check_bundle(bundle):
    bundle = list(bundle)
    if not bundle:
        raise ValueError("empty bundle")
    d = bundle[0].d
    if any(e.d != d for e in bundle):
        raise ValueError("all estimates must share the same dimension")
    return bundle, d


def _rate_warning(estimates):
    rates = [e.c_n for e in estimates]
    if max(rates) > 1.01 * min(rates):
        return [f"normalization rates differ by more than 1%: {min(rates):.4g}..{max(rates):.4g}"]
    return []


def _quad_piece(residual, cov, c_n, epsilon):
    ts = la.truncated_svd(cov, epsilon)
    stat = c_n**2 * float(residual @ ts.pinv @ residual)
    return max(stat, 0.0), ts


def generalized_wald(residual, sigma_hat, c_n, epsilon, name="wald"):
    """``c_n^2 r' Sigma^+(eps) r`` against ``chi2(rank(Sigma; eps))``."""
    r = np.asarray(residual, dtype=float).ravel()
    S = np.asarray(sigma_hat, dtype=float)
    if S.shape != (r.size, r.size):
        raise ValueError(f"sigma_hat shape {S.shape} does not match residual length {r.size}")
    if epsilon < 0:
        raise ValueError("epsilon must be non-negative")
    stat, ts = _quad_piece(r, S, c_n, epsilon)
    df = ts.effective_rank
    warn = ["epsilon nudged off a singular value"] if ts.nudged else []
    return TestReport(
        name=name,
        statistic=stat,
        distribution=ChiSquared(df),
        p_value=chi2_sf(stat, df),
        epsilon_used=ts.epsilon,
        rank_diagnostics=[("rank", df)],
        warnings=warn,
    )


def commutator_covariance(e1, e2):
    """Plug-in covariance of ``vec([A1, A2])``."""
    L1 = la.lambda_op(e1.a)
    L2 = la.lambda_op(e2.a)
    return L2 @ e1.sigma_hat @ L2.T + L1 @ e2.sigma_hat @ L1.T


def commutator_test(e1, e2, epsilon=-1.0):
    """Two-sample test based on the commutator ``[A1, A2]``.

    A negative ``epsilon`` selects the default ``n^{-1/3}``.
    """
    if e1.d != e2.d:
        raise ValueError("estimates must share the same dimension")
    d = e1.d
    eps = _resolve_epsilon(epsilon, [e1, e2])
    warns = _rate_warning([e1, e2])
    if d == 1:
        return TestReport("commutator", 0.0, Degenerate(), 1.0, eps, warnings=warns + ["d = 1: commutator is identically zero"])
    c_n = float(np.sqrt(e1.c_n * e2.c_n))
    scale = 2 * d * np.linalg.norm(e1.a) * np.linalg.norm(e2.a)
    eta = _snap(la.vec(la.commutator(e1.a, e2.a)), scale)
    sigma_eta = commutator_covariance(e1, e2)
    stat, ts = _quad_piece(eta, sigma_eta, c_n, eps)
    df = ts.effective_rank
    if df >= d * d:
        # vec(I) lies in the null space of sigma_eta, so full rank means numerical trouble
        warns.append("commutator covariance reported full rank")
    if ts.nudged:
        warns.append("epsilon nudged off a singular value")
    return TestReport(
        name="commutator",
        statistic=stat,
        distribution=ChiSquared(df),
        p_value=chi2_sf(stat, df),
        epsilon_used=ts.epsilon,
        rank_diagnostics=[("r1_hat", df)],
        warnings=warns,
    )


def llr_projection(A, sigma, P, epsilon=0.0):
    """Weighted projection ``P (P' S P)^+ P' S vec(A)`` with ``S = sigma^+(eps)``."""
    A = np.asarray(A, dtype=float)
    P = np.asarray(P, dtype=float)
    d2 = A.size
    if P.shape[0] != d2 or np.shape(sigma) != (d2, d2):
        raise ValueError("dimension mismatch between A, sigma and P")
    S = la.truncated_svd(sigma, epsilon).pinv
    proj = P @ np.linalg.pinv(P.T @ S @ P) @ P.T @ S
    return la.mat(proj @ la.vec(A), A.shape[0])


def _llr_piece(a, sigma, P, eps):
    ts = la.truncated_svd(sigma, eps)
    S = ts.pinv
    G = P.T @ S @ P
    G = 0.5 * (G + G.T)
    Ginv = np.linalg.pinv(G)
    Q = S - S @ P @ Ginv @ P.T @ S
    x = la.vec(a)
    value = float(x @ Q @ x)
    return max(value, 0.0), ts, int(np.linalg.matrix_rank(G)), Q


def llr_test(e1, e2, p1_source, p2_source, epsilon=-1.0):
    """Likelihood-ratio test using power bases of caller-supplied reference matrices.

    ``vec(A1)`` is projected onto matrices sharing eigenvectors with
    ``p2_source`` and vice versa; the statistic is the weighted residual.
    """
    if e1.d != e2.d:
        raise ValueError("estimates must share the same dimension")
    d = e1.d
    eps = _resolve_epsilon(epsilon, [e1, e2])
    P1 = la.power_basis(p1_source)
    P2 = la.power_basis(p2_source)
    v1, ts1, g12, Q12 = _llr_piece(e1.a, e1.sigma_hat, P2, eps)
    v2, ts2, g21, Q21 = _llr_piece(e2.a, e2.sigma_hat, P1, eps)
    c_n = float(np.sqrt(e1.c_n * e2.c_n))
    # roundoff guard: exact members of span(P) leave residual quadratic forms at noise level
    scale1 = np.linalg.norm(Q12, 2) * np.linalg.norm(e1.a) ** 2
    scale2 = np.linalg.norm(Q21, 2) * np.linalg.norm(e2.a) ** 2
    v1 = 0.0 if v1 <= 1e3 * _ROUNDOFF * scale1 else v1
    v2 = 0.0 if v2 <= 1e3 * _ROUNDOFF * scale2 else v2
    stat = c_n**2 * (v1 + v2)
    rk1, rk2 = ts1.effective_rank, ts2.effective_rank
    df = max(rk1 - g12, 0) + max(rk2 - g21, 0)
    df_lo = max(rk1 + rk2 - 2 * d, 0)
    df_hi = rk1 + rk2
    return TestReport(
        name="llr",
        statistic=stat,
        distribution=ChiSquared(df),
        p_value=chi2_sf(stat, df),
        p_lower=chi2_sf(stat, df_lo),
        p_upper=chi2_sf(stat, df_hi),
        epsilon_used=eps,
        rank_diagnostics=[("r2_hat", df), ("r2_lower", df_lo), ("r2_upper", df_hi), ("rank_sigma1", rk1), ("rank_sigma2", rk2)],
        warnings=[LLR_WARNING] + _rate_warning([e1, e2]),
    )


def _checked_inverse_parts(V):
    V = np.asarray(V, dtype=float)
    if V.ndim != 2 or V.shape[0] != V.shape[1]:
        raise ValueError("V must be square")
    cond = np.linalg.cond(V)
    if not np.isfinite(cond) or cond > COND_LIMIT:
        raise ValueError(f"V is singular or ill-conditioned (cond={cond:.3g})")
    return V


def eigvec_selector(V):
    """``S_d (V' (x) V^{-1})``: maps ``vec(A)`` to ``offvec(V^{-1} A V)``."""
    V = _checked_inverse_parts(V)
    d = V.shape[0]
    Vinv = np.linalg.solve(V, np.eye(d))
    return la.offdiag_selector(d) @ np.kron(V.T, Vinv)


def _zeta(a, V):
    d = V.shape[0]
    X = la.solve_similarity(V, a)
    scale = d * np.linalg.cond(V) * np.linalg.norm(a)
    return _snap(la.offvec(X), scale)


def multi_eig_test(bundle, V, epsilon=-1.0):
    """Chi-squared test that ``V`` diagonalizes every matrix in the bundle."""
    bundle, d = _check_bundle(bundle)
    V = _checked_inverse_parts(V)
    if V.shape[0] != d:
        raise ValueError("V dimension does not match the estimates")
    eps = _resolve_epsilon(epsilon, bundle)
    S_V = eigvec_selector(V)
    stat, df, nudged, ranks = 0.0, 0, False, []
    for i, e in enumerate(bundle):
        zeta = _zeta(e.a, V)
        theta = S_V @ e.sigma_hat @ S_V.T
        piece, ts = _quad_piece(zeta, theta, e.c_n, eps)
        stat += piece
        df += ts.effective_rank
        nudged |= ts.nudged
        ranks.append((f"rank_theta_{i}", ts.effective_rank))
    warns = _rate_warning(bundle) + (["epsilon nudged off a singular value"] if nudged else [])
    return TestReport(
        name="multi_eig_chi2",
        statistic=stat,
        distribution=ChiSquared(df),
        p_value=chi2_sf(stat, df),
        epsilon_used=eps,
        rank_diagnostics=[("r3_hat", df)] + ranks,
        warnings=warns,
    )


def _gamma_report(name, stat, blocks, extra_warnings=()):
    dist = as_distribution(box_gamma_params(la.blkdiag(blocks)))
    p = 1.0 if isinstance(dist, Degenerate) and stat <= 0 else dist.sf(stat)
    return TestReport(name=name, statistic=stat, distribution=dist, p_value=float(p), warnings=list(extra_warnings))


def multi_eig_gamma_test(bundle, V):
    """Unweighted sum of squared off-diagonals with a two-moment gamma reference."""
    bundle, d = _check_bundle(bundle)
    V = _checked_inverse_parts(V)
    if V.shape[0] != d:
        raise ValueError("V dimension does not match the estimates")
    S_V = eigvec_selector(V)
    stat, blocks = 0.0, []
    for e in bundle:
        zeta = _zeta(e.a, V)
        stat += e.c_n**2 * float(zeta @ zeta)
        # each piece carries its own rate, so the blocks need no rescaling
        blocks.append(S_V @ e.sigma_hat @ S_V.T)
    return _gamma_report("multi_eig_gamma", stat, blocks, _rate_warning(bundle))


def block_selectors(d, k):
    """Selectors of ``vec(B)`` (top-left ``k x k``) and ``vec(C)`` (top-right ``k x (d-k)``)."""
    if not 1 <= k < d:
        raise ValueError(f"k must satisfy 1 <= k < d, got k={k}, d={d}")
    b_idx = [j * d + i for j in range(k) for i in range(k)]
    c_idx = [j * d + i for j in range(k, d) for i in range(k)]
    S_B = np.zeros((len(b_idx), d * d))
    S_B[np.arange(len(b_idx)), b_idx] = 1.0
    S_C = np.zeros((len(c_idx), d * d))
    S_C[np.arange(len(c_idx)), c_idx] = 1.0
    return S_B, S_C


def partial_projector(q_hat, k, v_tilde):
    """``P_w`` mapping ``vec(A)`` to ``(offvec(V~^{-1} B V~), vec(C))`` for ``Q' A Q = [[B, C], ...]``."""
    Q = np.asarray(q_hat, dtype=float)
    d = Q.shape[0]
    S_B, S_C = block_selectors(d, k)
    QQ = np.kron(Q.T, Q.T)
    rows_c = S_C @ QQ
    if k == 1:
        return rows_c
    v_tilde = np.asarray(v_tilde, dtype=float).reshape(k, k)
    rows_b = eigvec_selector(v_tilde) @ (S_B @ QQ)
    return np.vstack([rows_b, rows_c])


def partial_residual(a, q_hat, k, v_tilde):
    Q = np.asarray(q_hat, dtype=float)
    T = Q.T @ a @ Q
    B, C = T[:k, :k], T[:k, k:]
    parts = []
    if k >= 2:
        V = np.asarray(v_tilde, dtype=float).reshape(k, k)
        parts.append(la.offvec(la.solve_similarity(V, B)))
        cond = np.linalg.cond(V)
    else:
        cond = 1.0
    parts.append(la.vec(C))
    scale = a.shape[0] * cond * np.linalg.norm(a)
    return _snap(np.concatenate(parts), scale)


def partial_test(bundle, q_hat, k, v_tilde=None, epsilon=-1.0, variant="chi2"):
    """Test that the first ``k`` columns of ``q_hat`` span a shared left-invariant subspace.

    Under the null, ``Q' A_i Q`` has a zero top-right ``k x (d-k)`` block and the
    top-left blocks are jointly diagonalized by ``v_tilde``.
    """
    bundle, d = _check_bundle(bundle)
    Q = np.asarray(q_hat, dtype=float)
    if Q.shape != (d, d):
        raise ValueError("q_hat must be d x d")
    if not 1 <= k < d:
        raise ValueError(f"k must satisfy 1 <= k < d, got k={k}, d={d}")
    if np.linalg.norm(Q.T @ Q - np.eye(d)) > 1e-8:
        raise ValueError("q_hat is not orthogonal")
    if k == 1:
        v_tilde = np.ones((1, 1)) if v_tilde is None else np.asarray(v_tilde, dtype=float).reshape(1, 1)
    elif v_tilde is None:
        raise ValueError("v_tilde is required when k >= 2")
    else:
        _checked_inverse_parts(v_tilde)
    P_w = partial_projector(Q, k, v_tilde)
    warns = _rate_warning(bundle)
    if variant == "chi2":
        eps = _resolve_epsilon(epsilon, bundle)
        stat, df, ranks, nudged = 0.0, 0, [], False
        for i, e in enumerate(bundle):
            w = partial_residual(e.a, Q, k, v_tilde)
            omega = P_w @ e.sigma_hat @ P_w.T
            piece, ts = _quad_piece(w, omega, e.c_n, eps)
            stat += piece
            df += ts.effective_rank
            nudged |= ts.nudged
            ranks.append((f"rank_omega_{i}", ts.effective_rank))
        if nudged:
            warns.append("epsilon nudged off a singular value")
        return TestReport(
            name="partial_chi2",
            statistic=stat,
            distribution=ChiSquared(df),
            p_value=chi2_sf(stat, df),
            epsilon_used=eps,
            rank_diagnostics=[("r4_hat", df)] + ranks,
            warnings=warns,
        )
    if variant == "gamma":
        stat, blocks = 0.0, []
        for e in bundle:
            w = partial_residual(e.a, Q, k, v_tilde)
            stat += e.c_n**2 * float(w @ w)
            blocks.append(P_w @ e.sigma_hat @ P_w.T)
        return _gamma_report("partial_gamma", stat, blocks, warns)
    raise ValueError(f"unknown variant {variant!r}; expected 'chi2' or 'gamma'")


def pairwise_pvalue_matrix(bundle, epsilon=-1.0):
    """Commutator-test p-values for every pair; the diagonal is 1."""
    bundle, _ = _check_bundle(bundle)
    p = len(bundle)
    if p < 2:
        raise ValueError("need at least two estimates")
    out = np.ones((p, p))
    for i in range(p):
        for j in range(i + 1, p):
            out[i, j] = out[j, i] = commutator_test(bundle[i], bundle[j], epsilon).p_value
    return out
