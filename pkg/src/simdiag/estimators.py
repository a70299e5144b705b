"""Estimates of matrices together with the covariance of their limiting law.

Every ``sigma_hat`` is indexed by ``vec`` (column-major) position: entry
``(r, s)`` of a ``d x d`` estimate corresponds to row/column ``s * d + r``.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class MatrixEstimate:
    """Estimated matrix ``a`` with ``c_n vec(a - M) -> N(0, sigma_hat)``."""

    a: np.ndarray
    sigma_hat: np.ndarray
    c_n: float
    n: int

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        sigma = np.asarray(self.sigma_hat, dtype=float)
        if a.ndim != 2 or a.shape[0] != a.shape[1]:
            raise ValueError("estimate must be a square matrix")
        d2 = a.shape[0] ** 2
        if sigma.shape != (d2, d2):
            raise ValueError(f"sigma_hat must be {d2}x{d2}, got {sigma.shape}")
        if not self.c_n > 0:
            raise ValueError("c_n must be positive")
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "sigma_hat", 0.5 * (sigma + sigma.T))

    @property
    def d(self):
        return self.a.shape[0]


@dataclass(frozen=True)
class VarFit:
    intercept: np.ndarray
    coefs: list  # Phi_1, ..., Phi_p
    sigma_e: np.ndarray
    estimates: list  # MatrixEstimate per lag
    n_obs: int

    @property
    def order(self):
        return len(self.coefs)


@dataclass(frozen=True)
class MarkovFit:
    p_hat: np.ndarray
    pi_hat: np.ndarray
    estimate: MatrixEstimate
    counts: np.ndarray = field(repr=False)


def mean_estimator(samples):
    """Sample mean of i.i.d. matrices with the empirical covariance of ``vec``."""
    X = np.asarray(samples, dtype=float)
    if X.ndim != 3 or X.shape[1] != X.shape[2]:
        raise ValueError("samples must be a sequence of square matrices of equal size")
    n = X.shape[0]
    if n < 2:
        raise ValueError("need at least 2 samples")
    flat = X.transpose(0, 2, 1).reshape(n, -1)  # rows are vec(X_t)
    return estimate_from_moments(flat.mean(axis=0), np.cov(flat, rowvar=False, ddof=1), n)


def estimate_from_moments(mean_vec, cov, n):
    """Bundle a ``vec``-ordered sample mean and covariance as a :class:`MatrixEstimate`."""
    mean_vec = np.asarray(mean_vec, dtype=float)
    d = int(round(np.sqrt(mean_vec.size)))
    cov = np.atleast_2d(np.asarray(cov, dtype=float))
    return MatrixEstimate(a=mean_vec.reshape((d, d), order="F"), sigma_hat=cov, c_n=float(np.sqrt(n)), n=int(n))


def var_ls_estimator(series, order=1, include_intercept=True):
    """Least-squares VAR(p) fit with per-lag limiting covariances.

    Regresses ``y_t`` on ``(1, y_{t-1}, ..., y_{t-p})``. For ``B = [mu, Phi_1, ...]``
    the usual asymptotics give ``sqrt(T) vec(B_hat - B) -> N(0, Gamma^{-1} (x) Sigma_e)``
    with ``Gamma`` the regressor second-moment matrix; the block for ``vec(Phi_j)``
    is ``(Gamma^{-1})_{jj} (x) Sigma_e``, which also marginalizes the intercept.
    """
    Y = np.asarray(series, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    T, d = Y.shape
    p = int(order)
    if p < 1:
        raise ValueError("order must be at least 1")
    if T <= d * p + 1:
        raise ValueError(f"series too short: T={T} needs to exceed d*p+1={d * p + 1}")
    n_eff = T - p
    lags = [Y[p - j : T - j] for j in range(1, p + 1)]
    Z = np.hstack(([np.ones((n_eff, 1))] if include_intercept else []) + lags)  # n_eff x m
    target = Y[p:]
    moment = Z.T @ Z / n_eff
    m = moment.shape[0]
    if np.linalg.matrix_rank(moment) < m:
        raise ValueError("singular regressor moment matrix")
    moment_inv = np.linalg.inv(moment)
    B = np.linalg.solve(Z.T @ Z, Z.T @ target).T  # d x m
    resid = target - Z @ B.T
    dof = max(n_eff - m, 1)
    sigma_e = resid.T @ resid / dof

    offset = 1 if include_intercept else 0
    intercept = B[:, 0] if include_intercept else np.zeros(d)
    coefs, estimates = [], []
    c_n = float(np.sqrt(n_eff))
    for j in range(p):
        sl = slice(offset + j * d, offset + (j + 1) * d)
        phi = B[:, sl]
        cov = np.kron(moment_inv[sl, sl], sigma_e)
        coefs.append(phi)
        estimates.append(MatrixEstimate(a=phi, sigma_hat=cov, c_n=c_n, n=n_eff))
    return VarFit(intercept=intercept, coefs=coefs, sigma_e=sigma_e, estimates=estimates, n_obs=n_eff)


def _labels_to_index(chain, d):
    x = np.asarray(chain)
    if x.ndim != 1 or x.size < 2:
        raise ValueError("chain must be a 1-d sequence of at least two labels")
    if not np.all(np.equal(np.mod(x, 1), 0)):
        raise ValueError("labels must be integers in 1..d")
    x = x.astype(int)
    if x.min() < 1 or x.max() > d:
        raise ValueError(f"labels must lie in 1..{d}")
    return x - 1


def markov_transition_estimator(chain, d):
    """Empirical transition matrix of a finite chain with labels ``1..d``.

    The limiting covariance is block-diagonal over source states ``r``: within
    row ``r`` it is ``(diag(p_r) - p_r p_r') / pi_r``. ``pi_r`` is the visit
    frequency of ``r`` among the source positions ``1..n``.
    """
    if d < 2:
        raise ValueError("need d >= 2 states")
    x = _labels_to_index(chain, d)
    src, dst = x[:-1], x[1:]
    n = src.size
    counts = np.zeros((d, d))
    np.add.at(counts, (src, dst), 1.0)
    visits = counts.sum(axis=1)
    if np.any(visits == 0):
        missing = [int(r) + 1 for r in np.flatnonzero(visits == 0)]
        raise ValueError(f"states never visited as a source: {missing}")
    p_hat = counts / visits[:, None]
    pi_hat = visits / n

    sigma = np.zeros((d * d, d * d))
    for r in range(d):
        pr = p_hat[r]
        block = (np.diag(pr) - np.outer(pr, pr)) / pi_hat[r]
        idx = np.arange(d) * d + r  # vec positions of row r
        sigma[np.ix_(idx, idx)] = block
    est = MatrixEstimate(a=p_hat, sigma_hat=sigma, c_n=float(np.sqrt(n)), n=n)
    return MarkovFit(p_hat=p_hat, pi_hat=pi_hat, estimate=est, counts=counts)


def stationary_from_transition(P, tol=1e-8):
    """Stationary probability vector (left eigenvector for eigenvalue 1)."""
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1]:
        raise ValueError("P must be square")
    if np.any(P < -tol) or not np.allclose(P.sum(axis=1), 1.0, atol=1e-6):
        raise ValueError("P must be row-stochastic")
    evals, evecs = np.linalg.eig(P.T)
    near_one = np.abs(evals - 1.0) < tol ** 0.5
    if np.count_nonzero(near_one) > 1:
        raise ValueError("eigenvalue 1 is not simple; the chain is reducible")
    idx = int(np.argmin(np.abs(evals - 1.0)))
    v = np.real(evecs[:, idx])
    v = v / v.sum()
    v = np.clip(v, 0.0, None)
    v = v / v.sum()
    # one step of refinement through the linear system pi (P - I) = 0, sum(pi) = 1
    d = P.shape[0]
    A = np.vstack([(P - np.eye(d)).T, np.ones((1, d))])
    b = np.zeros(d + 1)
    b[-1] = 1.0
    pi, *_ = np.linalg.lstsq(A, b, rcond=None)
    if np.all(pi >= -1e-12):
        v = np.clip(pi, 0.0, None)
        v = v / v.sum()
    return v
