"""Application pipelines: VAR coefficient analysis and Markov stationary laws.

Conventions. The partial machinery tests *left* eigenvectors: ``Q`` passes
when ``A' Q_k`` stays inside ``span(Q_k)``. A row-stochastic transition
matrix satisfies ``P' pi = pi``, so estimated transition matrices are passed
as they are. VAR coefficient matrices are likewise passed untransposed; a
shared left eigenvector ``v`` gives a scalar series ``v' y_t`` that depends
only on its own past.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import linalg as la
from . import optim
from .estimators import MarkovFit, VarFit, markov_transition_estimator, var_ls_estimator
from .stattests import TestReport, multi_eig_gamma_test, pairwise_pvalue_matrix, partial_test


@dataclass
class VarAnalysis:
    fits: list
    pairwise: np.ndarray
    gamma_report: TestReport
    partial_reports: dict  # k -> {"chi2": TestReport, "gamma": TestReport}
    v_hat: np.ndarray
    alpha: float
    decoupled: list | None = None  # z_t = V^{-1} y_t per subject, or None when rejected
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "kind": "var",
            "n_subjects": len(self.fits),
            "order": self.fits[0].order,
            "n_obs": [f.n_obs for f in self.fits],
            "pairwise_p_values": self.pairwise.tolist(),
            "gamma_test": self.gamma_report.to_dict(),
            "partial_tests": {
                str(k): {v: r.to_dict() for v, r in reps.items()} for k, reps in self.partial_reports.items()
            },
            "v_hat": self.v_hat.tolist(),
            "alpha": self.alpha,
            "decoupled": None if self.decoupled is None else [z.tolist() for z in self.decoupled],
            "warnings": list(self.warnings),
        }


@dataclass
class MarkovAnalysis:
    fits: list
    pi_common: np.ndarray
    qp_objective: float
    q_hat: np.ndarray
    reports: dict  # {"chi2": TestReport, "gamma": TestReport}
    warnings: list = field(default_factory=list)

    def to_dict(self):
        return {
            "kind": "markov",
            "n_chains": len(self.fits),
            "transition_matrices": [f.p_hat.tolist() for f in self.fits],
            "pi_hat_per_chain": [f.pi_hat.tolist() for f in self.fits],
            "pi_common": self.pi_common.tolist(),
            "qp_objective": self.qp_objective,
            "partial_tests": {v: r.to_dict() for v, r in self.reports.items()},
            "warnings": list(self.warnings),
        }


def decouple(series, v_hat):
    """Rows ``z_t = V^{-1} y_t``; for ``Phi = V D V^{-1}`` each ``z`` coordinate is autoregressive on itself."""
    Y = np.asarray(series, dtype=float)
    return np.linalg.solve(np.asarray(v_hat, dtype=float), Y.T).T


def var_pipeline(series_list, order=1, epsilon=-1.0, alpha=0.05, seed=0):
    """Joint-diagonalizability analysis of VAR coefficient matrices across subjects.

    Every lag matrix of every subject enters the pooled bundle.
    """
    series_list = [np.asarray(s, dtype=float) for s in series_list]
    if len(series_list) < 2:
        raise ValueError("need at least two subjects")
    dims = {s.shape[1] if s.ndim == 2 else 1 for s in series_list}
    if len(dims) != 1:
        raise ValueError("all series must have the same number of variables")
    d = dims.pop()
    if d < 2:
        raise ValueError("need at least two variables")
    fits = []
    for i, s in enumerate(series_list):
        try:
            fits.append(var_ls_estimator(s, order=order))
        except ValueError as exc:
            raise ValueError(f"subject {i}: {exc}") from exc
    bundle = [e for f in fits for e in f.estimates]
    mats = [e.a for e in bundle]
    pairwise = pairwise_pvalue_matrix(bundle, epsilon)
    jd = optim.joint_diagonalize(mats, seed=seed)
    v_hat = jd.v_hat
    gamma = multi_eig_gamma_test(bundle, v_hat)
    partial = {}
    for k in range(1, d):
        pf = optim.fit_partial_eigvecs(mats, k, seed=seed)
        partial[k] = {
            variant: partial_test(bundle, pf.q_hat, k, pf.v_tilde, epsilon, variant) for variant in ("chi2", "gamma")
        }
    warns = [] if jd.converged else ["joint diagonalizer did not converge"]
    decoupled = None
    if gamma.p_value >= alpha:
        decoupled = [decouple(s if s.ndim == 2 else s[:, None], v_hat) for s in series_list]
    return VarAnalysis(fits, pairwise, gamma, partial, v_hat, alpha, decoupled, warns)


def markov_householder_q(pi):
    """Orthogonal ``Q`` with first column ``pi / ||pi||`` and ``V~ = [||pi||]``."""
    pi = np.asarray(pi, dtype=float)
    norm = float(np.linalg.norm(pi))
    if norm == 0:
        raise ValueError("zero stationary vector")
    return la.householder_completion(pi / norm), np.array([[norm]])


def markov_pipeline(chains, d, epsilon=-1.0):
    """Test whether several chains share a stationary distribution."""
    chains = list(chains)
    if len(chains) < 2:
        raise ValueError("need at least two chains")
    fits = []
    for i, c in enumerate(chains):
        try:
            fits.append(markov_transition_estimator(c, d))
        except ValueError as exc:
            raise ValueError(f"chain {i}: {exc}") from exc
    qp = optim.simplex_qp_stationary([f.p_hat for f in fits])
    q_hat, v_tilde = markov_householder_q(qp.x)
    bundle = [f.estimate for f in fits]
    reports = {v: partial_test(bundle, q_hat, 1, v_tilde, epsilon, v) for v in ("chi2", "gamma")}
    warns = [] if qp.converged else ["simplex QP did not reach its gap tolerance"]
    return MarkovAnalysis(fits, qp.x, qp.objective, q_hat, reports, warns)


def quantile_bins(values, quantiles):
    """Labels ``1..len(quantiles)+1`` from empirical quantile thresholds (``x <= t`` falls in the lower bin)."""
    x = np.asarray(values, dtype=float).ravel()
    q = np.asarray(quantiles, dtype=float).ravel()
    if q.size == 0 or np.any((q <= 0) | (q >= 1)) or np.any(np.diff(q) <= 0):
        raise ValueError("quantiles must be strictly increasing in (0, 1)")
    thresholds = np.quantile(x, q)
    return np.searchsorted(thresholds, x, side="left") + 1


def simulate_var(phis, T, rng, noise_scale=1.0, burn_in=200):
    """VAR path ``y_t = sum_j Phi_j y_{t-j} + e_t`` with standard normal ``e_t``."""
    phis = [np.asarray(P, dtype=float) for P in phis]
    d = phis[0].shape[0]
    p = len(phis)
    total = T + burn_in
    Y = np.zeros((total, d))
    E = noise_scale * rng.standard_normal((total, d))
    for t in range(p, total):
        Y[t] = E[t] + sum(phis[j] @ Y[t - 1 - j] for j in range(p))
    return Y[burn_in:]


def simulate_chain(P, n, rng, start=None):
    """Labels ``1..d`` of an ``n``-step chain with row-stochastic ``P``."""
    P = np.asarray(P, dtype=float)
    d = P.shape[0]
    cdf = np.cumsum(P, axis=1)
    cdf[:, -1] = 1.0
    u = rng.random(n)
    x = np.empty(n, dtype=int)
    x[0] = rng.integers(d) if start is None else start - 1
    for t in range(1, n):
        x[t] = int(np.searchsorted(cdf[x[t - 1]], u[t], side="right"))
    return x + 1
