"""Reference distributions and random draws."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .linalg import truncated_svd


@dataclass(frozen=True)
class GammaParams:
    shape: float
    rate: float

    def __post_init__(self):
        if not (np.isfinite(self.shape) and np.isfinite(self.rate)) or self.shape <= 0 or self.rate <= 0:
            raise ValueError(f"invalid gamma parameters: shape={self.shape}, rate={self.rate}")

    @property
    def mean(self):
        return self.shape / self.rate

    @property
    def variance(self):
        return self.shape / self.rate**2


@dataclass(frozen=True)
class ChiSquared:
    df: int

    def sf(self, x):
        return chi2_sf(x, self.df)

    def to_dict(self):
        return {"kind": "chi2", "df": int(self.df)}


@dataclass(frozen=True)
class Gamma:
    params: GammaParams

    def sf(self, x):
        return gamma_sf(x, self.params)

    def to_dict(self):
        return {"kind": "gamma", "shape": self.params.shape, "rate": self.params.rate}


@dataclass(frozen=True)
class Degenerate:
    """Point mass at zero; arises when the limiting covariance has zero trace."""

    def sf(self, x):
        return 1.0 if x <= 0 else 0.0

    def to_dict(self):
        return {"kind": "degenerate"}


RefDistribution = ChiSquared | Gamma | Degenerate


def distribution_from_dict(d):
    kind = d["kind"]
    if kind == "chi2":
        return ChiSquared(int(d["df"]))
    if kind == "gamma":
        return Gamma(GammaParams(d["shape"], d["rate"]))
    if kind == "degenerate":
        return Degenerate()
    raise ValueError(f"unknown distribution kind {kind!r}")


def chi2_sf(x, df):
    """Upper tail ``P(chi2(df) > x)``; ``df = 0`` is the point mass at zero."""
    if x < 0:
        raise ValueError("x must be non-negative")
    if df < 0:
        raise ValueError("df must be non-negative")
    if df == 0:
        return 1.0 if x == 0 else 0.0
    return float(special.gammaincc(df / 2.0, x / 2.0))


def gamma_sf(x, params):
    """Upper tail of the gamma law with the given shape and rate."""
    if x < 0:
        raise ValueError("x must be non-negative")
    return float(special.gammaincc(params.shape, params.rate * x))


def box_gamma_params(Theta):
    """Two-moment gamma fit to ``sum_r lambda_r(Theta) chi2(1)``.

    Returns :class:`GammaParams` with shape ``tr^2 / (2 tr(Theta^2))`` and rate
    ``tr / (2 tr(Theta^2))``, or :class:`Degenerate` when the trace vanishes.
    """
    Theta = np.asarray(Theta, dtype=float)
    if Theta.ndim != 2 or Theta.shape[0] != Theta.shape[1]:
        raise ValueError("Theta must be square")
    Theta = 0.5 * (Theta + Theta.T)
    tr = float(np.trace(Theta))
    tr2 = float(np.sum(Theta * Theta))  # tr(Theta^2) for symmetric Theta
    if tr <= 0 or tr2 <= 0:
        return Degenerate()
    return GammaParams(shape=tr * tr / (2.0 * tr2), rate=tr / (2.0 * tr2))


def as_distribution(params):
    return params if isinstance(params, Degenerate) else Gamma(params)


def _psd_factor(cov, tol=1e-8):
    cov = np.asarray(cov, dtype=float)
    try:
        return np.linalg.cholesky(cov)
    except np.linalg.LinAlgError:
        pass
    sym = 0.5 * (cov + cov.T)
    evals = np.linalg.eigvalsh(sym)
    scale = max(1.0, float(np.max(np.abs(evals))) if evals.size else 1.0)
    if evals.size and evals.min() < -tol * scale:
        raise ValueError("covariance is not positive semidefinite")
    ts = truncated_svd(sym, 0.0)
    return ts.u * np.sqrt(ts.singular_values)


def mvn_sample(mean, cov, rng, size=None):
    """Draw ``mean + L z`` with ``L L' = cov`` and ``z`` standard normal."""
    mean = np.asarray(mean, dtype=float)
    L = _psd_factor(cov)
    if size is None:
        z = rng.standard_normal(L.shape[1])
        return mean + L @ z
    z = rng.standard_normal((size, L.shape[1]))
    return mean + z @ L.T
