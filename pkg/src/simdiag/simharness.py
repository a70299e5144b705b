"""Monte-Carlo designs for the two-sample, multi-sample and partial tests.

Each replicate draws fresh population matrices, averages ``n`` noisy
observations of each (entrywise standard normal noise), and runs the
design's tests. Replicate ``i`` uses a generator seeded by ``(seed, i)``,
so results do not depend on how replicates are scheduled.
"""
from __future__ import annotations

import csv
import json
import math
import os
import time
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats

from . import optim
from .estimators import estimate_from_moments, mean_estimator
from .stattests import commutator_test, default_epsilon, multi_eig_gamma_test, multi_eig_test, partial_test

DESIGNS = ("two_sample", "multi", "partial")
N_BINS = 20
MAX_COND = 1e6
EIG_LOW, EIG_HIGH, EIG_GAP = 0.5, 2.0, 0.1


@dataclass
class SimConfig:
    design: str
    d: int
    n: int
    p: int = 2
    k: int | None = None
    replicates: int = 100
    snr: float = math.inf
    epsilon: float | None = None  # None -> n^{-1/3}
    seed: int = 0
    alpha: float = 0.05
    workers: int | None = None

    def __post_init__(self):
        self.design = self.design.replace("-", "_")
        if self.design not in DESIGNS:
            raise ValueError(f"design must be one of {DESIGNS}")
        if self.design == "two_sample":
            self.p = 2
        if self.d < 2 or self.p < 2 or self.n < 2:
            raise ValueError("need d >= 2, p >= 2 and n >= 2")
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if not self.snr > 0:
            raise ValueError("snr must be positive (use inf for the null)")
        if self.design == "partial":
            if self.k is None or not 1 <= self.k < self.d:
                raise ValueError("partial design needs 1 <= k < d")

    @property
    def rho(self):
        return 0.0 if math.isinf(self.snr) else self.snr**-0.5

    @property
    def epsilon_value(self):
        return default_epsilon(self.n) if self.epsilon is None else float(self.epsilon)

    def to_dict(self):
        out = asdict(self)
        out["snr"] = "inf" if math.isinf(self.snr) else self.snr
        out.pop("workers")
        return out


@dataclass
class SimResult:
    config: SimConfig
    p_values: dict
    failures: int
    runtimes: list = field(default_factory=list)
    failure_messages: list = field(default_factory=list)

    def rejection_rate(self, name, alpha=None):
        alpha = self.config.alpha if alpha is None else alpha
        p = np.asarray(self.p_values[name])
        return float(np.mean(p < alpha)) if p.size else float("nan")

    @property
    def rejection_rate_at_alpha(self):
        return {name: self.rejection_rate(name) for name in self.p_values}

    def histogram(self, name):
        counts, edges = np.histogram(np.asarray(self.p_values[name]), bins=N_BINS, range=(0.0, 1.0))
        return counts, edges

    def to_dict(self):
        return {
            "config": self.config.to_dict(),
            "p_values": {k: [float(x) for x in v] for k, v in self.p_values.items()},
            "rejection_rate_at_alpha": self.rejection_rate_at_alpha,
            "histogram": {k: self.histogram(k)[0].tolist() for k in self.p_values},
            "failures": self.failures,
            "failure_messages": self.failure_messages,
            "runtime_per_replicate": self.runtimes,
        }

    def write(self, out_dir):
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        (out / "result.json").write_text(json.dumps(self.to_dict(), indent=2))
        paths = []
        for name in self.p_values:
            counts, edges = self.histogram(name)
            total = max(int(counts.sum()), 1)
            path = out / f"histogram_{name}.csv"
            with path.open("w", newline="") as fh:
                w = csv.writer(fh)
                w.writerow(["bin_left", "bin_right", "count", "fraction"])
                for lo, hi, c in zip(edges[:-1], edges[1:], counts):
                    w.writerow([f"{lo:.2f}", f"{hi:.2f}", int(c), c / total])
            paths.append(path)
        return paths


def draw_eigenvalues(d, rng):
    """Distinct non-zero reals: magnitudes in [0.5, 2], random signs, gaps >= 0.1."""
    for _ in range(10000):
        lam = rng.uniform(EIG_LOW, EIG_HIGH, d) * rng.choice([-1.0, 1.0], d)
        gaps = np.abs(lam[:, None] - lam[None, :]) + np.eye(d) * 1e9
        if gaps.min() >= EIG_GAP:
            return lam
    raise RuntimeError("could not draw well-separated eigenvalues")


def draw_basis(d, rng, cols=None, max_tries=1000):
    """Standard normal ``d x cols`` matrix; square draws are resampled until cond <= 1e6."""
    cols = d if cols is None else cols
    for _ in range(max_tries):
        V = rng.standard_normal((d, cols))
        if cols != d or np.linalg.cond(V) <= MAX_COND:
            return V
    raise RuntimeError("could not draw a well-conditioned basis")


def _perturbed(V, rho, rng):
    if rho == 0.0:
        return V
    for _ in range(1000):
        Vp = V + rho * rng.standard_normal(V.shape)
        if np.linalg.cond(Vp) <= MAX_COND:
            return Vp
    raise RuntimeError("could not draw a well-conditioned perturbation")


def _similar(V, lam):
    return np.linalg.solve(V.T, (V * lam).T).T  # V diag(lam) V^{-1}


def gen_two_sample(d, snr, rng):
    """``M1 = V D1 V^{-1}``, ``M2 = V* D2 V*^{-1}`` with ``V* = V + rho E``."""
    if d < 2:
        raise ValueError("d must be >= 2")
    rho = 0.0 if math.isinf(snr) else snr**-0.5
    V = draw_basis(d, rng)
    M1 = _similar(V, draw_eigenvalues(d, rng))
    M2 = _similar(_perturbed(V, rho, rng), draw_eigenvalues(d, rng))
    return M1, M2, V


def gen_multi(d, p, snr, rng):
    """``p`` matrices ``(V + rho E_i) D_i (V + rho E_i)^{-1}``; returns ``(matrices, V)``."""
    if d < 2 or p < 2:
        raise ValueError("need d >= 2 and p >= 2")
    rho = 0.0 if math.isinf(snr) else snr**-0.5
    V = draw_basis(d, rng)
    Ms = [_similar(_perturbed(V, rho, rng), draw_eigenvalues(d, rng)) for _ in range(p)]
    return Ms, V


def gen_partial(d, p, k, snr, rng):
    """Matrices sharing ``k`` left eigenvectors (the columns of the returned ``V``).

    Each ``V_i = (V, V~_i)`` with its own ``V~_i``; the perturbed
    ``V_i + rho E_i`` is used as a left eigenvector matrix, i.e. the returned
    matrix is ``(V_i D_i V_i^{-1})'``.
    """
    if not 1 <= k < d:
        raise ValueError("need 1 <= k < d")
    if p < 1:
        raise ValueError("need p >= 1")
    rho = 0.0 if math.isinf(snr) else snr**-0.5
    V = draw_basis(d, rng, cols=k)
    Ms = []
    for _ in range(p):
        for _ in range(1000):
            Vi = np.hstack([V, rng.standard_normal((d, d - k))])
            if np.linalg.cond(Vi) <= MAX_COND:
                break
        else:
            raise RuntimeError("could not complete the shared eigenvectors to a basis")
        Vi = _perturbed(Vi, rho, rng)
        Ms.append(_similar(Vi, draw_eigenvalues(d, rng)).T)
    return Ms, V


def observe(M, n, rng):
    """Mean of ``n`` draws of ``M + Z`` (``Z`` entrywise standard normal) as a :class:`MatrixEstimate`."""
    d = M.shape[0]
    if n * d * d <= 4_000_000:
        return mean_estimator(M[None, :, :] + rng.standard_normal((n, d, d)))
    # accumulate moments in chunks to bound memory
    m = d * d
    total = np.zeros(m)
    cross = np.zeros((m, m))
    base = M.reshape(-1, order="F")
    chunk = max(1, 4_000_000 // m)
    done = 0
    while done < n:
        b = min(chunk, n - done)
        X = base + rng.standard_normal((b, m))
        total += X.sum(axis=0)
        cross += X.T @ X
        done += b
    mean = total / n
    cov = (cross - n * np.outer(mean, mean)) / (n - 1)
    return estimate_from_moments(mean, cov, n)


def replicate_rng(seed, index):
    return np.random.default_rng(np.random.SeedSequence([int(seed), int(index)]))


def run_one(config, index):
    """Run a single replicate; returns ``{variant: p_value}``."""
    rng = replicate_rng(config.seed, index)
    eps = config.epsilon_value
    out = {}
    if config.design == "two_sample":
        M1, M2, _ = gen_two_sample(config.d, config.snr, rng)
        e1, e2 = observe(M1, config.n, rng), observe(M2, config.n, rng)
        out["commutator"] = commutator_test(e1, e2, eps).p_value
    elif config.design == "multi":
        Ms, V = gen_multi(config.d, config.p, config.snr, rng)
        bundle = [observe(M, config.n, rng) for M in Ms]
        out["multi_chi2_exact"] = multi_eig_test(bundle, V, eps).p_value
        jd = optim.joint_diagonalize([e.a for e in bundle], seed=index)
        out["multi_chi2_vhat"] = multi_eig_test(bundle, jd.v_hat, eps).p_value
        out["multi_gamma_vhat"] = multi_eig_gamma_test(bundle, jd.v_hat).p_value
    else:
        Ms, _ = gen_partial(config.d, config.p, config.k, config.snr, rng)
        bundle = [observe(M, config.n, rng) for M in Ms]
        q_hat, v_tilde = fit_partial(bundle, config.k, seed=index)
        out["partial_chi2"] = partial_test(bundle, q_hat, config.k, v_tilde, eps, "chi2").p_value
        out["partial_gamma"] = partial_test(bundle, q_hat, config.k, v_tilde, eps, "gamma").p_value
    return out


def fit_partial(bundle, k, seed=0):
    """Estimated ``Q`` and the joint diagonalizer of its top-left ``k x k`` blocks."""
    fit = optim.fit_partial_eigvecs([e.a for e in bundle], k, seed=seed)
    return fit.q_hat, fit.v_tilde


def _run_chunk(args):
    config, indices = args
    results = []
    for i in indices:
        t0 = time.perf_counter()
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", RuntimeWarning)
                results.append((i, run_one(config, i), None, time.perf_counter() - t0))
        except (np.linalg.LinAlgError, ValueError, RuntimeError) as exc:
            results.append((i, None, f"replicate {i}: {exc}", time.perf_counter() - t0))
    return results


def worker_count(requested=None):
    cap = os.environ.get("SIMDIAG_THREADS")
    n = requested or os.cpu_count() or 1
    if cap:
        n = min(n, max(1, int(cap)))
    return max(1, n)


def run_replicates(config):
    """Run every replicate of ``config`` and collect p-values per test variant."""
    idx = list(range(config.replicates))
    workers = min(worker_count(config.workers), len(idx))
    if workers == 1:
        rows = _run_chunk((config, idx))
    else:
        chunks = [(config, idx[w::workers]) for w in range(workers)]
        with ProcessPoolExecutor(max_workers=workers) as pool:
            rows = [r for part in pool.map(_run_chunk, chunks) for r in part]
    rows.sort(key=lambda r: r[0])
    p_values, failures, runtimes = {}, [], []
    for _, res, err, dt in rows:
        runtimes.append(dt)
        if err is not None:
            failures.append(err)
            continue
        for name, p in res.items():
            p_values.setdefault(name, []).append(p)
    p_values = {k: np.asarray(v) for k, v in p_values.items()}
    return SimResult(config, p_values, len(failures), runtimes, failures)


def ks_uniform(p_values):
    """Kolmogorov-Smirnov distance between the empirical law of ``p_values`` and U[0, 1]."""
    return float(stats.kstest(np.asarray(p_values, dtype=float), "uniform").statistic)
