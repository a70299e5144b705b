"""Monte-Carlo behaviour of the VAR and Markov pipelines on synthetic data.

VAR: three subjects whose VAR(1) coefficients share an eigenvector matrix.
Markov: two chains sharing the stationary law (0.5, 0.25, 0.25) with
different dynamics, and two chains with different stationary laws.
"""
import argparse
import warnings

import numpy as np

from simdiag import apps


def metropolis(pi, rng):
    d = pi.size
    prop = rng.random((d, d))
    prop = prop + prop.T
    np.fill_diagonal(prop, 0.0)
    prop /= prop.sum(axis=1, keepdims=True)
    P = np.zeros((d, d))
    for i in range(d):
        for j in range(d):
            if i != j:
                P[i, j] = prop[i, j] * min(1.0, pi[j] * prop[j, i] / (pi[i] * prop[i, j]))
    np.fill_diagonal(P, 1.0 - P.sum(axis=1))
    return P


def var_null(rng, T, d=3, subjects=3):
    while True:
        V = rng.standard_normal((d, d))
        if np.linalg.cond(V) <= 10:
            break
    subs = []
    for _ in range(subjects):
        while True:
            lam = rng.uniform(-0.8, 0.8, d)
            if np.min(np.abs(np.subtract.outer(lam, lam)) + np.eye(d)) >= 0.2:
                break
        subs.append(apps.simulate_var([V @ np.diag(lam) @ np.linalg.inv(V)], T, rng))
    return subs


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=100)
    ap.add_argument("--T", type=int, default=2000)
    ap.add_argument("--n", type=int, nargs="+", default=[250, 500, 2000])
    args = ap.parse_args()
    warnings.simplefilter("ignore", RuntimeWarning)

    p = [apps.var_pipeline(var_null(np.random.default_rng([11, s]), args.T)).gamma_report.p_value for s in range(args.seeds)]
    print(f"VAR shared eigenvectors, T={args.T}: gamma test keeps H0 in {np.mean(np.array(p) >= 0.05):.2f}")

    pi = np.array([0.5, 0.25, 0.25])
    P1 = 0.4 * np.eye(3) + 0.6 * np.outer(np.ones(3), pi)
    P_other = 0.4 * np.eye(3) + 0.6 * np.outer(np.ones(3), [0.25, 0.25, 0.5])
    for n in args.n:
        keep, rej = [], []
        for s in range(args.seeds):
            rng = np.random.default_rng([13, n, s])
            out = apps.markov_pipeline([apps.simulate_chain(P1, n + 1, rng), apps.simulate_chain(metropolis(pi, rng), n + 1, rng)], 3)
            keep.append(all(r.p_value >= 0.05 for r in out.reports.values()))
            out = apps.markov_pipeline([apps.simulate_chain(P1, n + 1, rng), apps.simulate_chain(P_other, n + 1, rng)], 3)
            rej.append(all(r.p_value < 0.05 for r in out.reports.values()))
        print(f"Markov n={n}: shared law kept {np.mean(keep):.2f}, different laws rejected {np.mean(rej):.2f}")


if __name__ == "__main__":
    main()
