"""``simdiag`` command line: simulations, tests on CSV estimates, VAR and Markov pipelines.

Exit codes: 0 success, 1 numerical failure, 2 usage or input error.

Matrix CSV files start with a line ``d=<int>`` followed by ``d`` rows of ``d``
comma-separated values. Covariance CSV files hold a plain ``d^2 x d^2`` table
indexed by column-major ``vec`` position.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import math
import sys
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__, apps, optim
from .estimators import MatrixEstimate, mean_estimator
from .simharness import SimConfig, run_replicates
from .stattests import (
    TestReport,
    commutator_test,
    llr_test,
    multi_eig_gamma_test,
    multi_eig_test,
    pairwise_pvalue_matrix,
    partial_test,
)


class UsageError(Exception):
    """Bad flags or unreadable input; maps to exit code 2."""


@dataclass
class ReportDocument:
    command: str
    input_digest: str
    config: dict
    reports: list = field(default_factory=list)  # TestReport
    extra: dict = field(default_factory=dict)
    version: str = __version__

    def to_dict(self):
        return {
            "tool": "simdiag",
            "version": self.version,
            "command": self.command,
            "input_digest": self.input_digest,
            "config": self.config,
            "reports": [r.to_dict() for r in self.reports],
            "extra": self.extra,
        }

    @classmethod
    def from_dict(cls, d):
        validate_document(d)
        return cls(
            command=d["command"],
            input_digest=d["input_digest"],
            config=d["config"],
            reports=[TestReport.from_dict(r) for r in d["reports"]],
            extra=d.get("extra", {}),
            version=d["version"],
        )


def report_schema():
    return json.loads(resources.files("simdiag").joinpath("report_schema.json").read_text())


def validate_document(doc):
    jsonschema.validate(doc, report_schema())


def digest_files(paths):
    h = hashlib.sha256()
    for p in paths:
        p = Path(p)
        files = sorted(q for q in p.rglob("*") if q.is_file()) if p.is_dir() else [p]
        for f in files:
            h.update(f.name.encode())
            h.update(f.read_bytes())
    return h.hexdigest()


# ---------------------------------------------------------------- parsing


def _number_or(text, keyword, keyword_value):
    if text.strip().lower() == keyword:
        return keyword_value
    try:
        return float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a number or '{keyword}', got {text!r}") from None


def _snr(text):
    value = _number_or(text, "inf", math.inf)
    if not value > 0:
        raise argparse.ArgumentTypeError("snr must be positive")
    return value


def _epsilon(text):
    value = _number_or(text, "auto", None)
    if value is not None and value < 0:
        raise argparse.ArgumentTypeError("epsilon must be non-negative or 'auto'")
    return value


def _quantiles(text):
    try:
        return [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad quantile list {text!r}") from None


def _lines(path):
    try:
        return Path(path).read_text().splitlines()
    except OSError as exc:
        raise UsageError(f"cannot read {path}: {exc}") from exc


def read_matrix_csv(path):
    lines = [ln.strip() for ln in _lines(path) if ln.strip()]
    if not lines or not lines[0].replace(" ", "").startswith("d="):
        raise UsageError(f"{path}: first line must be 'd=<int>'")
    try:
        d = int(lines[0].split("=", 1)[1])
        rows = [[float(x) for x in ln.split(",")] for ln in lines[1:]]
    except ValueError as exc:
        raise UsageError(f"{path}: malformed matrix CSV ({exc})") from exc
    if d < 1 or len(rows) != d or any(len(r) != d for r in rows):
        raise UsageError(f"{path}: expected {d} rows of {d} values")
    return np.array(rows)


def read_table_csv(path):
    """Numeric table; a non-numeric first line is taken as a header."""
    lines = [ln.strip() for ln in _lines(path) if ln.strip() and not ln.lstrip().startswith("#")]
    if lines:
        try:
            [float(x) for x in lines[0].split(",")]
        except ValueError:
            lines = lines[1:]
    try:
        rows = [[float(x) for x in ln.split(",")] for ln in lines]
    except ValueError as exc:
        raise UsageError(f"{path}: malformed CSV ({exc})") from exc
    if not rows or len({len(r) for r in rows}) != 1:
        raise UsageError(f"{path}: empty or ragged table")
    return np.array(rows)


def read_samples_dir(path):
    files = sorted(Path(path).glob("*.csv"))
    if len(files) < 2:
        raise UsageError(f"{path}: need at least two sample CSV files")
    mats = [read_matrix_csv(f) for f in files]
    if len({m.shape for m in mats}) != 1:
        raise UsageError(f"{path}: sample matrices differ in size")
    return mean_estimator(np.array(mats))


def load_estimates(args):
    """Estimates from ``--samples`` directories or ``--estimate``/``--cov``/``--n`` triples."""
    if args.samples:
        if args.estimate or args.cov:
            raise UsageError("use either --samples or --estimate/--cov, not both")
        return [read_samples_dir(p) for p in args.samples], list(args.samples)
    if not args.estimate:
        raise UsageError("no inputs: give --estimate files or --samples directories")
    m = len(args.estimate)
    covs = args.cov or []
    if len(covs) != m:
        raise UsageError(f"need one --cov per --estimate ({m}), got {len(covs)}")
    ns = args.n or []
    if len(ns) == 1:
        ns = ns * m
    if len(ns) != m:
        raise UsageError("give one --n for all estimates or one per estimate")
    out = []
    for a_path, c_path, n in zip(args.estimate, covs, ns):
        a = read_matrix_csv(a_path)
        cov = read_table_csv(c_path)
        if cov.shape != (a.size, a.size):
            raise UsageError(f"{c_path}: covariance must be {a.size}x{a.size}, got {cov.shape[0]}x{cov.shape[1]}")
        if n < 1:
            raise UsageError("--n must be positive")
        out.append(MatrixEstimate(a=a, sigma_hat=cov, c_n=math.sqrt(n), n=n))
    if len({e.d for e in out}) != 1:
        raise UsageError("dimension mismatch between estimates")
    return out, list(args.estimate) + list(covs)


def _eps_arg(value):
    return -1.0 if value is None else value


# ---------------------------------------------------------------- commands


def cmd_simulate(args):
    if args.design == "partial" and args.k is None:
        raise UsageError("--design partial requires --k")
    try:
        config = SimConfig(
            design=args.design,
            d=args.d,
            n=args.n,
            p=args.p,
            k=args.k,
            replicates=args.replicates,
            snr=args.snr,
            epsilon=args.epsilon,
            seed=args.seed,
            alpha=args.alpha,
        )
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    result = run_replicates(config)
    paths = result.write(args.out)
    summary = {
        "out": str(args.out),
        "rejection_rate_at_alpha": result.rejection_rate_at_alpha,
        "failures": result.failures,
        "histograms": [str(p) for p in paths],
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_test(args):
    bundle, inputs = load_estimates(args)
    eps = _eps_arg(args.epsilon)
    config = {"method": args.method, "epsilon": "auto" if args.epsilon is None else args.epsilon, "n_inputs": len(bundle)}
    extra = {}
    reports = []
    method = args.method
    if method in ("commutator", "llr") and len(bundle) != 2:
        raise UsageError(f"--method {method} needs exactly two estimates")
    if method == "commutator":
        reports.append(commutator_test(bundle[0], bundle[1], eps))
    elif method == "llr":
        if not args.reference or len(args.reference) != 2:
            raise UsageError("--method llr needs two --reference matrices (known reference matrices for the power bases)")
        refs = [read_matrix_csv(p) for p in args.reference]
        inputs += list(args.reference)
        reports.append(llr_test(bundle[0], bundle[1], refs[0], refs[1], eps))
    elif method == "pairwise":
        if len(bundle) < 2:
            raise UsageError("--method pairwise needs at least two estimates")
        extra["pairwise_p_values"] = pairwise_pvalue_matrix(bundle, eps).tolist()
    elif method == "multi":
        if args.v:
            V = read_matrix_csv(args.v)
            inputs.append(args.v)
        else:
            V = optim.joint_diagonalize([e.a for e in bundle], seed=args.seed).v_hat
        extra["v"] = V.tolist()
        config["variant"] = args.variant
        if args.variant == "chi2":
            reports.append(multi_eig_test(bundle, V, eps))
        else:
            reports.append(multi_eig_gamma_test(bundle, V))
    elif method == "partial":
        if args.k is None:
            raise UsageError("--method partial requires --k")
        config["k"] = args.k
        config["variant"] = args.variant
        if args.q:
            Q = read_matrix_csv(args.q)
            inputs.append(args.q)
            if args.v:
                Vt = read_matrix_csv(args.v)
                inputs.append(args.v)
            elif args.k == 1:
                Vt = np.ones((1, 1))
            else:
                raise UsageError("--q with k >= 2 also needs --v (the k x k block diagonalizer)")
        else:
            fit = optim.fit_partial_eigvecs([e.a for e in bundle], args.k, seed=args.seed)
            Q, Vt = fit.q_hat, fit.v_tilde
        extra["q"] = Q.tolist()
        extra["v_tilde"] = np.atleast_2d(Vt).tolist()
        reports.append(partial_test(bundle, Q, args.k, Vt, eps, args.variant))
    doc = ReportDocument("test", digest_files(inputs), config, reports, extra)
    return _emit(doc, args.out)


def cmd_var(args):
    series = [read_table_csv(p) for p in args.series]
    analysis = apps.var_pipeline(series, order=args.order, epsilon=_eps_arg(args.epsilon), alpha=args.alpha, seed=args.seed)
    reports = [analysis.gamma_report] + [r for k in sorted(analysis.partial_reports) for r in analysis.partial_reports[k].values()]
    config = {
        "order": args.order,
        "epsilon": "auto" if args.epsilon is None else args.epsilon,
        "alpha": args.alpha,
        "seed": args.seed,
    }
    doc = ReportDocument("var", digest_files(args.series), config, reports, {"analysis": analysis.to_dict()})
    return _emit(doc, args.out)


def cmd_markov(args):
    chains = []
    for p in args.chains:
        values = read_table_csv(p)
        if values.shape[1] != 1:
            raise UsageError(f"{p}: expected a single column")
        chains.append(values[:, 0])
    if args.bins:
        d = len(args.bins) + 1
        if args.d is not None and args.d != d:
            raise UsageError(f"--d {args.d} disagrees with {len(args.bins)} bin thresholds")
        try:
            chains = [apps.quantile_bins(c, args.bins) for c in chains]
        except ValueError as exc:
            raise UsageError(str(exc)) from exc
    else:
        if args.d is None:
            raise UsageError("--d is required unless --bins is given")
        d = args.d
    try:
        analysis = apps.markov_pipeline(chains, d, epsilon=_eps_arg(args.epsilon))
    except ValueError as exc:
        raise UsageError(str(exc)) from exc
    config = {"d": d, "bins": args.bins, "epsilon": "auto" if args.epsilon is None else args.epsilon}
    doc = ReportDocument("markov", digest_files(args.chains), config, list(analysis.reports.values()), {"analysis": analysis.to_dict()})
    return _emit(doc, args.out)


def _emit(doc, out):
    payload = doc.to_dict()
    validate_document(payload)
    text = json.dumps(payload, indent=2)
    if out is None or str(out) == "-":
        print(text)
    else:
        Path(out).parent.mkdir(parents=True, exist_ok=True)
        Path(out).write_text(text + "\n")
    return 0


# ---------------------------------------------------------------- entry point


def build_parser():
    parser = argparse.ArgumentParser(prog="simdiag", description="Tests for simultaneous diagonalizability.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="Monte-Carlo p-value study")
    sim.add_argument("--design", required=True, choices=["two-sample", "multi", "partial"])
    sim.add_argument("--d", type=int, required=True)
    sim.add_argument("--p", type=int, default=2)
    sim.add_argument("--k", type=int)
    sim.add_argument("--n", type=int, required=True)
    sim.add_argument("--snr", type=_snr, default=math.inf)
    sim.add_argument("--replicates", type=int, default=100)
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--epsilon", type=_epsilon, default=None, help="number or 'auto' (n^{-1/3})")
    sim.add_argument("--alpha", type=float, default=0.05)
    sim.add_argument("--out", type=Path, default=Path("simdiag_out"))
    sim.set_defaults(func=cmd_simulate)

    test = sub.add_parser("test", help="run a test on CSV estimates")
    test.add_argument("--method", required=True, choices=["commutator", "llr", "multi", "partial", "pairwise"])
    test.add_argument("--estimate", action="append", help="matrix CSV (repeat)")
    test.add_argument("--cov", action="append", help="d^2 x d^2 covariance CSV, one per --estimate")
    test.add_argument("--n", type=int, action="append", help="sample size (one, or one per estimate)")
    test.add_argument("--samples", action="append", help="directory of raw sample matrix CSVs (empirical covariance)")
    test.add_argument("--reference", action="append", help="reference matrix CSV for llr (give two)")
    test.add_argument("--v", help="eigenvector matrix CSV (multi) or k x k block diagonalizer (partial)")
    test.add_argument("--q", help="orthogonal matrix CSV for partial")
    test.add_argument("--k", type=int)
    test.add_argument("--variant", choices=["chi2", "gamma"], default="chi2")
    test.add_argument("--epsilon", type=_epsilon, default=None)
    test.add_argument("--seed", type=int, default=0)
    test.add_argument("--out", default=None, help="report path (default stdout)")
    test.set_defaults(func=cmd_test)

    var = sub.add_parser("var", help="VAR coefficient analysis across subjects")
    var.add_argument("--series", nargs="+", required=True, help="one T x d CSV per subject")
    var.add_argument("--order", type=int, default=1)
    var.add_argument("--epsilon", type=_epsilon, default=None)
    var.add_argument("--alpha", type=float, default=0.05)
    var.add_argument("--seed", type=int, default=0)
    var.add_argument("--out", default=None)
    var.set_defaults(func=cmd_var)

    mk = sub.add_parser("markov", help="common stationary distribution of several chains")
    mk.add_argument("--chains", nargs="+", required=True, help="one single-column CSV per chain")
    mk.add_argument("--d", type=int)
    mk.add_argument("--bins", type=_quantiles, help="quantile thresholds, e.g. 0.25,0.75")
    mk.add_argument("--epsilon", type=_epsilon, default=None)
    mk.add_argument("--out", default=None)
    mk.set_defaults(func=cmd_markov)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"simdiag {args.command}: error: {exc}", file=sys.stderr)
        return 2
    except (np.linalg.LinAlgError, ValueError, RuntimeError, FloatingPointError) as exc:
        print(f"simdiag {args.command}: numerical failure: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
