"""Multi-sample tests (exact V, estimated V chi2, estimated V gamma), d=4, p=8, 200 replicates.

The n=1e5 column dominates the runtime (a few minutes per SNR value).
"""
import math

from _grid import parse_args, run_grid

if __name__ == "__main__":
    args = parse_args(__doc__, [10.0, 100.0, 1000.0, math.inf], [100, 1000, 10_000, 100_000], 200)
    run_grid("multi", args, d=4, p=8)
