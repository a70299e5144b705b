"""Partial tests (chi2 and gamma) with fitted Q and V~, d=4, p=8, k=2, 200 replicates."""
import math

from _grid import parse_args, run_grid

if __name__ == "__main__":
    args = parse_args(__doc__, [10.0, 100.0, 1000.0, math.inf], [100, 1000, 10_000], 200)
    run_grid("partial", args, d=4, p=8, k=2)
