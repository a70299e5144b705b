"""Commutator test p-values over SNR in {1, 50, inf} and n in {50, 100, 250} (d=5, 500 replicates)."""
import math

from _grid import parse_args, run_grid

if __name__ == "__main__":
    args = parse_args(__doc__, [1.0, 50.0, math.inf], [50, 100, 250], 500)
    run_grid("two_sample", args, d=5)
