"""Fit the shipped parameter table (alpha 0.05..0.95, N 3..12)."""
import argparse
import time

import numpy as np

from fracprony.optimizer import DEFAULT_TABLE, parameter_table

ap = argparse.ArgumentParser()
ap.add_argument("--out", default=str(DEFAULT_TABLE))
ap.add_argument("--workers", type=int, default=1)
args = ap.parse_args()
alphas = np.round(np.arange(0.05, 0.951, 0.05), 2)
t0 = time.perf_counter()
parameter_table(alphas, range(3, 13), scale=10.0, T_problem=1.0, path=args.out, workers=args.workers)
print(f"wrote {args.out} in {time.perf_counter() - t0:.1f} s")
