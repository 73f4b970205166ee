"""Regenerate every study into a results directory via the CLI.

    python3 scripts/reproduce.py results/ [--long]
"""
import argparse
import sys
import time
from pathlib import Path

from fracprony.cli import main

ap = argparse.ArgumentParser()
ap.add_argument("outdir", type=Path)
ap.add_argument("--long", action="store_true", help="include the full-history spatial L1 column")
args = ap.parse_args()
d = args.outdir
d.mkdir(parents=True, exist_ok=True)

runs = [
    ["poly", "--out", d / "poly_errors.csv"],
    ["poly", "--methods", "prony", "--dts", "1e-5,1e-6", "--continuous", "0", "--out", d / "poly_errors_fine.csv"],
    ["bench", "--mode", "poly-timing", "--out", d / "poly_timing.csv"],
    ["fde", "--alpha", "1/2,2/3", "--nx", "20000", "--nt", "10..320", "--method", "gao", "--out", d / "fde_temporal_gao.csv"],
    ["fde", "--alpha", "1/2,2/3", "--nx", "20000", "--nt", "10..320", "--out", d / "fde_temporal_prony.csv"],
    ["fde", "--alpha", "1/2,2/3", "--nx", "10..160", "--nt", "20000", "--norm", "l2", "--out", d / "fde_spatial_prony.csv"],
    ["fde", "--alpha", "1/2,2/3", "--nx", "10..160", "--nt", "2000", "--norm", "l2", "--method", "gao",
     "--out", d / "fde_spatial_gao_short.csv"],
    ["liver", "--dt", "1e-3", "--terms", "9", "--out", d / "liver_prony.csv"],
    ["bench", "--mode", "liver-timing", "--dts", "1e-3,5e-4,1e-4", "--terms", "3,12", "--out", d / "liver_timing.csv"],
    ["stability", "--out", d / "stability_ledger.csv"],
]
if args.long:
    runs.append(["fde", "--alpha", "1/2,2/3", "--nx", "10..160", "--nt", "20000", "--norm", "l2",
                 "--method", "gao", "--long", "--out", d / "fde_spatial_gao.csv"])

status = 0
for r in runs:
    t0 = time.perf_counter()
    rc = main([str(x) for x in r])
    print(f"{' '.join(map(str, r[:1]))} -> {r[-1]} rc={rc} ({time.perf_counter() - t0:.1f} s)", flush=True)
    status |= rc
sys.exit(status)
