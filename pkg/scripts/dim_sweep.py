#!/usr/bin/env python3
"""Capacity sweep over alpha for |G_l| = ceil(2^l l^gamma) trees, next to the series threshold."""

import argparse
import time

import numpy as np

from dynperc import io
from dynperc.capacity import capacity_sweep, dimh_SG
from dynperc.checks import power_profile
from dynperc.target_set import from_intervals
from dynperc.tree import PercolationParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gammas", type=float, nargs="+", default=[0.3, 0.5, 0.7])
    ap.add_argument("--depth", type=int, default=14)
    ap.add_argument("--p", type=float, default=0.5)
    ap.add_argument("--eps", type=float, default=2 ** -10)
    ap.add_argument("--out")
    args = ap.parse_args()

    alphas = np.round(np.arange(0.05, 1.0, 0.05), 10)
    P = PercolationParams(args.p)
    rows = []
    for g in args.gammas:
        t0 = time.perf_counter()
        s = capacity_sweep(power_profile(2, g, args.depth), from_intervals([[0, 1]]), P, alphas, args.eps)
        series = dimh_SG(power_profile(2, g, 4096), P, alphas).value
        rows.append({"gamma": g, "threshold": s.threshold, "series": series,
                     "seconds": time.perf_counter() - t0, "sweep": s.to_dict()})
        print(f"gamma={g:.2f}  sweep threshold={s.threshold:.3f}  series={series:.2f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(io.dumps({"runs": rows}))


if __name__ == "__main__":
    main()
