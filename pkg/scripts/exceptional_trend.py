#!/usr/bin/env python3
"""Box-count dimension of exceptional times inside a Cantor target, by tree depth."""

import argparse
import math

from dynperc import io
from dynperc.capacity import sandwich_bounds
from dynperc.checks import exceptional_dim_trend, power_profile
from dynperc.target_set import cantor
from dynperc.tree import PercolationParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--gamma", type=float, default=0.8)
    ap.add_argument("--depths", type=int, nargs="+", default=[8, 10, 12, 14])
    ap.add_argument("--runs", type=int, default=300)
    ap.add_argument("--seed", type=int, default=8)
    ap.add_argument("--cantor-depth", type=int, default=8)
    ap.add_argument("--out")
    args = ap.parse_args()

    d = cantor(3, [0, 2], args.cantor_depth)
    delta = math.log(2) / math.log(3)
    lo, hi = sandwich_bounds(args.gamma, delta, delta)
    rep = exceptional_dim_trend(power_profile(2, args.gamma, max(args.depths)), d, PercolationParams(0.5),
                                args.depths, args.runs, args.seed, [3.0 ** -k for k in range(1, 5)])
    print(f"sandwich [{lo:.3f}, {hi:.3f}]   hits {rep.hits}/{rep.runs}")
    for n, e in zip(rep.depths, rep.estimates):
        print(f"depth {n:3d}   estimate {e:.4f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(io.dumps(dict(rep.to_dict(), sandwich=[lo, hi])))


if __name__ == "__main__":
    main()
