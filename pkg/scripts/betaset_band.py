#!/usr/bin/env python3
"""R(n) n^beta p^n for the ternary Cantor set over a range of n."""

import argparse

from dynperc import io
from dynperc.kernels import R_band
from dynperc.target_set import cantor
from dynperc.tree import PercolationParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--ps", type=float, nargs="+", default=[1 / 3, 1 / 2])
    ap.add_argument("--nmin", type=int, default=16)
    ap.add_argument("--nmax", type=int, default=256)
    ap.add_argument("--step", type=int, default=8)
    ap.add_argument("--out")
    args = ap.parse_args()

    d = cantor(3, [0, 2], 1)
    ns = list(range(args.nmin, args.nmax + 1, args.step))
    out = {}
    for p in args.ps:
        band = R_band(d, ns, PercolationParams(p))
        out[f"{p:.4f}"] = {"n": ns, "normalized_R": band.tolist()}
        print(f"p={p:.3f}  min={band.min():.4f}  max={band.max():.4f}  ratio={band.max() / band.min():.3f}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(io.dumps(out))


if __name__ == "__main__":
    main()
