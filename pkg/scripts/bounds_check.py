#!/usr/bin/env python3
"""Randomized check of Cap/2 <= P(hit) <= 512 Cap on Galton-Watson trees."""

import argparse

import numpy as np

from dynperc import io
from dynperc.checks import bounds_check
from dynperc.target_set import cantor, from_intervals, point
from dynperc.tree import PercolationParams, build_galton_watson


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--instances", type=int, default=30)
    ap.add_argument("--runs", type=int, default=10_000)
    ap.add_argument("--seed", type=int, default=0)
    ap.add_argument("--max-depth", type=int, default=8)
    ap.add_argument("--out")
    args = ap.parse_args()

    rng = np.random.default_rng(args.seed)
    rows = []
    for i in range(args.instances):
        while True:
            probs = np.concatenate([[0.0], rng.dirichlet(np.ones(3))])
            t = build_galton_watson(probs, int(rng.integers(2, args.max_depth + 1)), int(rng.integers(1 << 31)))
            if t.n_leaves <= 300:
                break
        pc = t.level_counts[-1] ** (-1 / t.height)
        p = float(rng.uniform(min(1.05 * pc, 0.95), 0.95))
        d = [point(float(rng.uniform())), from_intervals([[0, 1]]), cantor(3, [0, 2], int(rng.integers(1, 7)))][i % 3]
        rep = bounds_check(t, d, PercolationParams(p), args.runs, seed=args.seed * 1000 + i)
        rows.append(dict(rep.to_dict(), leaves=t.n_leaves, depth=t.height, p=p))
        print(f"{i:3d} depth={t.height} leaves={t.n_leaves:4d} p={p:.3f} cap={rep.capacity:.4f} "
              f"p_hat={rep.p_hat:.4f} ratio={rep.ratio:.2f} {'PASS' if rep.passed else 'FAIL'}")
    print(f"violations: {sum(not r['passed'] for r in rows)} / {len(rows)}")
    if args.out:
        with open(args.out, "w") as fh:
            fh.write(io.dumps({"instances": rows}))


if __name__ == "__main__":
    main()
