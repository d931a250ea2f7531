"""Acceptance criteria 1-10, one PASS/FAIL line each (shown in the terminal summary)."""

import math
import time

import numpy as np
import pytest
from scipy import stats

from dynperc.capacity import (
    ProductMeasure,
    capacity,
    capacity_sweep,
    default_resolution,
    energy,
    lyons_capacity,
    minimize_energy,
    sandwich_bounds,
)
from dynperc.checks import bounds_check, exceptional_dim_trend, power_profile
from dynperc.dynamics import estimate_hit_probability, percolation_trace, simulate_edges, z_statistic_batch
from dynperc.kernels import KernelSpec, R_band, assemble_matrix, ss_energy_series
from dynperc.target_set import cantor, discretize, from_intervals, point
from dynperc.tree import PercolationParams, build_explicit, build_galton_watson, build_spherical

from oracles import all_trees, recompute_trace

pytestmark = pytest.mark.acceptance
LOG3_2 = math.log(2) / math.log(3)
ALPHAS = np.round(np.arange(0.05, 1.0, 0.05), 10)


def random_leafless_tree(rng, max_depth=8, max_leaves=500):
    while True:
        depth = int(rng.integers(2, max_depth + 1))
        probs = rng.dirichlet(np.ones(3))
        t = build_galton_watson(np.concatenate([[0.0], probs]), depth, seed=int(rng.integers(1 << 31)))
        if t.n_leaves <= max_leaves:
            return t


def test_c1_singleton_lyons_reduction(record):
    rng = np.random.default_rng(1)
    start = time.perf_counter()
    worst = 0.0
    for _ in range(20):
        t = random_leafless_tree(rng)
        P = PercolationParams(float(rng.uniform(0.2, 0.95)))
        s = float(rng.uniform(0, 1))
        c_h = capacity(t, point(s), P).capacity
        c_l = lyons_capacity(t, P)
        worst = max(worst, abs(c_h - c_l) / c_l)
    elapsed = time.perf_counter() - start
    assert record(1, worst <= 1e-6 and elapsed < 30, f"max rel err {worst:.2e}, {elapsed:.1f}s")


@pytest.mark.parametrize(
    "children, p, exact",
    [([[1], [2], [3], []], 0.9, 0.729), ([[1, 2], [3, 4], [5, 6], [], [], [], []], 0.5, 39 / 64)],
    ids=["path3", "binary2"],
)
def test_c2_exact_hit_probabilities(record, children, p, exact):
    t = build_explicit(children)
    start = time.perf_counter()
    est = estimate_hit_probability(t, PercolationParams(p), point(0.3), 100_000, seed=2)
    elapsed = time.perf_counter() - start
    z = abs(est.p_hat - exact) / est.std_err
    ok = z <= 3 and elapsed < 10
    prev = test_c2_exact_hit_probabilities.__dict__.setdefault("lines", [])
    prev.append((ok, f"{exact:.4f}: p_hat {est.p_hat:.4f} ({z:.2f} se, {elapsed:.1f}s)"))
    record(2, all(o for o, _ in prev), "; ".join(d for _, d in prev))
    assert ok


def test_c3_two_sided_bound(record):
    rng = np.random.default_rng(3)
    violations, ratios = 0, []
    for i in range(30):
        t = random_leafless_tree(rng, max_leaves=300)
        pc = t.level_counts[-1] ** (-1 / t.height)
        lo = min(pc * 1.05, 0.95)
        P = PercolationParams(float(rng.uniform(lo, 0.95)))
        kind = i % 3
        if kind == 0:
            d = point(float(rng.uniform(0, 1)))
        elif kind == 1:
            d = from_intervals([[0, 1]])
        else:
            d = cantor(3, [0, 2], int(rng.integers(1, 7)))
        rep = bounds_check(t, d, P, 10_000, seed=i)
        violations += not rep.passed
        ratios.append(rep.ratio)
    assert record(3, violations == 0,
                  f"{violations} violations / 30, p_hat/Cap in [{min(ratios):.2f}, {max(ratios):.2f}]")


def test_c4_moment_identities(record):
    t = build_spherical([2, 2])
    P = PercolationParams(0.5)
    grid = discretize(from_intervals([[0, 1]]), 0.125)
    atoms = np.array([[i, j] for i in range(4) for j in range(grid.size)])
    K = assemble_matrix(t, grid, KernelSpec("h", params=P))
    rng = np.random.default_rng(4)
    ok, worst_z = True, 0.0
    for k in range(5):
        mu = ProductMeasure(atoms, rng.dirichlet(np.ones(len(atoms)) * 0.5))
        z = z_statistic_batch(t, P, mu, grid, 100_000, seed=40 + k, horizon=1.0)
        se1 = z.std(ddof=1) / math.sqrt(z.size)
        se2 = (z ** 2).std(ddof=1) / math.sqrt(z.size)
        worst_z = max(worst_z, abs(z.mean() - 1) / se1)
        ok &= abs(z.mean() - 1) <= 3 * se1 and (z ** 2).mean() <= 2 * energy(K, mu) + 3 * se2
    assert record(4, ok, f"max |mean - 1|/se = {worst_z:.2f}")


def test_c5_spherical_consistency(record):
    rng = np.random.default_rng(5)
    worst_rel, worst_tv = 0.0, 0.0
    for i in range(50):
        degs = rng.integers(1, 4, size=int(rng.integers(1, 5))).tolist()
        t = build_spherical(degs)
        P = PercolationParams(float(rng.uniform(0.2, 0.9)))
        d = [point(0.5), from_intervals([[0, 1]]), cantor(3, [0, 2], 2)][i % 3]
        grid = discretize(d, default_resolution(d, cells=8))
        nu = rng.dirichlet(np.ones(grid.size))
        k = assemble_matrix(t, grid, KernelSpec("h", params=P))
        w = np.outer(np.full(t.n_leaves, 1 / t.n_leaves), nu).ravel()
        generic = energy(k, ProductMeasure.from_vector(k, w, drop_zeros=False))
        series = ss_energy_series(t.level_counts, nu, grid, P)
        worst_rel = max(worst_rel, abs(series - generic) / generic)
        r = minimize_energy(k)
        marg = r.measure.leaf_marginal(t.n_leaves)
        worst_tv = max(worst_tv, 0.5 * np.abs(marg - 1 / t.n_leaves).sum())
    ok = worst_rel <= 1e-10 and worst_tv <= 1e-3
    assert record(5, ok, f"max rel diff {worst_rel:.1e}, max TV {worst_tv:.1e}")


def test_c6_equilibrium_diagnostics(record):
    rng = np.random.default_rng(6)
    checked, bad = 0, 0
    for i in range(25):
        t = random_leafless_tree(rng, max_depth=6, max_leaves=200)
        P = PercolationParams(float(rng.uniform(0.3, 0.95)))
        d = [point(0.2), from_intervals([[0, 1]]), cantor(3, [0, 2], 3), from_intervals([[0, 0.3], [0.5, 2]])][i % 4]
        grid = discretize(d, default_resolution(d))
        k = assemble_matrix(t, grid, KernelSpec("h", params=P))
        r = minimize_energy(k, tol=1e-8)
        if not r.converged:
            continue
        checked += 1
        pot = k.entries @ r.weights
        supp = r.weights > 0
        bad += not (pot.min() >= (1 - 1e-6) * r.energy and np.all(np.abs(pot[supp] / r.energy - 1) <= 1e-6))
    assert record(6, bad == 0 and checked > 0, f"{checked} converged runs, {bad} failing diagnostics")


@pytest.mark.slow
@pytest.mark.parametrize("gamma", [0.3, 0.5, 0.7])
def test_c7_dimension_sweep(record, gamma):
    start = time.perf_counter()
    s = capacity_sweep(power_profile(2, gamma, 14), from_intervals([[0, 1]]), PercolationParams(0.5),
                       ALPHAS, 2 ** -10)
    elapsed = time.perf_counter() - start
    ok = abs(s.threshold - gamma) <= 0.1
    prev = test_c7_dimension_sweep.__dict__.setdefault("lines", [])
    prev.append((ok, f"gamma {gamma}: {s.threshold:.3f} ({elapsed:.0f}s)"))
    record(7, all(o for o, _ in prev), "; ".join(d for _, d in prev))
    assert ok


@pytest.mark.slow
def test_c8_codimension_sandwich(record):
    lo, hi = sandwich_bounds(0.8, LOG3_2, LOG3_2)
    rep = exceptional_dim_trend(power_profile(2, 0.8, 14), cantor(3, [0, 2], 8), PercolationParams(0.5),
                                [8, 10, 12, 14], 300, 8, [3.0 ** -k for k in range(1, 5)])
    deep = [e for n, e in zip(rep.depths, rep.estimates) if n >= 12]
    inside = all(lo - 0.15 <= e <= hi + 0.15 for e in deep)
    ok = inside and rep.monotone
    est = ", ".join(f"n={n}: {e:.3f}" for n, e in zip(rep.depths, rep.estimates))
    assert record(8, ok, f"window [{lo - 0.15:.3f}, {hi + 0.15:.3f}], {est}, {rep.hits}/{rep.runs} hits")


def test_c9_betaset_asymptotics(record):
    d = cantor(3, [0, 2], 1)
    ns = list(range(16, 257, 8))
    dyadic = [16, 32, 64, 128, 256]
    ok, parts = True, []
    for p in (1 / 3, 1 / 2):
        P = PercolationParams(p)
        band = R_band(d, ns, P)
        dy = R_band(d, dyadic, P)
        ratio = band.max() / band.min()
        drift = float(np.max(np.maximum(dy[1:] / dy[:-1], dy[:-1] / dy[1:])))
        ok &= ratio <= 4 and drift < 2
        parts.append(f"p={p:.3f}: band {ratio:.2f}, drift {drift:.2f}")
    assert record(9, ok, "; ".join(parts))


def test_c10_simulation_exactness(record):
    trees = all_trees(7)
    rng = np.random.default_rng(10)
    mismatches, runs = 0, 0
    for i in range(1000):
        t = build_explicit(trees[int(rng.integers(len(trees)))])
        P = PercolationParams(float(rng.uniform(0.1, 0.9)))
        run = simulate_edges(t, P, 2.0, seed=int(rng.integers(1 << 31)), run_index=int(rng.integers(100)))
        flips = [run.flips(e).tolist() for e in range(t.n_edges)]
        want = recompute_trace(t.children_lists(), run.init.tolist(), flips, 2.0)
        mismatches += percolation_trace(t, run).intervals.tolist() != [list(iv) for iv in want]
        runs += 1
    # stationarity and flip rate on 10^4 edges
    p, T = 0.4, 3.0
    star = build_spherical([10_000])
    run = simulate_edges(star, PercolationParams(p), T, seed=10)
    chi = 0.0
    for s in np.linspace(0, T, 5):
        k = int(run.state_at(s).sum())
        n = star.n_edges
        chi += (k - n * p) ** 2 / (n * p * (1 - p))
    p_stat = stats.chi2.sf(chi, df=5)
    c = run.flip_counts
    z_rate = abs(c.mean() - 2 * p * (1 - p) * T) / (c.std(ddof=1) / math.sqrt(c.size))
    p_rate = 2 * stats.norm.sf(z_rate)
    ok = mismatches == 0 and p_stat > 1e-3 and p_rate > 1e-3
    assert record(10, ok, f"{mismatches}/{runs} oracle mismatches, stationarity p={p_stat:.3f}, "
                          f"flip-rate p={p_rate:.3f}")
