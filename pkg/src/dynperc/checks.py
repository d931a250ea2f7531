"""Composite checks that tie capacities to simulation and to series formulas.

Each function returns a plain dataclass report; the command line layer only
parses arguments and serializes these.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Optional, Sequence, Union

import numpy as np

from . import capacity as cap
from .dynamics import (
    EdgeBatch,
    batch_traces,
    estimate_hit_probability,
    exceptional_dim_estimate,
    hits_target,
    iter_batches,
)
from .errors import MissingGenerator
from .kernels import KernelSpec, R_band, assemble_matrix
from .target_set import TargetSet, discretize, point
from .tree import PercolationParams, Tree, build_from_level_counts, power_counts

LOWER_CONST = 0.5
UPPER_CONST = 512.0


@dataclass(frozen=True)
class BoundsReport:
    capacity: float
    p_hat: float
    std_err: float
    runs: int
    hits: int
    lower: float
    upper: float
    ratio: float
    band: float
    passed: bool
    epsilon: float
    converged: bool

    def to_dict(self) -> dict:
        return asdict(self)


def bounds_check(t: Tree, d: TargetSet, params: PercolationParams, runs: int, seed: int,
                 resolution: Optional[float] = None, tol: float = cap.DEFAULT_TOL,
                 max_iter: int = cap.DEFAULT_MAX_ITER, horizon: Optional[float] = None) -> BoundsReport:
    """Compare a Monte Carlo hit probability with Cap_h/2 and 512 Cap_h.

    PASS iff p_hat + 3 se >= Cap/2 and p_hat - 3 se <= 512 Cap.  Cap is
    computed on cell centers, a subset of D, so it never exceeds the
    capacity of D itself.
    """
    if d.is_empty:
        c, eps, ok = 0.0, 0.0, True
    else:
        eps = resolution if resolution is not None else cap.default_resolution(d)
        res = cap.capacity(t, d, params, eps, kernel="h", tol=tol, max_iter=max_iter)
        c, ok = res.capacity, res.converged
    est = estimate_hit_probability(t, params, d, runs, seed, horizon=horizon)
    band = 3.0 * est.std_err
    lower, upper = LOWER_CONST * c, UPPER_CONST * c
    passed = (est.p_hat + band >= lower) and (est.p_hat - band <= upper)
    ratio = est.p_hat / c if c > 0 else math.inf
    return BoundsReport(c, est.p_hat, est.std_err, est.runs, est.hits, lower, upper, ratio, band,
                        bool(passed), float(eps), bool(ok))


@dataclass(frozen=True)
class BetaSetReport:
    beta: float
    g_capacity: float
    h_capacity: float
    agree: bool
    ns: list
    normalized_R: list
    band_ratio: float
    dyadic_drift: float

    def to_dict(self) -> dict:
        return asdict(self)


def betaset_report(t: Tree, d: TargetSet, params: PercolationParams,
                   ns: Sequence[int] = (16, 32, 64, 128, 256), resolution: Optional[float] = None,
                   cutoff: float = cap.DEFAULT_CUTOFF, tol: float = cap.DEFAULT_TOL,
                   max_iter: int = cap.DEFAULT_MAX_ITER) -> BetaSetReport:
    """g-capacity of the boundary, h-capacity of boundary x D, and R(n) n^beta p^n."""
    if d.generator is None:
        raise MissingGenerator("target needs a Cantor generator")
    beta = d.generator.beta
    k = assemble_matrix(t, discretize(point(0.0), 1.0), KernelSpec("betaset", params=params, beta=beta))
    g_cap = cap.minimize_energy(k, tol=tol, max_iter=max_iter).capacity
    eps = resolution if resolution is not None else cap.default_resolution(d)
    h_cap = cap.capacity(t, d, params, eps, kernel="h", tol=tol, max_iter=max_iter).capacity
    seq = R_band(d, ns, params)
    dy = [n for n in ns if n & (n - 1) == 0]
    dy_vals = np.array([seq[list(ns).index(n)] for n in dy])
    drift = float(np.max(np.abs(np.log(dy_vals[1:] / dy_vals[:-1])))) if dy_vals.size > 1 else 0.0
    return BetaSetReport(beta, g_cap, h_cap, (g_cap > cutoff) == (h_cap > cutoff), list(ns),
                         seq.tolist(), float(seq.max() / seq.min()), math.exp(drift))


@dataclass(frozen=True)
class SweepReport:
    sweep: cap.DimSweep
    dimh_series: Optional[float] = None
    inconclusive: tuple = ()
    sandwich: Optional[tuple] = None

    def to_dict(self) -> dict:
        out = {"sweep": self.sweep.to_dict()}
        if self.dimh_series is not None:
            out.update(dimh_series=self.dimh_series, inconclusive=list(self.inconclusive),
                       sandwich=list(self.sandwich) if self.sandwich else None)
        return out


def dim_sweep_report(tree_or_counts: Union[Tree, Sequence[float]], d: TargetSet, params: PercolationParams,
                     alphas: Sequence[float], resolution: float, tol: float = cap.DEFAULT_TOL,
                     max_iter: int = cap.DEFAULT_MAX_ITER,
                     series_counts: Optional[Sequence[int]] = None) -> SweepReport:
    """Sweep Cap_phi(alpha) and, for level profiles, the series prediction.

    The series verdict needs many more levels than the sweep can afford, so
    callers that know the profile in closed form pass ``series_counts``;
    otherwise the sweep's own levels are used when there are at least 16.
    """
    sweep = cap.capacity_sweep(tree_or_counts, d, params, alphas, resolution, tol=tol, max_iter=max_iter)
    if series_counts is None and sweep.method == "spherical":
        counts = tree_or_counts.level_counts if isinstance(tree_or_counts, Tree) else list(tree_or_counts)
        series_counts = counts if len(counts) > 16 else None
    if series_counts is None:
        return SweepReport(sweep)
    est = cap.dimh_SG(series_counts, params, alphas)
    beta = d.beta if d.beta is not None else 1.0
    return SweepReport(sweep, est.value, est.inconclusive, cap.sandwich_bounds(est.value, beta, beta))


def power_profile(base: int, gamma: float, depth: int) -> list[int]:
    """Level counts ceil(base^l l^gamma) for l >= 1, with a single root."""
    return power_counts({"base": base, "gamma": gamma, "depth": depth})


@dataclass(frozen=True)
class TrendReport:
    depths: list
    estimates: list
    hits: int
    runs: int
    scales: list
    monotone: bool

    def to_dict(self) -> dict:
        return asdict(self)


def exceptional_dim_trend(counts: Sequence[int], d: TargetSet, params: PercolationParams,
                          depths: Sequence[int], runs: int, seed: int,
                          scales: Sequence[float], horizon: float = 1.0) -> TrendReport:
    """Box-count slope of trace ∩ D at nested truncations of one deep tree.

    The deepest tree is simulated once and every shallower truncation reads
    the same edge trajectories (edges are stored level by level), so the
    time sets are nested and the depth trend is not masked by sampling
    noise.  Slopes are averaged over the runs whose deepest trace meets D.
    """
    depths = sorted(int(n) for n in depths)
    deep = build_from_level_counts(list(counts)[:depths[-1] + 1])
    subs = {n: build_from_level_counts(list(counts)[:n + 1]) for n in depths}
    traces = {n: [] for n in depths}
    for b in iter_batches(deep, params, horizon, seed, runs):
        for n, s in subs.items():
            view = EdgeBatch(s.digest, s.n_edges, b.horizon, b.seed, b.first_run,
                             b.init[:, :s.n_edges], b.times[:, :s.n_edges])
            traces[n].extend(batch_traces(s, view))
    keep = [i for i, tr in enumerate(traces[depths[-1]]) if hits_target(tr, d)]
    est = [exceptional_dim_estimate([traces[n][i] for i in keep], d, scales) for n in depths]
    mono = bool(np.all(np.diff(est) <= 0))
    return TrendReport(depths, est, len(keep), runs, list(scales), mono)
