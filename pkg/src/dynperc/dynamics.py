"""Event-driven simulation of edge-flip dynamics and the percolation time set.

Every edge of every run owns a fixed window of a counter-based Philox
stream keyed by the seed: row ``run * n_edges + edge`` reads uniforms
``[row * K, (row + 1) * K)``.  A batch of runs is therefore one contiguous
draw, and a single run reproduces exactly the same numbers.  The rare row
that needs more than K uniforms continues in a side stream whose counter
has the row index in its third word and a chunk index in its top word.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence

import numba as nb
import numpy as np

from .errors import (
    DegenerateScales,
    DynPercError,
    HorizonExceeded,
    MismatchedRun,
    NoHits,
)
from .target_set import TargetSet, TimeGrid, box_dimension_estimate
from .tree import PercolationParams, Tree

BATCH_BUDGET = 1 << 22  # uniforms per generated batch


def _stride(params: PercolationParams, horizon: float) -> int:
    mean = 2.0 * params.p * params.q * horizon
    need = 2.0 + mean + 6.0 * math.sqrt(mean) + 6.0
    return 4 * int(math.ceil(need / 4.0))


def _uniforms(seed: int, first_row: int, n_rows: int, K: int) -> np.ndarray:
    bg = np.random.Philox(key=seed)
    bg.advance(first_row * (K // 4))
    return np.random.Generator(bg).random((n_rows, K))


def _overflow_uniforms(seed: int, row: int, chunk: int, K: int) -> np.ndarray:
    bg = np.random.Philox(key=seed, counter=[0, 0, row, chunk + 1])
    return np.random.Generator(bg).random(K)


def _flip_times(u: np.ndarray, init: np.ndarray, params: PercolationParams) -> np.ndarray:
    """Cumulative flip times from uniforms u[:, 1:] and initial states."""
    K1 = u.shape[1]
    parity = np.arange(K1) % 2 == 0  # holding j is in the initial state when j even
    open_now = np.where(parity[None, :], init[:, None], ~init[:, None])
    rate = np.where(open_now, params.q, params.p)
    return np.cumsum(-np.log1p(-u) / rate, axis=1)


@dataclass(frozen=True, eq=False)
class EdgeBatch:
    """Flip times for a block of consecutive runs.

    ``times[r, e, :]`` holds the flip times of edge ``e`` in run
    ``first_run + r``, increasing, padded with +inf past the horizon.
    """

    tree_digest: str
    n_edges: int
    horizon: float
    seed: int
    first_run: int
    init: np.ndarray
    times: np.ndarray

    @property
    def n_runs(self) -> int:
        return int(self.init.shape[0])

    def run(self, r: int) -> "SimulationRun":
        row = self.times[r]
        counts = np.isfinite(row).sum(axis=1)
        ptr = np.concatenate([[0], np.cumsum(counts)])
        flips = row[np.isfinite(row)]
        return SimulationRun(self.tree_digest, self.n_edges, self.horizon, self.seed,
                             self.first_run + r, self.init[r].copy(), ptr, flips)


@dataclass(frozen=True, eq=False)
class SimulationRun:
    """One realization of all edge trajectories on [0, horizon].

    Flip times of edge e are ``flip_times[flip_ptr[e]:flip_ptr[e + 1]]``.
    """

    tree_digest: str
    n_edges: int
    horizon: float
    seed: int
    run_index: int
    init: np.ndarray
    flip_ptr: np.ndarray
    flip_times: np.ndarray

    def flips(self, e: int) -> np.ndarray:
        return self.flip_times[self.flip_ptr[e]:self.flip_ptr[e + 1]]

    @property
    def flip_counts(self) -> np.ndarray:
        return np.diff(self.flip_ptr)

    def state_at(self, t: float) -> np.ndarray:
        """Open/closed state of every edge at time t."""
        n_before = np.array([np.searchsorted(self.flips(e), t, side="right") for e in range(self.n_edges)])
        return self.init ^ (n_before % 2 == 1)

    def padded(self) -> np.ndarray:
        k = max(1, int(self.flip_counts.max(initial=0)))
        out = np.full((self.n_edges, k), np.inf)
        for e in range(self.n_edges):
            f = self.flips(e)
            out[e, :f.size] = f
        return out


def simulate_batch(t: Tree, params: PercolationParams, horizon: float, seed: int,
                   first_run: int, n_runs: int) -> EdgeBatch:
    """Trajectories of runs ``first_run .. first_run + n_runs - 1``."""
    if not horizon > 0:
        raise DynPercError("horizon must be positive")
    E = t.n_edges
    K = _stride(params, horizon)
    rows = n_runs * E
    u = _uniforms(seed, first_run * E, rows, K)
    init = u[:, 0] < params.p
    cum = _flip_times(u[:, 1:], init, params)
    short = np.nonzero(cum[:, -1] <= horizon)[0]
    extra = []
    for i in short:
        row = first_run * E + int(i)
        last = cum[i, -1]
        n_flips = K - 1
        chunk = 0
        more = []
        while last <= horizon:
            uu = _overflow_uniforms(seed, row, chunk, K)
            state_open = bool(init[i]) ^ (n_flips % 2 == 1)
            parity = np.arange(K) % 2 == 0
            open_now = np.where(parity, state_open, not state_open)
            rate = np.where(open_now, params.q, params.p)
            c = last + np.cumsum(-np.log1p(-uu) / rate)
            more.append(c)
            last = c[-1]
            n_flips += K
            chunk += 1
        extra.append(np.concatenate(more))
    width = K - 1 + max((x.size for x in extra), default=0)
    times = np.full((rows, width), np.inf)
    times[:, :K - 1] = cum
    for i, x in zip(short, extra):
        times[i, K - 1:K - 1 + x.size] = x
    times[times > horizon] = np.inf
    used = int(np.isfinite(times).sum(axis=1).max(initial=0))
    times = times[:, :max(used, 1)]
    return EdgeBatch(t.digest, E, float(horizon), int(seed), int(first_run),
                     init.reshape(n_runs, E), times.reshape(n_runs, E, -1))


def simulate_edges(t: Tree, params: PercolationParams, horizon: float, seed: int,
                   run_index: int = 0) -> SimulationRun:
    """One run: initial Bernoulli(p) states and exact exponential holding times."""
    return simulate_batch(t, params, horizon, seed, run_index, 1).run(0)


def iter_batches(t: Tree, params: PercolationParams, horizon: float, seed: int,
                 runs: int, budget: int = BATCH_BUDGET) -> Iterator[EdgeBatch]:
    per_run = max(1, t.n_edges * _stride(params, horizon))
    size = max(1, budget // per_run)
    for start in range(0, runs, size):
        yield simulate_batch(t, params, horizon, seed, start, min(size, runs - start))


# -- percolation time set -------------------------------------------------

@nb.njit(cache=True)
def _initial_live(parent, is_leaf, open_):
    nv = parent.shape[0]
    cnt = np.zeros(nv, dtype=np.int64)
    live = np.zeros(nv, dtype=np.bool_)
    for v in range(nv - 1, -1, -1):
        live[v] = is_leaf[v] or cnt[v] > 0
        if v > 0 and live[v] and open_[v - 1]:
            cnt[parent[v]] += 1
    return cnt, live


@nb.njit(cache=True)
def _trace_one(parent, is_leaf, init, times, horizon):
    """Intervals of [0, horizon] on which the root reaches depth n."""
    E, W = times.shape
    open_ = init.copy()
    cnt, live = _initial_live(parent, is_leaf, open_)
    n_ev = 0
    for e in range(E):
        for j in range(W):
            if times[e, j] <= horizon:
                n_ev += 1
            else:
                break
    ts = np.empty(n_ev)
    es = np.empty(n_ev, dtype=np.int64)
    k = 0
    for e in range(E):
        for j in range(W):
            if times[e, j] <= horizon:
                ts[k] = times[e, j]
                es[k] = e
                k += 1
            else:
                break
    order = np.argsort(ts, kind="mergesort")
    starts = np.empty(n_ev // 2 + 2)
    ends = np.empty(n_ev // 2 + 2)
    m = 0
    root_live = live[0]
    if root_live:
        starts[0] = 0.0
    for i in range(n_ev):
        e = es[order[i]]
        tm = ts[order[i]]
        open_[e] = not open_[e]
        c = e + 1
        if not live[c]:
            continue
        v = parent[c]
        delta = 1 if open_[e] else -1
        while True:
            cnt[v] += delta
            new = is_leaf[v] or cnt[v] > 0
            if new == live[v]:
                break
            live[v] = new
            if v == 0 or not open_[v - 1]:
                break
            delta = 1 if new else -1
            v = parent[v]
        if live[0] != root_live:
            root_live = live[0]
            if root_live:
                starts[m] = tm
            else:
                ends[m] = tm
                m += 1
    if root_live:
        ends[m] = horizon
        m += 1
    return starts[:m], ends[:m]


@nb.njit(cache=True)
def _trace_batch(parent, is_leaf, init, times, horizon):
    R = init.shape[0]
    ptr = np.zeros(R + 1, dtype=np.int64)
    cap = 16
    S = np.empty(cap)
    T = np.empty(cap)
    for r in range(R):
        s, e = _trace_one(parent, is_leaf, init[r], times[r], horizon)
        need = ptr[r] + s.shape[0]
        if need > cap:
            while cap < need:
                cap *= 2
            S2 = np.empty(cap)
            T2 = np.empty(cap)
            S2[:ptr[r]] = S[:ptr[r]]
            T2[:ptr[r]] = T[:ptr[r]]
            S, T = S2, T2
        S[ptr[r]:need] = s
        T[ptr[r]:need] = e
        ptr[r + 1] = need
    return ptr, S[:ptr[R]], T[:ptr[R]]


@nb.njit(cache=True)
def _hits(ptr, S, T, dlo, dhi):
    R = ptr.shape[0] - 1
    out = np.zeros(R, dtype=np.bool_)
    for r in range(R):
        j = 0
        for i in range(ptr[r], ptr[r + 1]):
            while j < dlo.shape[0] and dhi[j] < S[i]:
                j += 1
            if j < dlo.shape[0] and dlo[j] <= T[i]:
                out[r] = True
                break
    return out


@dataclass(frozen=True, eq=False)
class PercolationTrace:
    """Closed, disjoint, sorted intervals of [0, horizon]."""

    intervals: np.ndarray
    horizon: float

    @property
    def is_empty(self) -> bool:
        return self.intervals.shape[0] == 0

    @property
    def total_length(self) -> float:
        return float(np.sum(self.intervals[:, 1] - self.intervals[:, 0]))

    def to_csv(self) -> str:
        return "".join(f"{a!r},{b!r}\n" for a, b in self.intervals)


def _tree_arrays(t: Tree):
    is_leaf = t.depth == t.height
    return t.parent.astype(np.int64), is_leaf


def _check_run(t: Tree, digest: str, n_edges: int):
    if digest != t.digest or n_edges != t.n_edges:
        raise MismatchedRun("simulation run was generated for a different tree")


def percolation_trace(t: Tree, run: SimulationRun) -> PercolationTrace:
    """Exact set of times in [0, T] at which the root connects to depth n."""
    _check_run(t, run.tree_digest, run.n_edges)
    parent, is_leaf = _tree_arrays(t)
    s, e = _trace_one(parent, is_leaf, run.init.copy(), run.padded(), run.horizon)
    return PercolationTrace(np.stack([s, e], axis=1), run.horizon)


def batch_traces(t: Tree, batch: EdgeBatch) -> list[PercolationTrace]:
    _check_run(t, batch.tree_digest, batch.n_edges)
    parent, is_leaf = _tree_arrays(t)
    ptr, S, T = _trace_batch(parent, is_leaf, batch.init, batch.times, batch.horizon)
    return [PercolationTrace(np.stack([S[ptr[r]:ptr[r + 1]], T[ptr[r]:ptr[r + 1]]], axis=1), batch.horizon)
            for r in range(batch.n_runs)]


def _target_arrays(d: TargetSet):
    u = np.array(d.union(), dtype=float).reshape(-1, 2)
    return u[:, 0].copy(), u[:, 1].copy()


def hits_target(trace: PercolationTrace, d: TargetSet) -> bool:
    """True iff some trace interval meets D (touching endpoints count)."""
    if d.is_empty:
        return False
    if d.sup > trace.horizon:
        raise HorizonExceeded(f"target reaches {d.sup} beyond horizon {trace.horizon}")
    lo, hi = _target_arrays(d)
    iv = trace.intervals
    ptr = np.array([0, iv.shape[0]], dtype=np.int64)
    return bool(_hits(ptr, iv[:, 0].copy(), iv[:, 1].copy(), lo, hi)[0])


@dataclass(frozen=True)
class HitEstimate:
    runs: int
    hits: int
    p_hat: float
    std_err: float

    @classmethod
    def from_counts(cls, runs: int, hits: int) -> "HitEstimate":
        ph = hits / runs
        return cls(int(runs), int(hits), ph, math.sqrt(ph * (1.0 - ph) / runs))


def estimate_hit_probability(t: Tree, params: PercolationParams, d: TargetSet, runs: int,
                             seed: int, horizon: Optional[float] = None) -> HitEstimate:
    """Monte Carlo estimate of P(S(G) meets D) on the truncated tree.

    Runs are simulated on [0, sup D] unless a longer horizon is given.
    """
    if runs < 1:
        raise DynPercError("runs must be >= 1")
    if d.is_empty:
        return HitEstimate.from_counts(runs, 0)
    T = float(horizon) if horizon is not None else max(d.sup, 1e-12)
    if d.sup > T:
        raise HorizonExceeded(f"target reaches {d.sup} beyond horizon {T}")
    lo, hi = _target_arrays(d)
    parent, is_leaf = _tree_arrays(t)
    hits = 0
    for batch in iter_batches(t, params, T, seed, runs):
        ptr, S, E = _trace_batch(parent, is_leaf, batch.init, batch.times, T)
        hits += int(_hits(ptr, S, E, lo, hi).sum())
    return HitEstimate.from_counts(runs, hits)


# -- second-moment statistic ---------------------------------------------

def _ancestor_vertices(t: Tree, leaves: np.ndarray) -> np.ndarray:
    out = np.empty((leaves.size, t.height), dtype=np.int64)
    v = t.leaves[leaves].astype(np.int64)
    for l in range(t.height - 1, -1, -1):
        out[:, l] = v
        v = t.parent[v]
    return out


def _z_values(t: Tree, init: np.ndarray, times: np.ndarray, atoms: np.ndarray, weights: np.ndarray,
              atom_times: np.ndarray, params: PercolationParams) -> np.ndarray:
    """Z for every run of a batch: init (R, E), times (R, E, W)."""
    edges = _ancestor_vertices(t, atoms[:, 0]) - 1  # (A, n)
    n_flips = np.sum(times[:, edges, :] <= atom_times[None, :, None, None], axis=-1)  # (R, A, n)
    state = init[:, edges] ^ (n_flips % 2 == 1)
    open_path = np.all(state, axis=-1)
    return params.p ** -t.height * (open_path @ weights)


def _atom_times(mu, grid: TimeGrid) -> np.ndarray:
    return grid.cell_centers[mu.atoms[:, 1]]


def z_statistic(t: Tree, run: SimulationRun, mu, params: PercolationParams, grid: TimeGrid) -> float:
    """p^-n times the mu-mass of atoms (leaf, time) whose root path is open at that time."""
    _check_run(t, run.tree_digest, run.n_edges)
    at = _atom_times(mu, grid)
    if np.any(at > run.horizon):
        raise MismatchedRun("measure has atoms beyond the run horizon")
    return float(_z_values(t, run.init[None], run.padded()[None], mu.atoms, mu.weights, at, params)[0])


def z_statistic_batch(t: Tree, params: PercolationParams, mu, grid: TimeGrid, runs: int, seed: int,
                      horizon: Optional[float] = None) -> np.ndarray:
    """Z over ``runs`` independent runs."""
    at = _atom_times(mu, grid)
    T = float(horizon) if horizon is not None else max(float(at.max()), 1e-12)
    out = []
    for batch in iter_batches(t, params, T, seed, runs):
        out.append(_z_values(t, batch.init, batch.times, mu.atoms, mu.weights, at, params))
    return np.concatenate(out)


# -- dimension of exceptional times --------------------------------------

def intersect_intervals(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Pairwise intersections of two sorted disjoint closed interval lists."""
    out = []
    i = j = 0
    while i < len(a) and j < len(b):
        lo = max(a[i, 0], b[j, 0])
        hi = min(a[i, 1], b[j, 1])
        if lo <= hi:
            out.append((lo, hi))
        if a[i, 1] < b[j, 1]:
            i += 1
        else:
            j += 1
    return np.array(out, dtype=float).reshape(-1, 2)


def exceptional_dim_estimate(traces: Sequence[PercolationTrace], d: TargetSet,
                             scales: Sequence[float]) -> float:
    """Mean box-count slope of trace ∩ D over the traces that meet D."""
    if len(scales) < 3:
        raise DegenerateScales("need at least 3 scales")
    dd = np.array(d.union(), dtype=float).reshape(-1, 2)
    slopes = []
    for tr in traces:
        cut = intersect_intervals(tr.intervals, dd)
        if cut.shape[0]:
            slopes.append(box_dimension_estimate(cut, scales))
    if not slopes:
        raise NoHits("no trace meets the target")
    return float(np.mean(slopes))
