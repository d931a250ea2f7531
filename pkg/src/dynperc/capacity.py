"""Energies, capacities, equilibrium diagnostics and dimension formulas."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np

from . import _fw
from .errors import DimensionMismatch, DynPercError, NotASimplex, NotConverged, OrderViolation
from .kernels import (
    KernelMatrix,
    KernelSpec,
    assemble_matrix,
    level_increments,
    riesz_cell_average,
    spherical_matrix,
)
from .target_set import TargetSet, TimeGrid, discretize, reference_weights
from .tree import PercolationParams, Tree

OVERFLOW_GUARD = 1e300
DEFAULT_TOL = 1e-8
DEFAULT_MAX_ITER = 100_000
DEFAULT_CUTOFF = 1e-6


@dataclass(frozen=True, eq=False)
class ProductMeasure:
    atoms: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        atoms = np.asarray(self.atoms, dtype=np.int64).reshape(-1, 2)
        w = np.asarray(self.weights, dtype=float).ravel()
        if atoms.shape[0] != w.shape[0]:
            raise NotASimplex("atoms and weights differ in length")
        if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-12:
            raise NotASimplex(f"weights must be non-negative and sum to 1 (sum={w.sum()!r})")
        if np.unique(atoms, axis=0).shape[0] != atoms.shape[0]:
            raise NotASimplex("atoms must be unique")
        object.__setattr__(self, "atoms", atoms)
        object.__setattr__(self, "weights", w)

    @classmethod
    def from_vector(cls, k: KernelMatrix, w: np.ndarray, drop_zeros: bool = True) -> "ProductMeasure":
        w = np.asarray(w, dtype=float)
        keep = w > 0 if drop_zeros else np.ones(w.shape, dtype=bool)
        ww = w[keep]
        return cls(atoms=k.atoms[keep], weights=ww / ww.sum())

    @classmethod
    def point_mass(cls, leaf: int, cell: int = 0) -> "ProductMeasure":
        return cls(atoms=np.array([[leaf, cell]]), weights=np.array([1.0]))

    @classmethod
    def uniform(cls, atoms) -> "ProductMeasure":
        atoms = np.asarray(atoms, dtype=np.int64).reshape(-1, 2)
        return cls(atoms=atoms, weights=np.full(atoms.shape[0], 1.0 / atoms.shape[0]))

    def leaf_marginal(self, n_leaves: int) -> np.ndarray:
        return np.bincount(self.atoms[:, 0], weights=self.weights, minlength=n_leaves)

    def to_dict(self) -> dict:
        return {"atoms": self.atoms.tolist(), "weights": self.weights.tolist()}


@dataclass(frozen=True, eq=False)
class CapacityResult:
    energy: float
    capacity: float
    measure: ProductMeasure
    gap: float
    iterations: int
    converged: bool
    diag_policy: str = "none"
    epsilon: float = 0.0
    energies: Optional[np.ndarray] = field(default=None, repr=False)
    weights: Optional[np.ndarray] = field(default=None, repr=False)

    def to_dict(self) -> dict:
        return {
            "energy": self.energy,
            "capacity": self.capacity,
            "gap": self.gap,
            "iterations": self.iterations,
            "converged": self.converged,
            "measure": self.measure.to_dict(),
            "diag_policy": self.diag_policy,
            "epsilon": self.epsilon,
        }


def _weight_vector(k: KernelMatrix, mu: ProductMeasure) -> np.ndarray:
    index = {(int(a), int(b)): i for i, (a, b) in enumerate(k.atoms)}
    w = np.zeros(k.size)
    for (a, b), m in zip(mu.atoms, mu.weights):
        try:
            w[index[(int(a), int(b))]] += m
        except KeyError:
            raise DimensionMismatch(f"atom ({a}, {b}) is not an atom of the kernel matrix") from None
    return w


def energy(k: KernelMatrix, mu: ProductMeasure) -> float:
    """mu' K mu."""
    w = _weight_vector(k, mu)
    return float(w @ k.entries @ w)


def potential(k: KernelMatrix, mu: ProductMeasure) -> np.ndarray:
    """(K mu)_x for every atom x of the matrix."""
    return k.entries @ _weight_vector(k, mu)


def minimize_energy(k: KernelMatrix, tol: float = DEFAULT_TOL,
                    max_iter: int = DEFAULT_MAX_ITER, start: Optional[np.ndarray] = None) -> CapacityResult:
    """Equilibrium measure and capacity of a kernel matrix over the simplex.

    ``gap`` is the Frank-Wolfe duality gap 2 (mu'K mu - min_x (K mu)_x),
    which bounds the energy error from above.
    """
    K = np.ascontiguousarray(k.entries, dtype=float)
    N = K.shape[0]
    if N == 0:
        raise DimensionMismatch("empty kernel matrix")
    if not np.all(np.isfinite(K)) or K.max() > OVERFLOW_GUARD:
        mu = np.zeros(N)
        mu[0] = 1.0
        return CapacityResult(math.inf, 0.0, ProductMeasure.from_vector(k, mu), math.inf, 0, False,
                              k.diag_policy, k.epsilon, np.array([math.inf]), mu)
    if start is None:
        mu0 = np.zeros(N)
        mu0[int(np.argmin(np.diag(K)))] = 1.0
    else:
        mu0 = np.array(start, dtype=float)
        mu0 /= mu0.sum()
    mu, E, gap, it, ok, hist = _solve(K, mu0, float(tol), int(max_iter))
    if not ok:
        warnings.warn(f"energy minimization stopped after {it} iterations with gap {gap:.3g}",
                      NotConverged, stacklevel=2)
    cap = 0.0 if E >= OVERFLOW_GUARD else 1.0 / E
    return CapacityResult(float(E), cap, ProductMeasure.from_vector(k, mu), float(gap), int(it),
                          bool(ok), k.diag_policy, k.epsilon, hist, mu)


def _polish(K: np.ndarray, mu: np.ndarray, max_support: int = 1500, max_cycles: int = 16) -> np.ndarray:
    """Minor cycles of Wolfe's method on the current support.

    Jump to the affine minimizer on the support; if it leaves the simplex,
    walk toward it until a weight hits zero, drop that atom and repeat.
    """
    mu = mu.copy()
    for _ in range(max_cycles):
        S = np.nonzero(mu > 0)[0]
        if S.size > max_support:
            return mu
        try:
            x = np.linalg.solve(K[np.ix_(S, S)], np.ones(S.size))
        except np.linalg.LinAlgError:
            return mu
        if not x.sum() > 0:
            return mu
        y = x / x.sum()
        if np.all(y >= 0):
            mu[S] = y
            return mu
        ratio = np.full(S.size, np.inf)
        neg = y < 0
        ratio[neg] = mu[S][neg] / (mu[S][neg] - y[neg])
        hit = int(np.argmin(ratio))
        step = np.clip(mu[S] + ratio[hit] * (y - mu[S]), 0.0, None)
        step[hit] = 0.0
        mu[S] = step / step.sum()
    return mu


def _solve(K: np.ndarray, mu: np.ndarray, tol: float, max_iter: int, chunk: int = 2000):
    """Pairwise Frank-Wolfe in chunks, each followed by a support polish.

    Pairwise steps find the support quickly but crawl once atoms are nearly
    collinear; solving the equality-constrained problem on the support then
    finishes in one step.  A polish is kept only if it lowers the energy.
    """
    hist = []
    done = 0
    while True:
        mu, E, gap, it, ok, h = _fw.pairwise_fw(K, mu, tol, min(chunk, max_iter - done))
        hist.append(h if not hist else h[1:])
        done += it
        if ok or done >= max_iter or it == 0:
            return mu, E, gap, done, ok, np.concatenate(hist)
        cand = _polish(K, mu)
        e_cand = float(cand @ K @ cand)
        if e_cand < E:
            mu = cand
            hist.append(np.array([e_cand]))


def capacity(t: Tree, d: TargetSet, params: PercolationParams, resolution: Optional[float] = None,
             kernel: str = "h", alpha: Optional[float] = None, beta: Optional[float] = None,
             tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
             diag_policy: str = "half_width") -> CapacityResult:
    """Cap_f(boundary x D) for a kernel named by ``kernel``."""
    spec = KernelSpec(kernel, params=params, alpha=alpha, beta=beta)
    grid = discretize(d, resolution if resolution is not None else default_resolution(d))
    k = assemble_matrix(t, grid, spec, diag_policy=diag_policy)
    return minimize_energy(k, tol=tol, max_iter=max_iter)


def default_resolution(d: TargetSet, cells: int = 16) -> float:
    """Half-width giving about ``cells`` cells in total, at least one per interval."""
    lengths = [b - a for a, b in d.intervals if b > a]
    if not lengths:
        return 1.0
    return min(sum(lengths) / (2 * cells), min(lengths) / 2)


def tree_kernel_capacity(t: Tree, f: Callable[[int], float]) -> tuple[float, np.ndarray]:
    """Capacity of the leaves under a kernel f(meet), by effective resistance.

    For non-decreasing f the energy of a leaf measure equals
    f(0) + sum over edges of (f(depth) - f(depth - 1)) * (mass below edge)^2,
    so the minimum is f(0) + R_eff with those edge resistances, and the
    minimizer is the unit current flow.  Returns (capacity, leaf weights).
    """
    n = t.height
    fv = np.array([f(j) for j in range(n + 1)], dtype=float)
    r = np.diff(fv)
    if np.any(r < 0):
        raise DynPercError("tree_kernel_capacity needs a non-decreasing kernel")
    nv = t.n_vertices
    R = np.full(nv, math.inf)
    R[t.depth == n] = 0.0
    for l in range(n, 0, -1):
        lo, hi = t.level_offsets[l], t.level_offsets[l + 1]
        series = r[l - 1] + R[lo:hi]
        cond = np.zeros(nv)
        np.add.at(cond, t.parent[lo:hi], _safe_conductance(series))
        plo, phi = t.level_offsets[l - 1], t.level_offsets[l]
        with np.errstate(divide="ignore"):
            R[plo:phi] = np.where(cond[plo:phi] > 0, 1.0 / cond[plo:phi], math.inf)
    E = fv[0] + R[0]
    # unit flow: split at each vertex proportionally to child conductance
    flow = np.zeros(nv)
    flow[0] = 1.0
    for l in range(1, n + 1):
        lo, hi = t.level_offsets[l], t.level_offsets[l + 1]
        series = r[l - 1] + R[lo:hi]
        cond = _safe_conductance(series)
        tot = np.zeros(nv)
        np.add.at(tot, t.parent[lo:hi], cond)
        par = t.parent[lo:hi]
        with np.errstate(invalid="ignore", divide="ignore"):
            share = np.where(tot[par] > 0, cond / tot[par], 0.0)
        if np.any(np.isinf(cond)):
            # zero-resistance children take all the flow, split evenly
            zero = np.isinf(cond)
            nz = np.zeros(nv)
            np.add.at(nz, par, zero.astype(float))
            share = np.where(nz[par] > 0, zero / np.where(nz[par] > 0, nz[par], 1.0), share)
        flow[lo:hi] = flow[par] * share
    leaf_w = flow[t.leaves]
    return 1.0 / E, leaf_w / leaf_w.sum()


def _safe_conductance(series: np.ndarray) -> np.ndarray:
    with np.errstate(divide="ignore"):
        return np.where(np.isfinite(series), 1.0 / series, 0.0)


def lyons_capacity(t: Tree, params: PercolationParams) -> float:
    """Capacity of the boundary under p^-meet, by effective resistance."""
    return tree_kernel_capacity(t, lambda j: params.p ** -j)[0]


# -- series criteria ------------------------------------------------------

CONVERGE_RATIO = 2.0 ** -0.02
DIVERGE_RATIO = 2.0 ** -0.005


@dataclass(frozen=True)
class SeriesVerdict:
    partial_sum: float
    verdict: str
    block_ratio: float


def _log_counts(level_counts) -> np.ndarray:
    return np.array([math.log(c) for c in level_counts], dtype=float)


def _block_ratio(log_terms: np.ndarray, start: int = 1) -> float:
    """Ratio of the last two complete dyadic block sums of exp(log_terms).

    The ratio is divided by the same ratio for the harmonic series, so a
    pure l^s tail gives about 2^(s+1) and the divergent boundary s = -1
    gives 1 at any depth.
    """
    n_last = start + log_terms.size - 1
    K = int(math.floor(math.log2(n_last + 1))) - 1
    if K < 2:
        return math.nan

    def block(vals, k):
        lo, hi = 2 ** k, 2 ** (k + 1)
        seg = vals[lo - start:hi - start]
        top = seg.max()
        return top + math.log(np.exp(seg - top).sum())

    harmonic = -np.log(np.arange(start, n_last + 1, dtype=float))
    raw = block(log_terms, K) - block(log_terms, K - 1)
    ref = block(harmonic, K) - block(harmonic, K - 1)
    return math.exp(raw - ref)


def _verdict(ratio: float) -> str:
    if math.isnan(ratio):
        return "inconclusive"
    if ratio <= CONVERGE_RATIO:
        return "converges"
    if ratio >= DIVERGE_RATIO:
        return "diverges"
    return "inconclusive"


def series_verdict(log_terms: np.ndarray) -> SeriesVerdict:
    """Convergence verdict for sum_{l>=1} exp(log_terms[l-1]) by dyadic blocks.

    Block sums over [2^k, 2^{k+1}) of a regularly varying l^s tail shrink by
    2^{s+1}; the series converges iff that factor is < 1.
    """
    top = log_terms.max()
    partial = math.exp(top) * float(np.exp(log_terms - top).sum())
    r = _block_ratio(log_terms)
    return SeriesVerdict(partial, _verdict(r), r)


def hps_condition(level_counts: Sequence[float], params: PercolationParams,
                  terms: Optional[int] = None) -> SeriesVerdict:
    """Partial sums of sum_l p^-l / (l |G_l|) and a tail verdict."""
    logG = _log_counts(level_counts)
    n = logG.size - 1 if terms is None else int(terms)
    if n < 16:
        raise DynPercError("hps_condition needs at least 16 terms")
    if n > logG.size - 1:
        raise DynPercError(f"only {logG.size - 1} levels available")
    l = np.arange(1, n + 1, dtype=float)
    log_terms = -l * math.log(params.p) - np.log(l) - logG[1:n + 1]
    return series_verdict(log_terms)


@dataclass(frozen=True)
class DimensionEstimate:
    value: float
    inconclusive: tuple[float, ...] = ()

    def __float__(self):
        return self.value


def dimh_SG(level_counts: Sequence[float], params: PercolationParams,
            alphas: Sequence[float]) -> DimensionEstimate:
    """sup{alpha: sum_l p^-l l^(alpha-1) / |G_l| < inf}, capped at 1.

    Each alpha on the grid gets a dyadic-block verdict; the estimate is the
    largest converging alpha (1 when the largest grid value converges, 0
    when none does).  Alphas with an inconclusive verdict are reported.
    """
    logG = _log_counts(level_counts)
    n = logG.size - 1
    l = np.arange(1, n + 1, dtype=float)
    base = -l * math.log(params.p) - logG[1:]
    alphas = sorted(float(a) for a in alphas)
    best = 0.0
    unsure = []
    verdicts = []
    for a in alphas:
        v = series_verdict(base + (a - 1.0) * np.log(l)).verdict
        verdicts.append(v)
        if v == "inconclusive":
            unsure.append(a)
    conv = [a for a, v in zip(alphas, verdicts) if v == "converges"]
    if conv:
        best = 1.0 if conv[-1] == alphas[-1] else conv[-1]
    return DimensionEstimate(best, tuple(unsure))


def sandwich_bounds(dim_SG: float, delta: float, Delta: float) -> tuple[float, float]:
    """Codimension bounds ([dim - (1 - delta)]_+, [dim - (1 - Delta)]_+)."""
    if delta > Delta:
        raise OrderViolation(f"delta={delta} exceeds Delta={Delta}")
    if not (0.0 <= delta and Delta <= 1.0):
        raise DynPercError("need 0 <= delta <= Delta <= 1")
    return max(dim_SG - (1.0 - delta), 0.0), max(dim_SG - (1.0 - Delta), 0.0)


# -- dimension sweep ------------------------------------------------------

@dataclass(frozen=True, eq=False)
class DimSweep:
    """Capacities Cap_phi(alpha) over an alpha grid and the derived thresholds.

    ``positive_threshold`` is the largest alpha whose truncated capacity
    exceeds ``cutoff``.  A finite truncation keeps every capacity positive,
    so ``threshold`` instead extrapolates in depth: it is the alpha at which
    the tail exponent of the level-by-level energy series of
    (leaf measure) x (reference time measure) crosses -1.  Trees shallower
    than 4 levels have too few levels to fit, and fall back to the cutoff
    rule (``threshold_rule`` records which was used).
    """

    alphas: np.ndarray
    capacities: np.ndarray
    threshold: float
    threshold_rule: str
    cutoff: float
    positive_threshold: float
    tail_exponents: np.ndarray
    tree_exponents: np.ndarray
    time_exponents: np.ndarray
    monotone: bool
    converged: np.ndarray
    method: str
    resolution: float
    depth: int
    diag_policy: str

    def to_dict(self) -> dict:
        return {
            "alphas": self.alphas.tolist(),
            "capacities": self.capacities.tolist(),
            "threshold": self.threshold,
            "threshold_rule": self.threshold_rule,
            "cutoff": self.cutoff,
            "positive_threshold": self.positive_threshold,
            "tail_exponents": self.tail_exponents.tolist(),
            "tree_exponents": self.tree_exponents.tolist(),
            "time_exponents": self.time_exponents.tolist(),
            "monotone": self.monotone,
            "converged": self.converged.tolist(),
            "method": self.method,
            "resolution": self.resolution,
            "depth": self.depth,
            "diag_policy": self.diag_policy,
        }


def _fit_slope(x: np.ndarray, y: np.ndarray, correction: bool = False) -> float:
    cols = [np.ones_like(x), np.log(x)]
    if correction:
        cols.append(1.0 / x)
    X = np.stack(cols, axis=1)
    return float(np.linalg.lstsq(X, y, rcond=None)[0][1])


def time_exponent(grid: TimeGrid, sigma: np.ndarray, params: PercolationParams, alpha: float,
                  m_range: Optional[tuple[int, int]] = None) -> float:
    """Decay exponent in m of T_m = sigma' [b^m e^{-dt} dt^-alpha] sigma.

    ``b = 1 - q (1 - e^{-dt})``; T_m is the time part of the level-(m+1)
    energy increment.  The fit range defaults to m with time scale 1/(q m)
    spanning at least 16 cells.
    """
    q = params.q
    if m_range is None:
        m_hi = max(8, int(1.0 / (32.0 * q * grid.half_width)))
        m_range = (max(2, m_hi // 4), m_hi)
    m_lo, m_hi = m_range
    R = riesz_cell_average(alpha, grid.cell_centers, grid.half_widths)
    dt = np.abs(grid.cell_centers[:, None] - grid.cell_centers[None, :])
    A = np.exp(-dt) * R
    b = 1.0 - q * (1.0 - np.exp(-dt))
    bm = np.power(b, m_lo)
    vals = []
    for _ in range(m_lo, m_hi + 1):
        vals.append(float(sigma @ (bm * A) @ sigma))
        bm = bm * b
    ms = np.arange(m_lo, m_hi + 1, dtype=float)
    return _fit_slope(ms, np.log(vals), correction=True)


def _tree_exponent(pair_mass: np.ndarray, params: PercolationParams) -> float:
    """Log-log slope of M_l p^-(l-1) over the upper half of the levels."""
    n = pair_mass.size
    l = np.arange(1, n + 1, dtype=float)
    lo = max(1, int(math.ceil(n / 2)))
    sel = l >= lo
    y = np.log(pair_mass[sel]) - (l[sel] - 1) * math.log(params.p)
    return _fit_slope(l[sel], y)


def _pair_mass_by_level(t: Tree, leaf_w: np.ndarray) -> np.ndarray:
    """M_l = sum over depth-l vertices u of (mass below u)^2, l = 1..n."""
    anc = t.leaf_ancestors
    out = np.empty(t.height)
    for l in range(1, t.height + 1):
        m = np.bincount(anc[l], weights=leaf_w)
        out[l - 1] = float(np.sum(m * m))
    return out


def capacity_sweep(tree_or_counts: Union[Tree, Sequence[float]], d: TargetSet,
                   params: PercolationParams, alphas: Sequence[float], resolution: float,
                   tol: float = DEFAULT_TOL, max_iter: int = DEFAULT_MAX_ITER,
                   cutoff: float = DEFAULT_CUTOFF, diag_policy: str = "cell_average") -> DimSweep:
    """Cap_phi(alpha)(boundary x D) for every alpha, plus dimension thresholds.

    Spherically symmetric inputs (a level-count profile, or a tree whose
    vertices at each depth share one degree) are reduced to a problem over
    time cells alone, since the equilibrium measure is uniform on the
    boundary times a measure on D.  Other trees use the full leaf x cell
    matrix.
    """
    grid = discretize(d, resolution)
    if grid.has_atomic:
        from .errors import SingularDiagonal
        raise SingularDiagonal("phi(alpha) needs a target without isolated points")
    sigma = reference_weights(d, grid)
    alphas = np.array(sorted(float(a) for a in alphas))
    if isinstance(tree_or_counts, Tree):
        t = tree_or_counts
        counts = t.level_counts if t.is_spherically_symmetric else None
    else:
        t, counts = None, list(tree_or_counts)
    method = "spherical" if counts is not None else "full"
    depth = (len(counts) - 1) if counts is not None else t.height

    caps, conv, s_tree, s_time = [], [], [], []
    warm = None
    for a in alphas:
        spec = KernelSpec("phi", params=params, alpha=float(a))
        if method == "spherical":
            k = spherical_matrix(counts, grid, spec, diag_policy=diag_policy)
        else:
            k = assemble_matrix(t, grid, spec, diag_policy=diag_policy)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", NotConverged)
            res = minimize_energy(k, tol=tol, max_iter=max_iter, start=warm)
        warm = res.weights
        caps.append(res.capacity)
        conv.append(res.converged)
        if method == "spherical":
            pair_mass = 1.0 / np.asarray(counts[1:], dtype=float)
        else:
            leaf_w = res.measure.leaf_marginal(t.n_leaves)
            pair_mass = _pair_mass_by_level(t, leaf_w)
        s_tree.append(_tree_exponent(pair_mass, params) if depth >= 4 else math.nan)
        s_time.append(time_exponent(grid, sigma, params, float(a)))
    caps = np.array(caps)
    s_tree, s_time = np.array(s_tree), np.array(s_time)
    tail = s_tree + s_time
    positive = alphas[caps > cutoff]
    pos_thr = float(positive.max()) if positive.size else 0.0
    if depth >= 4:
        thr, rule = _crossing(alphas, tail, -1.0), "tail"
    else:
        thr, rule = pos_thr, "cutoff"
    return DimSweep(
        alphas=alphas, capacities=caps, threshold=thr, threshold_rule=rule, cutoff=cutoff,
        positive_threshold=pos_thr, tail_exponents=tail, tree_exponents=s_tree,
        time_exponents=s_time, monotone=bool(np.all(np.diff(caps) <= 1e-12 * np.maximum(caps[:-1], 1e-300))),
        converged=np.array(conv), method=method, resolution=float(resolution), depth=int(depth),
        diag_policy=diag_policy)


def _crossing(x: np.ndarray, y: np.ndarray, level: float) -> float:
    """First x at which y rises through ``level``, linearly interpolated.

    Returns x[0]'s lower bound 0 if y already exceeds ``level`` at x[0], and
    x[-1] if it never does.
    """
    if np.any(np.isnan(y)):
        return math.nan
    if y[0] >= level:
        return 0.0
    for i in range(1, x.size):
        if y[i] >= level:
            return float(x[i - 1] + (x[i] - x[i - 1]) * (level - y[i - 1]) / (y[i] - y[i - 1]))
    return float(x[-1])
