"""Space-time kernels on (leaf, time) pairs and dense kernel matrices.

All kernels depend on a leaf pair only through the meet depth ``|v^w|`` and
on a time pair only through ``|t - s|``:

    h       (1 + (q/p) e^{-dt})^meet
    phi     h / dt^alpha
    lyons   p^-meet
    betaset meet^-beta p^-meet  (1 at meet = 0)
    riesz   dt^-alpha

Singular kernels (phi, riesz) need a rule for same-cell pairs.  Two
policies are supported:

``"half_width"``
    evaluate at dt = cell half-width on same-cell pairs, centers elsewhere;
``"cell_average"``
    replace dt^-alpha by its exact average over the two cells, for every
    pair.  This keeps the near-diagonal mass of fine grids right and is what
    the dimension sweeps use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    DynPercError,
    MissingGenerator,
    NotASimplex,
    SingularDiagonal,
    ZeroTimeGap,
)
from .target_set import TargetSet, TimeGrid
from .tree import PercolationParams, Tree, meet_matrix

KINDS = ("h", "phi", "lyons", "betaset", "riesz")
DIAG_POLICIES = ("half_width", "cell_average")
MAX_ATOMS = 12_000


@dataclass(frozen=True)
class KernelSpec:
    kind: str
    params: Optional[PercolationParams] = None
    alpha: Optional[float] = None
    beta: Optional[float] = None

    def __post_init__(self):
        kind = self.kind.lower()
        object.__setattr__(self, "kind", kind)
        if kind not in KINDS:
            raise DynPercError(f"unknown kernel kind {self.kind!r}")
        if kind in ("h", "phi", "lyons", "betaset") and self.params is None:
            raise DynPercError(f"{kind} kernel needs percolation params")
        if kind in ("phi", "riesz"):
            if self.alpha is None or not (0.0 < self.alpha < 1.0):
                raise DynPercError(f"alpha must lie in (0, 1), got {self.alpha!r}")
        if kind == "betaset":
            if self.beta is None or not (0.0 <= self.beta <= 1.0):
                raise DynPercError(f"beta must lie in [0, 1], got {self.beta!r}")

    @property
    def singular(self) -> bool:
        return self.kind in ("phi", "riesz")

    @property
    def uses_time(self) -> bool:
        return self.kind in ("h", "phi", "riesz")

    @property
    def uses_tree(self) -> bool:
        return self.kind != "riesz"


@dataclass(frozen=True, eq=False)
class KernelMatrix:
    """Dense symmetric kernel matrix over atoms ``(leaf ordinal, cell index)``."""

    entries: np.ndarray
    atoms: np.ndarray
    diag_policy: str = "none"
    epsilon: float = 0.0
    meta: dict = field(default_factory=dict)

    @property
    def size(self) -> int:
        return int(self.entries.shape[0])

    @classmethod
    def from_array(cls, entries, atoms=None) -> "KernelMatrix":
        K = np.array(entries, dtype=float)
        if K.ndim != 2 or K.shape[0] != K.shape[1]:
            raise DynPercError("kernel matrix must be square")
        if atoms is None:
            atoms = np.stack([np.arange(K.shape[0]), np.zeros(K.shape[0], dtype=np.int64)], axis=1)
        return cls(entries=K, atoms=np.asarray(atoms, dtype=np.int64))


# -- pointwise kernels -----------------------------------------------------

def h_value(params: PercolationParams, meet, dt):
    """(1 + (q/p) e^{-dt})^meet."""
    dt = np.abs(dt)
    # 1/p is the dt = 0 value; using it exactly keeps h(., ., 0) equal to p^-meet
    base = np.where(dt == 0, 1.0 / params.p, 1.0 + params.ratio * np.exp(-dt))
    out = np.power(base, meet)
    return float(out) if np.ndim(out) == 0 else out


def phi_value(params: PercolationParams, alpha: float, meet, dt):
    dt = np.abs(np.asarray(dt, dtype=float))
    if np.any(dt == 0):
        raise ZeroTimeGap("phi(alpha) is singular at dt = 0")
    out = h_value(params, meet, dt) / dt ** alpha
    return float(out) if np.ndim(out) == 0 else out


def lyons_value(params: PercolationParams, meet):
    out = np.power(1.0 / params.p, meet)
    return float(out) if np.ndim(out) == 0 else out


def g_value(params: PercolationParams, beta: float, meet):
    """meet^-beta p^-meet, with the value 1 at meet = 0."""
    m = np.asarray(meet, dtype=float)
    safe = np.where(m > 0, m, 1.0)
    out = np.where(m > 0, safe ** (-beta) * np.power(1.0 / params.p, m), 1.0)
    return float(out) if np.ndim(out) == 0 else out


def riesz_value(alpha: float, dt):
    dt = np.abs(np.asarray(dt, dtype=float))
    if np.any(dt == 0):
        raise ZeroTimeGap("Riesz kernel is singular at dt = 0")
    out = dt ** (-alpha)
    return float(out) if np.ndim(out) == 0 else out


def riesz_cell_average(alpha: float, centers: np.ndarray, halves: np.ndarray) -> np.ndarray:
    """Exact average of |s - t|^-alpha over every pair of cells.

    Uses the antiderivative F(x) = |x|^{2-a} / ((1-a)(2-a)) of the second
    mixed derivative.  Cells with zero width fall back to point evaluation
    against the other cell.
    """
    c = np.asarray(centers, dtype=float)
    w = np.asarray(halves, dtype=float)
    if np.any(w < 0):
        raise DynPercError("negative half-width")
    a = alpha
    norm = (1.0 - a) * (2.0 - a)

    def F(x):
        return np.abs(x) ** (2.0 - a) / norm

    lo, hi = c - w, c + w
    a1, b1 = lo[:, None], hi[:, None]
    a2, b2 = lo[None, :], hi[None, :]
    width = (2 * w)[:, None] * (2 * w)[None, :]
    gap = np.abs(c[:, None] - c[None, :])
    with np.errstate(divide="ignore", invalid="ignore"):
        both = (F(b1 - a2) + F(a1 - b2) - F(b1 - b2) - F(a1 - a2)) / width
        # one-sided averages for a point against a cell: (G(b) - G(a)) / width
        G = lambda x: np.sign(x) * np.abs(x) ** (1.0 - a) / (1.0 - a)
        row_pt = (G(c[:, None] - a2) - G(c[:, None] - b2)) / (2 * w)[None, :]
        col_pt = (G(c[None, :] - a1) - G(c[None, :] - b1)) / (2 * w)[:, None]
        point = gap ** (-a)
    wi, wj = (w > 0)[:, None], (w > 0)[None, :]
    out = np.where(wi & wj, both, np.where(wj, row_pt, np.where(wi, col_pt, point)))
    # cancellation guard for far-apart narrow cells: second-order midpoint rule
    far = gap > 1e3 * (w[:, None] + w[None, :])
    if np.any(far):
        with np.errstate(divide="ignore"):
            mid = gap ** (-a) * (1.0 + a * (a + 1.0) * (w[:, None] ** 2 + w[None, :] ** 2) / (6.0 * gap ** 2))
        out = np.where(far, mid, out)
    if np.any(~np.isfinite(out)):
        raise SingularDiagonal("a point cell meets itself under a singular kernel")
    return 0.5 * (out + out.T)


# -- matrices ---------------------------------------------------------------

def _time_gaps(grid: TimeGrid) -> np.ndarray:
    c = grid.cell_centers
    return np.abs(c[:, None] - c[None, :])


def _riesz_factor(alpha: float, grid: TimeGrid, diag_policy: str) -> np.ndarray:
    if grid.has_atomic:
        raise SingularDiagonal("singular kernels need cells of positive width")
    if diag_policy == "cell_average":
        return riesz_cell_average(alpha, grid.cell_centers, grid.half_widths)
    if diag_policy != "half_width":
        raise DynPercError(f"unknown diag policy {diag_policy!r}")
    dt = _time_gaps(grid)
    hw = np.broadcast_to(grid.half_widths[:, None], dt.shape)
    dt = np.where(dt == 0, hw, dt)
    return dt ** (-alpha)


def time_factor(spec: KernelSpec, grid: TimeGrid, diag_policy: str = "half_width") -> np.ndarray:
    """The dt-dependent multiplier that does not involve the meet depth."""
    if spec.singular:
        return _riesz_factor(spec.alpha, grid, diag_policy)
    return np.ones((grid.size, grid.size))


def assemble_matrix(t: Optional[Tree], grid: TimeGrid, spec: KernelSpec,
                    diag_policy: str = "half_width", max_atoms: int = MAX_ATOMS) -> KernelMatrix:
    """Kernel matrix over all (leaf, cell) atoms, leaf-major.

    Riesz matrices ignore the tree and have one atom per cell.
    """
    C = grid.size
    if spec.kind == "riesz":
        K = _riesz_factor(spec.alpha, grid, diag_policy)
        atoms = np.stack([np.zeros(C, dtype=np.int64), np.arange(C)], axis=1)
        return KernelMatrix(K, atoms, diag_policy, grid.half_width, {"kind": "riesz"})
    if t is None:
        raise DynPercError(f"{spec.kind} kernel needs a tree")
    L = t.n_leaves
    if spec.kind in ("lyons", "betaset"):
        C_eff = 1
    else:
        C_eff = C
    N = L * C_eff
    if N > max_atoms:
        raise BudgetExceeded(f"{N} atoms exceeds budget {max_atoms}")
    M = meet_matrix(t).astype(float)
    p = spec.params
    if spec.kind == "lyons":
        K = lyons_value(p, M)
        atoms = np.stack([np.arange(L), np.zeros(L, dtype=np.int64)], axis=1)
        return KernelMatrix(np.asarray(K, dtype=float), atoms, "none", 0.0, {"kind": "lyons"})
    if spec.kind == "betaset":
        K = g_value(p, spec.beta, M)
        atoms = np.stack([np.arange(L), np.zeros(L, dtype=np.int64)], axis=1)
        return KernelMatrix(np.asarray(K, dtype=float), atoms, "none", 0.0, {"kind": "betaset"})
    dt = _time_gaps(grid)
    log_base = np.log1p(p.ratio * np.exp(-dt))
    # (leaf_a, cell_i, leaf_b, cell_j) -> exp(meet_ab * log a(dt_ij))
    K = np.exp(M[:, None, :, None] * log_base[None, :, None, :]).reshape(N, N)
    policy = "none"
    if spec.singular:
        R = _riesz_factor(spec.alpha, grid, diag_policy)
        K *= np.tile(R, (L, L))
        policy = diag_policy
    K = 0.5 * (K + K.T)
    leaf_idx = np.repeat(np.arange(L), C)
    cell_idx = np.tile(np.arange(C), L)
    atoms = np.stack([leaf_idx, cell_idx], axis=1)
    return KernelMatrix(K, atoms, policy, grid.half_width, {"kind": spec.kind})


def level_increments(params: PercolationParams, dt: np.ndarray, n: int) -> list[np.ndarray]:
    """Arrays ``a^k - a^{k-1}`` for k = 1..n with ``a = 1 + (q/p) e^{-dt}``."""
    a = 1.0 + params.ratio * np.exp(-dt)
    out = []
    prev = np.ones_like(dt)
    for _ in range(n):
        cur = prev * a
        out.append(cur - prev)
        prev = cur
    return out


def spherical_matrix(level_counts: Sequence[float], grid: TimeGrid, spec: KernelSpec,
                     diag_policy: str = "half_width") -> KernelMatrix:
    """Kernel of the uniform-boundary product measure, as a matrix over time cells.

    Entry (i, j) is the integral of the kernel against the uniform measure on
    the boundary of a spherically symmetric tree with the given level counts:

        f(0) + sum_{k=1}^{n} (f(k) - f(k-1)) / |G_k|,   f(k) = a(dt_ij)^k,

    times the Riesz factor for singular kernels.
    """
    if spec.kind not in ("h", "phi"):
        raise DynPercError("spherical reduction is defined for h and phi kernels")
    G = np.asarray(level_counts, dtype=float)
    n = G.size - 1
    dt = _time_gaps(grid)
    K = np.ones_like(dt)
    for k, inc in enumerate(level_increments(spec.params, dt, n), start=1):
        K += inc / G[k]
    policy = "none"
    if spec.singular:
        K = K * _riesz_factor(spec.alpha, grid, diag_policy)
        policy = diag_policy
    K = 0.5 * (K + K.T)
    C = grid.size
    atoms = np.stack([np.zeros(C, dtype=np.int64), np.arange(C)], axis=1)
    return KernelMatrix(K, atoms, policy, grid.half_width, {"kind": spec.kind, "reduced": True})


def ss_energy_series(level_counts: Sequence[float], nu: np.ndarray, grid: TimeGrid,
                     params: PercolationParams) -> float:
    """h-energy of (uniform boundary measure) x nu on a spherically symmetric tree.

    Summation by parts of sum_k f(k) P(meet = k) with P(meet >= k) = 1/|G_k|.
    """
    nu = np.asarray(nu, dtype=float)
    if nu.shape != (grid.size,) or np.any(nu < 0) or abs(nu.sum() - 1.0) > 1e-12:
        raise NotASimplex("nu must be a probability vector on the grid")
    G = np.asarray(level_counts, dtype=float)
    dt = _time_gaps(grid)
    total = float(nu.sum()) ** 2
    for k, inc in enumerate(level_increments(params, dt, G.size - 1), start=1):
        total += float(nu @ inc @ nu) / G[k]
    return total


def level_sum_series(level_counts: Sequence[float], nu: np.ndarray, grid: TimeGrid,
                     params: PercolationParams) -> float:
    """The cruder series sum_{l<n} a(dt)^l / |G_l| integrated against nu x nu.

    Comparable to :func:`ss_energy_series` up to bounded factors; kept for
    cross-checks against the literature form.
    """
    nu = np.asarray(nu, dtype=float)
    G = np.asarray(level_counts, dtype=float)
    dt = _time_gaps(grid)
    a = 1.0 + params.ratio * np.exp(-dt)
    total, ak = 0.0, np.ones_like(dt)
    for l in range(G.size - 1):
        total += float(nu @ ak @ nu) / G[l]
        ak = ak * a
    return total


def cantor_centers(d: TargetSet, depth: int) -> np.ndarray:
    g = d.generator
    return g.lefts(depth) + 0.5 * float(g.base) ** -depth


def log_R_of_n(d: TargetSet, n: int, params: PercolationParams, max_cells: int = 4096) -> float:
    """log of R(n) = double integral of (1 + (q/p)e^{-|t-s|})^n against sigma x sigma.

    sigma is the uniform generator-cell measure; cells are refined until
    b^-m <= 1/(4n) so that the center rule is accurate.
    """
    g = d.generator
    if g is None:
        raise MissingGenerator("R(n) needs a Cantor generator for sigma")
    if n < 1:
        raise DynPercError("n must be >= 1")
    m = g.depth
    if len(g.digits) > 1:
        m = max(m, math.ceil(math.log(4 * n) / math.log(g.base) - 1e-12))
    if len(g.digits) ** m > max_cells:
        raise BudgetExceeded(f"{len(g.digits)}^{m} cells exceeds budget {max_cells}")
    c = cantor_centers(d, m)
    dt = np.abs(c[:, None] - c[None, :])
    logs = n * np.log1p(params.ratio * np.exp(-dt))
    top = logs.max()
    w = 1.0 / c.size
    return float(top + np.log(np.sum(np.exp(logs - top))) + 2 * np.log(w))


def R_of_n(d: TargetSet, n: int, params: PercolationParams) -> float:
    return math.exp(log_R_of_n(d, n, params))


def R_band(d: TargetSet, ns: Sequence[int], params: PercolationParams) -> np.ndarray:
    """The normalized sequence R(n) n^beta p^n."""
    beta = d.beta if d.beta is not None else d.generator.beta
    return np.array([math.exp(log_R_of_n(d, n, params) + beta * math.log(n) + n * math.log(params.p))
                     for n in ns])
