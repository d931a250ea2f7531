"""Closed target sets of times: finite unions of intervals and points.

A Cantor-type set keeps its generator cells as separate intervals (adjacent
digits give cells that share an endpoint); ``union()`` merges them.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    DegenerateScales,
    DynPercError,
    EmptyDigitSet,
    EmptySpec,
    ResolutionTooCoarse,
    ReversedInterval,
)

MAX_CELLS = 1 << 20
_SNAP = 1e-9


@dataclass(frozen=True)
class CantorGenerator:
    base: int
    digits: tuple[int, ...]
    depth: int

    @property
    def beta(self) -> float:
        return math.log(len(self.digits)) / math.log(self.base)

    def lefts(self, depth: Optional[int] = None) -> np.ndarray:
        """Left endpoints of the depth-``m`` cells, increasing."""
        m = self.depth if depth is None else depth
        b = self.base
        digits = np.array(self.digits, dtype=float)
        lefts = np.zeros(1)
        for k in range(1, m + 1):
            lefts = (lefts[:, None] + digits[None, :] * float(b) ** -k).ravel()
        return np.sort(lefts)


@dataclass(frozen=True)
class TargetSet:
    intervals: tuple[tuple[float, float], ...]
    generator: Optional[CantorGenerator] = None
    beta: Optional[float] = None

    @property
    def is_empty(self) -> bool:
        return not self.intervals

    @property
    def is_atomic(self) -> bool:
        return all(a == b for a, b in self.intervals)

    @property
    def sup(self) -> float:
        return self.intervals[-1][1] if self.intervals else 0.0

    @property
    def inf(self) -> float:
        return self.intervals[0][0] if self.intervals else 0.0

    def union(self) -> list[tuple[float, float]]:
        return _merge(list(self.intervals))

    def as_array(self) -> np.ndarray:
        return np.array(self.intervals, dtype=float).reshape(-1, 2)

    def to_spec(self) -> dict:
        if self.generator is not None:
            g = self.generator
            return {"kind": "cantor", "base": g.base, "digits": list(g.digits), "depth": g.depth}
        return {"kind": "intervals", "intervals": [list(iv) for iv in self.intervals]}


@dataclass(frozen=True, eq=False)
class TimeGrid:
    """Cells tiling a target set; atomic cells (points) carry half-width 0."""

    cell_centers: np.ndarray
    half_widths: np.ndarray
    half_width: float
    parent_interval: np.ndarray

    @property
    def size(self) -> int:
        return int(self.cell_centers.shape[0])

    @property
    def atomic(self) -> np.ndarray:
        return self.half_widths == 0.0

    @property
    def has_atomic(self) -> bool:
        return bool(np.any(self.half_widths == 0.0))


def _merge(ivs: list[tuple[float, float]]) -> list[tuple[float, float]]:
    ivs = sorted(ivs)
    out: list[list[float]] = []
    for a, b in ivs:
        if out and a <= out[-1][1]:
            out[-1][1] = max(out[-1][1], b)
        else:
            out.append([a, b])
    return [(a, b) for a, b in out]


def empty_target() -> TargetSet:
    return TargetSet(intervals=(), beta=0.0)


def from_intervals(spec: Sequence[Sequence[float]]) -> TargetSet:
    """Normalize a list of closed intervals: sort and merge overlaps."""
    if len(spec) == 0:
        raise EmptySpec("no intervals given")
    ivs = []
    for iv in spec:
        a, b = float(iv[0]), float(iv[1])
        if not (math.isfinite(a) and math.isfinite(b)):
            raise DynPercError(f"non-finite endpoint in {iv}")
        if b < a:
            raise ReversedInterval(f"interval [{a}, {b}] is reversed")
        ivs.append((a, b))
    merged = _merge(ivs)
    beta = 1.0 if any(b > a for a, b in merged) else 0.0
    return TargetSet(intervals=tuple(merged), beta=beta)


def point(t: float) -> TargetSet:
    return from_intervals([[t, t]])


def cantor(base: int, digits: Sequence[int], depth: int, max_cells: int = MAX_CELLS) -> TargetSet:
    """Depth-``m`` approximation of the set of reals whose base-``b`` digits all lie in ``B``."""
    base = int(base)
    if base < 2:
        raise DynPercError("base must be >= 2")
    B = tuple(sorted(set(int(d) for d in digits)))
    if not B:
        raise EmptyDigitSet("digit set is empty")
    if B[0] < 0 or B[-1] >= base:
        raise DynPercError(f"digits must lie in 0..{base - 1}")
    if len(B) ** depth > max_cells:
        raise BudgetExceeded(f"{len(B)}^{depth} cells exceeds budget {max_cells}")
    gen = CantorGenerator(base=base, digits=B, depth=int(depth))
    width = float(base) ** -depth
    lefts = gen.lefts()
    intervals = tuple((float(a), float(a + width)) for a in lefts)
    return TargetSet(intervals=intervals, generator=gen, beta=gen.beta)


def target_from_spec(spec: dict) -> TargetSet:
    kind = spec.get("kind")
    if kind == "intervals":
        if not spec["intervals"]:
            return empty_target()
        return from_intervals(spec["intervals"])
    if kind == "point":
        return point(spec["t"])
    if kind == "cantor":
        return cantor(spec["base"], spec["digits"], spec["depth"])
    raise DynPercError(f"unknown target kind {kind!r}")


def load_target(path) -> TargetSet:
    with open(path) as fh:
        return target_from_spec(json.load(fh))


def discretize(d: TargetSet, resolution: float) -> TimeGrid:
    """Tile every interval of ``d`` with cells of half-width at most ``resolution``.

    An interval of length L gets ceil(L / 2eps) equal cells, so the half-width
    equals ``resolution`` exactly whenever 2*resolution divides L.
    """
    eps = float(resolution)
    if not eps > 0:
        raise DynPercError("resolution must be positive")
    if d.is_empty:
        raise EmptySpec("cannot discretize an empty target")
    lengths = [b - a for a, b in d.intervals]
    positive = [L for L in lengths if L > 0]
    if positive and 2 * eps > min(positive) * (1 + _SNAP):
        raise ResolutionTooCoarse(
            f"cell width {2 * eps} exceeds shortest interval {min(positive)}")
    centers, halves, parents = [], [], []
    for i, (a, b) in enumerate(d.intervals):
        L = b - a
        if L == 0:
            centers.append(np.array([a]))
            halves.append(np.zeros(1))
            parents.append(np.array([i]))
            continue
        k = max(1, math.ceil(L / (2 * eps) - _SNAP))
        w = L / k
        centers.append(a + w * (np.arange(k) + 0.5))
        halves.append(np.full(k, w / 2))
        parents.append(np.full(k, i))
    c = np.concatenate(centers)
    if c.size > MAX_CELLS:
        raise BudgetExceeded(f"{c.size} cells exceeds budget {MAX_CELLS}")
    order = np.argsort(c, kind="stable")
    return TimeGrid(cell_centers=c[order], half_widths=np.concatenate(halves)[order],
                    half_width=eps, parent_interval=np.concatenate(parents)[order])


def reference_weights(d: TargetSet, grid: TimeGrid) -> np.ndarray:
    """Natural probability measure on the grid cells.

    Cantor targets: every generator cell has mass |B|^-m, split evenly over
    its grid cells.  Other targets: normalized length, or uniform over points
    when the target has no length.
    """
    if d.generator is not None:
        per_parent = np.bincount(grid.parent_interval, minlength=len(d.intervals))
        w = 1.0 / (len(d.intervals) * per_parent[grid.parent_interval])
    elif np.any(grid.half_widths > 0):
        w = grid.half_widths.copy()
    else:
        w = np.ones(grid.size)
    return w / w.sum()


def _snap(x: np.ndarray) -> np.ndarray:
    r = np.round(x)
    return np.where(np.abs(x - r) < _SNAP, r, x)


def box_count(intervals: Sequence[Sequence[float]], eps: float) -> int:
    """Number of grid boxes [k eps, (k+1) eps) whose interior meets the set.

    Points count one box each; an interval ending exactly on a grid line does
    not claim the next box.
    """
    ivs = np.asarray(intervals, dtype=float).reshape(-1, 2)
    if ivs.size == 0:
        return 0
    lo = _snap(ivs[:, 0] / eps)
    hi = _snap(ivs[:, 1] / eps)
    first = np.floor(lo).astype(np.int64)
    last = np.where(hi > lo, np.ceil(hi).astype(np.int64) - 1, first)
    order = np.argsort(first, kind="stable")
    first, last = first[order], last[order]
    total = 0
    cur_lo, cur_hi = first[0], last[0]
    for a, b in zip(first[1:], last[1:]):
        if a <= cur_hi + 0:
            if b > cur_hi:
                cur_hi = b
        else:
            total += cur_hi - cur_lo + 1
            cur_lo, cur_hi = a, b
    total += cur_hi - cur_lo + 1
    return int(total)


def box_dimension_estimate(intervals: Sequence[Sequence[float]], scales: Sequence[float]) -> float:
    """Least-squares slope of log N(eps) against log(1/eps)."""
    scales = np.asarray(sorted(set(float(s) for s in scales)), dtype=float)
    if scales.size < 3 or np.any(scales <= 0):
        raise DegenerateScales("need at least 3 distinct positive scales")
    counts = np.array([box_count(intervals, s) for s in scales], dtype=float)
    if np.any(counts == 0):
        raise DegenerateScales("empty set has no box dimension")
    slope = np.polyfit(np.log(1.0 / scales), np.log(counts), 1)[0]
    return float(slope)


def sigma_ball_mass(d: TargetSet, x: float, r: float) -> float:
    """Mass of [x - r, x + r] under the uniform generator-cell measure of a Cantor target."""
    if d.generator is None:
        raise DynPercError("ball masses are defined for generator targets only")
    ivs = d.as_array()
    w = ivs[:, 1] - ivs[:, 0]
    overlap = np.clip(np.minimum(ivs[:, 1], x + r) - np.maximum(ivs[:, 0], x - r), 0.0, None)
    return float(np.sum(overlap / w) / len(ivs))


def strong_beta_ratios(d: TargetSet, n_samples: int = 200, seed: int = 0) -> tuple[np.ndarray, np.ndarray]:
    """Ratios sigma([x-r, x+r]) / r^beta at generator scales r = b^-k, k = 1..m.

    Returns ``(scales, ratios)`` with ``ratios[k, j]`` for the j-th sampled
    x in D.  Only scales down to b^-m are certified by a depth-m generator.
    """
    g = d.generator
    if g is None:
        raise DynPercError("strong beta-set check requires a generator")
    rng = np.random.default_rng(seed)
    ivs = d.as_array()
    pick = rng.integers(0, len(ivs), size=n_samples)
    xs = ivs[pick, 0] + rng.random(n_samples) * (ivs[pick, 1] - ivs[pick, 0])
    scales = np.array([float(g.base) ** -k for k in range(1, g.depth + 1)])
    ratios = np.array([[sigma_ball_mass(d, x, r) / r ** d.beta for x in xs] for r in scales])
    return scales, ratios
