"""Rooted finite trees in breadth-first layout.

Vertices are numbered breadth-first from the root (vertex 0), children in
the order they were listed, so every level occupies a contiguous index range
and the children of a vertex are contiguous too.  Edge ``e`` is the edge
into vertex ``e + 1``.

The boundary of a truncated tree is its set of depth-``n`` vertices
(``n`` = height); those are what the rest of the package calls leaves.
Childless vertices above depth ``n`` are stubs and are removed by
:func:`prune_leafless`.
"""

from __future__ import annotations

import hashlib
import json
import math
from collections import deque
from dataclasses import dataclass, field
from fractions import Fraction
from functools import cached_property
from typing import Optional, Sequence

import numpy as np

from .errors import (
    BudgetExceeded,
    CycleDetected,
    DisconnectedVertex,
    DynPercError,
    EmptyTree,
    NotALeaf,
)

MAX_VERTICES = 5_000_000


@dataclass(frozen=True)
class PercolationParams:
    """Open probability ``p``; closed edges open at rate p, open edges close at rate q."""

    p: float

    def __post_init__(self):
        p = float(self.p)
        if not (0.0 < p < 1.0):
            raise DynPercError(f"p must lie in (0, 1), got {self.p!r}")
        object.__setattr__(self, "p", p)

    @property
    def q(self) -> float:
        return 1.0 - self.p

    @property
    def ratio(self) -> float:
        """q / p, the coefficient in the space-time kernel."""
        return self.q / self.p


@dataclass(frozen=True, eq=False)
class Tree:
    parent: np.ndarray
    depth: np.ndarray
    first_child: np.ndarray
    n_children: np.ndarray
    level_offsets: np.ndarray = field(repr=False)

    def __post_init__(self):
        for name in ("parent", "depth", "first_child", "n_children", "level_offsets"):
            getattr(self, name).setflags(write=False)

    @property
    def n_vertices(self) -> int:
        return int(self.parent.shape[0])

    @property
    def n_edges(self) -> int:
        return self.n_vertices - 1

    @property
    def height(self) -> int:
        return int(self.level_offsets.shape[0]) - 2

    @property
    def level_counts(self) -> list[int]:
        return np.diff(self.level_offsets).tolist()

    @property
    def leaves(self) -> np.ndarray:
        """Vertex indices at depth ``height``, in canonical order."""
        return np.arange(self.level_offsets[-2], self.level_offsets[-1])

    @property
    def n_leaves(self) -> int:
        return int(self.level_offsets[-1] - self.level_offsets[-2])

    def children(self, v: int) -> range:
        start = int(self.first_child[v])
        return range(start, start + int(self.n_children[v]))

    def children_lists(self) -> list[list[int]]:
        return [list(self.children(v)) for v in range(self.n_vertices)]

    def leaf_ordinal(self, v: int) -> int:
        if not self.is_leaf(v):
            raise NotALeaf(f"vertex {v} is not at depth {self.height}")
        return int(v - self.level_offsets[-2])

    def is_leaf(self, v: int) -> bool:
        return 0 <= v < self.n_vertices and int(self.depth[v]) == self.height

    @cached_property
    def is_spherically_symmetric(self) -> bool:
        for l in range(self.height):
            lo, hi = self.level_offsets[l], self.level_offsets[l + 1]
            kids = self.n_children[lo:hi]
            if kids.min() != kids.max():
                return False
        return True

    @cached_property
    def leaf_ancestors(self) -> np.ndarray:
        """Array ``A`` with ``A[l, i]`` = ancestor at depth ``l`` of leaf ordinal ``i``."""
        n = self.height
        anc = np.empty((n + 1, self.n_leaves), dtype=np.int64)
        anc[n] = self.leaves
        for l in range(n - 1, -1, -1):
            anc[l] = self.parent[anc[l + 1]]
        anc.setflags(write=False)
        return anc

    @cached_property
    def digest(self) -> str:
        h = hashlib.sha256()
        h.update(np.ascontiguousarray(self.parent, dtype=np.int64).tobytes())
        return h.hexdigest()[:16]


def _from_parents(parent: np.ndarray) -> Tree:
    """Build a Tree from a BFS-ordered parent array (``parent[0] == -1``)."""
    parent = np.asarray(parent, dtype=np.int64)
    nv = parent.shape[0]
    depth = np.zeros(nv, dtype=np.int64)
    while True:
        new = depth.copy()
        new[1:] = depth[parent[1:]] + 1
        if np.array_equal(new, depth):
            break
        depth = new
    return _assemble(parent, depth)


def _assemble(parent: np.ndarray, depth: np.ndarray) -> Tree:
    nv = parent.shape[0]
    n_children = np.bincount(parent[1:], minlength=nv).astype(np.int64)
    first_child = np.zeros(nv, dtype=np.int64)
    # children of v are contiguous and start right after the children of v-1
    first_child[:] = 1 + np.concatenate(([0], np.cumsum(n_children)[:-1]))
    counts = np.bincount(depth)
    level_offsets = np.concatenate(([0], np.cumsum(counts))).astype(np.int64)
    return Tree(parent=parent, depth=depth, first_child=first_child,
                n_children=n_children, level_offsets=level_offsets)


def build_explicit(children_lists: Sequence[Sequence[int]]) -> Tree:
    """Build a tree from per-vertex child lists, relabelled breadth-first.

    The root is the unique vertex that never appears as a child.
    """
    nv = len(children_lists)
    if nv == 0:
        raise EmptyTree("no vertices")
    if nv > MAX_VERTICES:
        raise BudgetExceeded(f"{nv} vertices exceeds budget {MAX_VERTICES}")
    has_parent = [False] * nv
    for v, kids in enumerate(children_lists):
        for c in kids:
            if not (0 <= c < nv):
                raise DisconnectedVertex(f"vertex {v} lists unknown child {c}")
            if c == v or has_parent[c]:
                raise CycleDetected(f"vertex {c} has more than one parent")
            has_parent[c] = True
    roots = [v for v in range(nv) if not has_parent[v]]
    if not roots:
        raise CycleDetected("every vertex has a parent")
    if len(roots) > 1:
        raise DisconnectedVertex(f"forest with roots {roots}")

    order = []
    new_parent = []
    label = {}
    queue = deque([(roots[0], -1)])
    while queue:
        v, par = queue.popleft()
        label[v] = len(order)
        order.append(v)
        new_parent.append(par)
        for c in children_lists[v]:
            queue.append((c, label[v]))
    if len(order) != nv:
        raise CycleDetected(f"{nv - len(order)} vertices lie on a cycle unreachable from the root")
    return _from_parents(np.array(new_parent, dtype=np.int64))


def build_spherical(degrees: Sequence[int], max_vertices: int = MAX_VERTICES) -> Tree:
    """Spherically symmetric tree: every depth-``l`` vertex has ``degrees[l]`` children."""
    degrees = [int(d) for d in degrees]
    if any(d < 1 for d in degrees):
        raise DynPercError(f"degrees must be >= 1, got {degrees}")
    sizes = [1]
    for d in degrees:
        sizes.append(sizes[-1] * d)
        if sum(sizes) > max_vertices:
            raise BudgetExceeded(f"spherical tree exceeds {max_vertices} vertices")
    parents = [np.array([-1], dtype=np.int64)]
    offset = 0
    for l, d in enumerate(degrees):
        parents.append(offset + np.arange(sizes[l + 1], dtype=np.int64) // d)
        offset += sizes[l]
    parent = np.concatenate(parents)
    depth = np.repeat(np.arange(len(sizes), dtype=np.int64), sizes)
    return _assemble(parent, depth)


def build_from_level_counts(counts: Sequence[int], max_vertices: int = MAX_VERTICES) -> Tree:
    """Tree with prescribed level sizes, children spread as evenly as possible.

    Each depth-``l`` vertex gets either floor or ceil of ``|G_{l+1}| / |G_l|``
    children; the result is spherically symmetric exactly when every ratio
    is an integer.
    """
    counts = [int(c) for c in counts]
    if not counts or counts[0] != 1:
        raise DynPercError("level counts must start with 1 (the root)")
    if any(b < a for a, b in zip(counts, counts[1:])):
        raise DynPercError("level counts must be non-decreasing for a leafless tree")
    if sum(counts) > max_vertices:
        raise BudgetExceeded(f"{sum(counts)} vertices exceeds budget {max_vertices}")
    parents = [np.array([-1], dtype=np.int64)]
    offset = 0
    for l in range(len(counts) - 1):
        j = np.arange(counts[l + 1], dtype=np.int64)
        parents.append(offset + (j * counts[l]) // counts[l + 1])
        offset += counts[l]
    parent = np.concatenate(parents)
    depth = np.repeat(np.arange(len(counts), dtype=np.int64), counts)
    return _assemble(parent, depth)


def build_galton_watson(offspring_probs: Sequence[float], depth: int, seed: int,
                        max_vertices: int = MAX_VERTICES, prune: bool = True) -> Tree:
    """Galton-Watson tree grown to ``depth`` generations, pruned leafless by default."""
    probs = np.asarray(offspring_probs, dtype=float)
    if probs.ndim != 1 or probs.size == 0 or np.any(probs < 0) or not np.isclose(probs.sum(), 1.0):
        raise DynPercError("offspring_probs must be a probability vector")
    probs = probs / probs.sum()
    rng = np.random.default_rng(seed)
    parents = [np.array([-1], dtype=np.int64)]
    level = np.array([0], dtype=np.int64)
    total = 1
    for _ in range(int(depth)):
        kids = rng.choice(probs.size, size=level.size, p=probs)
        nxt = np.repeat(level, kids)
        if nxt.size == 0:
            break
        total += nxt.size
        if total > max_vertices:
            raise BudgetExceeded(f"Galton-Watson tree exceeds {max_vertices} vertices")
        parents.append(nxt)
        level = np.arange(total - nxt.size, total, dtype=np.int64)
    t = _from_parents(np.concatenate(parents))
    return prune_leafless(t) if prune else t


def prune_leafless(t: Tree) -> Tree:
    """Drop every vertex without a descendant at depth ``height``."""
    n = t.height
    keep = t.depth == n
    for l in range(n, 0, -1):
        lo, hi = t.level_offsets[l], t.level_offsets[l + 1]
        alive = np.arange(lo, hi)[keep[lo:hi]]
        keep[t.parent[alive]] = True
    if keep.all():
        return t
    new_index = np.cumsum(keep) - 1
    old = np.flatnonzero(keep)
    parent = t.parent[old].copy()
    parent[1:] = new_index[parent[1:]]
    return _assemble(parent, t.depth[old].copy())


def meet_depth(t: Tree, a: int, b: int) -> int:
    """Depth of the lowest common ancestor of leaves ``a`` and ``b`` (vertex indices)."""
    for v in (a, b):
        if not t.is_leaf(v):
            raise NotALeaf(f"vertex {v} is not a leaf of a height-{t.height} tree")
    while a != b:
        a = int(t.parent[a])
        b = int(t.parent[b])
    return int(t.depth[a])


def meet_matrix(t: Tree) -> np.ndarray:
    """All pairwise leaf meet depths, indexed by leaf ordinal."""
    anc = t.leaf_ancestors
    L = t.n_leaves
    out = np.zeros((L, L), dtype=np.int64)
    for l in range(1, t.height + 1):
        out += anc[l][:, None] == anc[l][None, :]
    return out


def level_counts(t: Tree) -> list[int]:
    return t.level_counts


def leaf_count_below(t: Tree) -> np.ndarray:
    """Number of depth-``height`` descendants of every vertex."""
    below = (t.depth == t.height).astype(np.int64)
    for l in range(t.height, 0, -1):
        lo, hi = t.level_offsets[l], t.level_offsets[l + 1]
        np.add.at(below, t.parent[lo:hi], below[lo:hi])
    return below


def power_counts(spec: dict, depth: Optional[int] = None) -> list[int]:
    """Level counts ceil(base^l l^gamma) of a ``power`` tree spec, in exact integers."""
    n = int(spec["depth"] if depth is None else depth)
    b, g = int(spec["base"]), float(spec["gamma"])
    return [1] + [math.ceil(b ** l * Fraction(float(l) ** g)) for l in range(1, n + 1)]


def tree_from_spec(spec: dict) -> Tree:
    """Construct a tree from its JSON description."""
    kind = spec.get("kind")
    if kind == "explicit":
        return build_explicit(spec["children"])
    if kind == "spherical":
        return build_spherical(spec["degrees"])
    if kind == "level_counts":
        return build_from_level_counts(spec["counts"])
    if kind == "power":
        return build_from_level_counts(power_counts(spec))
    if kind == "galton_watson":
        return build_galton_watson(spec["offspring_probs"], spec["depth"], spec["seed"])
    raise DynPercError(f"unknown tree kind {kind!r}")


def load_tree(path) -> Tree:
    with open(path) as fh:
        return tree_from_spec(json.load(fh))
