"""Independent reference computations used by the tests.

Nothing here calls into the package's numerical code; each oracle is the
slow, obvious version of what the package computes.
"""

import itertools
import math

import mpmath
import numpy as np


def ancestors(children, v):
    parent = {c: u for u, cs in enumerate(children) for c in cs}
    out = [v]
    while out[-1] in parent:
        out.append(parent[out[-1]])
    return out


def meet_by_sets(children, a, b):
    """Depth of the deepest common ancestor via ancestor-set intersection."""
    A, B = ancestors(children, a), ancestors(children, b)
    common = set(A) & set(B)
    return max(len(ancestors(children, c)) - 1 for c in common)


def h_mp(p, meet, dt, dps=40):
    mpmath.mp.dps = dps
    p = mpmath.mpf(p)
    return (1 + (1 - p) / p * mpmath.e ** (-mpmath.mpf(dt))) ** meet


def brute_energy(children, leaves, times, weights, p):
    """Double sum of h over all (leaf, time) atom pairs, in plain Python."""
    q = 1 - p
    total = 0.0
    atoms = list(zip(leaves, times, weights))
    for (a, s, wa), (b, t, wb) in itertools.product(atoms, atoms):
        m = meet_by_sets(children, a, b)
        total += wa * wb * (1 + q / p * math.exp(-abs(s - t))) ** m
    return total


def fixed_time_percolation(children, p, v=0):
    """P(v connects to the deepest level) at a fixed time, by recursion."""
    depth = {0: 0}
    order = [0]
    for u in order:
        for c in children[u]:
            depth[c] = depth[u] + 1
            order.append(c)
    n = max(depth.values())

    def rec(u):
        if depth[u] == n:
            return 1.0
        miss = 1.0
        for c in children[u]:
            miss *= 1 - p * rec(c)
        return 1 - miss

    return rec(v)


def recompute_trace(children, init, flips, horizon):
    """Percolation intervals by full connectivity recomputation after every event."""
    E = len(init)
    depth = {0: 0}
    order = [0]
    for u in order:
        for c in children[u]:
            depth[c] = depth[u] + 1
            order.append(c)
    n = max(depth.values())

    def connected(state):
        frontier = [0]
        while frontier:
            u = frontier.pop()
            if depth[u] == n:
                return True
            frontier.extend(c for c in children[u] if state[c - 1])
        return False

    events = sorted((t, e) for e in range(E) for t in flips[e])
    state = list(init)
    on = connected(state)
    out, start = [], 0.0 if on else None
    for t, e in events:
        state[e] = not state[e]
        now = connected(state)
        if now and not on:
            start = t
        elif on and not now:
            out.append((start, t))
        on = now
    if on:
        out.append((start, horizon))
    return out


def all_trees(max_edges):
    """All rooted trees (as BFS-ordered children lists) with 1..max_edges edges."""
    seen = set()
    result = []

    def canon(children, v=0):
        return "(" + "".join(sorted(canon(children, c) for c in children[v])) + ")"

    def grow(children):
        key = canon(children)
        if key in seen:
            return
        seen.add(key)
        if len(children) > 1:
            result.append([list(c) for c in children])
        if len(children) - 1 == max_edges:
            return
        for v in range(len(children)):
            new = [list(c) for c in children] + [[]]
            new[v].append(len(children))
            grow(new)

    grow([[]])
    return result


def riesz_capacity_grid(alpha, lo, hi, cells):
    """Riesz capacity of [lo, hi] from a dense quadratic solve on cell averages."""
    x = np.linspace(lo, hi, cells + 1)
    c = 0.5 * (x[1:] + x[:-1])
    w = x[1] - x[0]
    a = alpha
    F = lambda z: np.abs(z) ** (2 - a) / ((1 - a) * (2 - a))
    d = c[:, None] - c[None, :]
    K = (F(d + w) - 2 * F(d) + F(d - w)) / w ** 2
    y = np.linalg.solve(K, np.ones(cells))
    return float(y.sum())
