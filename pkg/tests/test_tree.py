import itertools

import numpy as np
import pytest
from hypothesis import given, strategies as st

from dynperc.errors import BudgetExceeded, CycleDetected, DisconnectedVertex, EmptyTree, NotALeaf
from dynperc.tree import (
    PercolationParams,
    build_explicit,
    build_from_level_counts,
    build_galton_watson,
    build_spherical,
    level_counts,
    load_tree,
    meet_depth,
    meet_matrix,
    power_counts,
    prune_leafless,
    tree_from_spec,
)

from oracles import meet_by_sets


@pytest.mark.parametrize(
    "children, counts",
    [
        ([[1, 2], [], []], [1, 2]),
        ([[1], [2], [3], []], [1, 1, 1, 1]),
        ([[1, 2], [3, 4], [5, 6], [], [], [], []], [1, 2, 4]),
    ],
)
def test_build_explicit_level_counts(children, counts):
    t = build_explicit(children)
    assert t.level_counts == counts
    assert t.height == len(counts) - 1
    assert list(t.leaves) == list(range(sum(counts[:-1]), sum(counts)))


def test_build_explicit_relabels_breadth_first():
    # root is vertex 3 here
    t = build_explicit([[], [0], [], [1, 2]])
    assert t.level_counts == [1, 2, 1]
    assert t.parent.tolist() == [-1, 0, 0, 1]


@pytest.mark.parametrize(
    "children, err",
    [
        ([], EmptyTree),
        ([[1], [0]], CycleDetected),
        ([[1], [], []], DisconnectedVertex),
        ([[1, 1], []], CycleDetected),
        ([[5]], DisconnectedVertex),
    ],
)
def test_build_explicit_rejects(children, err):
    with pytest.raises(err):
        build_explicit(children)


@pytest.mark.parametrize(
    "degrees, counts",
    [((2, 2), [1, 2, 4]), ((3,), [1, 3]), ((2, 3, 2), [1, 2, 6, 12])],
)
def test_build_spherical(degrees, counts):
    t = build_spherical(degrees)
    assert level_counts(t) == counts
    assert t.is_spherically_symmetric


def test_build_spherical_budget():
    with pytest.raises(BudgetExceeded):
        build_spherical([10] * 8, max_vertices=1000)


@given(st.lists(st.integers(1, 4), min_size=1, max_size=6))
def test_spherical_counts_are_cumulative_products(degrees):
    t = build_spherical(degrees)
    assert t.level_counts == [1] + list(itertools.accumulate(degrees, lambda a, b: a * b))
    assert sum(t.level_counts) == t.n_vertices


def test_prune_examples(path3, binary2):
    assert prune_leafless(path3) is path3
    assert prune_leafless(binary2) is binary2
    # cherry: one child extended to depth 2, one stub at depth 1
    t = build_explicit([[1, 2], [3], [], []])
    p = prune_leafless(t)
    assert p.level_counts == [1, 1, 1]


def _random_children(draw_sizes):
    children = [[]]
    frontier = [0]
    for size in draw_sizes:
        nxt = []
        for k, v in enumerate(frontier):
            m = size[k % len(size)]
            for _ in range(m):
                children.append([])
                children[v].append(len(children) - 1)
                nxt.append(len(children) - 1)
        if not nxt:
            break
        frontier = nxt
    return children


tree_shapes = st.lists(st.lists(st.integers(0, 3), min_size=1, max_size=4), min_size=1, max_size=4)


@given(tree_shapes)
def test_prune_properties(shapes):
    t = build_explicit(_random_children(shapes))
    p = prune_leafless(t)
    assert prune_leafless(p) is p
    assert p.n_leaves == t.n_leaves
    n = p.height
    # every non-leaf has a child, and the counts are consistent
    assert np.all(p.n_children[p.depth < n] >= 1)
    assert sum(p.level_counts) == p.n_vertices
    assert p.level_counts[0] == 1


def test_meet_depth_examples(binary2):
    leaves = list(binary2.leaves)
    assert meet_depth(binary2, leaves[0], leaves[0]) == 2
    assert meet_depth(binary2, leaves[0], leaves[1]) == 1
    assert meet_depth(binary2, leaves[0], leaves[2]) == 0
    with pytest.raises(NotALeaf):
        meet_depth(binary2, 0, leaves[0])


@given(tree_shapes)
def test_meet_matches_ancestor_sets_and_is_ultrametric(shapes):
    t = prune_leafless(build_explicit(_random_children(shapes)))
    children = t.children_lists()
    M = meet_matrix(t)
    leaves = list(t.leaves)
    for i, a in enumerate(leaves):
        for j, b in enumerate(leaves):
            assert M[i, j] == meet_by_sets(children, a, b) == meet_depth(t, a, b)
    for i, j, k in itertools.product(range(len(leaves)), repeat=3):
        if len(leaves) > 6:
            break
        assert M[i, j] >= min(M[i, k], M[j, k])


def test_level_count_family_prefix():
    counts = power_counts({"base": 2, "gamma": 0.8, "depth": 6})
    deep = build_from_level_counts(counts)
    shallow = build_from_level_counts(counts[:5])
    assert deep.level_counts == counts
    assert np.array_equal(deep.parent[: shallow.n_vertices], shallow.parent)


def test_galton_watson_reproducible_and_leafless():
    a = build_galton_watson([0.2, 0.3, 0.5], 6, seed=3)
    b = build_galton_watson([0.2, 0.3, 0.5], 6, seed=3)
    assert a.digest == b.digest
    assert np.all(a.n_children[a.depth < a.height] >= 1)


def test_tree_spec_roundtrip(tmp_path):
    spec = {"kind": "spherical", "degrees": [2, 3]}
    path = tmp_path / "t.json"
    path.write_text('{"kind": "spherical", "degrees": [2, 3]}')
    assert load_tree(path).level_counts == tree_from_spec(spec).level_counts == [1, 2, 6]


def test_params():
    P = PercolationParams(0.3)
    assert P.p + P.q == 1.0
    with pytest.raises(ValueError):
        PercolationParams(1.0)
