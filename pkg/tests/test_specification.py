import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ncsynth.specification import (SpecGraph, all_paths, graph_reachable, lift_spec, match_path,
                                   meets_spec, waypoint_graph)

CYCLE = SpecGraph(np.array([[0.0], [1.0]]), frozenset({(0, 1), (1, 0)}), frozenset({0}))


def test_lift_length_one_is_the_graph():
    Q = lift_spec(CYCLE, 1, 1)
    assert set(Q.states) == {(0,), (1,)}
    assert set(Q.transitions()) == {((0,), "q", (1,)), ((1,), "q", (0,))}
    assert [Q.states[i] for i in Q.initials] == [(0,)]


def test_lift_lengths_one_and_two():
    Q = lift_spec(CYCLE, 1, 2)
    assert set(Q.states) == {(0,), (1,), (0, 1), (1, 0)}
    # last(x1) -> first(x2) must be an edge
    want = {(s, "q", t) for s in Q.states for t in Q.states if (s[-1], t[0]) in CYCLE.edges}
    assert set(Q.transitions()) == want
    np.testing.assert_array_equal(Q.output((0, 1)), [[0.0], [1.0]])


def test_lift_without_edges_keeps_bare_initials():
    g = SpecGraph(np.array([[0.0], [1.0]]), frozenset(), frozenset({1}))
    Q = lift_spec(g, 2, 3)
    assert list(Q.states) == [(1,)]
    assert Q.n_transitions == 0


def test_lift_rejects_bad_range():
    with pytest.raises(ValueError):
        lift_spec(CYCLE, 2, 1)


def test_spec_graph_validation():
    with pytest.raises(ValueError):
        SpecGraph(np.zeros((2, 1)), frozenset({(0, 2)}), frozenset({0}))
    with pytest.raises(ValueError):
        SpecGraph(np.zeros((2, 1)), frozenset(), frozenset({3}))


def test_wildcard_distance():
    g = SpecGraph(np.array([[0.0, np.nan], [1.0, 1.0]]), frozenset(), frozenset({0}))
    np.testing.assert_allclose(g.distances([0.1, 50.0]), [0.1, 49.0])
    assert list(g.near([0.9, 1.0], 0.15)) == [1]


def test_meets_exact_and_displaced():
    r = meets_spec(CYCLE, [[1.0], [0.0], [1.0]], {0}, 0.0)
    assert all(r[n].ok for n in (1, 2, 3))
    assert r[3].end_nodes == {1}
    far = meets_spec(CYCLE, [[1.3], [0.3]], {0}, 0.2)
    assert not far[1].ok and not far[2].ok


def test_meets_respects_n_range():
    r = meets_spec(CYCLE, [[1.0], [0.0], [1.0]], {0}, 0.0, n_min=2, n_max=3)
    assert set(r) == {2, 3}


@st.composite
def graphs(draw):
    k = draw(st.integers(1, 6))
    nodes = draw(st.lists(st.integers(0, 4), min_size=k, max_size=k))
    edges = draw(st.sets(st.tuples(st.integers(0, k - 1), st.integers(0, k - 1)), max_size=12))
    inits = draw(st.sets(st.integers(0, k - 1), min_size=1, max_size=k))
    return SpecGraph(np.array(nodes, dtype=float)[:, None] * 0.5, frozenset(edges), frozenset(inits))


@settings(max_examples=150, deadline=None)
@given(graphs(), st.data())
def test_meets_at_zero_on_node_samples_is_reachability(g, data):
    # with distinct node positions, theta = 0 singles out the sampled nodes
    if len(set(g.nodes[:, 0])) != len(g):
        return
    length = data.draw(st.integers(1, 4))
    seq = data.draw(st.lists(st.integers(0, len(g) - 1), min_size=length, max_size=length))
    anchors = set(g.initials)
    r = meets_spec(g, g.nodes[seq], anchors, 0.0)
    for n in range(1, length + 1):
        want = any(all((p[i], p[i + 1]) in g.edges for i in range(n))
                   for p in ((a,) + tuple(seq[:n]) for a in anchors))
        assert r[n].ok == want


@settings(max_examples=150, deadline=None)
@given(graphs(), st.lists(st.floats(-0.5, 2.5), min_size=1, max_size=4),
       st.floats(0, 0.5), st.floats(0, 0.5))
def test_end_nodes_monotone_in_theta(g, xs, t1, extra):
    samples = np.array(xs)[:, None]
    a = meets_spec(g, samples, g.initials, t1)
    b = meets_spec(g, samples, g.initials, t1 + extra)
    for n in a:
        assert a[n].end_nodes <= b[n].end_nodes


@settings(max_examples=150, deadline=None)
@given(graphs(), st.lists(st.floats(-0.5, 2.5), min_size=1, max_size=5), st.floats(0, 0.6))
def test_match_path_witness_is_valid_and_prefix_is_longest(g, xs, eps):
    samples = np.array(xs)[:, None]
    matched, path = match_path(g, samples, eps)
    assert len(path) == matched
    if matched:
        assert path[0] in g.initials
        assert all((a, b) in g.edges for a, b in zip(path[:-1], path[1:]))
        assert all(g.distances(samples[i])[path[i]] <= eps for i in range(matched))
    # brute force over every path for the next longer prefix
    longer = matched + 1
    if longer <= len(samples):
        assert not any(p[0] in g.initials
                       and all(g.distances(samples[i])[p[i]] <= eps for i in range(longer))
                       for p in all_paths(g, longer))


def test_graph_reachable():
    assert graph_reachable(CYCLE, {0}, 3) == {1}
    assert graph_reachable(CYCLE, {0}, 0) == {0}


def test_waypoint_graph_layout():
    g = waypoint_graph([[0, 0], [0, 0], [0.1, 0]], 0.04, 2, 3, start_state=[0, 0, 0.5])
    # one duplicate node for the zero-length segment, then ceil(0.1 / 0.04) = 3 steps
    assert len(g) == 1 + 1 + 3
    np.testing.assert_allclose(g.nodes[0], [0, 0, 0.5])
    assert np.isnan(g.nodes[1, 2])
    np.testing.assert_allclose(g.nodes[-1, :2], [0.1, 0])
    assert (4, 4) in g.edges and (0, 2) in g.edges and (0, 3) not in g.edges
    assert g.initials == {0}
    gaps = np.max(np.abs(np.diff(g.nodes[:, :2], axis=0)), axis=1)
    assert np.all(gaps <= 0.04 + 1e-12)
