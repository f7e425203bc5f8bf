"""Specification graphs over finite point sets, their lift to chains of
length ``N in [n_min, n_max]``, and the "meets the specification up to theta"
test used by the integrated synthesis.

Node coordinates may be NaN: a NaN coordinate is unconstrained, which lets a
motion-planning task speak about positions only while the plant state also
carries a heading.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass

import numpy as np

from .systems import ChainMetric, FiniteSystem


@dataclass(frozen=True)
class SpecGraph:
    nodes: np.ndarray             # (K, n), NaN = wildcard coordinate
    edges: frozenset              # {(i, j)}
    initials: frozenset

    def __post_init__(self):
        nodes = np.atleast_2d(np.asarray(self.nodes, dtype=float))
        object.__setattr__(self, "nodes", nodes)
        edges = frozenset((int(a), int(b)) for a, b in self.edges)
        object.__setattr__(self, "edges", edges)
        object.__setattr__(self, "initials", frozenset(int(i) for i in self.initials))
        k = len(nodes)
        if not all(0 <= i < k for i in self.initials):
            raise ValueError("initial node index out of range")
        if not all(0 <= a < k and 0 <= b < k for a, b in edges):
            raise ValueError("edge endpoint out of range")
        succ = [[] for _ in range(k)]
        for a, b in sorted(edges):
            succ[a].append(b)
        object.__setattr__(self, "_succ", tuple(tuple(s) for s in succ))

    def __len__(self):
        return len(self.nodes)

    def successors(self, i: int) -> tuple[int, ...]:
        return self._succ[i]

    def distances(self, x) -> np.ndarray:
        """Wildcard-aware infinity-norm distance from point ``x`` to every node."""
        d = np.abs(self.nodes - np.asarray(x, dtype=float))
        return np.max(np.where(np.isnan(d), 0.0, d), axis=1)

    def near(self, x, radius: float) -> np.ndarray:
        return np.flatnonzero(self.distances(x) <= radius)


def lift_spec(g: SpecGraph, n_min: int, n_max: int, max_states: int = 200_000) -> FiniteSystem:
    """Chains of ``N`` consecutive nodes (``n_min <= N <= n_max``) plus the
    bare initial nodes, with ``x1 -> x2`` iff ``last(x1) -> first(x2)`` is an
    edge.  States are tuples of node indices; a bare initial node ``i`` is the
    1-tuple ``(i,)``."""
    if not 1 <= n_min <= n_max:
        raise ValueError("need 1 <= n_min <= n_max")
    paths: list[tuple[int, ...]] = []
    level = [(i,) for i in range(len(g))]
    for length in range(1, n_max + 1):
        if length >= n_min:
            paths.extend(level)
        if len(paths) > max_states:
            raise RuntimeError(f"lifted specification exceeds {max_states} states")
        if length < n_max:
            level = [p + (b,) for p in level for b in g.successors(p[-1])]
    states = list(dict.fromkeys([(i,) for i in sorted(g.initials)] + paths))
    by_first: dict[int, list] = {}
    for p in paths:
        by_first.setdefault(p[0], []).append(p)
    trans = []
    for s in states:
        for b in g.successors(s[-1]):
            for t in by_first.get(b, ()):
                trans.append((s, "q", t))
    outputs = [g.nodes[list(s)] for s in states]
    return FiniteSystem(states, [(i,) for i in sorted(g.initials)], ["q"], trans,
                        outputs, ChainMetric())


@dataclass(frozen=True)
class MeetResult:
    ok: bool
    end_nodes: frozenset


def meets_spec(g: SpecGraph, samples, anchors, theta: float, n_min: int = 1,
               n_max: int | None = None) -> dict[int, MeetResult]:
    """For each ``N``: is there an anchor ``q0`` and an edge path
    ``q0 -> q1 -> ... -> qN`` with ``||samples[i-1] - q_i|| <= theta``?

    ``samples`` holds the states after 1, 2, ... sampling intervals; the
    result for ``N`` only looks at the first ``N`` rows.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    n_max = len(samples) if n_max is None else n_max
    frontier = set(anchors)
    out = {}
    for i in range(1, n_max + 1):
        if frontier:
            close = g.distances(samples[i - 1]) <= theta
            frontier = {b for a in frontier for b in g.successors(a) if close[b]}
        if i >= n_min:
            out[i] = MeetResult(bool(frontier), frozenset(frontier))
    return out


def match_path(g: SpecGraph, samples, eps: float, anchors=None):
    """Longest-prefix matching of a sample sequence to an edge path.

    ``samples[0]`` is matched to an anchor node (default: the initial nodes),
    each later sample to a successor of the previous node.  Returns
    ``(matched_prefix_length, witness_node_path)``.
    """
    samples = np.atleast_2d(np.asarray(samples, dtype=float))
    starts = g.initials if anchors is None else anchors
    close0 = g.distances(samples[0]) <= eps
    layers = [{a: None for a in sorted(starts) if close0[a]}]
    if not layers[0]:
        return 0, []
    for i in range(1, len(samples)):
        close = g.distances(samples[i]) <= eps
        nxt = {}
        for a in layers[-1]:
            for b in g.successors(a):
                if close[b] and b not in nxt:
                    nxt[b] = a
        if not nxt:
            break
        layers.append(nxt)
    node = min(layers[-1])
    path = [node]
    for layer in reversed(layers[1:]):
        node = layer[node]
        path.append(node)
    return len(layers), path[::-1]


def waypoint_graph(waypoints, spacing: float, window: int, n: int, dims=(0, 1),
                   start_state=None, hold_last: bool = True) -> SpecGraph:
    """Chain of nodes along a polyline through ``waypoints``.

    Nodes are spaced at most ``spacing`` apart along the polyline; node ``i``
    has edges to ``i+1 .. i+window`` so every sampling instant must advance
    along the route, and the last node carries a self-loop when
    ``hold_last``.  Coordinates outside ``dims`` are wildcards, except that
    the first node takes ``start_state`` in full when given.
    """
    wp = np.asarray(waypoints, dtype=float)
    pts = [wp[0]]
    for a, b in zip(wp[:-1], wp[1:]):
        seg = math.ceil(np.max(np.abs(b - a)) / spacing - 1e-9)
        for s in range(1, max(seg, 1) + 1):
            pts.append(a + (b - a) * s / max(seg, 1))
    nodes = np.full((len(pts), n), np.nan)
    nodes[:, list(dims)] = np.array(pts)
    if start_state is not None:
        nodes[0] = np.asarray(start_state, dtype=float)
    k = len(nodes)
    edges = {(i, j) for i in range(k) for j in range(i + 1, min(k, i + window + 1))}
    if hold_last:
        edges.add((k - 1, k - 1))
    return SpecGraph(nodes, frozenset(edges), frozenset({0}))


def graph_reachable(g: SpecGraph, anchors, steps: int) -> set[int]:
    """Nodes at the end of edge paths of exactly ``steps`` edges."""
    frontier = set(anchors)
    for _ in range(steps):
        frontier = {b for a in frontier for b in g.successors(a)}
    return frontier


def all_paths(g: SpecGraph, length: int):
    """Every node path with ``length`` nodes (small graphs only)."""
    for p in itertools.product(range(len(g)), repeat=length):
        if all((a, b) in g.edges for a, b in zip(p[:-1], p[1:])):
            yield p
