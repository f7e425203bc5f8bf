"""Explicit finite transition systems and brute-force (alternating)
approximate simulation checks.

States, inputs and outputs are arbitrary hashable labels; internally all
bookkeeping is done on integer positions.  Relations are returned as sets of
label pairs.
"""
from __future__ import annotations

from collections import defaultdict
from dataclasses import dataclass
from typing import Callable, Hashable, Iterable

import numpy as np

INF = float("inf")


def discrete_metric(y1, y2) -> float:
    return 0.0 if y1 == y2 else INF


class ChainMetric:
    """``d(y1, y2) = max_i ||y1[i] - y2[i]||_inf`` for equal-length chains of
    points (arrays of shape ``(L, n)``), ``+inf`` when lengths differ.

    NaN coordinates are wildcards and never contribute to the distance.
    """

    def __call__(self, y1, y2) -> float:
        a = np.asarray(y1, dtype=float)
        b = np.asarray(y2, dtype=float)
        if a.shape != b.shape:
            return INF
        if a.size == 0:
            return 0.0
        d = np.abs(a - b)
        return float(np.max(np.where(np.isnan(d), 0.0, d)))

    def pairs_within(self, ys1, ys2, eps: float) -> list[tuple[int, int]]:
        groups1, groups2 = defaultdict(list), defaultdict(list)
        for i, y in enumerate(ys1):
            groups1[np.shape(y)].append(i)
        for j, y in enumerate(ys2):
            groups2[np.shape(y)].append(j)
        out = []
        for shape, idx1 in groups1.items():
            idx2 = groups2.get(shape)
            if not idx2:
                continue
            a = np.array([np.asarray(ys1[i], dtype=float).ravel() for i in idx1])
            b = np.array([np.asarray(ys2[j], dtype=float).ravel() for j in idx2])
            width = max(1, a.shape[1])
            chunk = max(1, int(4_000_000 // (len(idx2) * width)))
            for s in range(0, len(idx1), chunk):
                d = np.abs(a[s:s + chunk, None, :] - b[None, :, :])
                d = np.where(np.isnan(d), 0.0, d)
                dist = d.max(axis=2) if width else np.zeros(d.shape[:2])
                ii, jj = np.nonzero(dist <= eps)
                out.extend((idx1[s + p], idx2[q]) for p, q in zip(ii.tolist(), jj.tolist()))
        return out


class FiniteSystem:
    """``(X, X0, U, ->, Y, H)`` with a metric on outputs.

    ``outputs`` is aligned with ``states``; by default every state is its own
    output.  Instances are treated as immutable after construction.
    """

    def __init__(self, states: Iterable[Hashable], initials: Iterable[Hashable],
                 inputs: Iterable[Hashable], transitions: Iterable[tuple],
                 outputs=None, metric: Callable | None = None):
        self.states = tuple(states)
        self.index = {s: i for i, s in enumerate(self.states)}
        if len(self.index) != len(self.states):
            raise ValueError("duplicate states")
        self.inputs = tuple(inputs)
        self.input_index = {u: i for i, u in enumerate(self.inputs)}
        try:
            self.initials = frozenset(self.index[s] for s in initials)
        except KeyError as e:
            raise ValueError(f"initial state {e.args[0]!r} is not a state")
        post: list[dict[int, set]] = [dict() for _ in self.states]
        for src, u, dst in transitions:
            try:
                i, k, j = self.index[src], self.input_index[u], self.index[dst]
            except KeyError as e:
                raise ValueError(f"transition ({src!r}, {u!r}, {dst!r}) uses unknown label {e.args[0]!r}")
            post[i].setdefault(k, set()).add(j)
        self.post = [{k: tuple(sorted(v)) for k, v in sorted(d.items())} for d in post]
        self.outputs = list(self.states) if outputs is None else list(outputs)
        if len(self.outputs) != len(self.states):
            raise ValueError("outputs must align with states")
        self.metric = metric or discrete_metric

    def __len__(self):
        return len(self.states)

    def __repr__(self):
        return (f"FiniteSystem(states={len(self.states)}, initials={len(self.initials)}, "
                f"inputs={len(self.inputs)}, transitions={self.n_transitions})")

    @property
    def n_transitions(self) -> int:
        return sum(len(v) for d in self.post for v in d.values())

    def transitions(self):
        for i, d in enumerate(self.post):
            for k, js in d.items():
                for j in js:
                    yield self.states[i], self.inputs[k], self.states[j]

    def successors(self, i: int) -> set[int]:
        return {j for js in self.post[i].values() for j in js}

    def enabled(self, i: int):
        return self.post[i].keys()

    def output(self, s):
        return self.outputs[self.index[s]]

    def subsystem(self, keep_states, keep_transitions=None, keep_initials=None) -> "FiniteSystem":
        keep = set(keep_states)
        states = [s for s in self.states if s in keep]
        inits = [self.states[i] for i in sorted(self.initials) if self.states[i] in keep]
        if keep_initials is not None:
            inits = [s for s in inits if s in set(keep_initials)]
        trans = keep_transitions if keep_transitions is not None else self.transitions()
        trans = [(a, u, b) for a, u, b in trans if a in keep and b in keep]
        outs = [self.outputs[self.index[s]] for s in states]
        return FiniteSystem(states, inits, self.inputs, trans, outs, self.metric)


def is_deterministic(S: FiniteSystem) -> bool:
    return all(len(js) <= 1 for d in S.post for js in d.values())


def is_nonblocking(S: FiniteSystem) -> bool:
    return all(len(d) > 0 for d in S.post)


def accessible_part(S: FiniteSystem) -> FiniteSystem:
    seen = set(S.initials)
    stack = sorted(S.initials)
    while stack:
        i = stack.pop()
        for j in S.successors(i):
            if j not in seen:
                seen.add(j)
                stack.append(j)
    return S.subsystem(S.states[i] for i in sorted(seen))


# ---------------------------------------------------------------------------
# simulation relations


@dataclass(frozen=True)
class SimRelation:
    pairs: frozenset
    epsilon: float
    kind: str  # "plain" or "alternating"

    def __len__(self):
        return len(self.pairs)

    def __contains__(self, pair):
        return pair in self.pairs


def _candidate_pairs(S1: FiniteSystem, S2: FiniteSystem, eps: float) -> set[tuple[int, int]]:
    metric = S1.metric
    if hasattr(metric, "pairs_within"):
        return set(metric.pairs_within(S1.outputs, S2.outputs, eps))
    return {(i, j) for i, y1 in enumerate(S1.outputs) for j, y2 in enumerate(S2.outputs)
            if metric(y1, y2) <= eps}


def _initial_cover(S1, S2, R) -> bool:
    covered = {i for i, j in R if j in S2.initials}
    return S1.initials <= covered


def _finish(S1, S2, R, eps, kind):
    if not _initial_cover(S1, S2, R):
        return None
    pairs = frozenset((S1.states[i], S2.states[j]) for i, j in R)
    return SimRelation(pairs, eps, kind)


def maximal_approx_relation(S1: FiniteSystem, S2: FiniteSystem, eps: float) -> set[tuple[int, int]]:
    """Greatest fixed point of condition (ii)+(iii) as integer pairs."""
    R = _candidate_pairs(S1, S2, eps)
    by_first = defaultdict(set)
    for i, j in R:
        by_first[i].add(j)
    succ1 = [S1.successors(i) for i in range(len(S1))]
    succ2 = [S2.successors(j) for j in range(len(S2))]
    changed = True
    while changed:
        changed = False
        for i, j in sorted(R):
            ok = all(by_first[i2].intersection(succ2[j]) for i2 in succ1[i])
            if not ok:
                R.discard((i, j))
                by_first[i].discard(j)
                changed = True
    return R


def check_approx_simulation(S1: FiniteSystem, S2: FiniteSystem, eps: float) -> SimRelation | None:
    """Maximal eps-approximate simulation relation from S1 to S2, or None when
    some initial state of S1 cannot be related to an initial state of S2."""
    return _finish(S1, S2, maximal_approx_relation(S1, S2, eps), eps, "plain")


def _alt_ok(S1, S2, i, j, by_second) -> bool:
    for u1, post1 in S1.post[i].items():
        post1 = set(post1)
        if not any(all(by_second[j2] & post1 for j2 in post2) for post2 in S2.post[j].values()):
            return False
    return True


def maximal_alt_relation(S1: FiniteSystem, S2: FiniteSystem, eps: float) -> set[tuple[int, int]]:
    R = _candidate_pairs(S1, S2, eps)
    by_second = defaultdict(set)
    for i, j in R:
        by_second[j].add(i)
    changed = True
    while changed:
        changed = False
        for i, j in sorted(R):
            if not _alt_ok(S1, S2, i, j, by_second):
                R.discard((i, j))
                by_second[j].discard(i)
                changed = True
    return R


def check_alt_simulation(S1: FiniteSystem, S2: FiniteSystem, eps: float) -> SimRelation | None:
    """Maximal alternating eps-approximate simulation relation from S1 to S2.

    Inputs are quantified over those enabled at the respective state: every
    input available to S1 at ``x1`` must be answered by an input available to
    S2 at ``x2`` all of whose successors are matched.
    """
    return _finish(S1, S2, maximal_alt_relation(S1, S2, eps), eps, "alternating")


def verify_relation(S1: FiniteSystem, S2: FiniteSystem, rel: SimRelation) -> bool:
    """Independent re-check of a relation by direct enumeration on labels."""
    pairs = set(rel.pairs)
    for s1 in (S1.states[i] for i in S1.initials):
        if not any((s1, S2.states[j]) in pairs for j in S2.initials):
            return False
    for s1, s2 in pairs:
        i, j = S1.index[s1], S2.index[s2]
        if S1.metric(S1.outputs[i], S2.outputs[j]) > rel.epsilon:
            return False
        if rel.kind == "plain":
            for i2 in S1.successors(i):
                b = S1.states[i2]
                if not any((b, S2.states[j2]) in pairs for j2 in S2.successors(j)):
                    return False
        else:
            for u1, post1 in S1.post[i].items():
                found = False
                for u2, post2 in S2.post[j].items():
                    if all(any((S1.states[i2], S2.states[j2]) in pairs for i2 in post1)
                           for j2 in post2):
                        found = True
                        break
                if not found:
                    return False
    return True


def feedback_compose(S1: FiniteSystem, S2: FiniteSystem, R: SimRelation) -> FiniteSystem:
    """Approximate feedback composition of plant-like ``S1`` with controller
    ``S2`` along an alternating relation ``R`` from S2 to S1.

    For every input the controller enables at ``x2``, the plant input is the
    first one (in input order) that witnesses the alternating condition.
    """
    if R.kind != "alternating":
        raise ValueError("feedback composition needs an alternating relation")
    pairs = {(S2.index[a], S1.index[b]) for a, b in R.pairs}
    by_second = defaultdict(set)  # plant state -> controller states related to it
    for j, i in pairs:
        by_second[i].add(j)
    states = sorted(((i, j) for j, i in pairs))
    labels = [(S1.states[i], S2.states[j]) for i, j in states]
    inits = [(S1.states[i], S2.states[j]) for i, j in states
             if i in S1.initials and j in S2.initials]
    trans = []
    for i, j in states:
        for u2, post2 in S2.post[j].items():
            post2 = set(post2)
            for u1, post1 in S1.post[i].items():
                if all(by_second[i2] & post2 for i2 in post1):
                    for i2 in post1:
                        for j2 in sorted(by_second[i2] & post2):
                            trans.append(((S1.states[i], S2.states[j]), S1.inputs[u1],
                                          (S1.states[i2], S2.states[j2])))
                    break
    outs = [S1.outputs[i] for i, _ in states]
    return FiniteSystem(labels, inits, S1.inputs, trans, outs, S1.metric)


# ---------------------------------------------------------------------------
# text format: "init <state>" lines followed by "<src> <input> <dst>" lines


def _tok(label) -> str:
    s = str(label).replace(" ", "")
    if not s or s.startswith("#"):
        raise ValueError(f"label {label!r} has no text form")
    return s


def dump_text(S: FiniteSystem) -> str:
    lines = [f"init {_tok(S.states[i])}" for i in sorted(S.initials)]
    lines += [f"{_tok(a)} {_tok(u)} {_tok(b)}" for a, u, b in S.transitions()]
    return "\n".join(lines) + "\n"


def parse_text(text: str) -> FiniteSystem:
    states, inputs, inits, trans = {}, {}, [], []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if parts[0] == "init" and len(parts) == 2:
            states.setdefault(parts[1], None)
            inits.append(parts[1])
        elif len(parts) == 3:
            a, u, b = parts
            states.setdefault(a, None)
            states.setdefault(b, None)
            inputs.setdefault(u, None)
            trans.append((a, u, b))
        else:
            raise ValueError(f"line {lineno}: expected 'src input dst' or 'init state'")
    return FiniteSystem(states, inits, inputs, trans)
