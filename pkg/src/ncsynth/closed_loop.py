"""Closed-loop execution of a synthesized controller through the network
pipeline, trajectory-level specification checks and exhaustive replay over
hold-count sequences."""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .network import NetworkConfig, sample_iteration
from .plant import ControlSystem, Excursion, integrate
from .specification import SpecGraph, match_path
from .synthesis import Controller, reach

_TOL = 1e-9


@dataclass(frozen=True)
class IterationEvent:
    k: int
    a_k: int
    t_send_sc: float
    t_send_ca: float
    a_next: int
    n_k: int
    y_index: tuple
    key: object
    u_next: int


@dataclass
class ClosedLoopTrace:
    tau: float
    states: np.ndarray            # (K+1, n) at t = k tau
    zoh: np.ndarray               # (K, m) input held on [k tau, (k+1) tau)
    zoh_index: list               # flat input index per interval
    events: list = field(default_factory=list)
    blocked: bool = False
    reason: str = ""
    misses: int = 0

    @property
    def sample_times(self) -> np.ndarray:
        return self.tau * np.arange(len(self.states))

    @property
    def refresh_indices(self) -> list[int]:
        return [e.a_k for e in self.events] + ([self.events[-1].a_next] if self.events else [])


def run_closed_loop(plant: ControlSystem, ctrl: Controller, net: NetworkConfig, x0,
                    horizon_iters: int, rng: np.random.Generator, bits_x: int, bits_u: int,
                    h_max: float = 0.01, extreme: str | None = None) -> ClosedLoopTrace:
    """Run ``horizon_iters`` iterations of the sensor / controller / ZoH loop.

    The ZoH starts with the controller's initial held input.  At iteration
    ``k`` the sensor sends the latest sample before ``t_2k``; the value
    ``C(y_k)`` reaches the ZoH at ``A_{k+1} tau``.
    """
    tau = net.tau
    x = np.asarray(x0, dtype=float)
    states, zoh_idx, events = [x.copy()], [], []
    held = ctrl.u_init
    a_k = 0
    trace = ClosedLoopTrace(tau, np.empty((0, plant.n)), np.empty((0, plant.m)), [])
    for k in range(horizon_iters):
        rec, n_k = sample_iteration(net, rng, bits_x, bits_u, a_k=a_k, extreme=extreme)
        # the interval's samples do not depend on the value being computed
        try:
            for _ in range(n_k):
                x = integrate(plant, x, ctrl.input_point(held), tau, h_max)
                states.append(x.copy())
                zoh_idx.append(held)
        except Excursion as exc:
            trace.blocked, trace.reason = True, f"excursion at t={exc.time:.4g}"
            break
        # latest sample at or before the absolute send time t_2k
        s = min(a_k + int(math.floor((rec.t_send_sc - a_k * tau) / tau + _TOL)), len(states) - 1)
        y = ctrl.xgrid.index(states[s])
        hit = ctrl.lookup(states[s], held if ctrl.hold_aware else None)
        if hit is None:
            trace.blocked, trace.reason = True, f"controller miss at iteration {k}"
            trace.misses += 1
            events.append(IterationEvent(k, a_k, rec.t_send_sc, rec.t_send_ca, rec.a_next,
                                         n_k, y, None, -1))
            break
        key, u = hit
        events.append(IterationEvent(k, a_k, rec.t_send_sc, rec.t_send_ca, rec.a_next,
                                     n_k, y, key, u))
        held = u
        a_k = rec.a_next
    trace.states = np.array(states)
    trace.zoh = np.array([ctrl.input_point(u) for u in zoh_idx]).reshape(len(zoh_idx), plant.m)
    trace.zoh_index = zoh_idx
    trace.events = events
    return trace


@dataclass(frozen=True)
class Verdict:
    satisfied: bool
    witness_path: list
    matched: int


def verify_run(trace: ClosedLoopTrace, spec: SpecGraph, eps: float) -> Verdict:
    """All samples, the initial one included, embed within ``eps`` into an
    edge path from an initial node; a blocked trace never satisfies."""
    matched, path = match_path(spec, trace.states, eps)
    ok = (not trace.blocked) and matched == len(trace.states)
    return Verdict(ok, path, matched)


def visits_in_order(positions, regions) -> bool:
    """Do the points enter every box of ``regions`` in the given order?"""
    i = 0
    for p in np.atleast_2d(positions):
        if i < len(regions) and np.all(p >= regions[i].lower) and np.all(p < regions[i].upper):
            i += 1
    return i == len(regions)


def trace_csv(trace: ClosedLoopTrace) -> str:
    """One row per sample: ``k, t, x..., u..., N_k, y...``; the hold count and
    the measurement index are filled on the rows where an iteration starts."""
    n = trace.states.shape[1]
    m = trace.zoh.shape[1]
    starts = {e.a_k: e for e in trace.events}
    dim_y = len(trace.events[0].y_index) if trace.events else n
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["k", "t"] + [f"x{i + 1}" for i in range(n)] + [f"u{j + 1}" for j in range(m)]
               + ["N_k"] + [f"y{i + 1}" for i in range(dim_y)])
    for k, x in enumerate(trace.states):
        u = [repr(float(v)) for v in trace.zoh[k]] if k < len(trace.zoh) else [""] * m
        e = starts.get(k)
        tail = [str(e.n_k)] + [str(v) for v in e.y_index] if e else [""] * (1 + dim_y)
        w.writerow([k, repr(round(k * trace.tau, 12))] + [repr(float(v)) for v in x] + u + tail)
    return buf.getvalue()


# ---------------------------------------------------------------------------
# exhaustive replay


@dataclass
class ReplayReport:
    sequences: int = 0
    violations: int = 0
    blocked: int = 0
    examples: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.sequences > 0 and self.violations == 0 and self.blocked == 0


def replay_exhaustive(plant: ControlSystem, ctrl: Controller, spec: SpecGraph, x0,
                      n_min: int, n_max: int, horizon: int, eps: float, tau: float,
                      h_max: float = 0.01, report: ReplayReport | None = None) -> ReplayReport:
    """Depth-first over every hold-count sequence of length ``horizon``.

    At each iteration the controller is looked up at the current state with
    the held input, and the samples of the next interval are produced with
    the controller's own timing semantics.  A sequence fails when a sample
    cannot be matched within ``eps`` along spec edges, when the flow leaves
    the state box, or when the lookup misses.
    """
    rep = report or ReplayReport()
    x0 = np.asarray(x0, dtype=float)
    start = {i for i in spec.initials if spec.distances(x0)[i] <= eps + _TOL}

    def fail(kind, note, depth):
        # every completion of this prefix counts as a failing sequence
        count = (n_max - n_min + 1) ** (horizon - depth)
        rep.sequences += count
        if kind == "blocked":
            rep.blocked += count
        else:
            rep.violations += count
        if len(rep.examples) < 5:
            rep.examples.append(note)

    if not start:
        fail("violation", f"x0={x0.tolist()} not within eps of an initial node", 0)
        return rep

    def dfs(x, held, frontier, depth):
        if depth == horizon:
            rep.sequences += 1
            return
        hit = ctrl.lookup(x, held if ctrl.hold_aware else None)
        if hit is None:
            fail("blocked", f"miss at x={x.tolist()} held={held}", depth)
            return
        _, u = hit
        got = reach(plant, x, ctrl.input_points, ctrl.semantics, held, u, n_min, n_max, tau, h_max)
        for n in range(n_min, n_max + 1):
            s = got[n]
            if s is None:
                fail("violation", f"excursion from x={x.tolist()} N={n}", depth + 1)
                continue
            fr = frontier
            for row in s:
                close = spec.distances(row) <= eps + _TOL
                fr = {b for a in fr for b in spec.successors(a) if close[b]}
                if not fr:
                    break
            if not fr:
                fail("violation", f"spec lost from x={x.tolist()} N={n}", depth + 1)
                continue
            dfs(s[-1], u if ctrl.hold_aware else None, fr, depth + 1)

    dfs(x0, ctrl.u_init if ctrl.hold_aware else None, start, 0)
    return rep
