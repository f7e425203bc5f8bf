"""Controller synthesis.

Two routes:

* ``synthesize_naive``: build the symbolic model and the lifted
  specification, then compute the maximal non-blocking controller as a
  greatest fixed point on their product.
* ``synthesize_integrated``: the on-the-fly depth-first search that only
  explores plant states reached from the initial set and keeps one input per
  state.

The integrated search supports three timing semantics for how a freshly
chosen input reaches the plant:

``pipeline``  the measurement at the start of an interval of ``N`` samples
              picks the input applied once those ``N`` samples have passed;
              the samples themselves run under the input already held.
              Controller keys are ``(grid index, held input)``.
``chain``     as ``pipeline`` but the new input already drives the last of
              the ``N`` samples, which is how the symbolic model labels its
              chains.  Keys as for ``pipeline``.
``immediate`` the chosen input drives all ``N`` samples.  Keys are grid
              indices alone.
"""
from __future__ import annotations

import logging
import sys
import threading
import time
from dataclasses import dataclass, field

import numpy as np

from .plant import Box, ControlSystem, Excursion, FcCertificate, integrate, integrate_batch
from .quantization import Grid
from .specification import SpecGraph, meets_spec
from .systems import FiniteSystem

log = logging.getLogger(__name__)

_TOL = 1e-9
SEMANTICS = ("pipeline", "chain", "immediate")
INPUT_ORDERS = ("index", "reuse_first", "progress")


# ---------------------------------------------------------------------------
# parameters


@dataclass(frozen=True)
class SynthesisParams:
    eps: float
    theta: float
    mu_x: float
    mu_u: float
    eta: float
    tau: float

    def __post_init__(self):
        for name in ("eps", "theta", "mu_x", "mu_u", "eta", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def synthesis_violations(p: SynthesisParams, cert: FcCertificate, state_box: Box) -> list[str]:
    out = []
    if p.mu_x + p.theta > p.eps + _TOL:
        out.append(f"mu_x + theta = {p.mu_x + p.theta:g} exceeds eps = {p.eps:g}")
    bound = float(cert.alpha_hi.inverse(cert.alpha_lo(p.theta)))
    mid = min(state_box.min_span(), bound)
    if p.mu_x > mid + _TOL:
        out.append(f"mu_x = {p.mu_x:g} exceeds min(mu_hat, alpha_hi^-1(alpha_lo(theta))) = {mid:.6g}")
    if mid > p.theta + _TOL:
        out.append(f"min(mu_hat, alpha_hi^-1(alpha_lo(theta))) = {mid:.6g} exceeds theta = {p.theta:g}")
    if p.theta > p.eta + _TOL:
        out.append(f"theta = {p.theta:g} exceeds eta = {p.eta:g}")
    return out


def check_synthesis_params(p: SynthesisParams, cert: FcCertificate, state_box: Box) -> bool:
    return not synthesis_violations(p, cert, state_box)


# ---------------------------------------------------------------------------
# controller


class Controller:
    """Partial map from keys to flat input-grid indices plus the Bad set.

    Keys are grid multi-indices (``immediate``) or ``(multi-index, held)``
    pairs (``pipeline``/``chain``).
    """

    def __init__(self, xgrid: Grid, ugrid: Grid, semantics: str = "pipeline",
                 theta: float = 0.0, u_init: int = 0, header: dict | None = None):
        if semantics not in SEMANTICS:
            raise ValueError(f"unknown semantics {semantics!r}")
        self.xgrid, self.ugrid = xgrid, ugrid
        self.semantics = semantics
        self.theta = float(theta)
        self.u_init = int(u_init)
        self.header = dict(header or {})
        self.table: dict = {}
        self.bad: set = set()

    @property
    def hold_aware(self) -> bool:
        return self.semantics != "immediate"

    def __len__(self):
        return len(self.table)

    def __bool__(self):
        return bool(self.table)

    def key(self, k, held: int | None = None):
        k = tuple(int(v) for v in k)
        return (k, int(held)) if self.hold_aware else k

    def input_point(self, ui: int) -> np.ndarray:
        return self.ugrid.point(self.ugrid.unflat(ui))

    @property
    def input_points(self) -> np.ndarray:
        """Every input-grid point, row ``i`` for flat index ``i``."""
        if getattr(self, "_upts", None) is None:
            n = len(self.ugrid)
            self._upts = np.array([self.input_point(i) for i in range(n)]).reshape(n, -1)
        return self._upts

    def near(self, x, held: int | None = None, radius: float | None = None):
        """Domain key nearest to the continuous point ``x`` within ``radius``
        (default theta) in the infinity norm, with the same held input in the
        hold-aware modes.  Ties go to the lexicographically smallest index."""
        return self.pick(self.candidates(x, radius), held)

    def candidates(self, x, radius: float | None = None) -> list:
        """Grid indices within ``radius`` of ``x`` with their distances, in
        lexicographic order.  Independent of the table, so callers may cache it."""
        radius = self.theta if radius is None else radius
        x = np.asarray(x, dtype=float)
        ks = self.xgrid.within(x, radius)
        if not ks:
            return []
        d = np.max(np.abs(np.array(ks, dtype=float) * self.xgrid.mu - x), axis=1)
        return list(zip(ks, d.tolist()))

    def pick(self, cands, held: int | None = None):
        table = self.table
        best, best_d = None, np.inf
        if self.hold_aware:
            h = int(held)
            for k, d in cands:
                if d < best_d - 1e-12 and (k, h) in table:
                    best, best_d = (k, h), d
        else:
            for k, d in cands:
                if d < best_d - 1e-12 and k in table:
                    best, best_d = k, d
        return best

    def lookup(self, x, held: int | None = None):
        """``(key, input)`` used for the measurement ``x``: the exact
        quantization when it is in the domain, else the nearest entry within
        theta; ``None`` on a miss."""
        key = self.key(self.xgrid.index(x), held)
        if key in self.table:
            return key, self.table[key]
        key = self.near(self.xgrid.point(self.xgrid.index(x)), held)
        if key is None:
            return None
        return key, self.table[key]

    # -- serialization -----------------------------------------------------

    def dumps(self) -> str:
        lines = ["# ncsynth controller v1"]
        meta = {"semantics": self.semantics, "theta": repr(self.theta),
                "u_init": str(self.u_init), "mu_x": repr(self.xgrid.mu),
                "mu_u": repr(self.ugrid.mu),
                "state_box": " ".join(repr(float(v)) for v in
                                      np.concatenate([self.xgrid.box.lower, self.xgrid.box.upper])),
                "input_box": " ".join(repr(float(v)) for v in
                                      np.concatenate([self.ugrid.box.lower, self.ugrid.box.upper]))}
        for k in sorted(self.header):
            meta.setdefault(k, str(self.header[k]))
        for k in sorted(meta):
            lines.append(f"# {k} = {meta[k]}")
        lines.append(f"# entries = {len(self.table)}")
        lines.append(f"# bad = {len(self.bad)}")
        for key in sorted(self.table):
            lines.append(f"{_fmt_key(key, self.hold_aware)} -> {self.table[key]}")
        for key in sorted(self.bad):
            lines.append(f"bad {_fmt_key(key, self.hold_aware)}")
        return "\n".join(lines) + "\n"

    @classmethod
    def loads(cls, text: str) -> "Controller":
        meta, entries, bad = {}, [], []
        for raw in text.splitlines():
            line = raw.strip()
            if not line:
                continue
            if line.startswith("#"):
                if "=" in line:
                    k, v = line[1:].split("=", 1)
                    meta[k.strip()] = v.strip()
                continue
            if line.startswith("bad "):
                bad.append(line[4:])
            else:
                lhs, rhs = line.split("->")
                entries.append((lhs, int(rhs)))
        sb = [float(v) for v in meta["state_box"].split()]
        ib = [float(v) for v in meta["input_box"].split()]
        n, m = len(sb) // 2, len(ib) // 2
        xgrid = Grid(Box(sb[:n], sb[n:]), float(meta["mu_x"]))
        ugrid = Grid(Box(ib[:m], ib[m:]), float(meta["mu_u"]))
        skip = {"semantics", "theta", "u_init", "mu_x", "mu_u", "state_box", "input_box",
                "entries", "bad"}
        header = {k: v for k, v in meta.items() if k not in skip}
        c = cls(xgrid, ugrid, meta["semantics"], float(meta["theta"]), int(meta["u_init"]), header)
        for lhs, u in entries:
            c.table[_parse_key(lhs, c.hold_aware)] = u
        for lhs in bad:
            c.bad.add(_parse_key(lhs, c.hold_aware))
        return c


def _fmt_key(key, hold_aware: bool) -> str:
    if hold_aware:
        k, w = key
        return " ".join(str(v) for v in k) + f" | {w}"
    return " ".join(str(v) for v in key)


def _parse_key(text: str, hold_aware: bool):
    if hold_aware:
        a, b = text.split("|")
        return tuple(int(v) for v in a.split()), int(b)
    return tuple(int(v) for v in text.split())


# ---------------------------------------------------------------------------
# integrated search


class BudgetExceeded(RuntimeError):
    def __init__(self, what: str, diagnostics: dict):
        super().__init__(f"synthesis budget exceeded: {what}")
        self.diagnostics = diagnostics


@dataclass
class SynthesisLimits:
    max_depth: int = 200_000
    max_visits: int = 10_000_000
    max_seconds: float | None = None  # wall clock, checked every 1000 visits


@dataclass
class SynthesisResult:
    controller: Controller
    found: bool
    targets: list
    diagnostics: dict = field(default_factory=dict)


def target_states(grid0: Grid, spec: SpecGraph, theta: float) -> list:
    """Initial grid points within theta of some initial node, lexicographic."""
    out = []
    inits = np.array(sorted(spec.initials))
    for k in grid0.indices():
        d = spec.distances(grid0.point(k))[inits]
        if np.any(d <= theta + _TOL):
            out.append(k)
    return out


def reach_all(plant: ControlSystem, x0, input_points, n_max: int, tau: float,
              h_max: float = 0.01) -> list:
    """Per input row ``w``: the ``n_max`` samples after ``x0`` with ``w`` held
    throughout, or None when the flow leaves the state box.  All rows are
    integrated together, so every caller sees the same numbers."""
    pts = np.asarray(input_points, dtype=float)
    x = np.broadcast_to(np.asarray(x0, dtype=float), (len(pts), plant.n))
    rows = np.empty((n_max, len(pts), plant.n))
    ok = None
    for i in range(n_max):
        x, ok = integrate_batch(plant, x, pts, tau, h_max, ok)
        rows[i] = x
    return [rows[:, w].copy() if ok[w] else None for w in range(len(pts))]


def reach(plant: ControlSystem, x0, input_points, semantics: str, held, u,
          n_min: int, n_max: int, tau: float, h_max: float = 0.01) -> dict:
    """Per ``N``: the ``N`` states sampled after ``x0`` when input index ``u``
    is chosen with ``held`` in the ZoH, or None when the flow leaves the state
    box.  ``input_points`` lists every point of the input grid."""
    ns = range(n_min, n_max + 1)
    if semantics == "chain":
        pts = np.asarray(input_points, dtype=float)

        def run(inputs):
            x = np.asarray(x0, dtype=float)
            out = np.empty((len(inputs), plant.n))
            try:
                for i, w in enumerate(inputs):
                    x = integrate(plant, x, pts[w], tau, h_max)
                    out[i] = x
            except Excursion:
                return None
            return out

        return {n: run([held] * (n - 1) + [u]) for n in ns}
    full = reach_all(plant, x0, input_points, n_max, tau, h_max)[u if semantics == "immediate" else held]
    return {n: (None if full is None else full[:n]) for n in ns}


class _Search:
    def __init__(self, plant: ControlSystem, spec: SpecGraph, p: SynthesisParams,
                 n_min: int, n_max: int, semantics: str, strict: bool,
                 limits: SynthesisLimits, h_max: float, u_init, input_order: str = "index"):
        if semantics not in SEMANTICS:
            raise ValueError(f"unknown semantics {semantics!r}")
        if input_order not in INPUT_ORDERS:
            raise ValueError(f"unknown input order {input_order!r}")
        if not 1 <= n_min <= n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        self.plant, self.spec, self.p = plant, spec, p
        self.n_min, self.n_max = n_min, n_max
        self.semantics, self.strict = semantics, strict
        self.limits, self.h_max = limits, h_max
        self.xgrid = Grid(plant.state_box, p.mu_x)
        self.x0grid = Grid(plant.init_box, p.mu_x)
        self.ugrid = Grid(plant.input_box, p.mu_u)
        self.n_inputs = len(self.ugrid)
        self.upoints = np.array([self.ugrid.point(self.ugrid.unflat(i))
                                 for i in range(self.n_inputs)]).reshape(self.n_inputs, -1)
        u0 = np.zeros(plant.m) if u_init is None else np.asarray(u_init, dtype=float)
        k0 = self.ugrid.index(u0)
        if not self.ugrid.contains_index(k0):
            raise ValueError(f"initial held input {u0} is not on the input grid")
        self.u_init = self.ugrid.flat(k0)
        self.ctrl = Controller(self.xgrid, self.ugrid, semantics, p.theta, self.u_init)
        self.journal: list = []          # (key, previous input or None)
        self.anchors_at: dict = {}
        self._reach_memo: dict = {}
        self._meets_memo: dict = {}
        self._end_memo: dict = {}
        self._t0 = time.monotonic()
        self.order = input_order
        self.diag = {"visits": 0, "max_depth": 0, "reuse": 0, "anchor_mismatch_reuse": 0,
                     "rollbacks": 0, "excursions": 0, "integrations": 0}

    # -- primitives --------------------------------------------------------

    def key(self, k, held):
        return self.ctrl.key(k, held)

    def _memo_key(self, key, u):
        # Under pipeline every sample runs under the held input, so the
        # candidate only matters through the child key; under immediate the
        # held input plays no role.
        if self.semantics == "immediate":
            return (key, u)
        k, held = key
        return (k, held) if self.semantics == "pipeline" else (k, held, u)

    def reached(self, key, u):
        memo_key = self._memo_key(key, u)
        out = self._reach_memo.get(memo_key)
        if out is not None:
            return out
        k, held = (key, None) if self.semantics == "immediate" else key
        x0 = self.xgrid.point(k)
        self.diag["integrations"] += 1
        if self.semantics == "chain":
            out = reach(self.plant, x0, self.upoints, "chain", held, u,
                        self.n_min, self.n_max, self.p.tau, self.h_max)
            self._reach_memo[memo_key] = out
            if any(s is None for s in out.values()):
                self.diag["excursions"] += 1
            return out
        # one batched integration fills the memo for every input at this point
        for w, full in enumerate(reach_all(self.plant, x0, self.upoints, self.n_max,
                                           self.p.tau, self.h_max)):
            self._reach_memo[(k, w)] = {n: (None if full is None else full[:n])
                                        for n in range(self.n_min, self.n_max + 1)}
        out = self._reach_memo[memo_key]
        if any(s is None for s in out.values()):
            self.diag["excursions"] += 1
        return out

    def meets(self, reached, anchors):
        """Per N: ``(ok, end_nodes)``."""
        out = {}
        for n, s in reached.items():
            if s is None:
                out[n] = (False, frozenset())
                continue
            r = meets_spec(self.spec, s, anchors, self.p.theta, n_min=n, n_max=n)[n]
            out[n] = (r.ok, r.end_nodes)
        return out

    def _met(self, key, u, anchors):
        mk = (self._memo_key(key, u), anchors)
        met = self._meets_memo.get(mk)
        if met is None:
            met = self._meets_memo[mk] = self.meets(self.reached(key, u), anchors)
        return met

    def _met_all(self, key, u, anchors) -> bool:
        return all(ok for ok, _ in self._met(key, u, anchors).values())

    def set_entry(self, key, u, anchors):
        self.journal.append((key, self.ctrl.table.get(key)))
        self.ctrl.table[key] = u
        self.anchors_at.setdefault(key, anchors)

    def rollback(self, mark: int):
        if len(self.journal) > mark:
            self.diag["rollbacks"] += 1
        while len(self.journal) > mark:
            key, prev = self.journal.pop()
            if prev is None:
                self.ctrl.table.pop(key, None)
                self.anchors_at.pop(key, None)
            else:
                self.ctrl.table[key] = prev

    def endpoint(self, key, u, n):
        """Reuse candidates and grid index (None when off-grid) of the
        ``n``-th reached sample; both depend only on the sample itself."""
        mk = (self._memo_key(key, u), n)
        out = self._end_memo.get(mk)
        if out is None:
            x_end = self.reached(key, u)[n][-1]
            k = self.xgrid.index(x_end)
            out = (self.ctrl.candidates(x_end),
                   tuple(k) if self.xgrid.contains_index(k) else None)
            self._end_memo[mk] = out
        return out

    def child_key(self, k, u):
        return None if k is None else self.key(k, u)

    def near_domain(self, cands, u, ends):
        held = None if self.semantics == "immediate" else u
        hit = self.ctrl.pick(cands, held)
        if hit is not None:
            self.diag["reuse"] += 1
            stored = self.anchors_at.get(hit)
            if stored is not None and ends and not (stored & ends):
                self.diag["anchor_mismatch_reuse"] += 1
            return True
        return False

    def input_order(self, key, anchors):
        """Candidate inputs in the order they are tried.

        ``index``: flat input index.  ``reuse_first``: inputs whose every
        reached endpoint is closed by reuse (counting ``key`` itself as
        entered) first, the rest by index.  ``progress``: as ``reuse_first``,
        then under pipeline the rest by how far along the specification the child's
        own samples get, children failing at once last.  Only the order
        changes; every candidate is still checked in full.
        """
        if self.order == "index":
            return range(self.n_inputs)
        table = self.ctrl.table
        prev = table.get(key)
        table[key] = 0
        try:
            first = []
            for u in range(self.n_inputs):
                held = None if self.semantics == "immediate" else u
                reached = self.reached(key, u)
                if all(reached[n] is not None and
                       self.ctrl.pick(self.endpoint(key, u, n)[0], held) is not None
                       for n in range(self.n_min, self.n_max + 1)):
                    first.append(u)
        finally:
            if prev is None:
                del table[key]
            else:
                table[key] = prev
        rest = [u for u in range(self.n_inputs) if u not in set(first)]
        if self.order == "progress" and self.semantics == "pipeline":
            rest.sort(key=lambda u: -self._child_progress(key, u, anchors))
        return first + rest

    def _child_progress(self, key, u, anchors):
        # furthest spec node the child's own samples can be matched to, or
        # -1 when they fail the specification check (the child is then Bad at once)
        score = 10 ** 9
        for n in range(self.n_min, self.n_max + 1):
            cands, k_end = self.endpoint(key, u, n)
            if k_end is None:
                return -1
            child = self.key(k_end, u)
            if child in self.ctrl.bad:
                return -1
            met = self._met(child, 0, self._met(key, u, anchors)[n][1])
            if not all(ok for ok, _ in met.values()):
                return -1
            score = min(score, min(max(e) for _, e in met.values()))
        return score

    # -- recursive tree construction ----------------------------------------

    def try_input(self, key, u, anchors, depth, check_bad: bool) -> bool:
        met = self._met(key, u, anchors)
        if not all(ok for ok, _ in met.values()):
            return False
        for n in range(self.n_min, self.n_max + 1):
            ends = met[n][1]
            cands, k_end = self.endpoint(key, u, n)
            if self.near_domain(cands, u, ends):
                continue
            child = self.child_key(k_end, u)
            if child is None:
                return False
            if check_bad and child in self.ctrl.bad:
                return False
            if not self.build_tree(child, ends, depth + 1):
                return False
        return True

    def build_tree(self, key, anchors, depth) -> bool:
        self.diag["visits"] += 1
        self.diag["max_depth"] = max(self.diag["max_depth"], depth)
        if self.diag["visits"] % 100_000 == 0:
            log.info("visits=%d depth=%d entries=%d bad=%d", self.diag["visits"], depth,
                     len(self.ctrl.table), len(self.ctrl.bad))
        if self.diag["visits"] > self.limits.max_visits:
            raise BudgetExceeded(f"more than {self.limits.max_visits} visits", dict(self.diag))
        if (self.limits.max_seconds is not None and self.diag["visits"] % 1000 == 0
                and time.monotonic() - self._t0 > self.limits.max_seconds):
            raise BudgetExceeded(f"more than {self.limits.max_seconds:g} s", dict(self.diag))
        if depth > self.limits.max_depth:
            raise BudgetExceeded(f"recursion deeper than {self.limits.max_depth}", dict(self.diag))
        if self.semantics == "pipeline" and not self._met_all(key, 0, anchors):
            # the samples do not depend on the candidate under pipeline, so
            # every input would fail the same spec check
            self.ctrl.table.pop(key, None)
            self.ctrl.bad.add(key)
            return False
        for u in self.input_order(key, anchors):
            mark = len(self.journal)
            self.set_entry(key, u, anchors)
            if self.try_input(key, u, anchors, depth, check_bad=True):
                return True
            if not self.strict:
                self.rollback(mark)
        if not self.strict:
            self.ctrl.table.pop(key, None)
        self.ctrl.bad.add(key)
        return False

    # -- top-level loop over target states ------------------------------------

    def run(self) -> SynthesisResult:
        targets = target_states(self.x0grid, self.spec, self.p.theta)
        init_anchors = frozenset(self.spec.initials)
        held0 = None if self.semantics == "immediate" else self.u_init
        if self.strict:
            return self._run_strict(targets, init_anchors, held0)
        found = bool(targets)
        for k in targets:
            key = self.key(k, held0)
            if key in self.ctrl.table:
                continue
            ok = False
            for u in range(self.n_inputs):
                mark = len(self.journal)
                if self.try_input(key, u, init_anchors, 0, check_bad=False):
                    self.set_entry(key, u, init_anchors)
                    ok = True
                    break
                self.rollback(mark)
            if not ok:
                found = False
                break
        if not found:
            self.ctrl.table.clear()
        return self._result(found, targets)

    def _run_strict(self, targets, init_anchors, held0) -> SynthesisResult:
        found = False
        key = u = None
        for k in targets:
            if found:
                break
            key = self.key(k, held0)
            for u in range(self.n_inputs):
                self.ctrl.table.clear()
                self.journal.clear()
                found = self.try_input(key, u, init_anchors, 0, check_bad=False)
                if found:
                    break
        if found:
            self.ctrl.table[key] = u
        else:
            self.ctrl.table.clear()
        return self._result(found, targets)

    def _result(self, found, targets) -> SynthesisResult:
        d = dict(self.diag)
        d["entries"] = len(self.ctrl.table)
        d["bad"] = len(self.ctrl.bad)
        d["targets"] = len(targets)
        self.ctrl.header.update({"found": found, "n_min": self.n_min, "n_max": self.n_max,
                                 "eps": repr(self.p.eps), "eta": repr(self.p.eta),
                                 "tau": repr(self.p.tau), "strict": self.strict})
        return SynthesisResult(self.ctrl, found, targets, d)


def run_deep(fn, *args, stack_mb: int = 512, **kwargs):
    """Run ``fn`` in a thread with a large stack and a raised recursion limit
    so the depth-first search can go deep."""
    box = {}

    def target():
        try:
            box["value"] = fn(*args, **kwargs)
        except BaseException as exc:  # re-raised in the caller
            box["error"] = exc

    old_limit = sys.getrecursionlimit()
    old_stack = threading.stack_size()
    sys.setrecursionlimit(max(old_limit, 1_000_000))
    threading.stack_size(stack_mb * 1024 * 1024)
    try:
        t = threading.Thread(target=target)
        t.start()
        t.join()
    finally:
        threading.stack_size(old_stack)
        sys.setrecursionlimit(old_limit)
    if "error" in box:
        raise box["error"]
    return box["value"]


def synthesize_integrated(plant: ControlSystem, spec: SpecGraph, p: SynthesisParams,
                          n_min: int, n_max: int, semantics: str = "pipeline",
                          strict: bool = False, limits: SynthesisLimits | None = None,
                          h_max: float = 0.01, u_init=None,
                          input_order: str = "index") -> SynthesisResult:
    search = _Search(plant, spec, p, n_min, n_max, semantics, strict,
                     limits or SynthesisLimits(), h_max, u_init, input_order)
    return run_deep(search.run)


def closure_violations(plant: ControlSystem, ctrl: Controller, n_min: int, n_max: int,
                       tau: float, h_max: float = 0.01) -> list:
    """Keys whose reached end points leave the state box or are not
    theta-near the domain.  Empty for a consistent controller."""
    out = []
    for key, u in sorted(ctrl.table.items()):
        k, held = key if ctrl.hold_aware else (key, None)
        nxt = u if ctrl.hold_aware else None
        got = reach(plant, ctrl.xgrid.point(k), ctrl.input_points, ctrl.semantics, held, u,
                    n_min, n_max, tau, h_max)
        if any(s is None or ctrl.near(s[-1], nxt) is None for s in got.values()):
            out.append(key)
    return out


# ---------------------------------------------------------------------------
# naive route


@dataclass
class NaiveResult:
    controller: FiniteSystem | None
    winning: dict          # S* state index -> set of Q state indices
    good_inputs: dict      # (s, q) -> sorted input indices
    found: bool
    covered_initials: list  # S* initial indices within mu_x of a Q initial
    diagnostics: dict = field(default_factory=dict)


def synthesize_naive(model: FiniteSystem, q: FiniteSystem, mu_x: float) -> NaiveResult:
    """Maximal non-blocking controller on the product of the symbolic model
    and the lifted specification.

    A pair ``(s, q)`` survives when some input has at least one successor and
    every successor ``s'`` of ``s`` under that input pairs with a successor of
    ``q`` inside the surviving set.  Keeping an input keeps all of its
    successors, so the controller alternatingly 0-simulates the model.
    """
    pairs = model.metric.pairs_within(model.outputs, q.outputs, mu_x) \
        if hasattr(model.metric, "pairs_within") else \
        [(i, j) for i in range(len(model)) for j in range(len(q))
         if model.metric(model.outputs[i], q.outputs[j]) <= mu_x]
    win: dict[int, set] = {}
    for i, j in pairs:
        win.setdefault(i, set()).add(j)
    qpost = [q.successors(j) for j in range(len(q))]

    def good(i, j):
        out = []
        for u, succ in sorted(model.post[i].items()):
            if succ and all(any(jj in win.get(ii, ()) for jj in qpost[j]) for ii in succ):
                out.append(u)
        return out

    changed = True
    rounds = 0
    while changed:
        changed = False
        rounds += 1
        for i in sorted(win):
            drop = {j for j in win[i] if not good(i, j)}
            if drop:
                win[i] -= drop
                changed = True
            if not win[i]:
                del win[i]
    good_inputs = {(i, j): good(i, j) for i in win for j in win[i]}
    q_inits = sorted(q.initials)
    covered = [i for i in sorted(model.initials)
               if any(model.metric(model.outputs[i], q.outputs[j]) <= mu_x + _TOL for j in q_inits)]
    found = bool(covered) and all(any(j in win.get(i, ()) for j in q_inits) for i in covered)
    diag = {"model_states": len(model), "model_transitions": model.n_transitions,
            "spec_states": len(q), "candidate_pairs": len(pairs),
            "winning_pairs": len(good_inputs), "rounds": rounds}
    ctrl = _naive_system(model, q, win, good_inputs, covered) if found else None
    if ctrl is not None:
        diag["controller_states"] = len(ctrl)
    return NaiveResult(ctrl, win, good_inputs, found, covered, diag)


def _naive_system(model, q, win, good_inputs, covered) -> FiniteSystem:
    inits = [(i, j) for i in covered for j in sorted(q.initials) if j in win.get(i, ())]
    seen = dict.fromkeys(inits)
    stack = list(inits)
    trans = []
    while stack:
        i, j = stack.pop()
        for u in good_inputs[(i, j)]:
            for ii in model.post[i][u]:
                for jj in q.successors(j):
                    if jj in win.get(ii, ()):
                        trans.append(((i, j), u, (ii, jj)))
                        if (ii, jj) not in seen:
                            seen[(ii, jj)] = None
                            stack.append((ii, jj))
    states = sorted(seen)
    labels = [(model.states[i], q.states[j]) for i, j in states]
    relabel = dict(zip(states, labels))
    return FiniteSystem(labels, [relabel[s] for s in inits], model.inputs,
                        [(relabel[a], model.inputs[u], relabel[b]) for a, u, b in trans],
                        [model.outputs[i] for i, _ in states], model.metric)


def complexity_report(result) -> dict:
    """Exact memory counts of a finished run of either route."""
    if isinstance(result, SynthesisResult):
        return {"controller_entries": len(result.controller.table),
                "bad_entries": len(result.controller.bad),
                "integers": len(result.controller.table) + len(result.controller.bad),
                "peak_extended_states": 0}
    d = result.diagnostics
    return {"controller_entries": d.get("controller_states", 0), "bad_entries": 0,
            "integers": d.get("controller_states", 0),
            "peak_extended_states": d["model_states"]}
