"""Symbolic model of the networked loop over quantized extended states.

An extended state is a chain of ``N`` grid points (``N`` between the hold
bounds) labelled by two inputs: ``u_minus`` drives every link but the last,
``u_plus`` drives the last one.  A chain is admissible when each link lands
within the V-ball ``e^{lam tau} alpha_lo(eta) + gamma(mu_x)`` of the nominal
flow.
"""
from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .plant import Box, ControlSystem, FcCertificate, rk4_steps
from .quantization import Grid
from .systems import ChainMetric, FiniteSystem

_TOL = 1e-9


@dataclass(frozen=True)
class AbstractionParams:
    eps: float
    eta: float
    mu_x: float
    mu_u: float
    tau: float

    def __post_init__(self):
        for name in ("eps", "eta", "mu_x", "mu_u", "tau"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")


def abstraction_violations(p: AbstractionParams, cert: FcCertificate, state_box: Box) -> list[str]:
    """Human-readable list of the failed parts of
    ``mu_x <= min(mu_hat, alpha_hi^-1(alpha_lo(eps))) <= eta``."""
    reach = float(cert.alpha_hi.inverse(cert.alpha_lo(p.eps)))
    mid = min(state_box.min_span(), reach)
    out = []
    if p.mu_x > mid + _TOL:
        out.append(f"mu_x={p.mu_x:g} exceeds min(mu_hat, alpha_hi^-1(alpha_lo(eps)))={mid:.6g}")
    if mid > p.eta + _TOL:
        out.append(f"min(mu_hat, alpha_hi^-1(alpha_lo(eps)))={mid:.6g} exceeds eta={p.eta:g}")
    return out


def check_abstraction_params(p: AbstractionParams, cert: FcCertificate, state_box: Box) -> bool:
    return not abstraction_violations(p, cert, state_box)


def link_bound(cert: FcCertificate, eta: float, mu_x: float, tau: float) -> float:
    """Right-hand side of every link inequality."""
    return float(math.exp(cert.lam * tau) * cert.alpha_lo(eta) + cert.gamma(mu_x))


def successor_ball_radius(cert: FcCertificate, eta: float, mu_x: float, tau: float) -> float:
    # alpha_lo(||x' - z||) <= V(z, x') <= bound  =>  ||x' - z|| <= alpha_lo^-1(bound)
    return float(cert.alpha_lo.inverse(link_bound(cert, eta, mu_x, tau)))


class ExtendedState(NamedTuple):
    chain: tuple          # grid multi-indices, length N (1 for bare initials)
    u_minus: int          # flat input-grid index
    u_plus: int

    def __len__(self):
        return len(self.chain)


class SymbolicContext:
    """Grids, bounds and memoised link candidates shared by enumeration and
    model construction."""

    def __init__(self, plant: ControlSystem, cert: FcCertificate, p: AbstractionParams,
                 n_min: int, n_max: int, h_max: float = 0.01, u_init=None):
        if not 1 <= n_min <= n_max:
            raise ValueError("need 1 <= n_min <= n_max")
        self.plant, self.cert, self.p = plant, cert, p
        self.n_min, self.n_max = n_min, n_max
        self.h_max = h_max
        self.xgrid = Grid(plant.state_box, p.mu_x)
        self.x0grid = Grid(plant.init_box, p.mu_x)
        self.ugrid = Grid(plant.input_box, p.mu_u)
        self.inputs = list(self.ugrid.indices())
        self.bound = link_bound(cert, p.eta, p.mu_x, p.tau)
        self.radius = successor_ball_radius(cert, p.eta, p.mu_x, p.tau)
        u0 = np.zeros(plant.m) if u_init is None else np.asarray(u_init, dtype=float)
        k0 = self.ugrid.index(u0)
        if not self.ugrid.contains_index(k0):
            raise ValueError(f"initial held input {u0} is not on the input grid")
        self.u_init = self.ugrid.flat(k0)
        self._links: dict[tuple, tuple] = {}

    def input_point(self, ui: int) -> np.ndarray:
        return self.ugrid.point(self.ugrid.unflat(ui))

    def nominal(self, k, ui: int) -> np.ndarray:
        """Flow from grid point ``k`` under input ``ui`` for one interval (no
        domain check: only grid points inside the box are ever returned)."""
        return rk4_steps(self.plant.field, self.xgrid.point(k), self.input_point(ui),
                         self.p.tau, self.h_max)

    def link(self, k, ui: int) -> tuple:
        """Grid points ``x'`` with ``V(x(tau, k, u), x') <= bound``, lexicographic."""
        key = (k, ui)
        hit = self._links.get(key)
        if hit is None:
            z = self.nominal(k, ui)
            cand = self.xgrid.within(z, self.radius)
            if cand:
                pts = np.asarray(cand, dtype=float) * self.xgrid.mu
                ok = self.cert.V(np.broadcast_to(z, pts.shape), pts) <= self.bound + _TOL
                hit = tuple(c for c, good in zip(cand, ok) if good)
            else:
                hit = ()
            self._links[key] = hit
        return hit

    def output(self, s: ExtendedState) -> np.ndarray:
        return np.array([self.xgrid.point(k) for k in s.chain]).reshape(len(s.chain), -1)


def enumerate_successors(ctx: SymbolicContext, s: ExtendedState, u: int) -> list[ExtendedState]:
    """All successors of ``s`` under input ``u``: the first point follows the
    last point of ``s`` under ``s.u_plus``; inner links keep ``s.u_plus`` and
    the final link uses ``u``."""
    held = s.u_plus
    out = []
    for n2 in range(ctx.n_min, ctx.n_max + 1):
        partial = [(k,) for k in ctx.link(s.chain[-1], held)]
        for j in range(2, n2 + 1):
            w = held if j <= n2 - 1 else u
            partial = [c + (k,) for c in partial for k in ctx.link(c[-1], w)]
        out.extend(ExtendedState(c, held, u) for c in partial)
    return out


def initial_states(ctx: SymbolicContext) -> list[ExtendedState]:
    return [ExtendedState((k,), ctx.u_init, ctx.u_init) for k in ctx.x0grid.indices()]


class ModelTooLarge(RuntimeError):
    def __init__(self, states, transitions, ceiling):
        super().__init__(f"symbolic model exceeds {ceiling} states "
                         f"({states} states, {transitions} transitions explored)")
        self.states = states
        self.transitions = transitions


def build_symbolic_model(ctx: SymbolicContext, max_states: int = 100_000) -> FiniteSystem:
    """Accessible part of the symbolic model, explored breadth first."""
    inits = initial_states(ctx)
    if not inits:
        raise ValueError("initial grid is empty")
    seen = dict.fromkeys(inits)
    queue = deque(inits)
    trans = []
    while queue:
        s = queue.popleft()
        for u in range(len(ctx.inputs)):
            for t in enumerate_successors(ctx, s, u):
                trans.append((s, u, t))
                if t not in seen:
                    seen[t] = None
                    if len(seen) > max_states:
                        raise ModelTooLarge(len(seen), len(trans), max_states)
                    queue.append(t)
    states = list(seen)
    return FiniteSystem(states, inits, range(len(ctx.inputs)), trans,
                        [ctx.output(s) for s in states], ChainMetric())


def count_extended_states(ctx: SymbolicContext) -> int:
    """Number of admissible symbolic chains of every length plus the bare
    initials, without building transitions (for complexity reports)."""
    total = len(ctx.x0grid)
    nu = len(ctx.inputs)
    for n in range(max(ctx.n_min, 2), ctx.n_max + 1):
        for um in range(nu):
            for up in range(nu):
                counts = {k: 1 for k in ctx.xgrid.indices()}
                for j in range(2, n + 1):
                    w = um if j <= n - 1 else up
                    nxt: dict = {}
                    for k, c in counts.items():
                        for k2 in ctx.link(k, w):
                            nxt[k2] = nxt.get(k2, 0) + c
                    counts = nxt
                total += sum(counts.values())
    if ctx.n_min == 1:
        total += len(ctx.xgrid) * nu * nu
    return total
