"""Continuous plant, fixed-step integration and incremental forward
completeness (delta-FC) Lyapunov certificates.

Vector fields and certificate functions are vectorized over leading axes:
``field(x, u)`` takes arrays of shape ``(..., n)`` and ``(..., m)`` and
returns ``(..., n)``; ``V(x1, x2)`` returns ``(...)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np

_TOL = 1e-9


@dataclass(frozen=True)
class Box:
    """Axis-aligned hyperrectangle ``[lower, upper[``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lower, dtype=float))
        hi = np.atleast_1d(np.asarray(self.upper, dtype=float))
        if lo.shape != hi.shape or lo.ndim != 1:
            raise ValueError(f"box bounds have mismatched shapes {lo.shape} and {hi.shape}")
        if not np.all(lo < hi):
            raise ValueError(f"box needs lower < upper on every axis, got {lo} / {hi}")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @property
    def dim(self) -> int:
        return self.lower.size

    def contains(self, x, tol: float = _TOL) -> bool:
        # Closed membership: used for domain checks, not for grids.
        x = np.asarray(x, dtype=float)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def issubset(self, other: "Box") -> bool:
        return bool(np.all(self.lower >= other.lower) and np.all(self.upper <= other.upper))

    def min_span(self) -> float:
        return float(np.min(self.upper - self.lower))

    def sample(self, rng: np.random.Generator, size: int) -> np.ndarray:
        return rng.uniform(self.lower, self.upper, size=(size, self.dim))


@dataclass(frozen=True)
class ControlSystem:
    """Plant ``x' = f(x, u)`` with state box X, initial box X0 and input box U."""

    n: int
    m: int
    field: Callable[[np.ndarray, np.ndarray], np.ndarray]
    state_box: Box
    init_box: Box
    input_box: Box
    name: str = "plant"

    def __post_init__(self):
        if self.state_box.dim != self.n or self.init_box.dim != self.n:
            raise ValueError("state/init box dimension does not match n")
        if self.input_box.dim != self.m:
            raise ValueError("input box dimension does not match m")
        if not self.init_box.issubset(self.state_box):
            raise ValueError("init_box must be contained in state_box")
        f0 = np.asarray(self.field(np.zeros(self.n), np.zeros(self.m)), dtype=float)
        if np.max(np.abs(f0)) > 1e-12:
            raise ValueError(f"f(0, 0) must vanish, got {f0}")


class Excursion(Exception):
    """A trajectory left the state box during integration."""

    def __init__(self, state, time):
        super().__init__(f"trajectory left the state box at t={time:.6g}: {state}")
        self.state = np.asarray(state)
        self.time = float(time)


def eval_field(sys: ControlSystem, x, u) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if not sys.state_box.contains(x):
        raise ValueError(f"state {x} outside the state box")
    if not sys.input_box.contains(u):
        raise ValueError(f"input {u} outside the input box")
    return np.asarray(sys.field(x, u), dtype=float)


def rk4_steps(f, x0, u, t: float, h_max: float) -> np.ndarray:
    """Classical RK4 with ``ceil(t / h_max)`` equal steps; no domain checks.

    ``x0`` may carry leading batch axes.
    """
    steps = max(1, math.ceil(t / h_max - _TOL)) if t > 0 else 0
    x = np.array(x0, dtype=float)
    if steps == 0:
        return x
    h = t / steps
    for _ in range(steps):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
    return x


def integrate(sys: ControlSystem, x0, u, t: float, h_max: float = 0.01,
              t0: float = 0.0) -> np.ndarray:
    """State reached from ``x0`` after holding ``u`` for ``t`` seconds.

    Raises :class:`Excursion` when an RK4 step ends outside the state box.
    """
    if t < 0:
        raise ValueError("integration time must be nonnegative")
    x = np.asarray(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    if not sys.state_box.contains(x):
        raise ValueError(f"initial state {x} outside the state box")
    if not sys.input_box.contains(u):
        raise ValueError(f"input {u} outside the input box")
    if t == 0:
        return x.copy()
    steps = max(1, math.ceil(t / h_max - _TOL))
    h = t / steps
    f = sys.field
    lo, hi = sys.state_box.lower - _TOL, sys.state_box.upper + _TOL
    for s in range(steps):
        k1 = f(x, u)
        k2 = f(x + 0.5 * h * k1, u)
        k3 = f(x + 0.5 * h * k2, u)
        k4 = f(x + h * k3, u)
        x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        if (x < lo).any() or (x > hi).any():
            raise Excursion(x, t0 + (s + 1) * h)
    return x


def integrate_batch(sys: ControlSystem, x0, u, t: float, h_max: float = 0.01,
                    inside=None) -> tuple[np.ndarray, np.ndarray]:
    """Row-wise :func:`integrate` for a batch of states and inputs.

    Returns ``(x, inside)``; ``inside[i]`` is False when row ``i`` started
    outside the state box or left it after some RK4 step (its state is then
    not meaningful).  Pass the previous ``inside`` to chain intervals.
    """
    x = np.array(x0, dtype=float)
    u = np.asarray(u, dtype=float)
    lo, hi = sys.state_box.lower - _TOL, sys.state_box.upper + _TOL
    ok = ~((x < lo) | (x > hi)).any(axis=1)
    if inside is not None:
        ok &= inside
    steps = max(1, math.ceil(t / h_max - _TOL)) if t > 0 else 0
    h = t / steps if steps else 0.0
    f = sys.field
    with np.errstate(over="ignore", invalid="ignore"):
        for _ in range(steps):
            k1 = f(x, u)
            k2 = f(x + 0.5 * h * k1, u)
            k3 = f(x + 0.5 * h * k2, u)
            k4 = f(x + h * k3, u)
            x = x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
            ok &= ~((x < lo) | (x > hi)).any(axis=1)
    return x, ok


def sample_trajectory(sys: ControlSystem, x0, u, tau: float, N: int,
                      h_max: float = 0.01) -> np.ndarray:
    """Samples ``x(k tau, x0, u)`` for ``k = 1..N`` as an ``(N, n)`` array."""
    if N < 1 or tau <= 0:
        raise ValueError("need N >= 1 and tau > 0")
    out = np.empty((N, sys.n))
    x = np.asarray(x0, dtype=float)
    for k in range(N):
        x = integrate(sys, x, u, tau, h_max, t0=k * tau)
        out[k] = x
    return out


# ---------------------------------------------------------------------------
# K-infinity functions and certificates


@dataclass(frozen=True)
class KinfFn:
    forward: Callable[[float], float]
    inverse: Callable[[float], float]
    name: str = ""

    def __call__(self, r):
        return self.forward(r)


def _pos(v):
    return np.maximum(v, 0.0)


def kinf_linear(c: float) -> KinfFn:
    if c <= 0:
        raise ValueError("coefficient must be positive")
    return KinfFn(lambda r: c * r, lambda v: v / c, f"linear({c:g})")


def kinf_quadratic(c: float) -> KinfFn:
    if c <= 0:
        raise ValueError("coefficient must be positive")
    return KinfFn(lambda r: c * np.square(r), lambda v: np.sqrt(_pos(v) / c),
                  f"quadratic({c:g})")


def kinf_power(c: float, p: float) -> KinfFn:
    if c <= 0 or p <= 0:
        raise ValueError("coefficient and exponent must be positive")
    return KinfFn(lambda r: c * np.power(r, p), lambda v: np.power(_pos(v) / c, 1.0 / p),
                  f"power({c:g},{p:g})")


def kinf_smooth_abs(delta: float, c: float = 1.0) -> KinfFn:
    """``c * (sqrt(r^2 + delta^2) - delta)``: quadratic near 0, linear far out."""
    if delta <= 0 or c <= 0:
        raise ValueError("delta and coefficient must be positive")
    return KinfFn(lambda r: c * (np.sqrt(np.square(r) + delta * delta) - delta),
                  lambda v: np.sqrt(np.square(_pos(v) / c + delta) - delta * delta),
                  f"smooth_abs({delta:g},{c:g})")


KINF_FAMILIES: dict[str, Callable[..., KinfFn]] = {
    "linear": kinf_linear,
    "quadratic": kinf_quadratic,
    "power": kinf_power,
    "smooth_abs": kinf_smooth_abs,
}


def make_kinf(kind: str, **coeffs) -> KinfFn:
    try:
        factory = KINF_FAMILIES[kind]
    except KeyError:
        raise ValueError(f"unknown K-infinity family {kind!r}; known: {sorted(KINF_FAMILIES)}")
    return factory(**coeffs)


@dataclass(frozen=True)
class FcCertificate:
    V: Callable[[np.ndarray, np.ndarray], np.ndarray]
    lam: float
    alpha_lo: KinfFn
    alpha_hi: KinfFn
    gamma: KinfFn


def quadratic_V(c: float = 0.5):
    """``V(x1, x2) = c * ||x1 - x2||_2^2``."""
    def V(x1, x2):
        d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
        return c * np.sum(d * d, axis=-1)
    return V


def smooth_abs_V(delta: float):
    """``V(x1, x2) = sqrt(||x1 - x2||_2^2 + delta^2) - delta``; smooth and
    1-Lipschitz in each argument, so its gamma is linear with slope 1 in 1-D."""
    def V(x1, x2):
        d = np.asarray(x1, dtype=float) - np.asarray(x2, dtype=float)
        return np.sqrt(np.sum(d * d, axis=-1) + delta * delta) - delta
    return V


@dataclass
class CertReport:
    max_violation: float
    passed: bool
    samples: int
    worst: dict = dc_field(default_factory=dict)  # per-condition max violation

    def summary(self) -> str:
        lines = [f"samples        {self.samples}",
                 f"max_violation  {self.max_violation:.3e}",
                 f"pass           {self.passed}"]
        for k, v in self.worst.items():
            lines.append(f"  {k:<12} {v:.3e}")
        return "\n".join(lines)


def fc_violations(sys: ControlSystem, cert: FcCertificate, x1, x2, x3, u,
                  fd_step: float = 1e-6) -> dict[str, np.ndarray]:
    """Per-sample violation amounts (positive = violated) of the certificate
    conditions, plus the tolerance each is compared against.

    ``x3`` is the free point of the gamma bound:
    ``V(x3, x1) - V(x3, x2) <= gamma(||x1 - x2||)``.
    """
    x1, x2, x3, u = (np.atleast_2d(np.asarray(a, dtype=float)) for a in (x1, x2, x3, u))
    V = cert.V
    v = V(x1, x2)
    f1 = sys.field(x1, u)
    f2 = sys.field(x2, u)
    dv = np.zeros_like(v)
    for i in range(sys.n):
        e = np.zeros(sys.n)
        e[i] = fd_step
        g1 = (V(x1 + e, x2) - V(x1 - e, x2)) / (2 * fd_step)
        g2 = (V(x1, x2 + e) - V(x1, x2 - e)) / (2 * fd_step)
        dv += g1 * f1[:, i] + g2 * f2[:, i]
    r12 = np.max(np.abs(x1 - x2), axis=-1)
    return {
        "decay": dv - cert.lam * v,
        "lower": cert.alpha_lo(r12) - v,
        "upper": v - cert.alpha_hi(r12),
        "gamma": V(x3, x1) - V(x3, x2) - cert.gamma(r12),
        "tolerance": 1e-6 * (1.0 + abs(cert.lam) * np.abs(v)),
    }


def certify_fc(sys: ControlSystem, cert: FcCertificate, sample_count: int,
               rng_seed: int, fd_step: float = 1e-6) -> CertReport:
    """Sample-based check of the delta-FC Lyapunov conditions and the gamma
    bound on uniform draws from the state and input boxes."""
    if sample_count < 1:
        raise ValueError("sample_count must be >= 1")
    rng = np.random.default_rng(rng_seed)
    x1 = sys.state_box.sample(rng, sample_count)
    x2 = sys.state_box.sample(rng, sample_count)
    u = sys.input_box.sample(rng, sample_count)
    x3 = sys.state_box.sample(rng, sample_count)
    viol = fc_violations(sys, cert, x1, x2, x3, u, fd_step)
    tol = viol.pop("tolerance")
    worst = {k: float(np.max(a)) for k, a in viol.items()}
    passed = all(bool(np.all(a <= tol)) for a in viol.values())
    return CertReport(max(worst.values()), passed, sample_count, worst)


# ---------------------------------------------------------------------------
# built-in plants


def unicycle_field(x, u):
    x = np.asarray(x, dtype=float)
    u = np.asarray(u, dtype=float)
    if x.ndim == 1 and u.ndim == 1:
        # single point: skip the broadcasting machinery, this is the hot path
        h = float(x[2])
        return np.array([u[0] * math.cos(h), u[0] * math.sin(h), u[1]])
    return np.stack([u[..., 0] * np.cos(x[..., 2]),
                     u[..., 0] * np.sin(x[..., 2]),
                     u[..., 1] * np.ones_like(x[..., 2])], axis=-1)


def unicycle(state_box: Box | None = None, init_box: Box | None = None,
             input_box: Box | None = None) -> ControlSystem:
    X = state_box or Box([-1.0, -1.0, -math.pi], [1.0, 1.0, math.pi])
    U = input_box or Box([-1.0, -1.0], [1.0, 1.0])
    return ControlSystem(3, 2, unicycle_field, X, init_box or X, U, name="unicycle")


def scalar_unstable(a: float = 1.0, state_box: Box | None = None,
                    init_box: Box | None = None, input_box: Box | None = None) -> ControlSystem:
    """``x' = a x + u`` in one dimension."""
    def f(x, u):
        return a * np.asarray(x, dtype=float) + np.asarray(u, dtype=float)
    X = state_box or Box([-1.0], [1.0])
    U = input_box or Box([-1.0], [1.0])
    return ControlSystem(1, 1, f, X, init_box or X, U, name=f"scalar_unstable(a={a:g})")


PLANTS: dict[str, Callable[..., ControlSystem]] = {
    "unicycle": unicycle,
    "scalar_unstable": scalar_unstable,
}


def unicycle_certificate(u1_max: float = 1.0) -> FcCertificate:
    # V = 0.5||.||_2^2 gives 0.5 r^2 <= V <= 1.5 r^2 in the infinity norm (n = 3).
    return FcCertificate(quadratic_V(0.5), 2.0 * u1_max, kinf_quadratic(0.5),
                         kinf_quadratic(1.5), kinf_linear(2.0 * math.pi))


def scalar_certificate(a: float, box: Box) -> FcCertificate:
    # d/dt 0.5(x1-x2)^2 = a (x1-x2)^2; gamma from |2x - x' - x''| <= 2 * width.
    width = float(box.upper[0] - box.lower[0])
    return FcCertificate(quadratic_V(0.5), 2.0 * a, kinf_quadratic(0.5),
                         kinf_quadratic(0.5), kinf_linear(width))


def scalar_smooth_certificate(a: float, delta: float) -> FcCertificate:
    # with s = sqrt(r^2 + delta^2): dV/dt = a r^2 / s = a (s - delta)(s + delta) / s <= 2a V
    return FcCertificate(smooth_abs_V(delta), 2.0 * a, kinf_smooth_abs(delta),
                         kinf_smooth_abs(delta), kinf_linear(1.0))
