"""Timing model of the network in the loop: send times, the total delay
envelope and the resulting bounds on the number of sampling intervals each
control value is held by the ZoH.

One iteration ``k`` starts at the ZoH refresh instant ``A_k tau``.  The sensor
waits ``d_req_sc`` for network access and sends at ``t_2k``; the packet needs
the send time plus ``d_delay_sc`` to reach the controller, which computes for
``d_ctrl``, waits ``d_req_ca`` and sends at ``t_2k+1``; after the send time
plus ``d_delay_ca`` the value reaches the ZoH, which applies it at
``A_{k+1} tau`` with ``A_{k+1} = ceil((t_2k+1 + delay_ca) / tau)``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

_TOL = 1e-9


@dataclass(frozen=True)
class NetworkConfig:
    tau: float
    b_max: float
    d_req_max: float
    d_delay_min: float
    d_delay_max: float
    d_ctrl_min: float
    d_ctrl_max: float
    mu_x: float
    mu_u: float

    def __post_init__(self):
        if self.tau <= 0 or self.b_max <= 0:
            raise ValueError("tau and b_max must be positive")
        for name in ("d_req_max", "d_delay_min", "d_delay_max", "d_ctrl_min", "d_ctrl_max"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be nonnegative")
        if self.d_delay_min > self.d_delay_max:
            raise ValueError("d_delay_min > d_delay_max")
        if self.d_ctrl_min > self.d_ctrl_max:
            raise ValueError("d_ctrl_min > d_ctrl_max")


def send_delay(bits: int, b_max: float) -> float:
    if bits < 0 or b_max <= 0:
        raise ValueError("need bits >= 0 and b_max > 0")
    return bits / b_max


def delay_envelope(cfg: NetworkConfig, bits_x: int, bits_u: int) -> tuple[float, float]:
    """Shortest and longest time from a sensor request to the ZoH update."""
    send = send_delay(bits_x, cfg.b_max) + send_delay(bits_u, cfg.b_max)
    d_min = send + cfg.d_ctrl_min + 2 * cfg.d_delay_min
    d_max = send + cfg.d_ctrl_max + 2 * cfg.d_req_max + 2 * cfg.d_delay_max
    return d_min, d_max


def _hold_count(delay: float, tau: float) -> int:
    # A zero delay still needs one interval: the update cannot land at the
    # instant it was sampled.
    return max(1, math.ceil(delay / tau - _TOL))


def n_bounds(cfg: NetworkConfig, bits_x: int, bits_u: int) -> tuple[int, int]:
    d_min, d_max = delay_envelope(cfg, bits_x, bits_u)
    return _hold_count(d_min, cfg.tau), _hold_count(d_max, cfg.tau)


@dataclass(frozen=True)
class DelayRecord:
    d_req_sc: float
    d_delay_sc: float
    d_ctrl: float
    d_req_ca: float
    d_delay_ca: float
    t_send_sc: float   # t_2k
    t_send_ca: float   # t_2k+1
    a_next: int        # A_{k+1}


def sample_iteration(cfg: NetworkConfig, rng: np.random.Generator, bits_x: int,
                     bits_u: int, a_k: int = 0, extreme: str | None = None):
    """Draw one iteration's delays uniformly within their bounds.

    ``extreme`` pins every component to ``"min"`` or ``"max"``.
    Returns ``(DelayRecord, N_k)``.
    """
    bounds = [(0.0, cfg.d_req_max), (cfg.d_delay_min, cfg.d_delay_max),
              (cfg.d_ctrl_min, cfg.d_ctrl_max), (0.0, cfg.d_req_max),
              (cfg.d_delay_min, cfg.d_delay_max)]
    if extreme == "min":
        d = [lo for lo, _ in bounds]
    elif extreme == "max":
        d = [hi for _, hi in bounds]
    elif extreme is None:
        d = [float(rng.uniform(lo, hi)) if hi > lo else lo for lo, hi in bounds]
    else:
        raise ValueError(f"unknown extreme {extreme!r}")
    req_sc, delay_sc, ctrl, req_ca, delay_ca = d
    send_sc = send_delay(bits_x, cfg.b_max)
    send_ca = send_delay(bits_u, cfg.b_max)
    start = a_k * cfg.tau
    t_2k = start + req_sc
    t_2k1 = t_2k + send_sc + delay_sc + ctrl + req_ca
    # Hold count from the relative delay so that float drift in absolute
    # times cannot shift the ceiling.
    n_k = _hold_count(t_2k1 - start + send_ca + delay_ca, cfg.tau)
    rec = DelayRecord(req_sc, delay_sc, ctrl, req_ca, delay_ca, t_2k, t_2k1, a_k + n_k)
    return rec, n_k
