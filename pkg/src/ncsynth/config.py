"""TOML run configuration.

Sections: ``plant``, ``certificate``, ``network``, ``quantization``,
``synthesis``, ``spec``, ``simulation`` and optionally ``certify``.  See
``configs/`` for complete examples.
"""
from __future__ import annotations

import os
import sys
from dataclasses import dataclass, field

import numpy as np

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

from .network import NetworkConfig, n_bounds
from .plant import (PLANTS, Box, ControlSystem, FcCertificate, make_kinf, quadratic_V,
                    smooth_abs_V)
from .quantization import Grid
from .specification import SpecGraph, waypoint_graph
from .synthesis import INPUT_ORDERS, SEMANTICS, SynthesisLimits, SynthesisParams


class ConfigError(ValueError):
    def __init__(self, where: str, msg: str):
        super().__init__(f"{where}: {msg}")
        self.where = where


@dataclass
class RunConfig:
    plant: ControlSystem
    cert: FcCertificate
    net: NetworkConfig
    params: SynthesisParams
    spec: SpecGraph
    semantics: str = "pipeline"
    strict: bool = False
    limits: SynthesisLimits = field(default_factory=SynthesisLimits)
    h_max: float = 0.01
    u_init: np.ndarray | None = None
    n_override: tuple | None = None
    sim: dict = field(default_factory=dict)
    certify: dict = field(default_factory=dict)
    model_ceiling: int = 100_000
    source: str = ""
    input_order: str = "index"

    @property
    def bits(self) -> tuple[int, int]:
        return (Grid(self.plant.state_box, self.params.mu_x).bits,
                Grid(self.plant.input_box, self.params.mu_u).bits)

    @property
    def n_range(self) -> tuple[int, int]:
        if self.n_override is not None:
            return self.n_override
        return n_bounds(self.net, *self.bits)


def _get(sec: dict, key: str, where: str, kind=float, default=None, required=True):
    if key not in sec:
        if required and default is None:
            raise ConfigError(f"{where}.{key}", "missing")
        return default
    val = sec[key]
    try:
        if kind is float:
            return float(val)
        if kind is int:
            if isinstance(val, bool) or int(val) != val:
                raise ValueError
            return int(val)
        if kind is bool:
            if not isinstance(val, bool):
                raise ValueError
            return val
        if kind is str:
            if not isinstance(val, str):
                raise ValueError
            return val
        return kind(val)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", f"expected {kind.__name__}, got {val!r}") from None


def _vec(sec, key, where, required=False):
    if key not in sec:
        if required:
            raise ConfigError(f"{where}.{key}", "missing")
        return None
    try:
        return np.asarray(sec[key], dtype=float)
    except (TypeError, ValueError):
        raise ConfigError(f"{where}.{key}", "expected a list of numbers") from None


def _box(sec, key, where):
    if key not in sec:
        return None
    raw = sec[key]
    try:
        lo, hi = raw
        return Box(lo, hi)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{where}.{key}", f"expected [[lower...], [upper...]]: {exc}") from None


def _section(doc, name, required=True):
    sec = doc.get(name)
    if sec is None:
        if required:
            raise ConfigError(name, "missing section")
        return {}
    if not isinstance(sec, dict):
        raise ConfigError(name, "expected a table")
    return sec


def _plant(doc) -> ControlSystem:
    sec = _section(doc, "plant")
    kind = _get(sec, "kind", "plant", str)
    if kind not in PLANTS:
        raise ConfigError("plant.kind", f"unknown plant {kind!r}; known: {sorted(PLANTS)}")
    kw = {k: _box(sec, k, "plant") for k in ("state_box", "init_box", "input_box") if k in sec}
    if kind == "scalar_unstable":
        kw["a"] = _get(sec, "a", "plant", default=1.0)
    try:
        return PLANTS[kind](**kw)
    except ValueError as exc:
        raise ConfigError("plant", str(exc)) from None


def _kinf(sec, key):
    where = f"certificate.{key}"
    spec = sec.get(key)
    if not isinstance(spec, dict):
        raise ConfigError(where, "expected a table like {kind = \"quadratic\", c = 0.5}")
    spec = dict(spec)
    kind = spec.pop("kind", None)
    try:
        return make_kinf(kind, **{k: float(v) for k, v in spec.items()})
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None


def _certificate(doc) -> FcCertificate:
    sec = _section(doc, "certificate")
    v = _get(sec, "V", "certificate", str, default="quadratic")
    if v == "quadratic":
        V = quadratic_V(_get(sec, "c", "certificate", default=0.5))
    elif v == "smooth_abs":
        delta = _get(sec, "delta", "certificate")
        if not delta > 0:
            raise ConfigError("certificate.delta", "must be positive")
        V = smooth_abs_V(delta)
    else:
        raise ConfigError("certificate.V", f"unknown V kind {v!r}; known: ['quadratic', 'smooth_abs']")
    return FcCertificate(V, _get(sec, "lam", "certificate"),
                         _kinf(sec, "alpha_lo"), _kinf(sec, "alpha_hi"), _kinf(sec, "gamma"))


def _network(doc, mu_x, mu_u) -> NetworkConfig:
    sec = _section(doc, "network")
    names = ("tau", "b_max", "d_req_max", "d_delay_min", "d_delay_max", "d_ctrl_min", "d_ctrl_max")
    vals = {k: _get(sec, k, "network") for k in names}
    try:
        return NetworkConfig(mu_x=mu_x, mu_u=mu_u, **vals)
    except ValueError as exc:
        raise ConfigError("network", str(exc)) from None


def _spec(doc, n) -> SpecGraph:
    sec = _section(doc, "spec")
    kind = _get(sec, "kind", "spec", str, default="explicit")
    try:
        if kind == "waypoints":
            wp = _vec(sec, "waypoints", "spec", required=True)
            dims = tuple(int(d) for d in sec.get("dims", [0, 1]))
            start = _vec(sec, "start_state", "spec")
            return waypoint_graph(wp, _get(sec, "spacing", "spec"), _get(sec, "window", "spec", int),
                                  n, dims, start, _get(sec, "hold_last", "spec", bool, default=True))
        if kind == "explicit":
            nodes = _vec(sec, "nodes", "spec", required=True)
            if nodes.ndim != 2 or nodes.shape[1] != n:
                raise ConfigError("spec.nodes", f"expected a list of {n}-vectors")
            edges = frozenset(tuple(e) for e in sec.get("edges", []))
            return SpecGraph(nodes, edges, frozenset(sec.get("initials", [])))
    except ConfigError:
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError("spec", str(exc)) from None
    raise ConfigError("spec.kind", f"unknown spec kind {kind!r}; known: ['explicit', 'waypoints']")


def parse_config(doc: dict, source: str = "") -> RunConfig:
    plant = _plant(doc)
    cert = _certificate(doc)
    q = _section(doc, "quantization")
    mu_x, mu_u = _get(q, "mu_x", "quantization"), _get(q, "mu_u", "quantization")
    for name, g in (("quantization.mu_x", (plant.state_box, mu_x)),
                    ("quantization.mu_u", (plant.input_box, mu_u))):
        try:
            Grid(*g)
        except ValueError as exc:
            raise ConfigError(name, str(exc)) from None
    net = _network(doc, mu_x, mu_u)
    s = _section(doc, "synthesis")
    try:
        params = SynthesisParams(eps=_get(s, "eps", "synthesis"), theta=_get(s, "theta", "synthesis"),
                                 mu_x=mu_x, mu_u=mu_u, eta=_get(s, "eta", "synthesis"), tau=net.tau)
    except ValueError as exc:
        raise ConfigError("synthesis", str(exc)) from None
    semantics = _get(s, "semantics", "synthesis", str, default="pipeline")
    if semantics not in SEMANTICS:
        raise ConfigError("synthesis.semantics", f"unknown semantics {semantics!r}; known: {list(SEMANTICS)}")
    input_order = _get(s, "input_order", "synthesis", str, default="index")
    if input_order not in INPUT_ORDERS:
        raise ConfigError("synthesis.input_order",
                          f"unknown input order {input_order!r}; known: {list(INPUT_ORDERS)}")
    limits = SynthesisLimits(
        max_depth=int(os.environ.get("NCSYNTH_MAX_DEPTH", _get(s, "max_depth", "synthesis", int, default=200_000))),
        max_visits=int(os.environ.get("NCSYNTH_MAX_VISITS", _get(s, "max_visits", "synthesis", int, default=10_000_000))))
    n_override = None
    if "n_min" in s or "n_max" in s:
        n_override = (_get(s, "n_min", "synthesis", int), _get(s, "n_max", "synthesis", int))
        if not 1 <= n_override[0] <= n_override[1]:
            raise ConfigError("synthesis.n_min", "need 1 <= n_min <= n_max")
    u_init = _vec(s, "u_init", "synthesis")
    if u_init is not None and u_init.shape != (plant.m,):
        raise ConfigError("synthesis.u_init", f"expected {plant.m} numbers")
    h_max = _get(s, "h_max", "synthesis", default=0.01)
    if not h_max > 0:
        raise ConfigError("synthesis.h_max", "must be positive")
    spec = _spec(doc, plant.n)
    return RunConfig(plant, cert, net, params, spec, semantics,
                     _get(s, "strict", "synthesis", bool, default=False), limits, h_max, u_init,
                     n_override, dict(_section(doc, "simulation", required=False)),
                     dict(_section(doc, "certify", required=False)),
                     _get(s, "model_ceiling", "synthesis", int, default=100_000), source,
                     input_order)


def load_config(path) -> RunConfig:
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(str(path), f"cannot read: {exc.strerror}") from None
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(str(path), f"TOML syntax error: {exc}") from None
    return parse_config(doc, str(path))


def regions_from(sim: dict) -> list[Box]:
    out = []
    for i, r in enumerate(sim.get("regions", [])):
        try:
            lo, hi = r
            out.append(Box(lo, hi))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"simulation.regions[{i}]", str(exc)) from None
    return out
