"""``ncsynth`` command line: certify, report, synthesize, simulate.

Exit codes: 0 success, 1 infeasible or unsatisfied, 2 configuration error,
3 budget exceeded.
"""
from __future__ import annotations

import argparse
import logging
import os
import sys
import time

import numpy as np

from . import abstraction, closed_loop, network, plant, synthesis
from .config import ConfigError, RunConfig, load_config, regions_from
from .quantization import Grid
from .specification import lift_spec

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_BUDGET = 0, 1, 2, 3


def _abstraction_params(cfg: RunConfig) -> abstraction.AbstractionParams:
    p = cfg.params
    return abstraction.AbstractionParams(p.eps, p.eta, p.mu_x, p.mu_u, p.tau)


def cmd_certify(cfg: RunConfig, args) -> int:
    samples = args.samples or int(cfg.certify.get("samples", 10_000))
    seed = args.seed if args.seed is not None else int(cfg.certify.get("seed", 0))
    rep = plant.certify_fc(cfg.plant, cfg.cert, samples, seed)
    print(f"certificate check on {cfg.plant.name} (seed {seed})")
    print(rep.summary())
    return EXIT_OK if rep.passed else EXIT_FAIL


def cmd_report(cfg: RunConfig, args) -> int:
    bx, bu = cfg.bits
    d_min, d_max = network.delay_envelope(cfg.net, bx, bu)
    n_min, n_max = network.n_bounds(cfg.net, bx, bu)
    p = cfg.params
    print(f"plant            {cfg.plant.name}")
    print(f"state grid       {len(Grid(cfg.plant.state_box, p.mu_x))} points, {bx} bits")
    print(f"input grid       {len(Grid(cfg.plant.input_box, p.mu_u))} points, {bu} bits")
    print(f"delay envelope   {d_min:.6g} .. {d_max:.6g} s")
    print(f"hold counts      N_min = {n_min}, N_max = {n_max}")
    if cfg.n_override:
        print(f"hold override    {cfg.n_override}")
    print(f"ball radius      {abstraction.successor_ball_radius(cfg.cert, p.eta, p.mu_x, p.tau):.6g}")
    av = abstraction.abstraction_violations(_abstraction_params(cfg), cfg.cert, cfg.plant.state_box)
    sv = synthesis.synthesis_violations(p, cfg.cert, cfg.plant.state_box)
    print(f"abstraction ok   {not av}")
    for v in av:
        print(f"  violated: {v}")
    print(f"synthesis ok     {not sv}")
    for v in sv:
        print(f"  violated: {v}")
    print(f"spec             {len(cfg.spec)} nodes, {len(cfg.spec.edges)} edges")
    return EXIT_OK if not sv else EXIT_FAIL


def cmd_synthesize(cfg: RunConfig, args) -> int:
    viol = synthesis.synthesis_violations(cfg.params, cfg.cert, cfg.plant.state_box)
    if viol:
        for v in viol:
            print(f"refused: {v}", file=sys.stderr)
        return EXIT_CONFIG
    n_min, n_max = cfg.n_range
    start = time.perf_counter()
    if args.mode == "naive":
        ap = _abstraction_params(cfg)
        av = abstraction.abstraction_violations(ap, cfg.cert, cfg.plant.state_box)
        if av:
            for v in av:
                print(f"refused: {v}", file=sys.stderr)
            return EXIT_CONFIG
        ctx = abstraction.SymbolicContext(cfg.plant, cfg.cert, ap, n_min, n_max, cfg.h_max, cfg.u_init)
        try:
            model = abstraction.build_symbolic_model(ctx, cfg.model_ceiling)
        except abstraction.ModelTooLarge as exc:
            print(f"budget: {exc}", file=sys.stderr)
            return EXIT_BUDGET
        res = synthesis.synthesize_naive(model, lift_spec(cfg.spec, n_min, n_max), cfg.params.mu_x)
        elapsed = time.perf_counter() - start
        _table({**res.diagnostics, **synthesis.complexity_report(res),
                "found": res.found, "seconds": round(elapsed, 3)})
        return EXIT_OK if res.found else EXIT_FAIL
    try:
        res = synthesis.synthesize_integrated(
            cfg.plant, cfg.spec, cfg.params, n_min, n_max, semantics=cfg.semantics,
            strict=args.strict_pseudocode or cfg.strict, limits=cfg.limits,
            h_max=cfg.h_max, u_init=cfg.u_init, input_order=cfg.input_order)
    except synthesis.BudgetExceeded as exc:
        print(f"budget: {exc}", file=sys.stderr)
        _table(exc.diagnostics)
        return EXIT_BUDGET
    elapsed = time.perf_counter() - start
    if args.output:
        with open(args.output, "w") as fh:
            fh.write(res.controller.dumps())
    _table({**res.diagnostics, **synthesis.complexity_report(res), "found": res.found,
            "n_min": n_min, "n_max": n_max, "seconds": round(elapsed, 3)})
    return EXIT_OK if res.found else EXIT_FAIL


def _initial_states(cfg: RunConfig, rng, count):
    sim = cfg.sim
    if "x0" in sim:
        x0 = np.atleast_2d(np.asarray(sim["x0"], dtype=float))
        return [x0[i % len(x0)] for i in range(count)]
    # uniform draws from the cell-sized neighbourhood of the specification's initial nodes
    radius = float(sim.get("x0_radius", cfg.params.mu_x / 2))
    inits = sorted(cfg.spec.initials)
    out = []
    for i in range(count):
        c = cfg.spec.nodes[inits[i % len(inits)]].copy()
        wild = np.isnan(c)
        c[wild] = 0.0
        x = c + rng.uniform(-radius, radius, size=c.shape)
        out.append(np.clip(x, cfg.plant.init_box.lower, np.nextafter(cfg.plant.init_box.upper, -np.inf)))
    return out


def cmd_simulate(cfg: RunConfig, args) -> int:
    with open(args.controller) as fh:
        ctrl = synthesis.Controller.loads(fh.read())
    if not ctrl.table:
        print("refused: controller is empty", file=sys.stderr)
        return EXIT_FAIL
    xg = Grid(cfg.plant.state_box, cfg.params.mu_x)
    ug = Grid(cfg.plant.input_box, cfg.params.mu_u)
    if (xg.mu != ctrl.xgrid.mu or ug.mu != ctrl.ugrid.mu or xg.shape != ctrl.xgrid.shape
            or ug.shape != ctrl.ugrid.shape):
        print("refused: controller grids do not match the configuration", file=sys.stderr)
        return EXIT_CONFIG
    runs = args.realizations or int(cfg.sim.get("runs", 1))
    seed = args.seed if args.seed is not None else cfg.sim.get("seed")
    if seed is None:
        print("refused: simulate needs an explicit seed (--seed or simulation.seed)", file=sys.stderr)
        return EXIT_CONFIG
    horizon = int(cfg.sim.get("horizon_iters", 40))
    eps = cfg.params.eps
    regions = regions_from(cfg.sim)
    goal = cfg.sim.get("goal")
    goal_dims = list(cfg.sim.get("goal_dims", range(cfg.plant.n)))
    bx, bu = cfg.bits
    ok_count = 0
    if args.csv_dir:
        os.makedirs(args.csv_dir, exist_ok=True)
    for r in range(runs):
        rng = np.random.default_rng([int(seed), r])
        x0 = _initial_states(cfg, rng, 1)[0]
        tr = closed_loop.run_closed_loop(cfg.plant, ctrl, cfg.net, x0, horizon, rng, bx, bu, cfg.h_max)
        v = closed_loop.verify_run(tr, cfg.spec, eps)
        ok = v.satisfied
        notes = []
        if regions:
            vis = closed_loop.visits_in_order(tr.states[:, :regions[0].dim], regions)
            ok &= vis
            notes.append(f"regions={'yes' if vis else 'no'}")
        if goal is not None:
            d = float(np.max(np.abs(tr.states[-1, goal_dims] - np.asarray(goal, dtype=float))))
            ok &= d <= eps
            notes.append(f"goal_dist={d:.4f}")
        ok_count += ok
        print(f"run {r:3d} {'ok  ' if ok else 'FAIL'} matched={v.matched}/{len(tr.states)} "
              f"blocked={tr.blocked} {' '.join(notes)}".rstrip())
        if args.csv_dir:
            with open(os.path.join(args.csv_dir, f"run_{r:03d}.csv"), "w") as fh:
                fh.write(closed_loop.trace_csv(tr))
    print(f"satisfied {ok_count}/{runs}")
    return EXIT_OK if ok_count == runs else EXIT_FAIL


def _table(d: dict):
    width = max(len(k) for k in d) if d else 0
    for k, v in d.items():
        print(f"{k:<{width}}  {v}")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="ncsynth", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true", help="progress messages on stderr")
    sub = ap.add_subparsers(dest="command", required=True)
    c = sub.add_parser("certify", help="sample-check the delta-FC certificate")
    c.add_argument("config")
    c.add_argument("--samples", type=int)
    c.add_argument("--seed", type=int)
    r = sub.add_parser("report", help="bits, delays, hold counts and parameter checks")
    r.add_argument("config")
    s = sub.add_parser("synthesize", help="synthesize a controller")
    s.add_argument("config")
    s.add_argument("-o", "--output")
    s.add_argument("--mode", choices=("integrated", "naive"), default="integrated")
    s.add_argument("--strict-pseudocode", action="store_true")
    m = sub.add_parser("simulate", help="closed-loop runs with seeded network delays")
    m.add_argument("config")
    m.add_argument("--controller", required=True)
    m.add_argument("--realizations", type=int)
    m.add_argument("--seed", type=int)
    m.add_argument("--csv-dir")
    return ap


COMMANDS = {"certify": cmd_certify, "report": cmd_report,
            "synthesize": cmd_synthesize, "simulate": cmd_simulate}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(asctime)s %(name)s: %(message)s")
    try:
        cfg = load_config(args.config)
        return COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
