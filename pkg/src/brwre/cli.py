"""Command line entry point: ``brwre <subcommand> ...``."""
from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from .barrier import BarrierEvent, BarrierProfile, assemble_centering, estimate_p_all, estimate_p_n
from .brw import NO_PRUNE, SimConfig, SimulationAborted, simulate_hitting, simulate_until
from .env import EnvDistribution, load_environment, sample_environment, save_environment
from .experiments import ExperimentConfig, run_experiment
from .tilt import CenteringTable, TiltSolution, centering_table, solve_tilt, tilted_profile
from .walker import estimate_barrier_prob_rw


def _window(text):
    return NO_PRUNE if text.lower() in ("inf", "none") else int(text)


def _write_json(obj, path):
    text = json.dumps(obj, indent=2) + "\n"
    if path in (None, "-"):
        sys.stdout.write(text)
    else:
        Path(path).write_text(text)


def cmd_gen_env(a):
    env = sample_environment(EnvDistribution.parse(a.dist), a.x_min, a.x_max, a.seed)
    save_environment(env, a.out)
    return 0


def cmd_tilt(a):
    tilt = solve_tilt(EnvDistribution.parse(a.dist), M=a.M, env_samples=a.env_samples, seed=a.seed)
    tilt.save(a.out)
    print(f"eta_bar={tilt.eta_bar:.10g} v0={tilt.v0:.10g} theta*={tilt.theta_star:.10g} "
          f"residual={tilt.residual:.3g} argmax_ok={tilt.argmax_ok}")
    return 0


def cmd_centering(a):
    env = load_environment(a.env)
    tilt = TiltSolution.load(a.tilt)
    centering_table(env, tilt, a.n, M=a.M).save(a.out)
    return 0


def cmd_pn(a):
    table = CenteringTable.load(a.table)
    if a.all:
        p, se = estimate_p_all(table, a.y0, a.reps, a.seed)
        _write_json({"y0": a.y0, "reps": a.reps, "seed": a.seed, "p_hat": p.tolist(), "se": se.tolist()}, a.out)
    else:
        est = estimate_p_n(table, a.y0, a.n, a.reps, a.seed, rel_se_target=a.rel_se)
        _write_json(est.to_dict(), a.out)
    return 0


def cmd_centering_assemble(a):
    table = CenteringTable.load(a.table)
    pn = json.loads(Path(a.pn).read_text())
    cen = assemble_centering(table, np.asarray(pn["p_hat"]), table.theta_star)
    cen.write_csv(a.out)
    return 0


def cmd_simulate(a):
    env = load_environment(a.env)
    cfg = SimConfig(prune_window=a.prune, pop_cap=a.pop_cap, seed=a.seed, coupled=a.coupled)
    try:
        if a.t_end is not None:
            grid = [float(x) for x in a.t_grid.split(",")] if a.t_grid else None
            rec = simulate_until(env, a.t_end, cfg, t_grid=grid, n_target=a.n or 0)
        else:
            rec = simulate_hitting(env, a.n, cfg)
    except SimulationAborted as e:
        if e.record is not None and a.out:
            e.record.save(a.out)
        print(str(e), file=sys.stderr)
        return 2
    rec.save(a.out)
    return 0


def cmd_rw_barrier(a):
    env = load_environment(a.env)
    tilt = TiltSolution.load(a.tilt)
    prof_d = json.loads(Path(a.profile).read_text())
    profile = BarrierProfile(np.asarray(prof_d["values"], dtype=float), prof_d.get("interp", "linear"),
                             prof_d.get("label", ""), None if prof_d.get("xi2") is None else np.asarray(prof_d["xi2"]))
    J = tuple(float(x) for x in a.J.split(",")) if a.J else (-float("inf"), float("inf"))
    event = BarrierEvent(a.y, profile, J)
    phi = tilted_profile(env, tilt.eta_bar, profile.n)
    est = estimate_barrier_prob_rw(env, tilt, phi, event, a.reps,
                                   np.random.default_rng(np.random.SeedSequence([a.seed, 0xC11])))
    _write_json(dict(est.to_dict(), seed=a.seed), a.out)
    return 0


def cmd_experiment(a):
    cfg_d = json.loads(Path(a.config).read_text()) if a.config else {}
    cfg_d["kind"] = a.kind
    if a.out:
        cfg_d["output"] = a.out
    if a.workers is not None:
        cfg_d["workers"] = a.workers
    cfg = ExperimentConfig.from_dict(cfg_d)
    results = run_experiment(cfg)
    ok = True
    for r in results:
        for name, c in r.checks.items():
            print(f"{r.kind}:{name}: {'PASS' if c['pass'] else 'FAIL'} "
                  + json.dumps({k: v for k, v in c.items() if k != "pass"}, default=float))
            ok &= bool(c["pass"])
    return 0 if ok else 1


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="brwre", description="Branching random walk in random environment experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="cmd", required=True)

    s = sub.add_parser("gen-env", help="sample an environment window")
    s.add_argument("--dist", default="two_point:0.5,0.1,0.2")
    s.add_argument("--x-min", type=int, default=-512)
    s.add_argument("--x-max", type=int, default=512)
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_gen_env)

    s = sub.add_parser("tilt", help="solve the annealed tilt for a distribution")
    s.add_argument("--dist", default="two_point:0.5,0.1,0.2")
    s.add_argument("--M", type=int, default=128)
    s.add_argument("--env-samples", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_tilt)

    s = sub.add_parser("centering", help="K, W and variances for one environment")
    s.add_argument("--env", required=True)
    s.add_argument("--tilt", required=True)
    s.add_argument("--n", type=int, required=True)
    s.add_argument("--M", type=int, default=None)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_centering)

    s = sub.add_parser("pn", help="estimate p_n (or p_k for all k with --all)")
    s.add_argument("--table", required=True)
    s.add_argument("--y0", type=int, default=4)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--reps", type=int, default=20000)
    s.add_argument("--rel-se", type=float, default=None)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--all", action="store_true")
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_pn)

    s = sub.add_parser("centering-assemble", help="m_k table from K and p_k estimates")
    s.add_argument("--table", required=True)
    s.add_argument("--pn", required=True, help="JSON written by 'pn --all'")
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_centering_assemble)

    s = sub.add_parser("simulate", help="one branching random walk run")
    s.add_argument("--env", required=True)
    s.add_argument("--n", type=int, default=None)
    s.add_argument("--t-end", type=float, default=None)
    s.add_argument("--t-grid", default=None, help="comma separated times")
    s.add_argument("--prune", type=_window, default=24, help="prune window in sites, or 'inf'")
    s.add_argument("--pop-cap", type=int, default=5_000_000)
    s.add_argument("--coupled", action="store_true", help="also run the doubled window on the same randomness")
    s.add_argument("--seed", type=int, required=True)
    s.add_argument("--out", required=True)
    s.set_defaults(fn=cmd_simulate)

    s = sub.add_parser("rw-barrier", help="barrier probability under the tilted walk")
    s.add_argument("--env", required=True)
    s.add_argument("--tilt", required=True)
    s.add_argument("--profile", required=True, help="JSON with 'values' (levels 0..n)")
    s.add_argument("--y", type=float, required=True)
    s.add_argument("--J", default=None, help="end interval 'a,b'")
    s.add_argument("--reps", type=int, default=100_000)
    s.add_argument("--seed", type=int, default=0)
    s.add_argument("--out", default="-")
    s.set_defaults(fn=cmd_rw_barrier)

    s = sub.add_parser("experiment", help="run an experiment from a JSON config")
    s.add_argument("kind", choices=["tightness-h", "tightness-m", "tightness", "mt1", "pn-decay", "barrier-ratio",
                                     "prune-check"])
    s.add_argument("--config", default=None)
    s.add_argument("--out", default=None)
    s.add_argument("--workers", type=int, default=None)
    s.set_defaults(fn=cmd_experiment)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    if args.cmd == "simulate" and args.n is None and args.t_end is None:
        print("simulate needs --n or --t-end", file=sys.stderr)
        return 2
    try:
        return args.fn(args)
    except (ValueError, RuntimeError, OSError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
