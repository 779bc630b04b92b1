"""Command-line entry point (``reliable-pi`` / ``python -m reliable_pi``)."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import asdict, replace
from pathlib import Path

import numpy as np

from .agents import make_agent
from .config import ConfigError, ExperimentConfig, format_hidden, load_config, parse_seeds
from .envs import ENV_FACTORIES, EnvState, physics_trajectory, write_trajectory_csv
from .evalbench import evaluate
from .harness import aggregate_dir, run_arch_sweep, run_cells, run_env_sweep, Cell
from .mdp import load_mdp
from .neural import load_checkpoint
from .rpi_exact import FeatureMap, InfeasibleStartError, check_theorem_properties, rpi_iterate, write_iterates_csv

log = logging.getLogger("reliable_pi")


def _config(args) -> ExperimentConfig:
    cfg = load_config(args.config)
    if getattr(args, "seeds", None):
        cfg = replace(cfg, seeds=tuple(parse_seeds(args.seeds)))
    return cfg


def _out(args, cfg: ExperimentConfig | None = None) -> Path:
    if cfg is not None:
        return cfg.resolved_output(args.out)
    return Path(args.out) if args.out else ExperimentConfig().resolved_output()


def cmd_train(args) -> int:
    cfg = _config(args)
    cell_id = f"{cfg.agent.algorithm}__{format_hidden(cfg.agent.hidden)}"
    res = run_cells("train", [Cell(cell_id, cfg.agent.algorithm, format_hidden(cfg.agent.hidden), cfg)],
                    cfg, _out(args, cfg), jobs=args.jobs, resume=args.resume)
    print(json.dumps(res.summaries.get(cell_id), indent=2))
    return 1 if res.failures else 0


def cmd_eval(args) -> int:
    cfg = _config(args)
    spec = cfg.env_spec
    agent = make_agent(cfg.agent, spec.obs_dim, spec.num_actions, np.random.default_rng(0))
    nets = load_checkpoint(args.checkpoint)
    for name, params in agent.networks().items():
        if name not in nets or nets[name].spec != params.spec:
            raise SystemExit(f"{args.checkpoint}: network {name!r} missing or mismatched")
        params.copy_from(nets[name])
    point = evaluate(agent, spec, args.rollouts, cfg.agent.discount,
                     np.random.default_rng(args.seed))
    print(json.dumps(asdict(point), indent=2))
    return 0


def _sweep(fn, args) -> int:
    cfg = _config(args)
    res = fn(cfg, _out(args, cfg), jobs=args.jobs, resume=args.resume)
    for key, summ in sorted(res.summaries.items()):
        fp = summ["final_performance"]
        print(f"{key:40s} final={fp[0]:.2f}+-{fp[1]:.2f}" if fp else f"{key:40s} final=n/a")
    for key in sorted(res.failures):
        print(f"FAILED {key}", file=sys.stderr)
    return 1 if res.failures else 0


def cmd_rpi_exact(args) -> int:
    try:
        mdp = load_mdp(args.mdp)
        if args.features:
            feats = FeatureMap(np.loadtxt(args.features, ndmin=2))
        else:
            feats = FeatureMap.tabular(mdp.num_states, mdp.num_actions)
        if feats.features.shape[0] != mdp.num_states * mdp.num_actions:
            raise ValueError(f"features have {feats.features.shape[0]} rows, "
                             f"expected S*A = {mdp.num_states * mdp.num_actions}")
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    try:
        iterates = rpi_iterate(mdp, feats, max_iters=args.max_iters, norm=args.norm)
    except InfeasibleStartError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    report = check_theorem_properties(iterates, mdp)
    out = Path(args.out) if args.out else Path("rpi_exact.csv")
    write_iterates_csv(report, out)
    print(f"{len(iterates) - 1} iterations; monotonicity violation "
          f"{report.monotonicity_violation:.3e}, lower-bound violation "
          f"{report.lower_bound_violation:.3e}; wrote {out}")
    return 0


def cmd_aggregate(args) -> int:
    rows = aggregate_dir(_out(args))
    for r in rows:
        if r["mean"]:
            print(f"{r['algorithm']:9s} {r['column']:14s} {r['metric']:18s} "
                  f"{float(r['mean']):9.2f} +- {float(r['std']):.2f}")
    return 0


def cmd_plot(args) -> int:
    from .plots import emit_plots

    path = emit_plots(_out(args), max_return=args.max_return)
    print(path)
    return 0


def cmd_physics_check(args) -> int:
    spec = ENV_FACTORIES[args.env]()
    start = EnvState(*[float(v) for v in args.start.split(",")])
    if args.actions:
        actions = [float(a) if not spec.discrete else int(a) for a in args.actions.split(",")]
    else:
        actions = [1] * 10 if spec.discrete else [1.0] * 10
    states = physics_trajectory(spec, start, actions)
    write_trajectory_csv(args.out, states)
    print(f"wrote {len(states)} states to {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="reliable-pi", description=__doc__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, jobs=True):
        sp.add_argument("--config", required=True, help="experiment config (INI)")
        sp.add_argument("--seeds", help="override seeds, e.g. 0-9 or 0,3")
        sp.add_argument("--out", help="output directory ($RPI_OUTPUT_ROOT or ./runs by default)")
        if jobs:
            sp.add_argument("--jobs", type=int, default=1)
            sp.add_argument("--resume", action="store_true", help="skip runs already on disk")

    sp = sub.add_parser("train", help="train every seed of the configured agent")
    common(sp)
    sp.set_defaults(fn=cmd_train)

    sp = sub.add_parser("eval", help="evaluate a checkpoint")
    sp.add_argument("--config", required=True)
    sp.add_argument("--checkpoint", required=True)
    sp.add_argument("--rollouts", type=int, default=100)
    sp.add_argument("--seed", type=int, default=0)
    sp.set_defaults(fn=cmd_eval)

    sp = sub.add_parser("sweep-arch", help="train across [sweep] architectures")
    common(sp)
    sp.set_defaults(fn=lambda a: _sweep(run_arch_sweep, a))

    sp = sub.add_parser("sweep-env", help="train across gravity/mass perturbations")
    common(sp)
    sp.set_defaults(fn=lambda a: _sweep(run_env_sweep, a))

    sp = sub.add_parser("rpi-exact", help="model-based RPI on an MDP fixture")
    sp.add_argument("--mdp", required=True)
    sp.add_argument("--features", help="whitespace matrix file, (S*A) x d")
    sp.add_argument("--norm", choices=["l1", "linf"], default="l1")
    sp.add_argument("--max-iters", type=int, default=100)
    sp.add_argument("--out", help="iterate CSV path")
    sp.set_defaults(fn=cmd_rpi_exact)

    sp = sub.add_parser("aggregate", help="rebuild table.csv from per-seed CSVs")
    sp.add_argument("--out")
    sp.set_defaults(fn=cmd_aggregate)

    sp = sub.add_parser("plot", help="render SVG learning curves")
    sp.add_argument("--out")
    sp.add_argument("--max-return", type=float, default=None)
    sp.set_defaults(fn=cmd_plot)

    sp = sub.add_parser("physics-check", help="dump a short trajectory CSV")
    sp.add_argument("--env", choices=sorted(ENV_FACTORIES), default="cartpole")
    sp.add_argument("--start", default="0,0,0,0")
    sp.add_argument("--actions", help="comma-separated actions (default: ten pushes right)")
    sp.add_argument("--out", default="physics_check.csv")
    sp.set_defaults(fn=cmd_physics_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.fn(args)
    except (ConfigError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
