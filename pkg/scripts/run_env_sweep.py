"""Six-variant physics sweep (gravity, cart mass, pole mass at x0.5 and x2).

    python scripts/run_env_sweep.py --config configs/cartpole_env.ini --jobs 4 --resume
"""

import argparse

from reliable_pi.config import load_config, parse_seeds
from reliable_pi.evalbench import lower_bound_violation_rate
from reliable_pi.harness import load_cell_records, run_env_sweep
from reliable_pi.plots import emit_plots


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", default="configs/cartpole_env.ini")
    ap.add_argument("--seeds", default=None)
    ap.add_argument("--out", default=None)
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()

    cfg = load_config(args.config)
    seeds = parse_seeds(args.seeds) if args.seeds else None
    result = run_env_sweep(cfg, args.out, jobs=args.jobs, resume=args.resume, seeds=seeds)
    svg = emit_plots(result.out_dir, max_return=cfg.env_spec.max_discounted_return(cfg.agent.discount))
    print(f"table: {result.out_dir / 'table.csv'}\nplots: {svg}")
    print(f"{'cell':<28}{'final':>16}{'worst violation':>18}")
    for cell in result.cells:
        recs = load_cell_records(result.out_dir / "cells" / cell.cell_id)
        summary = result.summaries.get(cell.cell_id)
        if not recs or summary is None:
            print(f"{cell.cell_id:<28}{'missing':>16}")
            continue
        mean, std = summary["final_performance"]
        worst = max(lower_bound_violation_rate(r) for r in recs)
        print(f"{cell.cell_id:<28}{f'{mean:.1f} +- {std:.1f}':>16}{worst:>18.0%}")


if __name__ == "__main__":
    main()
