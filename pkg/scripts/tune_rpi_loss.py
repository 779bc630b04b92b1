"""Grid search over the RPI critic-loss weights (c, lambda1, lambda2, q_min).

Each grid point is a harness cell, so reruns with --resume skip finished seeds.
Writes tuning.csv ranked by mean final performance, with the worst per-run
lower-bound violation rate alongside.

    python scripts/tune_rpi_loss.py --config configs/cartpole_arch.ini \
        --hidden 32-32 --seeds 0-2 --steps 50000 --out runs/tuning
"""

import argparse
import csv
import itertools
from dataclasses import replace
from pathlib import Path

from reliable_pi.agents import RpiLossParams
from reliable_pi.config import format_hidden, load_config, parse_hidden, parse_seeds, with_algorithm, with_hidden
from reliable_pi.evalbench import aggregate, lower_bound_violation_rate
from reliable_pi.harness import Cell, load_cell_records, run_cells


def floats(text: str) -> list[float]:
    return [float(t) for t in text.split(",")]


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--config", required=True)
    ap.add_argument("--algorithm", default=None, help="rpi_dqn or rpi_ddpg (default: from config)")
    ap.add_argument("--hidden", default="32-32")
    ap.add_argument("--seeds", default="0-2")
    ap.add_argument("--steps", type=int, default=None)
    ap.add_argument("--c", default="0.01,0.1,0.5")
    ap.add_argument("--lambda1", default="0.5,1.0,2.0")
    ap.add_argument("--lambda2", default="1.0")
    ap.add_argument("--q-min", default="0.0")
    ap.add_argument("--out", default="runs/tuning")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()

    base = load_config(args.config)
    algo = args.algorithm or base.agent.algorithm
    if not algo.startswith("rpi_"):
        ap.error(f"{algo} has no RPI loss to tune")
    base = replace(with_hidden(with_algorithm(base, algo), parse_hidden(args.hidden)),
                   seeds=tuple(parse_seeds(args.seeds)))
    if args.steps is not None:
        base = replace(base, agent=replace(base.agent, total_steps=args.steps))

    cells = []
    for c, l1, l2, qm in itertools.product(floats(args.c), floats(args.lambda1),
                                          floats(args.lambda2), floats(args.q_min)):
        cfg = replace(base, agent=replace(base.agent, rpi=RpiLossParams(c, l1, l2, qm)))
        label = f"c{c:g}_l1-{l1:g}_l2-{l2:g}_q{qm:g}"
        cells.append(Cell(f"{algo}__{label}", algo, label, cfg))

    out = Path(args.out)
    result = run_cells("tune", cells, base, out, jobs=args.jobs, resume=args.resume)
    rows = []
    for cell in cells:
        recs = load_cell_records(out / "cells" / cell.cell_id)
        if not recs:
            continue
        agg = aggregate(recs)
        p = cell.config.agent.rpi
        rows.append({"c": p.c, "lambda1": p.lambda1, "lambda2": p.lambda2, "q_min": p.q_min,
                     "final_mean": agg["final_performance"][0], "final_std": agg["final_performance"][1],
                     "auc_mean": agg["auc"][0],
                     "worst_violation": max(lower_bound_violation_rate(r) for r in recs),
                     "num_runs": len(recs)})
    rows.sort(key=lambda r: -r["final_mean"])
    with open(out / "tuning.csv", "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]) if rows else ["c"], lineterminator="\n")
        w.writeheader()
        w.writerows(rows)
    print(f"{algo} {format_hidden(base.agent.hidden)}: {len(rows)} grid points -> {out / 'tuning.csv'}")
    for r in rows[:5]:
        print(f"  c={r['c']:g} l1={r['lambda1']:g} l2={r['lambda2']:g} q_min={r['q_min']:g}: "
              f"final {r['final_mean']:.2f} +- {r['final_std']:.2f}, worst violation {r['worst_violation']:.0%}")
    if result.failures:
        print(f"{len(result.failures)} runs failed; see {out / 'manifest.jsonl'}")


if __name__ == "__main__":
    main()
