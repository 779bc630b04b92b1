"""Architecture sweeps on both tasks, then a mean +- std table per metric.

    python scripts/run_arch_table.py --jobs 4 --resume
    python scripts/run_arch_table.py --configs configs/smoke.ini --out runs/smoke
"""

import argparse
from collections import defaultdict

from reliable_pi.config import load_config, parse_seeds
from reliable_pi.harness import read_table, run_arch_sweep
from reliable_pi.plots import emit_plots

DEFAULT_CONFIGS = ["configs/cartpole_arch.ini", "configs/pendulum_arch.ini"]


def print_table(rows: list[dict], metric: str) -> None:
    grid: dict[str, dict[str, str]] = defaultdict(dict)
    columns: list[str] = []
    for r in rows:
        if r["metric"] != metric:
            continue
        if r["column"] not in columns:
            columns.append(r["column"])
        cell = "n/a" if r["mean"] == "" else f"{float(r['mean']):.1f} +- {float(r['std']):.1f}"
        if metric == "steps_to_solve" and r["solve_rate"] != "":
            cell += f" ({float(r['solve_rate']):.0%})"
        grid[r["algorithm"]][r["column"]] = cell
    print(f"\n{metric}")
    print(" " * 10 + "".join(f"{c:>22}" for c in columns))
    for algo, cells in grid.items():
        print(f"{algo:<10}" + "".join(f"{cells.get(c, '-'):>22}" for c in columns))


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--configs", nargs="+", default=DEFAULT_CONFIGS)
    ap.add_argument("--seeds", default=None)
    ap.add_argument("--out", default=None, help="output directory (single config only)")
    ap.add_argument("--jobs", type=int, default=1)
    ap.add_argument("--resume", action="store_true")
    args = ap.parse_args()
    if args.out and len(args.configs) > 1:
        ap.error("--out needs exactly one config")

    for path in args.configs:
        cfg = load_config(path)
        seeds = parse_seeds(args.seeds) if args.seeds else None
        result = run_arch_sweep(cfg, args.out, jobs=args.jobs, resume=args.resume, seeds=seeds)
        max_ret = cfg.env_spec.max_discounted_return(cfg.agent.discount)
        svg = emit_plots(result.out_dir, max_return=max_ret)
        print(f"== {path}: {result.out_dir / 'table.csv'}, {svg}")
        rows = read_table(result.out_dir / "table.csv")
        for metric in ("final_performance", "auc", "steps_to_solve"):
            print_table(rows, metric)
        if result.failures:
            print(f"{len(result.failures)} runs failed: {sorted(result.failures)}")


if __name__ == "__main__":
    main()
