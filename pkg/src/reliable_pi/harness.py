"""Runs, sweeps and aggregation over on-disk per-seed records.

Layout under the output directory::

    cells/<cell>/config.ini          config that produced the cell
    cells/<cell>/seed_<n>.csv        learning curve (+ .metrics.json sidecar)
    cells/<cell>/seed_<n>.events.csv training event log
    cells/<cell>/seed_<n>.ckpt       final network checkpoint
    manifest.jsonl                   one line per finished run (append-only)
    provenance.json                  config hash, code version, wall-clock
    table.csv                        aggregated metrics, long format
    curves/<cell>.csv                per-step mean/std across seeds
"""

from __future__ import annotations

import csv
import json
import logging
import subprocess
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import (
    SIX_PERTURBATIONS,
    ConfigError,
    ExperimentConfig,
    dump_config,
    format_hidden,
    parse_config_text,
    with_algorithm,
    with_hidden,
    with_perturbation,
)
from .evalbench import RunRecord, aggregate, read_record, write_record
from .neural import save_checkpoint
from .training import train

log = logging.getLogger(__name__)

TABLE_COLUMNS = ["environment", "sweep", "algorithm", "column", "metric", "mean", "std",
                 "solve_rate", "num_runs"]
METRIC_ROWS = [("final_performance", 1.0), ("auc", 1e6), ("steps_to_solve", 1e3)]


@dataclass(frozen=True)
class Cell:
    cell_id: str
    algorithm: str
    column: str  # architecture ("32-32") or variant ("gravity x2", "base")
    config: ExperimentConfig


@dataclass
class SweepResult:
    kind: str
    out_dir: Path
    cells: list[Cell]
    summaries: dict[str, dict] = field(default_factory=dict)
    failures: dict[str, str] = field(default_factory=dict)
    provenance: dict = field(default_factory=dict)

    def grid(self) -> dict[tuple[str, str], dict]:
        return {(c.algorithm, c.column): self.summaries.get(c.cell_id) for c in self.cells}


def seed_paths(cell_dir: Path, seed: int) -> dict[str, Path]:
    stem = cell_dir / f"seed_{seed}"
    return {"curve": stem.with_suffix(".csv"),
            "metrics": cell_dir / f"seed_{seed}.metrics.json",
            "events": cell_dir / f"seed_{seed}.events.csv",
            "checkpoint": stem.with_suffix(".ckpt")}


def _is_complete(paths: dict[str, Path], fingerprint: str) -> bool:
    if not (paths["curve"].exists() and paths["metrics"].exists()):
        return False
    try:
        return json.loads(paths["metrics"].read_text()).get("fingerprint") == fingerprint
    except (OSError, ValueError):
        return False


def run_training(config: ExperimentConfig, seed: int, cell_dir: str | Path,
                 resume: bool = False) -> RunRecord:
    """Train one seed and write its curve, metrics, event log and checkpoint."""
    cell_dir = Path(cell_dir)
    try:
        cell_dir.mkdir(parents=True, exist_ok=True)
    except OSError as exc:
        raise OSError(f"cannot create run directory {cell_dir}: {exc}") from exc
    paths = seed_paths(cell_dir, seed)
    fp = config.fingerprint()
    if resume and _is_complete(paths, fp):
        return read_record(paths["curve"])
    record, agent = train(config.env_spec, config.agent, seed, config.eval,
                          fingerprint=fp, master_seed=config.master_seed,
                          event_log=paths["events"])
    write_record(record, paths["curve"])
    save_checkpoint(paths["checkpoint"], agent.networks())
    return record


def _run_cell_seed(args) -> tuple[str, int, str | None]:
    """Worker entry point; the config travels as text so workers share nothing."""
    cell_id, cfg_text, seed, cell_dir, resume = args
    try:
        run_training(parse_config_text(cfg_text), seed, cell_dir, resume)
        return cell_id, seed, None
    except Exception:  # recorded per cell, the sweep continues
        return cell_id, seed, traceback.format_exc()


def code_version() -> str:
    try:
        rev = subprocess.run(["git", "rev-parse", "--short", "HEAD"], capture_output=True,
                             text=True, cwd=Path(__file__).parent, timeout=5)
        if rev.returncode == 0:
            return f"{__version__}+{rev.stdout.strip()}"
    except (OSError, subprocess.SubprocessError):
        pass
    return __version__


def arch_cells(config: ExperimentConfig) -> list[Cell]:
    if not config.sweep.architectures:
        raise ConfigError("architecture sweep needs [sweep] architectures")
    algos = config.sweep.algorithms or (config.agent.algorithm,)
    cells = []
    for algo in algos:
        for hidden in config.sweep.architectures:
            cfg = with_hidden(with_algorithm(config, algo), hidden)
            col = format_hidden(hidden)
            cells.append(Cell(f"{algo}__{col}", algo, col, cfg))
    return cells


def variant_label(parameter: str, factor: float) -> str:
    return f"{parameter} x{factor:g}"


def env_cells(config: ExperimentConfig) -> list[Cell]:
    perturbations = config.sweep.perturbations or tuple(SIX_PERTURBATIONS)
    algos = config.sweep.algorithms or (config.agent.algorithm,)
    cells = []
    for algo in algos:
        for parameter, factor in perturbations:
            cfg = with_perturbation(with_algorithm(config, algo), parameter, factor)
            label = variant_label(parameter, factor)
            cells.append(Cell(f"{algo}__{parameter}-x{factor:g}", algo, label, cfg))
    return cells


def run_cells(kind: str, cells: list[Cell], config: ExperimentConfig, out_dir: str | Path,
              jobs: int = 1, resume: bool = False, seeds=None) -> SweepResult:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    seeds = list(seeds if seeds is not None else config.seeds)
    start = time.time()
    tasks = []
    for cell in cells:
        cell_dir = out / "cells" / cell.cell_id
        cell_dir.mkdir(parents=True, exist_ok=True)
        text = dump_config(replace(cell.config, seeds=tuple(seeds)))
        (cell_dir / "config.ini").write_text(text)
        for seed in seeds:
            tasks.append((cell.cell_id, text, seed, str(cell_dir), resume))

    result = SweepResult(kind, out, cells)
    manifest = out / "manifest.jsonl"

    def record(outcome):
        cell_id, seed, err = outcome
        entry = {"cell": cell_id, "seed": seed, "status": "ok" if err is None else "error"}
        if err is not None:
            result.failures[f"{cell_id}/seed_{seed}"] = err
            log.error("cell %s seed %s failed:\n%s", cell_id, seed, err)
        # only this (parent) process appends to the manifest
        with open(manifest, "a") as fh:
            fh.write(json.dumps(entry, sort_keys=True) + "\n")

    if jobs <= 1:
        for t in tasks:
            record(_run_cell_seed(t))
    else:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for outcome in pool.map(_run_cell_seed, tasks):
                record(outcome)

    result.provenance = {"kind": kind, "config_hash": config.provenance_hash(),
                         "code_version": code_version(),
                         "wall_clock_seconds": round(time.time() - start, 3),
                         "seeds": seeds, "cells": [c.cell_id for c in cells]}
    (out / "provenance.json").write_text(json.dumps(result.provenance, indent=2) + "\n")
    summarize(result)
    return result


def run_arch_sweep(config: ExperimentConfig, out_dir=None, jobs: int = 1, resume: bool = False,
                   seeds=None) -> SweepResult:
    return run_cells("arch", arch_cells(config), config,
                     out_dir or config.resolved_output(), jobs, resume, seeds)


def run_env_sweep(config: ExperimentConfig, out_dir=None, jobs: int = 1, resume: bool = False,
                  seeds=None) -> SweepResult:
    return run_cells("env", env_cells(config), config,
                     out_dir or config.resolved_output(), jobs, resume, seeds)


def load_cell_records(cell_dir: Path) -> list[RunRecord]:
    return [read_record(p) for p in sorted(cell_dir.glob("seed_*.csv"))
            if not p.name.endswith(".events.csv")]


def summarize(result: SweepResult) -> None:
    """Recompute every summary from the per-seed CSVs and write table + curves."""
    for cell in result.cells:
        records = load_cell_records(result.out_dir / "cells" / cell.cell_id)
        if records:
            result.summaries[cell.cell_id] = aggregate(records)
            write_mean_curve(records, result.out_dir / "curves" / f"{cell.cell_id}.csv")
    write_table(result)


def aggregate_dir(out_dir: str | Path) -> list[dict]:
    """Rebuild table.csv for every cell directory found under ``out_dir``."""
    out = Path(out_dir)
    prov_path = out / "provenance.json"
    prov = json.loads(prov_path.read_text()) if prov_path.exists() else {}
    kind = prov.get("kind", "")
    # sweep order first, then any extra cell directories alphabetically
    order = {name: i for i, name in enumerate(prov.get("cells", []))}
    dirs = sorted((out / "cells").iterdir(), key=lambda d: (order.get(d.name, len(order)), d.name))
    cells = []
    for cell_dir in dirs:
        cfg_path = cell_dir / "config.ini"
        if not cfg_path.exists():
            continue
        algo, _, column = cell_dir.name.partition("__")
        if "-x" in column:
            p, _, f = column.partition("-x")
            column = variant_label(p, float(f))
        cells.append(Cell(cell_dir.name, algo, column, parse_config_text(cfg_path.read_text())))
    result = SweepResult(kind, out, cells)
    summarize(result)
    return read_table(out / "table.csv")


def write_mean_curve(records: list[RunRecord], path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    steps = [p.training_step for p in records[0].points]
    rows = []
    for i, s in enumerate(steps):
        ret = [r.points[i].mc_return_discounted for r in records if i < len(r.points)]
        est = [r.points[i].critic_estimate for r in records if i < len(r.points)]
        rows.append([s, repr(float(np.mean(ret))), repr(float(np.std(ret))),
                     repr(float(np.mean(est))), repr(float(np.std(est))), len(ret)])
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["step", "return_mean", "return_std", "critic_mean", "critic_std", "num_runs"])
        w.writerows(rows)


def write_table(result: SweepResult) -> None:
    rows = []
    for cell in result.cells:
        summ = result.summaries.get(cell.cell_id)
        for metric, scale in METRIC_ROWS:
            ms = summ.get(metric) if summ else None
            rows.append([cell.config.env_name, result.kind, cell.algorithm, cell.column, metric,
                         "" if ms is None else repr(ms[0] / scale),
                         "" if ms is None else repr(ms[1] / scale),
                         "" if summ is None else repr(summ["solve_rate"]),
                         0 if summ is None else summ["num_runs"]])
    with open(result.out_dir / "table.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(TABLE_COLUMNS)
        w.writerows(rows)


def read_table(path: str | Path) -> list[dict]:
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))
