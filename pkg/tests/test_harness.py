import csv
import json
from dataclasses import replace
from pathlib import Path

import pytest

from reliable_pi.cli import main
from reliable_pi.config import (
    ConfigError,
    dump_config,
    parse_config_text,
    parse_seeds,
    with_algorithm,
)
from reliable_pi.evalbench import aggregate, read_record
from reliable_pi.harness import (
    TABLE_COLUMNS,
    aggregate_dir,
    load_cell_records,
    read_table,
    run_arch_sweep,
    run_env_sweep,
    run_training,
)
from reliable_pi.plots import emit_plots

TINY = """
[environment]
name = cartpole
[agent]
algorithm = rpi_dqn
hidden = 8-8
total_steps = 600
learning_starts = 200
[eval]
every = 200
rollouts = 4
[run]
seeds = 0
"""


def tiny(extra: str = "", **kw):
    cfg = parse_config_text(TINY + extra)
    return replace(cfg, **kw) if kw else cfg


def test_config_roundtrip_and_strictness():
    cfg = parse_config_text(TINY + "[rpi]\nc = 0.2\n[sweep]\narchitectures = 8-8, 16-16\n")
    assert cfg.agent.rpi.c == 0.2 and cfg.sweep.architectures == ((8, 8), (16, 16))
    again = parse_config_text(dump_config(cfg))
    assert again == cfg
    with pytest.raises(ConfigError, match="lr_critc"):
        parse_config_text(TINY.replace("hidden = 8-8", "lr_critc = 0.1"))
    with pytest.raises(ConfigError, match="section"):
        parse_config_text(TINY + "[extras]\nx = 1\n")
    with pytest.raises(ConfigError):
        parse_config_text(TINY.replace("rpi_dqn", "td3"))


def test_parse_seeds():
    assert parse_seeds("0-3,7") == [0, 1, 2, 3, 7]
    with pytest.raises(ConfigError):
        parse_seeds(" , ")


def test_fingerprint_changes_with_any_field():
    cfg = tiny()
    assert cfg.fingerprint() == tiny().fingerprint()
    assert cfg.fingerprint() != replace(cfg, master_seed=1).fingerprint()
    assert cfg.provenance_hash() != replace(cfg, seeds=(0, 1)).provenance_hash()
    assert cfg.fingerprint() != with_algorithm(cfg, "dqn").fingerprint()


def test_zero_steps_single_point(tmp_path):
    cfg = tiny()
    cfg = replace(cfg, agent=replace(cfg.agent, total_steps=0))
    rec = run_training(cfg, 0, tmp_path)
    assert [p.training_step for p in rec.points] == [0]


def test_run_training_deterministic(tmp_path):
    cfg = tiny()
    run_training(cfg, 3, tmp_path / "a")
    run_training(cfg, 3, tmp_path / "b")
    for name in ("seed_3.csv", "seed_3.metrics.json", "seed_3.events.csv", "seed_3.ckpt"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_run_training_reports_bad_path(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    with pytest.raises(OSError, match="file"):
        run_training(tiny(), 0, blocker / "sub")


def test_arch_sweep_grid_and_resume(tmp_path):
    cfg = tiny("[sweep]\nalgorithms = rpi_dqn, dqn\narchitectures = 8-8\n")
    res = run_arch_sweep(cfg, tmp_path)
    assert set(res.grid()) == {("rpi_dqn", "8-8"), ("dqn", "8-8")}
    table = read_table(tmp_path / "table.csv")
    assert list(table[0]) == TABLE_COLUMNS and len(table) == 6
    before = {p: p.read_bytes() for p in tmp_path.rglob("seed_*")}
    mtimes = {p: p.stat().st_mtime_ns for p in before}
    run_arch_sweep(cfg, tmp_path, resume=True)
    for p, data in before.items():
        assert p.read_bytes() == data and p.stat().st_mtime_ns == mtimes[p]
    # every table number is recomputable from the per-seed CSVs
    rebuilt = aggregate_dir(tmp_path)
    assert rebuilt == table
    recs = load_cell_records(tmp_path / "cells" / "dqn__8-8")
    fp = aggregate(recs)["final_performance"][0]
    row = next(r for r in table if r["algorithm"] == "dqn" and r["metric"] == "final_performance")
    assert float(row["mean"]) == pytest.approx(fp)


def test_env_sweep_six_cells_and_identity_variant(tmp_path):
    cfg = tiny()
    res = run_env_sweep(cfg, tmp_path / "six")
    assert len(res.cells) == 6
    assert {c.column for c in res.cells} == {f"{p} x{f:g}" for p in ("gravity", "cart_mass", "pole_mass")
                                             for f in (0.5, 2.0)}
    run_env_sweep(tiny("[sweep]\nperturbations = gravity:1.0\n"), tmp_path / "id")
    base = run_training(cfg, 0, tmp_path / "base")
    same = read_record(tmp_path / "id" / "cells" / "rpi_dqn__gravity-x1" / "seed_0.csv")
    assert same.points == base.points


def test_sweep_records_failures_and_continues(tmp_path, monkeypatch):
    import reliable_pi.harness as h

    real = h.run_training

    def flaky(cfg, seed, cell_dir, resume=False):
        if "dqn__" in str(cell_dir) and "rpi" not in str(cell_dir):
            raise RuntimeError("boom")
        return real(cfg, seed, cell_dir, resume)

    monkeypatch.setattr(h, "run_training", flaky)
    res = run_arch_sweep(tiny("[sweep]\nalgorithms = rpi_dqn, dqn\narchitectures = 8-8\n"), tmp_path)
    assert list(res.failures) == ["dqn__8-8/seed_0"]
    assert "rpi_dqn__8-8" in res.summaries
    lines = [json.loads(l) for l in (tmp_path / "manifest.jsonl").read_text().splitlines()]
    assert {l["status"] for l in lines} == {"ok", "error"}


def test_plots(tmp_path):
    run_arch_sweep(tiny("[sweep]\narchitectures = 8-8, 16-16\n"), tmp_path)
    (tmp_path / "cells" / "rpi_dqn__32-32").mkdir()
    path = emit_plots(tmp_path, max_return=99.34)
    svg = path.read_text()
    assert svg.startswith("<?xml") and "missing" in svg
    assert emit_plots(tmp_path, max_return=99.34).read_text() == svg


def test_cli_end_to_end(tmp_path, capsys):
    cfg_path = tmp_path / "c.ini"
    cfg_path.write_text(TINY)
    out = tmp_path / "out"
    assert main(["train", "--config", str(cfg_path), "--out", str(out)]) == 0
    ckpt = out / "cells" / "rpi_dqn__8-8" / "seed_0.ckpt"
    assert main(["eval", "--config", str(cfg_path), "--checkpoint", str(ckpt), "--rollouts", "3"]) == 0
    assert main(["aggregate", "--out", str(out)]) == 0
    assert main(["plot", "--out", str(out)]) == 0
    assert (out / "plots" / "curves.svg").exists()
    traj = tmp_path / "t.csv"
    assert main(["physics-check", "--out", str(traj)]) == 0
    assert traj.read_text().splitlines()[0] == "t,x,x_dot,theta,theta_dot"
    assert main(["train", "--config", str(tmp_path / "nope.ini")]) == 2


def test_cli_rpi_exact(tmp_path):
    import numpy as np

    from reliable_pi.mdp import random_mdp, save_mdp

    mdp_path = tmp_path / "m.txt"
    save_mdp(random_mdp(4, 2, np.random.default_rng(0), 0.9), mdp_path)
    out = tmp_path / "rpi.csv"
    assert main(["rpi-exact", "--mdp", str(mdp_path), "--out", str(out)]) == 0
    rows = list(csv.reader(l for l in out.read_text().splitlines() if not l.startswith("#")))
    assert rows[0] == ["k", "f_inf_norm", "delta_min", "delta_max", "max_f_minus_q", "policy"]
    assert all(float(r[4]) <= 1e-8 for r in rows[1:])
    feats = tmp_path / "phi.txt"
    np.savetxt(feats, np.hstack([np.ones((8, 1)), np.random.default_rng(1).normal(size=(8, 2))]))
    assert main(["rpi-exact", "--mdp", str(mdp_path), "--features", str(feats), "--out", str(out)]) == 0


def test_cli_rpi_exact_golden(tmp_path):
    golden = Path(__file__).parent / "golden"
    out = tmp_path / "it.csv"
    assert main(["rpi-exact", "--mdp", str(golden / "chain.mdp"), "--out", str(out)]) == 0
    assert out.read_bytes() == (golden / "chain_rpi_exact.csv").read_bytes()


def test_cli_rpi_exact_bad_inputs(tmp_path, capsys):
    golden = Path(__file__).parent / "golden"
    bad = tmp_path / "phi.txt"
    bad.write_text("1\n1\n1\n")
    assert main(["rpi-exact", "--mdp", str(golden / "chain.mdp"), "--features", str(bad)]) == 2
    assert "S*A = 4" in capsys.readouterr().err
    assert main(["rpi-exact", "--mdp", str(bad)]) == 2
