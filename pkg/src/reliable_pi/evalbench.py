"""Greedy evaluation rollouts and learning-curve metrics."""

from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .envs import EnvSpec, step_batch

CURVE_COLUMNS = ["step", "return_disc", "return_undisc", "critic_est", "return_std", "rollouts"]


class MetricError(ValueError):
    pass


class AggregationError(ValueError):
    pass


@dataclass(frozen=True)
class EvalPoint:
    training_step: int
    mc_return_discounted: float
    mc_return_undiscounted: float
    critic_estimate: float
    return_std: float
    num_rollouts: int = 1


@dataclass
class RunRecord:
    fingerprint: str
    seed: int
    total_steps: int
    points: list[EvalPoint] = field(default_factory=list)
    solve_threshold: float | None = None
    status: str = "ok"

    def add(self, point: EvalPoint) -> None:
        if self.points and point.training_step <= self.points[-1].training_step:
            raise ValueError("evaluation points must be strictly increasing in step")
        self.points.append(point)

    @property
    def steps(self) -> np.ndarray:
        return np.array([p.training_step for p in self.points], dtype=np.float64)

    @property
    def returns(self) -> np.ndarray:
        return np.array([p.mc_return_discounted for p in self.points])

    @property
    def estimates(self) -> np.ndarray:
        return np.array([p.critic_estimate for p in self.points])

    def metrics(self) -> dict:
        out = {"auc": None, "final_performance": None, "steps_to_solve": None,
               "violation_rate": None}
        if not self.points:
            return out
        if len(self.points) >= 2 or self.total_steps == 0:
            out["auc"] = auc(self, self.total_steps)
        try:
            out["final_performance"] = final_performance(self)
        except MetricError:
            pass
        if self.solve_threshold is not None:
            out["steps_to_solve"] = steps_to_solve(self, self.solve_threshold)
        out["violation_rate"] = lower_bound_violation_rate(self)
        return out


def evaluate(agent, spec: EnvSpec, num_rollouts: int, gamma: float,
             rng: np.random.Generator, training_step: int = 0) -> EvalPoint:
    """Run ``num_rollouts`` greedy episodes in lockstep."""
    if num_rollouts < 1:
        raise ValueError("num_rollouts must be >= 1")
    states = rng.uniform(-0.05, 0.05, size=(num_rollouts, 4))
    estimate = float(np.mean(agent.critic_estimate(states)))
    alive = np.ones(num_rollouts, dtype=bool)
    disc = np.zeros(num_rollouts)
    undisc = np.zeros(num_rollouts)
    weight = 1.0
    for _ in range(spec.max_episode_steps):
        idx = np.flatnonzero(alive)
        if idx.size == 0:
            break
        actions = agent.greedy_actions(states[idx])
        nxt, failed = step_batch(spec, states[idx], actions)
        disc[idx] += weight
        undisc[idx] += 1.0
        weight *= gamma
        states[idx] = nxt
        alive[idx[failed]] = False
    return EvalPoint(int(training_step), float(disc.mean()), float(undisc.mean()),
                     estimate, float(disc.std()), num_rollouts)


def discounted_return(num_steps: int, gamma: float) -> float:
    """Discounted return of an episode paying 1 per step for ``num_steps`` steps."""
    if gamma == 1.0:
        return float(num_steps)
    return (1.0 - gamma ** num_steps) / (1.0 - gamma)


def final_performance(record: RunRecord) -> float:
    """Mean discounted return over evaluation points in the last 10% of training."""
    cutoff = 0.9 * record.total_steps
    window = [p.mc_return_discounted for p in record.points if p.training_step > cutoff]
    if not window:
        if record.total_steps == 0 and record.points:
            return record.points[-1].mc_return_discounted
        raise MetricError("no evaluation points in the final 10% window")
    return float(np.mean(window))


def auc(record: RunRecord, total_steps: int, scale: float = 1.0) -> float:
    """Trapezoidal area under the discounted-return curve over [0, total_steps].

    The first point is held constant back to step 0 and the last forward to
    ``total_steps``; divide by ``scale`` (e.g. 1e6) for table units.
    """
    if not record.points:
        raise MetricError("auc needs at least one evaluation point")
    xs = list(record.steps)
    ys = list(record.returns)
    if xs[0] > 0:
        xs.insert(0, 0.0)
        ys.insert(0, ys[0])
    if xs[-1] < total_steps:
        xs.append(float(total_steps))
        ys.append(ys[-1])
    keep = [i for i, x in enumerate(xs) if x <= total_steps]
    xs = np.array([xs[i] for i in keep])
    ys = np.array([ys[i] for i in keep])
    area = float(np.sum((xs[1:] - xs[:-1]) * (ys[1:] + ys[:-1]) / 2.0))
    return area / scale


def steps_to_solve(record: RunRecord, threshold: float) -> int | None:
    for p in record.points:
        if p.mc_return_discounted >= threshold:
            return p.training_step
    return None


def lower_bound_violation_rate(record: RunRecord, margin: float = 5.0) -> float:
    """Fraction of evaluation points whose critic estimate exceeds the return by > margin."""
    if not record.points:
        return 0.0
    over = record.estimates > record.returns + margin
    return float(np.mean(over))


def default_solve_threshold(spec: EnvSpec, gamma: float) -> float:
    return 0.95 * spec.max_discounted_return(gamma)


def aggregate(records: list[RunRecord]) -> dict:
    """Mean and population std of each metric across seeds.

    Unsolved runs are reported through ``solve_rate`` and excluded from the
    steps-to-solve mean.
    """
    if not records:
        raise AggregationError("nothing to aggregate")
    prints = {r.fingerprint for r in records}
    if len(prints) > 1:
        raise AggregationError(f"mixed config fingerprints: {sorted(prints)}")
    metrics = [r.metrics() for r in records]
    out: dict = {"fingerprint": records[0].fingerprint, "num_runs": len(records)}
    for key in ("final_performance", "auc", "violation_rate"):
        vals = [m[key] for m in metrics if m[key] is not None]
        out[key] = _mean_std(vals)
    solved = [m["steps_to_solve"] for m in metrics if m["steps_to_solve"] is not None]
    out["steps_to_solve"] = _mean_std(solved)
    out["solve_rate"] = len(solved) / len(records)
    return out


def _mean_std(vals) -> tuple[float, float] | None:
    if not vals:
        return None
    arr = np.asarray(vals, dtype=np.float64)
    return float(arr.mean()), float(arr.std())


def _fmt(v: float) -> str:
    return repr(float(v))


def write_record(record: RunRecord, path: str | Path) -> None:
    """Curve CSV at ``path`` plus a ``.metrics.json`` sidecar."""
    path = Path(path)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CURVE_COLUMNS)
        for p in record.points:
            w.writerow([p.training_step, _fmt(p.mc_return_discounted),
                        _fmt(p.mc_return_undiscounted), _fmt(p.critic_estimate),
                        _fmt(p.return_std), p.num_rollouts])
    sidecar = {
        "fingerprint": record.fingerprint,
        "seed": record.seed,
        "total_steps": record.total_steps,
        "solve_threshold": record.solve_threshold,
        "status": record.status,
        "metrics": record.metrics(),
    }
    metrics_path(path).write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")


def metrics_path(curve_path: str | Path) -> Path:
    curve_path = Path(curve_path)
    return curve_path.with_name(curve_path.stem + ".metrics.json")


def read_record(path: str | Path) -> RunRecord:
    """Rebuild a RunRecord from its curve CSV and sidecar; metrics are recomputed."""
    path = Path(path)
    meta = json.loads(metrics_path(path).read_text())
    rec = RunRecord(meta["fingerprint"], int(meta["seed"]), int(meta["total_steps"]),
                    solve_threshold=meta.get("solve_threshold"),
                    status=meta.get("status", "ok"))
    with open(path, newline="") as fh:
        for row in csv.DictReader(fh):
            rec.add(EvalPoint(int(row["step"]), float(row["return_disc"]),
                              float(row["return_undisc"]), float(row["critic_est"]),
                              float(row["return_std"]), int(row["rollouts"])))
    return rec


def is_finite_point(p: EvalPoint) -> bool:
    return all(math.isfinite(v) for v in (p.mc_return_discounted, p.critic_estimate))
