"""Single-run training loop: environment x agent x periodic evaluation."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .agents import AgentConfig, make_agent
from .envs import EnvSpec, reset, step_state
from .evalbench import EvalPoint, RunRecord, default_solve_threshold, evaluate

EVENT_COLUMNS = ["step", "episode_return", "loss", "exploration", "target_syncs"]


@dataclass(frozen=True)
class EvalConfig:
    every: int = 2_000
    rollouts: int = 100
    solve_threshold: float | None = None  # None -> 95% of the max discounted return


def run_rngs(seed: int, master_seed: int = 0) -> dict[str, np.random.Generator]:
    """Independent generators for one run, derived from (master seed, seed) only.

    Cells of a sweep reuse the same streams per seed, so an unperturbed
    variant reproduces the baseline run exactly.
    """
    children = np.random.SeedSequence([int(master_seed), int(seed)]).spawn(3)
    return {name: np.random.default_rng(ss)
            for name, ss in zip(("agent", "env", "eval"), children)}


def train(env: EnvSpec, agent_cfg: AgentConfig, seed: int, eval_cfg: EvalConfig = EvalConfig(),
          fingerprint: str = "", master_seed: int = 0, event_log: str | Path | None = None,
          progress=None):
    """Train one agent; returns (RunRecord, agent)."""
    if agent_cfg.continuous == env.discrete:
        raise ValueError(f"{agent_cfg.algorithm} cannot drive {env.kind}")
    rngs = run_rngs(seed, master_seed)
    agent = make_agent(agent_cfg, env.obs_dim, env.num_actions, rngs["agent"])
    threshold = eval_cfg.solve_threshold
    if threshold is None:
        threshold = default_solve_threshold(env, agent_cfg.discount)
    record = RunRecord(fingerprint, seed, agent_cfg.total_steps, solve_threshold=threshold)
    eval_seed = int(rngs["eval"].integers(2**63))

    def do_eval(step: int) -> EvalPoint:
        # every evaluation sees the same start states
        point = evaluate(agent, env, eval_cfg.rollouts, agent_cfg.discount,
                         np.random.default_rng(eval_seed), training_step=step)
        record.add(point)
        if progress is not None:
            progress(point)
        return point

    log_fh = open(event_log, "w", newline="") if event_log else None
    writer = csv.writer(log_fh, lineterminator="\n") if log_fh else None
    if writer:
        writer.writerow(EVENT_COLUMNS)
    env_rng = rngs["env"]
    try:
        do_eval(0)
        state = reset(env, env_rng)
        ep_return = 0.0
        losses: list[float] = []
        syncs_logged = 0
        for t in range(1, agent_cfg.total_steps + 1):
            obs = state.obs
            action = agent.act(obs, explore=True)
            nxt, terminated, truncated = step_state(env, state, action)
            loss = agent.train_step(obs, action, 1.0, nxt.obs, terminated)
            if loss is not None:
                losses.append(loss)
            ep_return += 1.0
            state = nxt
            if terminated or truncated:
                if writer:
                    mean_loss = float(np.mean(losses)) if losses else math.nan
                    writer.writerow([t, ep_return, repr(mean_loss), repr(agent.exploration),
                                     agent.target_syncs - syncs_logged])
                    syncs_logged = agent.target_syncs
                losses.clear()
                state = reset(env, env_rng)
                ep_return = 0.0
            if t % eval_cfg.every == 0 or t == agent_cfg.total_steps:
                do_eval(t)
    except FloatingPointError:
        record.status = "diverged"
    finally:
        if log_fh:
            log_fh.close()
    return record, agent
