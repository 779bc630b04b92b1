"""Experiment configuration: INI sections with strict key checking.

Schema (every key optional unless noted)::

    [environment]  name = cartpole | pendulum;  gravity, cart_mass, pole_mass,
                   pole_half_length, force_mag, timestep
    [agent]        algorithm (required), hidden = 64-64, actor_hidden, lr_critic,
                   lr_actor, batch_size, buffer_capacity, learning_starts,
                   target_update = hard | polyak, target_period, tau, eps_start,
                   eps_end, eps_decay_steps, exploration_sigma, policy_noise,
                   noise_clip, policy_delay, discount, total_steps, rpi_double_target
    [rpi]          c, lambda1, lambda2, q_min
    [eval]         every, rollouts, solve_threshold
    [run]          seeds = 0-9 | 0,3,5;  master_seed;  output_dir
    [sweep]        algorithms = rpi_dqn, dqn;  architectures = 8-8, 16-16;
                   perturbations = gravity:0.5, cart_mass:2.0
"""

from __future__ import annotations

import configparser
import hashlib
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

from .agents import ALGORITHMS, AgentConfig, RpiLossParams
from .envs import ENV_FACTORIES, PERTURBABLE, EnvSpec, PhysicsParams, perturbed_spec
from .training import EvalConfig

OUTPUT_ROOT_ENV = "RPI_OUTPUT_ROOT"

CARTPOLE_ARCHITECTURES = [(8, 8), (16, 16), (32, 32), (64, 64), (128, 128), (256, 256)]
PENDULUM_ARCHITECTURES = [(32, 32), (64, 64), (128, 128), (256, 256), (400, 300), (512, 512)]
SIX_PERTURBATIONS = [(p, f) for f in (0.5, 2.0) for p in PERTURBABLE]


class ConfigError(ValueError):
    pass


def parse_hidden(text: str) -> tuple[int, int]:
    parts = text.strip().split("-")
    if len(parts) != 2:
        raise ConfigError(f"architecture {text!r} must look like 64-64")
    return int(parts[0]), int(parts[1])


def format_hidden(hidden) -> str:
    return f"{hidden[0]}-{hidden[1]}"


def parse_seeds(text: str) -> list[int]:
    """'0-9' or '0,2,5' or a mix like '0-2,7'."""
    seeds: list[int] = []
    for chunk in text.split(","):
        chunk = chunk.strip()
        if not chunk:
            continue
        if "-" in chunk:
            lo, hi = chunk.split("-")
            seeds.extend(range(int(lo), int(hi) + 1))
        else:
            seeds.append(int(chunk))
    if not seeds:
        raise ConfigError("seed list is empty")
    return seeds


def parse_perturbation(text: str) -> tuple[str, float]:
    name, _, factor = text.strip().partition(":")
    if name not in PERTURBABLE or not factor:
        raise ConfigError(f"perturbation {text!r} must look like gravity:2.0")
    return name, float(factor)


@dataclass(frozen=True)
class SweepConfig:
    algorithms: tuple[str, ...] = ()
    architectures: tuple[tuple[int, int], ...] = ()
    perturbations: tuple[tuple[str, float], ...] = ()


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str = "cartpole"
    physics: PhysicsParams = field(default_factory=PhysicsParams)
    agent: AgentConfig = field(default_factory=AgentConfig)
    seeds: tuple[int, ...] = tuple(range(10))
    master_seed: int = 0
    eval: EvalConfig = field(default_factory=EvalConfig)
    output_dir: str = ""
    sweep: SweepConfig = field(default_factory=SweepConfig)

    def __post_init__(self):
        if self.env_name not in ENV_FACTORIES:
            raise ConfigError(f"unknown environment {self.env_name!r}")
        if not self.seeds:
            raise ConfigError("seeds must be non-empty")

    @property
    def env_spec(self) -> EnvSpec:
        return ENV_FACTORIES[self.env_name](self.physics)

    def resolved_output(self, override: str | None = None) -> Path:
        return Path(override or self.output_dir or os.environ.get(OUTPUT_ROOT_ENV, "runs"))

    def to_dict(self) -> dict:
        return json.loads(json.dumps(asdict(self)))

    def fingerprint(self) -> str:
        """Hash of everything that determines a single run's result, seeds excluded."""
        d = self.to_dict()
        d = {k: d[k] for k in ("env_name", "physics", "agent", "master_seed", "eval")}
        return _digest(d)

    def provenance_hash(self) -> str:
        return _digest(self.to_dict())


def _digest(obj) -> str:
    return hashlib.sha256(json.dumps(obj, sort_keys=True).encode()).hexdigest()[:16]


_AGENT_FIELDS = {f.name: f for f in fields(AgentConfig) if f.name not in ("rpi", "algorithm")}
_SCHEMA = {
    "environment": {"name"} | {f.name for f in fields(PhysicsParams)},
    "agent": {"algorithm"} | set(_AGENT_FIELDS),
    "rpi": {f.name for f in fields(RpiLossParams)},
    "eval": {f.name for f in fields(EvalConfig)},
    "run": {"seeds", "master_seed", "output_dir"},
    "sweep": {"algorithms", "architectures", "perturbations"},
}


def _coerce(name: str, raw: str, typ):
    try:
        if typ in (bool, "bool"):
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw.strip()
    except ValueError as exc:
        raise ConfigError(f"bad value for {name}: {raw!r}") from exc


_AGENT_TYPES = {
    "hidden": "hidden", "actor_hidden": "hidden", "lr_critic": float, "lr_actor": float,
    "batch_size": int, "buffer_capacity": int, "learning_starts": int, "target_update": str,
    "target_period": int, "tau": float, "eps_start": float, "eps_end": float,
    "eps_decay_steps": int, "exploration_sigma": float, "policy_noise": float,
    "noise_clip": float, "policy_delay": int, "discount": float, "total_steps": int,
    "rpi_double_target": bool,
}


def parse_config_text(text: str, source: str = "<config>") -> ExperimentConfig:
    cp = configparser.ConfigParser(interpolation=None)
    cp.optionxform = str
    try:
        cp.read_string(text, source=source)
    except configparser.Error as exc:
        raise ConfigError(str(exc)) from exc
    for section in cp.sections():
        if section not in _SCHEMA:
            raise ConfigError(f"{source}: unknown section [{section}]")
        unknown = set(cp[section]) - _SCHEMA[section]
        if unknown:
            raise ConfigError(f"{source}: unknown key(s) in [{section}]: {sorted(unknown)}")

    def sect(name):
        return cp[name] if cp.has_section(name) else {}

    env = sect("environment")
    env_name = env.get("name", "cartpole").strip()
    physics = PhysicsParams(**{k: float(v) for k, v in env.items() if k != "name"})

    ag = sect("agent")
    if "algorithm" not in ag:
        raise ConfigError(f"{source}: [agent] algorithm is required")
    algorithm = ag["algorithm"].strip()
    if algorithm not in ALGORITHMS:
        raise ConfigError(f"{source}: unknown algorithm {algorithm!r}")
    overrides = {}
    for key, raw in ag.items():
        if key == "algorithm":
            continue
        typ = _AGENT_TYPES[key]
        overrides[key] = parse_hidden(raw) if typ == "hidden" else _coerce(key, raw, typ)
    rpi_sect = sect("rpi")
    if rpi_sect:
        if not algorithm.startswith("rpi"):
            raise ConfigError(f"{source}: [rpi] given for non-RPI algorithm {algorithm}")
        overrides["rpi"] = RpiLossParams(**{k: float(v) for k, v in rpi_sect.items()})
    try:
        agent = AgentConfig.default_for(algorithm, **overrides)
    except ValueError as exc:
        raise ConfigError(f"{source}: {exc}") from exc

    ev = sect("eval")
    eval_cfg = EvalConfig(
        every=int(ev.get("every", EvalConfig.every)),
        rollouts=int(ev.get("rollouts", EvalConfig.rollouts)),
        solve_threshold=float(ev["solve_threshold"]) if "solve_threshold" in ev else None,
    )
    run = sect("run")
    seeds = tuple(parse_seeds(run["seeds"])) if "seeds" in run else tuple(range(10))
    sw = sect("sweep")
    sweep = SweepConfig(
        algorithms=tuple(a.strip() for a in sw.get("algorithms", "").split(",") if a.strip()),
        architectures=tuple(parse_hidden(a) for a in sw.get("architectures", "").split(",") if a.strip()),
        perturbations=tuple(parse_perturbation(p) for p in sw.get("perturbations", "").split(",") if p.strip()),
    )
    for a in sweep.algorithms:
        if a not in ALGORITHMS:
            raise ConfigError(f"{source}: unknown sweep algorithm {a!r}")
    cfg = ExperimentConfig(env_name, physics, agent, seeds, int(run.get("master_seed", 0)),
                           eval_cfg, run.get("output_dir", ""), sweep)
    if agent.continuous == cfg.env_spec.discrete:
        raise ConfigError(f"{source}: {algorithm} does not match environment {env_name}")
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    return parse_config_text(Path(path).read_text(), str(path))


def dump_config(cfg: ExperimentConfig) -> str:
    """Inverse of ``parse_config_text`` (round-trips every field)."""
    defaults = PhysicsParams()
    lines = ["[environment]", f"name = {cfg.env_name}"]
    for f in fields(PhysicsParams):
        v = getattr(cfg.physics, f.name)
        if v != getattr(defaults, f.name):
            lines.append(f"{f.name} = {v!r}")
    a = cfg.agent
    lines += ["", "[agent]", f"algorithm = {a.algorithm}"]
    for name in _AGENT_FIELDS:
        v = getattr(a, name)
        if v is None:
            continue
        lines.append(f"{name} = {format_hidden(v) if 'hidden' in name else v}")
    if a.rpi is not None:
        lines += ["", "[rpi]"] + [f"{f.name} = {getattr(a.rpi, f.name)!r}" for f in fields(RpiLossParams)]
    lines += ["", "[eval]", f"every = {cfg.eval.every}", f"rollouts = {cfg.eval.rollouts}"]
    if cfg.eval.solve_threshold is not None:
        lines.append(f"solve_threshold = {cfg.eval.solve_threshold!r}")
    lines += ["", "[run]", "seeds = " + ",".join(str(s) for s in cfg.seeds),
              f"master_seed = {cfg.master_seed}"]
    if cfg.output_dir:
        lines.append(f"output_dir = {cfg.output_dir}")
    sw = cfg.sweep
    if sw.algorithms or sw.architectures or sw.perturbations:
        lines += ["", "[sweep]"]
        if sw.algorithms:
            lines.append("algorithms = " + ", ".join(sw.algorithms))
        if sw.architectures:
            lines.append("architectures = " + ", ".join(format_hidden(h) for h in sw.architectures))
        if sw.perturbations:
            lines.append("perturbations = " + ", ".join(f"{p}:{f!r}" for p, f in sw.perturbations))
    return "\n".join(lines) + "\n"


def with_algorithm(cfg: ExperimentConfig, algorithm: str) -> ExperimentConfig:
    """Same training budget and schedule knobs, host-family defaults for the rest."""
    if algorithm == cfg.agent.algorithm:
        return cfg
    a = cfg.agent
    keep = {k: getattr(a, k) for k in _AGENT_FIELDS if k not in ("target_update", "target_period", "tau")}
    if (algorithm in ("ddpg", "td3", "rpi_ddpg")) == a.continuous:
        keep.update(target_update=a.target_update, target_period=a.target_period, tau=a.tau)
    if algorithm.startswith("rpi") and a.rpi is not None:
        keep["rpi"] = a.rpi
    return replace(cfg, agent=AgentConfig.default_for(algorithm, **keep))


def with_hidden(cfg: ExperimentConfig, hidden) -> ExperimentConfig:
    return replace(cfg, agent=replace(cfg.agent, hidden=tuple(hidden),
                                      actor_hidden=tuple(hidden) if cfg.agent.actor_hidden else None))


def with_perturbation(cfg: ExperimentConfig, parameter: str, factor: float) -> ExperimentConfig:
    base = ENV_FACTORIES[cfg.env_name](cfg.physics)
    return replace(cfg, physics=perturbed_spec(base, parameter, factor).params)
