"""Cart-pole dynamics with discrete (CartPole-v1 style) and continuous actions.

The scalar ``step`` drives training; ``step_batch`` advances many independent
copies at once for evaluation rollouts.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field, replace
from typing import Iterable

import numpy as np

PERTURBABLE = ("gravity", "cart_mass", "pole_mass")


@dataclass(frozen=True)
class PhysicsParams:
    gravity: float = 9.8
    cart_mass: float = 1.0
    pole_mass: float = 0.1
    pole_half_length: float = 0.5
    force_mag: float = 10.0
    timestep: float = 0.02

    def __post_init__(self):
        for name, value in self.__dict__.items():
            if not (value > 0 and math.isfinite(value)):
                raise ValueError(f"physics parameter {name} must be positive, got {value}")


@dataclass(frozen=True)
class EnvSpec:
    kind: str = "cartpole_discrete"
    params: PhysicsParams = field(default_factory=PhysicsParams)
    theta_threshold: float = 12 * 2 * math.pi / 360
    x_threshold: float = 2.4
    max_episode_steps: int = 500

    def __post_init__(self):
        if self.kind not in ("cartpole_discrete", "cartpole_continuous"):
            raise ValueError(f"unknown environment kind {self.kind!r}")
        if self.theta_threshold <= 0 or self.x_threshold <= 0:
            raise ValueError("thresholds must be positive")
        if self.max_episode_steps < 1:
            raise ValueError("max_episode_steps must be >= 1")

    @property
    def discrete(self) -> bool:
        return self.kind == "cartpole_discrete"

    @property
    def obs_dim(self) -> int:
        return 4

    @property
    def num_actions(self) -> int:
        """Action count for discrete specs, action dimension for continuous ones."""
        return 2 if self.discrete else 1

    def max_discounted_return(self, gamma: float) -> float:
        return (1.0 - gamma ** self.max_episode_steps) / (1.0 - gamma)


def cartpole_spec(params: PhysicsParams | None = None) -> EnvSpec:
    return EnvSpec("cartpole_discrete", params or PhysicsParams(),
                   theta_threshold=12 * 2 * math.pi / 360, x_threshold=2.4,
                   max_episode_steps=500)


def pendulum_spec(params: PhysicsParams | None = None) -> EnvSpec:
    """Continuous-action stand-in for InvertedPendulum-v5."""
    return EnvSpec("cartpole_continuous", params or PhysicsParams(),
                   theta_threshold=0.2, x_threshold=2.4, max_episode_steps=1000)


ENV_FACTORIES = {"cartpole": cartpole_spec, "pendulum": pendulum_spec}


@dataclass(frozen=True)
class EnvState:
    x: float
    x_dot: float
    theta: float
    theta_dot: float
    steps_elapsed: int = 0

    def __post_init__(self):
        if not all(math.isfinite(v) for v in (self.x, self.x_dot, self.theta, self.theta_dot)):
            raise ValueError(f"non-finite state {self}")

    @property
    def obs(self) -> np.ndarray:
        return np.array([self.x, self.x_dot, self.theta, self.theta_dot])


@dataclass(frozen=True)
class Transition:
    state: np.ndarray
    action: int | float
    reward: float
    next_state: np.ndarray
    terminated: bool
    truncated: bool


def reset(spec: EnvSpec, rng: np.random.Generator) -> EnvState:
    x, x_dot, theta, theta_dot = rng.uniform(-0.05, 0.05, size=4)
    return EnvState(float(x), float(x_dot), float(theta), float(theta_dot), 0)


def _force(spec: EnvSpec, action) -> float:
    if spec.discrete:
        if isinstance(action, (bool, np.bool_)) or action not in (0, 1):
            raise ValueError(f"discrete action must be 0 or 1, got {action!r}")
        return spec.params.force_mag if action == 1 else -spec.params.force_mag
    a = float(np.asarray(action).reshape(-1)[0]) if np.ndim(action) else float(action)
    if not -1.0 <= a <= 1.0:
        raise ValueError(f"continuous action must lie in [-1, 1], got {a}")
    return a * spec.params.force_mag


def is_failed(spec: EnvSpec, x: float, theta: float) -> bool:
    return abs(x) > spec.x_threshold or abs(theta) > spec.theta_threshold


def step_state(spec: EnvSpec, state: EnvState, action) -> tuple[EnvState, bool, bool]:
    if state.steps_elapsed >= spec.max_episode_steps or is_failed(spec, state.x, state.theta):
        raise ValueError("cannot step a terminal state")
    p = spec.params
    force = _force(spec, action)
    total_mass = p.cart_mass + p.pole_mass
    pm_l = p.pole_mass * p.pole_half_length
    cos_t = math.cos(state.theta)
    sin_t = math.sin(state.theta)
    temp = (force + pm_l * state.theta_dot * state.theta_dot * sin_t) / total_mass
    theta_acc = (p.gravity * sin_t - cos_t * temp) / (
        p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t * cos_t / total_mass)
    )
    x_acc = temp - pm_l * theta_acc * cos_t / total_mass
    tau = p.timestep
    nxt = EnvState(
        state.x + tau * state.x_dot,
        state.x_dot + tau * x_acc,
        state.theta + tau * state.theta_dot,
        state.theta_dot + tau * theta_acc,
        state.steps_elapsed + 1,
    )
    terminated = is_failed(spec, nxt.x, nxt.theta)
    truncated = (not terminated) and nxt.steps_elapsed >= spec.max_episode_steps
    return nxt, terminated, truncated


def step(spec: EnvSpec, state: EnvState, action) -> tuple[Transition, EnvState]:
    """Advance one timestep; returns the transition record and the new state."""
    nxt, terminated, truncated = step_state(spec, state, action)
    tr = Transition(state.obs, action, 1.0, nxt.obs, terminated, truncated)
    return tr, nxt


def step_batch(spec: EnvSpec, states: np.ndarray, actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised dynamics for an (n, 4) state array; returns (next_states, failed)."""
    p = spec.params
    actions = np.asarray(actions)
    if spec.discrete:
        force = np.where(actions.reshape(-1) == 1, p.force_mag, -p.force_mag)
    else:
        force = np.clip(actions.reshape(-1), -1.0, 1.0) * p.force_mag
    x, x_dot, theta, theta_dot = states.T
    total_mass = p.cart_mass + p.pole_mass
    pm_l = p.pole_mass * p.pole_half_length
    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    temp = (force + pm_l * theta_dot ** 2 * sin_t) / total_mass
    theta_acc = (p.gravity * sin_t - cos_t * temp) / (
        p.pole_half_length * (4.0 / 3.0 - p.pole_mass * cos_t ** 2 / total_mass)
    )
    x_acc = temp - pm_l * theta_acc * cos_t / total_mass
    tau = p.timestep
    nxt = np.stack([x + tau * x_dot, x_dot + tau * x_acc,
                    theta + tau * theta_dot, theta_dot + tau * theta_acc], axis=1)
    failed = (np.abs(nxt[:, 0]) > spec.x_threshold) | (np.abs(nxt[:, 2]) > spec.theta_threshold)
    return nxt, failed


def perturbed_spec(base: EnvSpec, parameter: str, factor: float) -> EnvSpec:
    if parameter not in PERTURBABLE:
        raise ValueError(f"cannot perturb {parameter!r}; choose from {PERTURBABLE}")
    if not factor > 0:
        raise ValueError("factor must be positive")
    value = getattr(base.params, parameter) * factor
    return replace(base, params=replace(base.params, **{parameter: value}))


def mechanical_energy(spec: EnvSpec, state: EnvState) -> float:
    """Kinetic plus potential energy of the cart and a uniform rod."""
    p = spec.params
    m, l = p.pole_mass, p.pole_half_length
    kinetic = (0.5 * (p.cart_mass + m) * state.x_dot ** 2
               + m * l * state.x_dot * state.theta_dot * math.cos(state.theta)
               + (2.0 / 3.0) * m * l * l * state.theta_dot ** 2)
    potential = m * p.gravity * l * math.cos(state.theta)
    return kinetic + potential


def physics_trajectory(spec: EnvSpec, start: EnvState, actions: Iterable) -> list[EnvState]:
    states = [start]
    for a in actions:
        nxt, terminated, truncated = step_state(spec, states[-1], a)
        states.append(nxt)
        if terminated or truncated:
            break
    return states


def write_trajectory_csv(path, states: list[EnvState]) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "x_dot", "theta", "theta_dot"])
        for s in states:
            w.writerow([s.steps_elapsed, repr(s.x), repr(s.x_dot), repr(s.theta), repr(s.theta_dot)])
