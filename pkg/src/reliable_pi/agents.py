"""Model-free critics: DQN, Double DQN, RPI-DQN, DDPG, TD3 and RPI-DDPG.

The RPI variants swap the mean squared Bellman error for the penalty loss in
``rpi_critic_loss``; everything else (replay, targets, exploration) is shared
with the host algorithm.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .neural import AdamState, MlpParams, MlpSpec, adam_step, backward, forward, init_params

DISCRETE_ALGOS = ("dqn", "ddqn", "rpi_dqn")
CONTINUOUS_ALGOS = ("ddpg", "td3", "rpi_ddpg")
ALGORITHMS = DISCRETE_ALGOS + CONTINUOUS_ALGOS


@dataclass(frozen=True)
class RpiLossParams:
    c: float = 0.1
    lambda1: float = 1.0
    lambda2: float = 1.0
    q_min: float = 0.0

    def __post_init__(self):
        if not (self.c > 0 and self.lambda1 > 0 and self.lambda2 > 0):
            raise ValueError("c, lambda1 and lambda2 must be positive")


@dataclass(frozen=True)
class AgentConfig:
    algorithm: str = "rpi_dqn"
    hidden: tuple[int, int] = (64, 64)
    actor_hidden: tuple[int, int] | None = None
    lr_critic: float = 1e-3
    lr_actor: float = 1e-3
    batch_size: int = 64
    buffer_capacity: int = 50_000
    learning_starts: int = 1_000
    target_update: str = "hard"  # "hard" (period) or "polyak" (tau)
    target_period: int = 500
    tau: float = 0.005
    eps_start: float = 1.0
    eps_end: float = 0.05
    eps_decay_steps: int = 10_000
    exploration_sigma: float = 0.1
    policy_noise: float = 0.2
    noise_clip: float = 0.5
    policy_delay: int = 2
    discount: float = 0.99
    total_steps: int = 100_000
    rpi: RpiLossParams | None = None
    rpi_double_target: bool = False

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        if self.algorithm.startswith("rpi") and self.rpi is None:
            object.__setattr__(self, "rpi", RpiLossParams())
        if not self.algorithm.startswith("rpi") and self.rpi is not None:
            raise ValueError(f"rpi loss parameters given for {self.algorithm}")
        if self.target_update not in ("hard", "polyak"):
            raise ValueError(f"unknown target update {self.target_update!r}")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError("discount must lie in [0, 1)")
        if self.batch_size < 1 or self.buffer_capacity < 1:
            raise ValueError("batch_size and buffer_capacity must be positive")

    @property
    def continuous(self) -> bool:
        return self.algorithm in CONTINUOUS_ALGOS

    @classmethod
    def default_for(cls, algorithm: str, **overrides) -> "AgentConfig":
        """Per-family defaults: hard sync for the DQN family, polyak for DDPG/TD3."""
        if algorithm in CONTINUOUS_ALGOS:
            base = dict(target_update="polyak", tau=0.005)
        else:
            base = dict(target_update="hard", target_period=500)
        base.update(overrides)
        return cls(algorithm=algorithm, **base)


class ReplayBuffer:
    """FIFO ring of transitions stored column-wise."""

    def __init__(self, capacity: int, obs_dim: int, action_dim: int = 1):
        self.capacity = int(capacity)
        self.obs = np.zeros((capacity, obs_dim))
        self.actions = np.zeros((capacity, action_dim))
        self.rewards = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.terminated = np.zeros(capacity, dtype=bool)
        self.size = 0
        self.cursor = 0

    def __len__(self) -> int:
        return self.size

    def push(self, obs, action, reward, next_obs, terminated) -> None:
        i = self.cursor
        self.obs[i] = obs
        self.actions[i] = action
        self.rewards[i] = reward
        self.next_obs[i] = next_obs
        self.terminated[i] = terminated
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def ordered_indices(self) -> np.ndarray:
        """Storage indices from oldest to newest."""
        if self.size < self.capacity:
            return np.arange(self.size)
        return (np.arange(self.capacity) + self.cursor) % self.capacity

    def sample(self, batch_size: int, rng: np.random.Generator) -> dict[str, np.ndarray]:
        idx = rng.integers(0, self.size, size=batch_size)
        return {
            "obs": self.obs[idx],
            "actions": self.actions[idx],
            "rewards": self.rewards[idx],
            "next_obs": self.next_obs[idx],
            "terminated": self.terminated[idx],
        }


def rpi_critic_loss(critic_out, targets, params: RpiLossParams):
    """Penalty critic loss averaged over the batch, and its derivative per sample.

    Each sample contributes -c*f + lambda1*relu(f - y) + lambda2*relu(q_min - f).
    At a hinge point the penalty is treated as inactive.
    """
    f = np.asarray(critic_out, dtype=np.float64).reshape(-1)
    y = np.asarray(targets, dtype=np.float64).reshape(-1)
    if f.shape != y.shape:
        raise ValueError("critic outputs and targets must have equal length")
    n = f.size
    over = f - y
    under = params.q_min - f
    loss = np.mean(-params.c * f + params.lambda1 * np.maximum(over, 0.0)
                   + params.lambda2 * np.maximum(under, 0.0))
    grad = (-params.c + params.lambda1 * (over > 0.0) - params.lambda2 * (under > 0.0)) / n
    return float(loss), grad


def mse_loss(critic_out, targets):
    f = np.asarray(critic_out, dtype=np.float64).reshape(-1)
    diff = f - np.asarray(targets, dtype=np.float64).reshape(-1)
    return float(np.mean(diff * diff)), 2.0 * diff / f.size


def discrete_targets(algorithm: str, rewards, terminated, gamma: float,
                     target_next_q, online_next_q=None, double: bool = False) -> np.ndarray:
    """Bootstrap targets for the DQN family from next-state action values.

    ``double`` selects the next action with the online network (always on for ddqn).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    target_next_q = np.asarray(target_next_q, dtype=np.float64)
    if algorithm == "ddqn" or double:
        if online_next_q is None:
            raise ValueError("double targets need online next-state values")
        a_star = np.argmax(online_next_q, axis=1)
        nxt = target_next_q[np.arange(len(a_star)), a_star]
    elif algorithm in ("dqn", "rpi_dqn"):
        nxt = target_next_q.max(axis=1)
    else:
        raise ValueError(f"{algorithm} is not a discrete-action algorithm")
    return rewards + gamma * np.where(terminated, 0.0, nxt)


def linear_epsilon(step: int, start: float, end: float, decay_steps: int) -> float:
    if decay_steps <= 0:
        return end
    frac = min(1.0, step / decay_steps)
    return start + frac * (end - start)


class DqnAgent:
    """DQN, Double DQN and RPI-DQN over a discrete action set."""

    def __init__(self, config: AgentConfig, obs_dim: int, num_actions: int,
                 rng: np.random.Generator):
        if config.continuous:
            raise ValueError(f"{config.algorithm} needs DdpgAgent")
        self.config = config
        self.num_actions = num_actions
        self.rng = rng
        spec = MlpSpec(obs_dim, tuple(config.hidden), num_actions)
        self.critic = init_params(spec, rng)
        self.critic_target = self.critic.copy()
        self.critic_opt = AdamState.for_params(self.critic)
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim, 1)
        self.steps = 0
        self.updates = 0
        self.target_syncs = 0
        self.last_loss = float("nan")

    @property
    def epsilon(self) -> float:
        c = self.config
        return linear_epsilon(self.steps, c.eps_start, c.eps_end, c.eps_decay_steps)

    @property
    def exploration(self) -> float:
        return self.epsilon

    def q_values(self, obs_batch: np.ndarray) -> np.ndarray:
        return forward(self.critic, obs_batch)

    def greedy_actions(self, obs_batch: np.ndarray) -> np.ndarray:
        return np.argmax(self.q_values(obs_batch), axis=1)

    def act(self, obs, explore: bool = True, rng: np.random.Generator | None = None,
            epsilon: float | None = None) -> int:
        rng = self.rng if rng is None else rng
        if explore:
            eps = self.epsilon if epsilon is None else epsilon
            if rng.random() < eps:
                return int(rng.integers(self.num_actions))
        q = forward(self.critic, np.asarray(obs, dtype=np.float64).reshape(1, -1))[0]
        return int(np.argmax(q))

    def critic_estimate(self, obs_batch: np.ndarray) -> np.ndarray:
        """Value of the greedy action at each observation."""
        return self.q_values(obs_batch).max(axis=1)

    def compute_targets(self, batch) -> np.ndarray:
        c = self.config
        target_next = forward(self.critic_target, batch["next_obs"])
        double = c.algorithm == "ddqn" or (c.algorithm == "rpi_dqn" and c.rpi_double_target)
        online_next = forward(self.critic, batch["next_obs"]) if double else None
        return discrete_targets(c.algorithm, batch["rewards"], batch["terminated"],
                                c.discount, target_next, online_next, double=double)

    def update(self, batch) -> float:
        c = self.config
        y = self.compute_targets(batch)
        q, cache = forward(self.critic, batch["obs"], return_cache=True)
        rows = np.arange(len(y))
        acts = batch["actions"][:, 0].astype(np.int64)
        q_taken = q[rows, acts]
        if c.rpi is not None:
            loss, dq = rpi_critic_loss(q_taken, y, c.rpi)
        else:
            loss, dq = mse_loss(q_taken, y)
        out_grad = np.zeros_like(q)
        out_grad[rows, acts] = dq
        grad = backward(self.critic, batch["obs"], out_grad, cache=cache)
        adam_step(self.critic, grad, self.critic_opt, c.lr_critic)
        self.updates += 1
        self._refresh_targets()
        return loss

    def _refresh_targets(self) -> None:
        c = self.config
        if c.target_update == "hard":
            if self.updates % c.target_period == 0:
                self.critic_target.copy_from(self.critic)
                self.target_syncs += 1
        else:
            self.critic_target.polyak_from(self.critic, c.tau)

    def train_step(self, obs, action, reward, next_obs, terminated) -> float | None:
        self.buffer.push(obs, action, reward, next_obs, terminated)
        self.steps += 1
        if self.steps < self.config.learning_starts or len(self.buffer) < self.config.batch_size:
            return None
        loss = self.update(self.buffer.sample(self.config.batch_size, self.rng))
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite critic loss at step {self.steps}")
        self.last_loss = loss
        return loss

    def networks(self) -> dict[str, MlpParams]:
        return {"critic": self.critic, "critic_target": self.critic_target}


class DdpgAgent:
    """DDPG, TD3 and RPI-DDPG with a tanh actor on the [-1, 1] action box."""

    def __init__(self, config: AgentConfig, obs_dim: int, action_dim: int,
                 rng: np.random.Generator):
        if not config.continuous:
            raise ValueError(f"{config.algorithm} needs DqnAgent")
        self.config = config
        self.action_dim = action_dim
        self.rng = rng
        actor_hidden = tuple(config.actor_hidden or config.hidden)
        self.actor = init_params(MlpSpec(obs_dim, actor_hidden, action_dim,
                                         output_activation="tanh"), rng)
        critic_spec = MlpSpec(obs_dim + action_dim, tuple(config.hidden), 1)
        n_critics = 2 if config.algorithm == "td3" else 1
        self.critics = [init_params(critic_spec, rng) for _ in range(n_critics)]
        self.actor_target = self.actor.copy()
        self.critic_targets = [c.copy() for c in self.critics]
        self.actor_opt = AdamState.for_params(self.actor)
        self.critic_opts = [AdamState.for_params(c) for c in self.critics]
        self.buffer = ReplayBuffer(config.buffer_capacity, obs_dim, action_dim)
        self.steps = 0
        self.updates = 0
        self.target_syncs = 0
        self.last_loss = float("nan")

    @property
    def critic(self) -> MlpParams:
        return self.critics[0]

    @property
    def exploration(self) -> float:
        return self.config.exploration_sigma

    def policy(self, obs_batch: np.ndarray) -> np.ndarray:
        return forward(self.actor, obs_batch)

    greedy_actions = policy

    def q_values(self, obs_batch: np.ndarray, actions: np.ndarray, which: int = 0) -> np.ndarray:
        return forward(self.critics[which], np.hstack([obs_batch, actions]))[:, 0]

    def act(self, obs, explore: bool = True, rng: np.random.Generator | None = None):
        rng = self.rng if rng is None else rng
        if explore and self.steps < self.config.learning_starts:
            return rng.uniform(-1.0, 1.0, size=self.action_dim)
        a = forward(self.actor, np.asarray(obs, dtype=np.float64).reshape(1, -1))[0]
        if explore:
            a = a + rng.normal(0.0, self.config.exploration_sigma, size=self.action_dim)
        return np.clip(a, -1.0, 1.0)

    def critic_estimate(self, obs_batch: np.ndarray) -> np.ndarray:
        return self.q_values(obs_batch, self.policy(obs_batch))

    def compute_targets(self, batch) -> np.ndarray:
        c = self.config
        nxt = batch["next_obs"]
        a_next = forward(self.actor_target, nxt)
        if c.algorithm == "td3":
            noise = np.clip(self.rng.normal(0.0, c.policy_noise, size=a_next.shape),
                            -c.noise_clip, c.noise_clip)
            a_next = np.clip(a_next + noise, -1.0, 1.0)
            sa = np.hstack([nxt, a_next])
            q_next = np.minimum(forward(self.critic_targets[0], sa)[:, 0],
                                forward(self.critic_targets[1], sa)[:, 0])
        else:
            q_next = forward(self.critic_targets[0], np.hstack([nxt, a_next]))[:, 0]
        return batch["rewards"] + c.discount * np.where(batch["terminated"], 0.0, q_next)

    def update(self, batch) -> float:
        c = self.config
        y = self.compute_targets(batch)
        sa = np.hstack([batch["obs"], batch["actions"]])
        losses = []
        for critic, opt in zip(self.critics, self.critic_opts):
            q, cache = forward(critic, sa, return_cache=True)
            if c.rpi is not None:
                loss, dq = rpi_critic_loss(q[:, 0], y, c.rpi)
            else:
                loss, dq = mse_loss(q[:, 0], y)
            grad = backward(critic, sa, dq.reshape(-1, 1), cache=cache)
            adam_step(critic, grad, opt, c.lr_critic)
            losses.append(loss)
        self.updates += 1
        delay = c.policy_delay if c.algorithm == "td3" else 1
        if self.updates % delay == 0:
            self._actor_update(batch["obs"])
            self._refresh_targets()
        return float(np.mean(losses))

    def _actor_update(self, obs: np.ndarray) -> None:
        """Deterministic policy gradient: ascend Q(s, pi(s)) through the first critic."""
        a, a_cache = forward(self.actor, obs, return_cache=True)
        sa = np.hstack([obs, a])
        n = obs.shape[0]
        _, d_input = backward(self.critics[0], sa, np.full((n, 1), -1.0 / n), input_grad=True)
        d_action = d_input[:, obs.shape[1]:]
        grad = backward(self.actor, obs, d_action, cache=a_cache)
        adam_step(self.actor, grad, self.actor_opt, self.config.lr_actor)

    def _refresh_targets(self) -> None:
        c = self.config
        pairs = [(self.actor_target, self.actor)] + list(zip(self.critic_targets, self.critics))
        if c.target_update == "polyak":
            for tgt, src in pairs:
                tgt.polyak_from(src, c.tau)
        elif self.updates % c.target_period == 0:
            for tgt, src in pairs:
                tgt.copy_from(src)
            self.target_syncs += 1

    def train_step(self, obs, action, reward, next_obs, terminated) -> float | None:
        self.buffer.push(obs, action, reward, next_obs, terminated)
        self.steps += 1
        if self.steps < self.config.learning_starts or len(self.buffer) < self.config.batch_size:
            return None
        loss = self.update(self.buffer.sample(self.config.batch_size, self.rng))
        if not np.isfinite(loss):
            raise FloatingPointError(f"non-finite critic loss at step {self.steps}")
        self.last_loss = loss
        return loss

    def networks(self) -> dict[str, MlpParams]:
        nets = {"actor": self.actor, "actor_target": self.actor_target}
        for i, (c, t) in enumerate(zip(self.critics, self.critic_targets)):
            nets[f"critic{i}"] = c
            nets[f"critic{i}_target"] = t
        return nets


def make_agent(config: AgentConfig, obs_dim: int, num_actions: int,
               rng: np.random.Generator):
    cls = DdpgAgent if config.continuous else DqnAgent
    return cls(config, obs_dim, num_actions, rng)


def train_step(agent, transition) -> float | None:
    """Push one environment transition and take a gradient step once warmed up."""
    return agent.train_step(transition.state, transition.action, transition.reward,
                            transition.next_state, transition.terminated)
