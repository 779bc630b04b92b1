"""Finite MDPs, policy Bellman operators, and exact PI / VI oracles.

Q-functions are plain ``(S, A)`` float arrays.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

PROB_TOL = 1e-12


class DimensionError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class TabularMDP:
    transition: np.ndarray  # (S, A, S)
    reward: np.ndarray  # (S, A)
    discount: float

    def __post_init__(self):
        P = np.array(self.transition, dtype=np.float64)
        r = np.array(self.reward, dtype=np.float64)
        if P.ndim != 3 or P.shape[0] != P.shape[2] or r.shape != P.shape[:2]:
            raise DimensionError(f"inconsistent shapes P{P.shape}, r{r.shape}")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise DimensionError("need at least one state and one action")
        if np.any(P < 0) or np.any(np.abs(P.sum(axis=2) - 1.0) > PROB_TOL):
            raise ValueError("transition rows must be probability distributions")
        if not np.all(np.isfinite(r)):
            raise ValueError("rewards must be finite")
        if not 0.0 <= self.discount < 1.0:
            raise ValueError(f"discount must lie in [0, 1), got {self.discount}")
        P.flags.writeable = False
        r.flags.writeable = False
        object.__setattr__(self, "transition", P)
        object.__setattr__(self, "reward", r)
        object.__setattr__(self, "discount", float(self.discount))

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def shape(self) -> tuple[int, int]:
        return self.reward.shape


@dataclass(frozen=True, eq=False)
class Policy:
    """Stationary policy as an (S, A) action-distribution table.

    ``actions`` is set for deterministic policies.
    """

    table: np.ndarray
    actions: np.ndarray | None = None

    def __post_init__(self):
        t = np.array(self.table, dtype=np.float64)
        if t.ndim != 2 or np.any(t < 0) or np.any(np.abs(t.sum(axis=1) - 1.0) > PROB_TOL):
            raise ValueError("policy rows must be probability distributions")
        t.flags.writeable = False
        object.__setattr__(self, "table", t)

    @classmethod
    def deterministic(cls, actions, num_actions: int) -> "Policy":
        acts = np.asarray(actions, dtype=np.int64)
        if np.any(acts < 0) or np.any(acts >= num_actions):
            raise ValueError(f"action indices must lie in [0, {num_actions})")
        table = np.zeros((acts.size, num_actions))
        table[np.arange(acts.size), acts] = 1.0
        acts = acts.copy()
        acts.flags.writeable = False
        return cls(table, acts)

    @classmethod
    def constant(cls, action: int, num_states: int, num_actions: int) -> "Policy":
        return cls.deterministic(np.full(num_states, action), num_actions)

    @property
    def kind(self) -> str:
        return "deterministic" if self.actions is not None else "stochastic"

    def same_actions(self, other: "Policy") -> bool:
        return np.array_equal(self.table, other.table)

    def action_string(self) -> str:
        if self.actions is None:
            return "stochastic"
        return "".join(str(a) if a < 10 else f"[{a}]" for a in self.actions)


def _check(mdp: TabularMDP, policy: Policy, q: np.ndarray | None = None) -> None:
    if policy.table.shape != mdp.shape:
        raise DimensionError(f"policy shape {policy.table.shape} != MDP shape {mdp.shape}")
    if q is not None and np.shape(q) != mdp.shape:
        raise DimensionError(f"Q shape {np.shape(q)} != MDP shape {mdp.shape}")


def state_action_transition(mdp: TabularMDP, policy: Policy) -> np.ndarray:
    """(SA, SA) matrix with entry P(s'|s,a) * mu(a'|s')."""
    _check(mdp, policy)
    S, A = mdp.shape
    M = mdp.transition[:, :, :, None] * policy.table[None, None, :, :]
    return M.reshape(S * A, S * A)


def bellman_apply(mdp: TabularMDP, policy: Policy, q: np.ndarray) -> np.ndarray:
    """(T_mu q)(s, a) = r(s, a) + gamma * sum_{s', a'} P(s'|s, a) mu(a'|s') q(s', a')."""
    _check(mdp, policy, q)
    next_v = np.sum(policy.table * q, axis=1)
    return mdp.reward + mdp.discount * (mdp.transition @ next_v)


def bellman_optimality_apply(mdp: TabularMDP, q: np.ndarray) -> np.ndarray:
    if np.shape(q) != mdp.shape:
        raise DimensionError(f"Q shape {np.shape(q)} != MDP shape {mdp.shape}")
    return mdp.reward + mdp.discount * (mdp.transition @ np.max(q, axis=1))


def exact_policy_eval(mdp: TabularMDP, policy: Policy) -> np.ndarray:
    """Q_mu by a dense LU solve of (I - gamma P_mu) q = r."""
    S, A = mdp.shape
    system = np.eye(S * A) - mdp.discount * state_action_transition(mdp, policy)
    q = np.linalg.solve(system, mdp.reward.reshape(-1)).reshape(S, A)
    residual = np.max(np.abs(bellman_apply(mdp, policy, q) - q))
    assert residual <= 1e-10 * max(1.0, np.max(np.abs(q))), f"policy evaluation residual {residual}"
    return q


def greedy_policy(q: np.ndarray) -> Policy:
    """Deterministic argmax policy; ties go to the lowest action index."""
    q = np.asarray(q, dtype=np.float64)
    if not np.all(np.isfinite(q)):
        raise ValueError("Q must be finite")
    return Policy.deterministic(np.argmax(q, axis=1), q.shape[1])


@dataclass
class PolicyIterationResult:
    policy: Policy
    q: np.ndarray
    iterations: int
    history: list[tuple[Policy, np.ndarray]]


def classical_policy_iteration(mdp: TabularMDP, init: Policy,
                               max_iters: int | None = None) -> PolicyIterationResult:
    """Howard policy iteration; ``history`` holds (mu_k, Q_{mu_k}) for every k."""
    limit = max_iters if max_iters is not None else mdp.num_actions ** mdp.num_states + 1
    policy = init
    q = exact_policy_eval(mdp, policy)
    history = [(policy, q)]
    for it in range(1, limit + 1):
        nxt = greedy_policy(q)
        if nxt.same_actions(policy):
            return PolicyIterationResult(policy, q, it, history)
        # keep the incumbent action where it is still optimal, so ties cannot cycle
        if policy.actions is not None:
            acts = nxt.actions.copy()
            rows = np.arange(mdp.num_states)
            keep = q[rows, policy.actions] >= q[rows, acts]
            acts[keep] = policy.actions[keep]
            nxt = Policy.deterministic(acts, mdp.num_actions)
            if nxt.same_actions(policy):
                return PolicyIterationResult(policy, q, it, history)
        policy = nxt
        q = exact_policy_eval(mdp, policy)
        history.append((policy, q))
    return PolicyIterationResult(policy, q, limit, history)


def value_iteration(mdp: TabularMDP, tol: float = 1e-10, max_sweeps: int = 1_000_000) -> np.ndarray:
    """Iterate the optimality operator until ||Tq - q||_inf <= tol."""
    if not tol > 0:
        raise ValueError("tol must be positive")
    q = np.zeros(mdp.shape)
    for _ in range(max_sweeps):
        nxt = bellman_optimality_apply(mdp, q)
        if np.max(np.abs(nxt - q)) <= tol:
            # nxt satisfies the residual bound up to a factor gamma
            return nxt
        q = nxt
    raise RuntimeError("value iteration did not converge")


def random_mdp(num_states: int, num_actions: int, rng: np.random.Generator,
               discount: float = 0.9) -> TabularMDP:
    """Dirichlet(1) transition rows and Uniform[-1, 1] rewards."""
    P = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    P /= P.sum(axis=2, keepdims=True)
    r = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return TabularMDP(P, r, discount)


def save_mdp(mdp: TabularMDP, path: str | Path) -> None:
    """Plain-text fixture: S, A, gamma, then row-major P and r on one line each."""
    lines = [
        "# tabular MDP: P is row-major [s][a][s'], r is row-major [s][a]",
        f"S {mdp.num_states}",
        f"A {mdp.num_actions}",
        f"gamma {mdp.discount!r}",
        "P " + " ".join(repr(float(v)) for v in mdp.transition.reshape(-1)),
        "r " + " ".join(repr(float(v)) for v in mdp.reward.reshape(-1)),
    ]
    Path(path).write_text("\n".join(lines) + "\n")


def load_mdp(path: str | Path) -> TabularMDP:
    fields: dict[str, list[str]] = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        key, *vals = line.split()
        if key not in ("S", "A", "gamma", "P", "r") or key in fields:
            raise ValueError(f"{path}:{lineno}: unexpected key {key!r}")
        fields[key] = vals
    missing = {"S", "A", "gamma", "P", "r"} - fields.keys()
    if missing:
        raise ValueError(f"{path}: missing keys {sorted(missing)}")
    S, A = int(fields["S"][0]), int(fields["A"][0])
    P = np.array([float(v) for v in fields["P"]])
    r = np.array([float(v) for v in fields["r"]])
    if P.size != S * A * S or r.size != S * A:
        raise DimensionError(f"{path}: expected {S * A * S} P and {S * A} r entries")
    return TabularMDP(P.reshape(S, A, S), r.reshape(S, A), float(fields["gamma"][0]))
