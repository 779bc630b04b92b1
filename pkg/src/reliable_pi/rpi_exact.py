"""Model-based reliable policy iteration over linear function classes.

Each evaluation step solves

    maximize ||f - f_k||  over f = Phi w
    s.t.     T_mu f >= f >= f_k

as a linear program, then the policy is made greedy w.r.t. the new estimate.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.linalg

from .lp import LinearProgram, LpResult, simplex_solve
from .mdp import Policy, TabularMDP, bellman_apply, exact_policy_eval, greedy_policy, state_action_transition

RANK_TOL = 1e-10
FEASIBILITY_TOL = 1e-9
CONVERGENCE_TOL = 1e-9


class InfeasibleStartError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class FeatureMap:
    """Rows indexed by flattened (s, a), one column per feature."""

    features: np.ndarray
    kind: str = "custom"

    def __post_init__(self):
        phi = np.array(self.features, dtype=np.float64)
        if phi.ndim != 2 or phi.shape[1] < 1:
            raise ValueError(f"features must be a 2-D matrix, got shape {phi.shape}")
        if self.kind == "tabular" and not np.array_equal(phi, np.eye(phi.shape[0])):
            raise ValueError("tabular features must be the identity")
        if self.kind not in ("tabular", "custom"):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if numerical_rank(phi) < phi.shape[1]:
            raise ValueError("feature matrix must have full column rank")
        phi.flags.writeable = False
        object.__setattr__(self, "features", phi)

    @classmethod
    def tabular(cls, num_states: int, num_actions: int) -> "FeatureMap":
        return cls(np.eye(num_states * num_actions), "tabular")

    @property
    def num_features(self) -> int:
        return self.features.shape[1]

    def evaluate(self, weights: np.ndarray, shape: tuple[int, int]) -> np.ndarray:
        return (self.features @ weights).reshape(shape)

    def project(self, q: np.ndarray) -> tuple[np.ndarray, float]:
        """Least-squares weights for ``q`` and the max-abs residual."""
        target = np.asarray(q, dtype=np.float64).reshape(-1)
        w, *_ = np.linalg.lstsq(self.features, target, rcond=None)
        return w, float(np.max(np.abs(self.features @ w - target)))


def numerical_rank(matrix: np.ndarray, tol: float = RANK_TOL) -> int:
    """Rank from column-pivoted QR, counting |R_ii| above tol * |R_00|."""
    if matrix.size == 0:
        return 0
    _, R, _ = scipy.linalg.qr(matrix, mode="economic", pivoting=True)
    diag = np.abs(np.diag(R))
    if diag.size == 0 or diag[0] == 0.0:
        return 0
    return int(np.sum(diag > tol * diag[0]))


def random_feature_map(num_states: int, num_actions: int, num_features: int,
                       rng: np.random.Generator) -> FeatureMap:
    """Constant column plus Gaussian columns, so constant estimates are representable."""
    n = num_states * num_actions
    if not 1 <= num_features <= n:
        raise ValueError("need 1 <= num_features <= S*A")
    while True:
        phi = np.hstack([np.ones((n, 1)), rng.normal(size=(n, num_features - 1))])
        if numerical_rank(phi) == num_features:
            return FeatureMap(phi)


@dataclass(frozen=True, eq=False)
class RpiIterate:
    k: int
    weights: np.ndarray
    f: np.ndarray
    policy: Policy
    lp_objective_value: float = float("nan")
    lp_pivots: int = 0


def build_evaluation_lp(mdp: TabularMDP, policy: Policy, features: FeatureMap,
                        f_k: np.ndarray) -> LinearProgram:
    """L1 evaluation LP in the feature weights.

    Rows ``(Phi - gamma P_mu Phi) w <= r`` encode T_mu f >= f and rows
    ``-Phi w <= -f_k`` encode f >= f_k. Under the latter the L1 distance
    equals sum(Phi w) - sum(f_k), which is the objective (offset included).
    """
    phi = features.features
    if phi.shape[0] != mdp.num_states * mdp.num_actions:
        raise ValueError("feature rows must match S*A")
    fk = np.asarray(f_k, dtype=np.float64).reshape(-1)
    if fk.size != phi.shape[0]:
        raise ValueError("f_k shape does not match the MDP")
    p_mu = state_action_transition(mdp, policy)
    bellman_rows = phi - mdp.discount * (p_mu @ phi)
    G = np.vstack([bellman_rows, -phi])
    h = np.concatenate([mdp.reward.reshape(-1), -fk])
    return LinearProgram(phi.sum(axis=0), G, h, objective_offset=-float(fk.sum()))


def _solve_linf(mdp, policy, features, f_k) -> LpResult:
    """max_(s,a) max_f (f - f_k)(s,a): one LP per coordinate, best one kept."""
    base = build_evaluation_lp(mdp, policy, features, f_k)
    fk = np.asarray(f_k).reshape(-1)
    best = None
    for i, row in enumerate(features.features):
        res = simplex_solve(LinearProgram(row, base.constraint_matrix, base.constraint_rhs,
                                          objective_offset=-float(fk[i])))
        if res.status != "optimal":
            return res
        if best is None or res.value > best.value + 1e-12:
            best = res
    return best


def default_initial_estimate(mdp: TabularMDP) -> np.ndarray:
    """Constant min(r)/(1 - gamma); satisfies T_mu f >= f for every mu."""
    return np.full(mdp.shape, mdp.reward.min() / (1.0 - mdp.discount))


def rpi_iterate(mdp: TabularMDP, features: FeatureMap, init_f0: np.ndarray | None = None,
                init_policy: Policy | None = None, max_iters: int = 100,
                norm: str = "l1") -> list[RpiIterate]:
    """Alternate LP evaluation and greedy improvement; returns iterates 0..K."""
    if norm not in ("l1", "linf"):
        raise ValueError(f"unknown norm {norm!r}")
    f0 = default_initial_estimate(mdp) if init_f0 is None else np.asarray(init_f0, dtype=np.float64)
    w0, resid = features.project(f0)
    if resid > 1e-8:
        raise InfeasibleStartError(f"initial estimate is not in the feature span (residual {resid:.2e})")
    f0 = features.evaluate(w0, mdp.shape)
    policy = greedy_policy(f0) if init_policy is None else init_policy
    gap = bellman_apply(mdp, policy, f0) - f0
    if gap.min() < -FEASIBILITY_TOL:
        s, a = np.unravel_index(np.argmin(gap), gap.shape)
        raise InfeasibleStartError(
            f"initial estimate violates T_mu f >= f at (s={s}, a={a}) by {-gap.min():.3e}")

    iterates = [RpiIterate(0, w0, f0, policy)]
    for k in range(max_iters):
        cur = iterates[-1]
        if norm == "l1":
            res = simplex_solve(build_evaluation_lp(mdp, cur.policy, features, cur.f))
        else:
            res = _solve_linf(mdp, cur.policy, features, cur.f)
        if res.status != "optimal":
            raise RuntimeError(f"evaluation LP {res.status} at iteration {k}")
        f_next = features.evaluate(res.x, mdp.shape)
        nxt = RpiIterate(k + 1, res.x, f_next, greedy_policy(f_next), res.value, res.pivots)
        iterates.append(nxt)
        if np.max(np.abs(f_next - cur.f)) <= CONVERGENCE_TOL:
            break
    return iterates


@dataclass
class PropertyReport:
    """Worst violations of monotonicity (f_{k+1} >= f_k) and lower bound (f_k <= Q_{mu_k})."""

    monotonicity_violation: float = 0.0
    monotonicity_at: tuple[int, int, int] | None = None  # (k, s, a)
    lower_bound_violation: float = 0.0
    lower_bound_at: tuple[int, int, int] | None = None
    rows: list[dict] = field(default_factory=list)

    header = "checks: f_(k+1) >= f_k and f_k <= Q_(mu_k) pointwise (lower-bound direction)"

    def ok(self, tol: float = 1e-7) -> bool:
        return self.monotonicity_violation <= tol and self.lower_bound_violation <= tol


def check_theorem_properties(iterates: list[RpiIterate], mdp: TabularMDP) -> PropertyReport:
    if not iterates:
        raise ValueError("need at least one iterate")
    report = PropertyReport()
    for i, it in enumerate(iterates):
        q_mu = exact_policy_eval(mdp, it.policy)
        excess = it.f - q_mu
        lb = float(excess.max())
        if lb > report.lower_bound_violation:
            s, a = np.unravel_index(np.argmax(excess), excess.shape)
            report.lower_bound_violation = lb
            report.lower_bound_at = (it.k, int(s), int(a))
        row = {"k": it.k, "f_inf_norm": float(np.max(np.abs(it.f))),
               "max_over_q": lb, "policy": it.policy.action_string(),
               "delta_min": float("nan"), "delta_max": float("nan")}
        if i + 1 < len(iterates):
            delta = iterates[i + 1].f - it.f
            row["delta_min"] = float(delta.min())
            row["delta_max"] = float(delta.max())
            drop = -float(delta.min())
            if drop > report.monotonicity_violation:
                s, a = np.unravel_index(np.argmin(delta), delta.shape)
                report.monotonicity_violation = drop
                report.monotonicity_at = (it.k, int(s), int(a))
        report.rows.append(row)
    return report


RPI_CSV_COLUMNS = ["k", "f_inf_norm", "delta_min", "delta_max", "max_f_minus_q", "policy"]


def write_iterates_csv(report: PropertyReport, path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        fh.write(f"# {report.header}\n")
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(RPI_CSV_COLUMNS)
        for row in report.rows:
            w.writerow([row["k"], repr(row["f_inf_norm"]), repr(row["delta_min"]),
                        repr(row["delta_max"]), repr(row["max_over_q"]), row["policy"]])
