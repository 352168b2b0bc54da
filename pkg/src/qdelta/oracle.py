"""Exact ground-truth solvers: value iteration, exact delta components, and the
lambda-weighted Bellman operator used by the contraction audit."""

import json
from dataclasses import dataclass

import numpy as np

from .mdp import MdpSpec


class NonConvergenceError(RuntimeError):
    """Raised when an iterative solver stops above its tolerance."""


@dataclass
class QTable:
    values: np.ndarray  # (S, A)
    gamma: float

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if not np.all(np.isfinite(self.values)):
            raise ValueError("QTable entries must be finite")
        if not 0.0 <= self.gamma < 1.0:
            raise ValueError("gamma must lie in [0, 1)")

    def to_json(self) -> str:
        return json.dumps({"gamma": self.gamma, "values": self.values.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "QTable":
        doc = json.loads(text)
        return cls(np.array(doc["values"], dtype=np.float64), doc["gamma"])


def bellman_optimality(mdp: MdpSpec, q: np.ndarray, gamma: float) -> np.ndarray:
    """(TQ)(s,a) = E[r] + gamma * sum_s' P(s'|s,a) max_a' Q(s',a')."""
    v = q.max(axis=1)
    return mdp.mean_reward + gamma * mdp.transition @ v


def greedy_actions(q: np.ndarray) -> np.ndarray:
    """Greedy action per state, ties broken by lowest index."""
    return np.argmax(q, axis=1)


def value_iteration(mdp: MdpSpec, gamma: float, tol: float = 1e-10,
                    max_iters: int = 1_000_000) -> QTable:
    """Solve for the optimal Q-table by repeated Bellman optimality backups.

    Stops once the sup-norm change falls below tol * (1 - gamma) / gamma, which
    guarantees the Bellman residual of the returned table is at most tol.
    """
    if not 0.0 <= gamma < 1.0:
        raise ValueError("gamma must lie in [0, 1)")
    if tol <= 0.0:
        raise ValueError("tol must be positive")
    q = np.zeros((mdp.n_states, mdp.n_actions))
    threshold = tol if gamma == 0.0 else tol * (1.0 - gamma) / gamma
    for _ in range(max_iters):
        q_next = bellman_optimality(mdp, q, gamma)
        change = np.max(np.abs(q_next - q))
        q = q_next
        if change <= threshold:
            return QTable(q, gamma)
    residual = np.max(np.abs(bellman_optimality(mdp, q, gamma) - q))
    if residual > tol:
        raise NonConvergenceError(
            f"value iteration residual {residual:.3e} > tol {tol:.3e} "
            f"after {max_iters} iterations")
    return QTable(q, gamma)


def exact_delta(mdp: MdpSpec, gamma_hi: float, gamma_lo=None,
                tol: float = 1e-12) -> np.ndarray:
    """Exact W component: Q*(gamma_hi) - Q*(gamma_lo) entrywise.

    ``gamma_lo=None`` is the bottom-of-ladder case, where the component is the
    full Q-table at gamma_hi.
    """
    hi = value_iteration(mdp, gamma_hi, tol=tol).values
    if gamma_lo is None:
        return hi
    if not 0.0 <= gamma_lo <= gamma_hi:
        raise ValueError("need 0 <= gamma_lo <= gamma_hi")
    lo = value_iteration(mdp, gamma_lo, tol=tol).values
    return hi - lo


def _policy_transition_matrix(mdp: MdpSpec, policy_actions: np.ndarray) -> np.ndarray:
    """State-action transition operator that follows ``policy_actions`` at the
    next state: P_ref[(s,a),(s',a')] = P(s'|s,a) * 1[a' = pi(s')]."""
    S, A = mdp.n_states, mdp.n_actions
    P_ref = np.zeros((S * A, S * A))
    for s in range(S):
        for a in range(A):
            row = s * A + a
            for ns in range(S):
                P_ref[row, ns * A + int(policy_actions[ns])] = mdp.transition[s, a, ns]
    return P_ref


class TLambdaOperator:
    """T_lambda q = q + (I - lambda*gamma*P_ref)^-1 (Tq - q) for a fixed
    reference policy.

    ``backup='policy'`` (default) evaluates T as the fixed-policy backup
    r + gamma * P_ref q, which makes the operator affine; ``backup='optimality'``
    uses the greedy max backup instead.
    """

    def __init__(self, mdp: MdpSpec, gamma: float, lam: float,
                 policy_actions, backup: str = "policy"):
        if lam * gamma >= 1.0:
            raise ValueError("need lambda * gamma < 1 for a well-defined operator")
        if backup not in ("policy", "optimality"):
            raise ValueError("backup must be 'policy' or 'optimality'")
        self.mdp = mdp
        self.gamma = gamma
        self.lam = lam
        self.backup = backup
        self.policy_actions = np.asarray(policy_actions, dtype=np.int64)
        if self.policy_actions.shape != (mdp.n_states,):
            raise ValueError("reference policy must map every state to an action")
        self._P_ref = _policy_transition_matrix(mdp, self.policy_actions)
        n = self._P_ref.shape[0]
        self._M = np.eye(n) - lam * gamma * self._P_ref

    def _backup(self, q: np.ndarray) -> np.ndarray:
        if self.backup == "optimality":
            return bellman_optimality(self.mdp, q, self.gamma)
        v_ref = q[np.arange(self.mdp.n_states), self.policy_actions]
        return self.mdp.mean_reward + self.gamma * self.mdp.transition @ v_ref

    def apply(self, q: np.ndarray) -> np.ndarray:
        rhs = (self._backup(q) - q).ravel()
        x = np.linalg.solve(self._M, rhs)
        residual = np.max(np.abs(self._M @ x - rhs))
        if residual > 1e-10:
            raise NonConvergenceError(f"linear solve residual {residual:.3e} > 1e-10")
        return q + x.reshape(q.shape)


def apply_t_lambda(mdp: MdpSpec, q: QTable, lam: float, reference_policy,
                   backup: str = "policy") -> QTable:
    """One application of the lambda-weighted backup operator at a fixed
    reference policy (state -> action map)."""
    op = TLambdaOperator(mdp, q.gamma, lam, reference_policy, backup=backup)
    return QTable(op.apply(q.values), q.gamma)
