"""Lambda-returns for the baseline and per-scale estimators, per-scale TD
errors, and the Monte Carlo contraction audit of the lambda-weighted backup."""

from dataclasses import dataclass

import numpy as np

from .mdp import MdpSpec, Trajectory
from .oracle import QTable, TLambdaOperator
from .schedule import DeltaTable


@dataclass
class TdErrorSeries:
    delta: np.ndarray  # (Z+1, T)
    horizon: int

    def __post_init__(self):
        self.delta = np.asarray(self.delta, dtype=np.float64)
        if self.delta.ndim != 2 or self.delta.shape[1] != self.horizon:
            raise ValueError("delta must have shape (Z+1, horizon)")
        if not np.all(np.isfinite(self.delta)):
            raise ValueError("TD errors must be finite")


def td_errors_delta(table: DeltaTable, traj: Trajectory,
                    literal_next_action: bool = False) -> TdErrorSeries:
    """Per-scale TD errors along a trajectory.

    delta_t^0 = r_t + g0 max_a W0(s',a) - W0(s,a); for z >= 1 the target mixes
    the discount gap against the previous partial sum with the scale's own
    bootstrap. ``literal_next_action`` subtracts W_z(s_{t+1}, a_{t+1}) instead
    of W_z(s_t, a_t) for comparison (greedy action stands in at the final
    step, where no next action was recorded).
    """
    if len(traj) == 0:
        raise ValueError("trajectory must be non-empty")
    sched = table.schedule
    gammas = sched.gammas
    Z1 = sched.n_scales
    T = len(traj)
    delta = np.empty((Z1, T))
    psums = np.cumsum(table.w, axis=0)  # psums[z] = partial_sum(z)
    transitions = traj.transitions
    for t, (s, a, r, ns) in enumerate(transitions):
        if literal_next_action:
            if t + 1 < T:
                a_next = transitions[t + 1][1]
            else:
                a_next = int(np.argmax(psums[Z1 - 1, ns]))
            sub = table.w[:, ns, a_next]
        else:
            sub = table.w[:, s, a]
        delta[0, t] = r + gammas[0] * np.max(table.w[0, ns]) - sub[0]
        for z in range(1, Z1):
            delta[z, t] = ((gammas[z] - gammas[z - 1]) * np.max(psums[z - 1, ns])
                           + gammas[z] * np.max(table.w[z, ns]) - sub[z])
    return TdErrorSeries(delta, T)


def td_errors_q(q: QTable, traj: Trajectory) -> np.ndarray:
    """Baseline one-step TD errors r_t + gamma max_a Q(s',a) - Q(s,a)."""
    out = np.empty(len(traj))
    for t, (s, a, r, ns) in enumerate(traj.transitions):
        out[t] = r + q.gamma * np.max(q.values[ns]) - q.values[s, a]
    return out


def _geometric_weights(factor: float, length: int) -> np.ndarray:
    weights = np.empty(length)
    acc = 1.0
    for k in range(length):
        weights[k] = acc
        acc *= factor
    return weights


def lambda_return_q(q: QTable, traj: Trajectory, lam: float,
                    truncation: int) -> np.ndarray:
    """Truncated lambda-return targets G_t = Q(s_t,a_t) + sum_k (lam*gamma)^k
    delta_{t+k}, the tail dropped at the trajectory end."""
    if lam * q.gamma >= 1.0:
        raise ValueError("need lambda * gamma < 1")
    delta = td_errors_q(q, traj)
    T = len(traj)
    weights = _geometric_weights(lam * q.gamma, truncation)
    out = np.empty(T)
    for t, (s, a, _, _) in enumerate(traj.transitions):
        n = min(truncation, T - t)
        out[t] = q.values[s, a] + float(weights[:n] @ delta[t:t + n])
    return out


def lambda_return_delta(series: TdErrorSeries, table: DeltaTable,
                        traj: Trajectory, truncation: int) -> np.ndarray:
    """Per-scale truncated lambda-returns G[z][t] built from a TD error series."""
    sched = table.schedule
    if np.any(sched.lambdas * sched.gammas >= 1.0):
        raise ValueError("need lambda_z * gamma_z < 1 for every scale")
    Z1 = sched.n_scales
    T = len(traj)
    if series.delta.shape != (Z1, T):
        raise ValueError("TD error series does not match table/trajectory")
    out = np.empty((Z1, T))
    for z in range(Z1):
        weights = _geometric_weights(float(sched.lambdas[z] * sched.gammas[z]),
                                     truncation)
        for t, (s, a, _, _) in enumerate(traj.transitions):
            n = min(truncation, T - t)
            out[z, t] = table.w[z, s, a] + float(weights[:n] @ series.delta[z, t:t + n])
    return out


def contraction_coefficient(gamma: float, lam: float) -> float:
    """gamma * |1 - lambda| / (1 - lambda * gamma), the coefficient the
    operator actually satisfies in the sup norm."""
    if lam * gamma >= 1.0:
        raise ValueError("need lambda * gamma < 1")
    return gamma * abs(1.0 - lam) / (1.0 - lam * gamma)


def statement_coefficient(gamma: float, lam: float) -> float:
    """The looser gamma / |1 - lambda*gamma| figure, reported alongside."""
    if lam * gamma >= 1.0:
        raise ValueError("need lambda * gamma < 1")
    return gamma / abs(1.0 - lam * gamma)


def audit_contraction(mdp: MdpSpec, gamma: float, lam: float,
                      reference_policy, n_pairs: int, seed: int,
                      q_scale: float = 10.0, backup: str = "policy") -> dict:
    """Measure sup-norm contraction ratios of the lambda-weighted backup over
    random Q-table pairs under one fixed reference policy."""
    if gamma > 0.0 and lam >= (1.0 + gamma) / (2.0 * gamma):
        raise ValueError("lambda must be below (1 + gamma) / (2 gamma)")
    op = TLambdaOperator(mdp, gamma, lam, reference_policy, backup=backup)
    rng = np.random.default_rng(seed)
    shape = (mdp.n_states, mdp.n_actions)
    max_ratio = 0.0
    used = 0
    for _ in range(n_pairs):
        q1 = rng.uniform(-q_scale, q_scale, size=shape)
        q2 = rng.uniform(-q_scale, q_scale, size=shape)
        denom = np.max(np.abs(q1 - q2))
        if denom < 1e-12:
            continue
        ratio = np.max(np.abs(op.apply(q1) - op.apply(q2))) / denom
        if ratio > max_ratio:
            max_ratio = float(ratio)
        used += 1
    coeff = contraction_coefficient(gamma, lam)
    return {
        "gamma": gamma,
        "lambda": lam,
        "coefficient_proof": coeff,
        "coefficient_statement": statement_coefficient(gamma, lam),
        "max_ratio": max_ratio,
        "n_pairs": used,
        "within_bound": max_ratio <= coeff + 1e-10,
    }
