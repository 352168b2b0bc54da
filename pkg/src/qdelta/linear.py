"""Linear function approximation: TD(lambda) baseline, per-scale delta
updates, and the weight-sum equivalence harness."""

import warnings
from dataclasses import dataclass

import numpy as np

from .mdp import MdpSpec
from .schedule import TimescaleSchedule


class FeatureMap:
    """Fixed mapping (state, action) -> R^d, materialized as an (S*A, d) matrix."""

    def __init__(self, matrix: np.ndarray, n_states: int, n_actions: int,
                 kind: str):
        self.matrix = np.asarray(matrix, dtype=np.float64)
        self.n_states = n_states
        self.n_actions = n_actions
        self.kind = kind
        if self.matrix.shape[0] != n_states * n_actions:
            raise ValueError("feature matrix must have S*A rows")

    @property
    def d(self) -> int:
        return self.matrix.shape[1]

    def __call__(self, s: int, a: int) -> np.ndarray:
        return self.matrix[s * self.n_actions + a]


def make_features(kind: str, mdp: MdpSpec, d: int = None,
                  seed: int = None) -> FeatureMap:
    """Build a feature map: 'onehot' (one basis vector per state-action pair,
    exact tabular equivalence) or 'random_projection' (seeded dense entries in
    [-1, 1], requires d and seed)."""
    S, A = mdp.n_states, mdp.n_actions
    if kind == "onehot":
        return FeatureMap(np.eye(S * A), S, A, kind)
    if kind == "random_projection":
        if d is None or d < 1:
            raise ValueError("random_projection needs d >= 1")
        if seed is None:
            raise ValueError("random_projection needs a seed")
        rng = np.random.default_rng(seed)
        return FeatureMap(rng.uniform(-1.0, 1.0, size=(S * A, d)), S, A, kind)
    raise ValueError(f"unknown feature kind {kind!r}")


@dataclass
class LinearModel:
    """Baseline weights theta (d,) and per-scale weights (Z+1, d) over a shared
    feature map; Q(s,a) and W_z(s,a) are inner products with phi(s,a)."""

    features: FeatureMap
    theta_baseline: np.ndarray
    theta_scales: np.ndarray

    def __post_init__(self):
        self.theta_baseline = np.asarray(self.theta_baseline, dtype=np.float64)
        self.theta_scales = np.asarray(self.theta_scales, dtype=np.float64)
        d = self.features.d
        if self.theta_baseline.shape != (d,):
            raise ValueError("theta_baseline must have shape (d,)")
        if self.theta_scales.ndim != 2 or self.theta_scales.shape[1] != d:
            raise ValueError("theta_scales must have shape (Z+1, d)")
        if not (np.all(np.isfinite(self.theta_baseline))
                and np.all(np.isfinite(self.theta_scales))):
            raise ValueError("weights must be finite")

    @classmethod
    def zeros(cls, features: FeatureMap, n_scales: int) -> "LinearModel":
        return cls(features, np.zeros(features.d),
                   np.zeros((n_scales, features.d)))

    def q_hat(self, s: int, a: int) -> float:
        return float(self.features(s, a) @ self.theta_baseline)

    def w_hat(self, z: int, s: int, a: int) -> float:
        return float(self.features(s, a) @ self.theta_scales[z])

    def q_table(self) -> np.ndarray:
        """Baseline estimate over all pairs, shape (S, A)."""
        f = self.features
        return (f.matrix @ self.theta_baseline).reshape(f.n_states, f.n_actions)

    def w_tables(self) -> np.ndarray:
        """Per-scale estimates over all pairs, shape (Z+1, S, A)."""
        f = self.features
        return (self.theta_scales @ f.matrix.T).reshape(
            self.theta_scales.shape[0], f.n_states, f.n_actions)


def td_lambda_step(model: LinearModel, s: int, a: int, G: float,
                   alpha: float) -> LinearModel:
    """theta += alpha * (G - <theta, phi(s,a)>) * phi(s,a) on the baseline."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    phi = model.features(s, a)
    resid = G - float(phi @ model.theta_baseline)
    return LinearModel(model.features,
                       model.theta_baseline + alpha * resid * phi,
                       model.theta_scales.copy())


def td_lambda_delta_step(model: LinearModel, s: int, a: int, G_vec,
                         alphas) -> LinearModel:
    """Per-scale residual updates, all scales against pre-update weights."""
    G_vec = np.asarray(G_vec, dtype=np.float64)
    alphas = np.asarray(alphas, dtype=np.float64)
    n_scales = model.theta_scales.shape[0]
    if G_vec.shape != (n_scales,):
        raise ValueError(f"expected {n_scales} targets, got {G_vec.shape}")
    if alphas.shape != (n_scales,):
        raise ValueError(f"expected {n_scales} learning rates")
    phi = model.features(s, a)
    resid = G_vec - model.theta_scales @ phi
    theta = model.theta_scales + (alphas * resid)[:, None] * phi[None, :]
    return LinearModel(model.features, model.theta_baseline.copy(), theta)


def _check_equivalence_preconditions(schedule: TimescaleSchedule):
    if np.max(schedule.alphas) - np.min(schedule.alphas) > 1e-12:
        raise ValueError("equivalence requires a common alpha across scales")
    prod = schedule.lambdas * schedule.gammas
    if np.max(prod) - np.min(prod) > 1e-12:
        raise ValueError("equivalence requires lambda_z * gamma_z constant "
                         "across scales")
    for z in range(schedule.n_scales):
        g = float(schedule.gammas[z])
        if g > 0.0 and schedule.lambdas[z] >= (1.0 + g) / (2.0 * g):
            warnings.warn(
                f"lambda_{z} = {schedule.lambdas[z]:.6g} is at or above the "
                f"contraction threshold (1 + gamma_z) / (2 gamma_z)",
                RuntimeWarning)


def equivalence_run(mdp: MdpSpec, features: FeatureMap,
                    schedule: TimescaleSchedule, steps: int, seed: int,
                    truncation: int = 64,
                    common_argmax: bool = True) -> dict:
    """Run TD(lambda) and its per-scale decomposition on one shared behavior
    stream and track the weight-sum deviation.

    Both learners see the identical uniform-random trajectory and use the same
    truncated lambda-returns. With ``common_argmax=True`` (default) every
    per-scale bootstrap is evaluated at the action that is greedy for the
    aggregate sum, which is the common action the weight-sum identity needs; a
    step where any per-scale greedy action disagrees with the aggregate one is
    still flagged and counted. ``common_argmax=False`` bootstraps each scale at
    its own greedy action instead.

    Returns {max_dev, max_dev_agreement, disagreement_steps, per_step} where
    per_step rows are {step, dev_inf_norm, argmax_agreement_flag}.
    """
    _check_equivalence_preconditions(schedule)
    gammas = schedule.gammas
    n_scales = schedule.n_scales
    alpha = float(schedule.alphas[0])
    lg = float(schedule.lambdas[0] * gammas[0])  # common lambda_z * gamma_z
    gamma_top = float(gammas[-1])
    S, A = mdp.n_states, mdp.n_actions

    # Shared behavior: uniform-random actions; the window extends past the
    # last update point so every truncated return has its full tail.
    rng = np.random.default_rng(seed)
    horizon = steps + truncation
    u = rng.random((horizon, 3))
    from ._kernels_py import _cdf_pick, _sample_reward
    states = np.empty(horizon + 1, dtype=np.int64)
    actions = np.empty(horizon, dtype=np.int64)
    rewards = np.empty(horizon)
    s = 0
    for t in range(horizon):
        states[t] = s
        a = min(int(u[t, 0] * A), A - 1)
        actions[t] = a
        ns = _cdf_pick(mdp.transition[s, a], u[t, 1])
        rewards[t] = _sample_reward(float(mdp.mean_reward[s, a]),
                                    mdp.noise.code, mdp.noise.param, u[t, 2])
        s = ns
    states[horizon] = s

    F = features.matrix
    gram = F @ F.T  # (S*A, S*A); update to theta moves all estimates by a column
    theta_b = np.zeros(features.d)
    theta_s = np.zeros((n_scales, features.d))
    qb = np.zeros(S * A)          # F @ theta_b
    ws = np.zeros((n_scales, S * A))  # per-scale estimates, flat over (s,a)

    lg_pow = np.empty(truncation)
    acc = 1.0
    for k in range(truncation):
        lg_pow[k] = acc
        acc *= lg

    rows_w = states[:horizon] * A + actions  # flat (s, a) index per step
    gaps = np.diff(gammas)
    per_step = []
    max_dev = 0.0
    max_dev_agree = 0.0
    disagreements = 0
    idx = np.arange(truncation)
    for t in range(steps):
        row = int(rows_w[t])
        win = slice(t, t + truncation)
        nxt = states[t + 1:t + truncation + 1]
        r_win = rewards[win]
        sub_rows = rows_w[win]

        # Baseline truncated lambda-return from current weights.
        qb2 = qb.reshape(S, A)
        delta_b = r_win + gamma_top * qb2[nxt].max(axis=1) - qb[sub_rows]
        Gb = qb[row] + float(lg_pow @ delta_b)

        # Per-scale truncated lambda-returns from the same transitions.
        blocks = ws.reshape(n_scales, S, A)[:, nxt, :]  # (Z+1, T, A)
        psum = np.cumsum(blocks, axis=0)
        a_common = np.argmax(psum[-1], axis=1)
        agree = bool(np.all(np.argmax(blocks, axis=2) == a_common[None, :]))
        if common_argmax:
            boot = blocks[:, idx, a_common]          # (Z+1, T)
            boot_prev = psum[:-1, idx, a_common]     # (Z, T)
        else:
            boot = blocks.max(axis=2)
            boot_prev = psum[:-1].max(axis=2)
        sub = ws[:, sub_rows]
        delta_s = np.empty((n_scales, truncation))
        delta_s[0] = r_win + gammas[0] * boot[0] - sub[0]
        if n_scales > 1:
            delta_s[1:] = (gaps[:, None] * boot_prev
                           + gammas[1:, None] * boot[1:] - sub[1:])
        # per-row 1D dots so the single-scale case matches the baseline bitwise
        Gs = ws[:, row] + np.array([float(lg_pow @ delta_s[z])
                                    for z in range(n_scales)])

        # Apply both updates; estimate caches move with the weights.
        phi = F[row]
        resid_b = Gb - qb[row]
        theta_b += alpha * resid_b * phi
        qb += alpha * resid_b * gram[row]
        resid_s = Gs - ws[:, row]
        theta_s += alpha * resid_s[:, None] * phi[None, :]
        ws += alpha * resid_s[:, None] * gram[row][None, :]

        dev = float(np.max(np.abs(theta_s.sum(axis=0) - theta_b)))
        if dev > max_dev:
            max_dev = dev
        if agree and dev > max_dev_agree:
            max_dev_agree = dev
        if not agree:
            disagreements += 1
        per_step.append({"step": t, "dev_inf_norm": dev,
                         "argmax_agreement_flag": int(agree)})

    return {
        "max_dev": max_dev,
        "max_dev_agreement": max_dev_agree,
        "disagreement_steps": disagreements,
        "per_step": per_step,
        "model": LinearModel(features, theta_b, theta_s),
    }
