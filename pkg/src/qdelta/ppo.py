"""Actor-critic training with per-scale lambda-return critics and the
delta-decomposed advantage feeding a clipped policy objective."""

from dataclasses import dataclass

import numpy as np

from ._kernels_py import _cdf_pick, _sample_reward
from .mdp import MdpSpec, Trajectory
from .oracle import QTable
from .schedule import DeltaTable, TimescaleSchedule
from .seeding import derive_seed


class DegenerateRatioError(ValueError):
    """The value-ratio denominator is too close to zero to divide."""


@dataclass
class ActorModel:
    """Softmax policy over linear state features: pi(a|s) proportional to
    exp(<omega_a, phi(s)> / temperature)."""

    omega: np.ndarray          # (n_actions, d)
    state_features: np.ndarray  # (n_states, d)
    temperature: float = 1.0

    def __post_init__(self):
        self.omega = np.asarray(self.omega, dtype=np.float64)
        self.state_features = np.asarray(self.state_features, dtype=np.float64)
        if self.omega.ndim != 2 or self.state_features.ndim != 2:
            raise ValueError("omega and state_features must be matrices")
        if self.omega.shape[1] != self.state_features.shape[1]:
            raise ValueError("omega and state_features disagree on d")
        if self.temperature <= 0.0:
            raise ValueError("temperature must be positive")
        if not np.all(np.isfinite(self.omega)):
            raise ValueError("policy weights must be finite")

    @classmethod
    def uniform(cls, n_states: int, n_actions: int,
                temperature: float = 1.0) -> "ActorModel":
        return cls(np.zeros((n_actions, n_states)), np.eye(n_states),
                   temperature)

    def probs(self, s: int) -> np.ndarray:
        logits = self.omega @ self.state_features[s] / self.temperature
        logits = logits - np.max(logits)
        e = np.exp(logits)
        return e / e.sum()

    def sample(self, s: int, u: float) -> int:
        return _cdf_pick(self.probs(s), u)

    def grad_log_prob(self, s: int, a: int) -> np.ndarray:
        """d log pi(a|s) / d omega, shape (n_actions, d)."""
        p = self.probs(s)
        coeff = -p
        coeff[a] += 1.0
        return coeff[:, None] * self.state_features[s][None, :] / self.temperature

    def copy(self) -> "ActorModel":
        return ActorModel(self.omega.copy(), self.state_features,
                          self.temperature)


@dataclass
class AdvantageSeries:
    a_delta: np.ndarray
    horizon: int

    def __post_init__(self):
        self.a_delta = np.asarray(self.a_delta, dtype=np.float64)
        if self.a_delta.shape != (self.horizon,):
            raise ValueError("a_delta must have shape (horizon,)")
        if not np.all(np.isfinite(self.a_delta)):
            raise ValueError("advantages must be finite")


def _accumulate(deltas: np.ndarray, factor: float, truncation: int) -> np.ndarray:
    """out[t] = sum_{k < min(truncation, T - t)} factor^k deltas[t + k]."""
    T = deltas.shape[0]
    weights = np.empty(truncation)
    acc = 1.0
    for k in range(truncation):
        weights[k] = acc
        acc *= factor
    out = np.empty(T)
    for t in range(T):
        n = min(truncation, T - t)
        total = 0.0
        for k in range(n):
            total += weights[k] * deltas[t + k]
        out[t] = total
    return out


def _delta_errors_aggregate(w: np.ndarray, gamma_top: float,
                            traj_transitions) -> np.ndarray:
    """delta_t = r_t + gamma_Z sum_z max_a W_z(s',a) - sum_z W_z(s,a)."""
    n_scales = w.shape[0]
    T = len(traj_transitions)
    out = np.empty(T)
    for t, (s, a, r, ns) in enumerate(traj_transitions):
        boot = 0.0
        for z in range(n_scales):
            boot += np.max(w[z, ns])
        sub = 0.0
        for z in range(n_scales):
            sub += w[z, s, a]
        out[t] = r + gamma_top * boot - sub
    return out


def gae_delta(table: DeltaTable, traj: Trajectory, truncation: int,
              weight_scale: int = None) -> AdvantageSeries:
    """Delta-decomposed advantage: geometrically weighted aggregate TD errors.

    The weight is (lambda_Z gamma_Z)^k by default; ``weight_scale`` selects a
    different scale's (lambda_z gamma_z) as a variant.
    """
    sched = table.schedule
    z_w = sched.n_scales - 1 if weight_scale is None else int(weight_scale)
    if not 0 <= z_w < sched.n_scales:
        raise ValueError("weight_scale out of range")
    factor = float(sched.lambdas[z_w] * sched.gammas[z_w])
    if factor >= 1.0:
        raise ValueError("need lambda * gamma < 1")
    deltas = _delta_errors_aggregate(table.w, float(sched.gammas[-1]),
                                     traj.transitions)
    return AdvantageSeries(_accumulate(deltas, factor, truncation), len(traj))


def gae_baseline(q: QTable, traj: Trajectory, lam: float,
                 truncation: int) -> AdvantageSeries:
    """Plain advantage estimator over a single Q-table, same arithmetic path
    as ``gae_delta`` so the single-scale case matches it exactly."""
    if lam * q.gamma >= 1.0:
        raise ValueError("need lambda * gamma < 1")
    deltas = _delta_errors_aggregate(q.values[None, :, :], q.gamma,
                                     traj.transitions)
    return AdvantageSeries(_accumulate(deltas, lam * q.gamma, truncation),
                           len(traj))


def policy_ratio(q_new: QTable, q_old: QTable, s: int, a: int, mode: str,
                 actor_new: ActorModel = None,
                 actor_old: ActorModel = None) -> float:
    """Update ratio for the clipped objective.

    'paper_q_ratio' divides max_a q_new(s, .) by q_old(s, a) and raises
    DegenerateRatioError when the denominator magnitude is below 1e-8 (callers
    skip the sample); 'policy_likelihood' is the standard pi_new / pi_old.
    """
    if mode == "paper_q_ratio":
        denom = float(q_old.values[s, a])
        if abs(denom) < 1e-8:
            raise DegenerateRatioError(
                f"|q_old({s},{a})| = {abs(denom):.3e} < 1e-8")
        return float(np.max(q_new.values[s])) / denom
    if mode == "policy_likelihood":
        if actor_new is None or actor_old is None:
            raise ValueError("policy_likelihood mode needs both actors")
        return float(actor_new.probs(s)[a] / actor_old.probs(s)[a])
    raise ValueError(f"unknown ratio mode {mode!r}")


def clipped_objective(ratio: float, advantage: float, clip_eps: float) -> float:
    """min(ratio * A, clip(ratio, 1 - eps, 1 + eps) * A)."""
    if not 0.0 < clip_eps < 1.0:
        raise ValueError("clip_eps must lie in (0, 1)")
    clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
    return min(ratio * advantage, clipped * advantage)


def critic_loss(predicted: float, target: float) -> float:
    """Squared error of one critic prediction."""
    d = predicted - target
    return d * d


def evaluate_actor(mdp: MdpSpec, actor: ActorModel, episodes: int,
                   horizon: int, seed: int, start_state: int = 0) -> float:
    """Mean undiscounted return of the softmax policy over seeded episodes."""
    total = 0.0
    for ep in range(episodes):
        rng = np.random.default_rng(derive_seed(seed, "eval-episode", ep))
        s = start_state
        for _ in range(horizon):
            if s in mdp.terminal_states:
                break
            a = actor.sample(s, rng.random())
            ns = _cdf_pick(mdp.transition[s, a], rng.random())
            total += _sample_reward(float(mdp.mean_reward[s, a]),
                                    mdp.noise.code, mdp.noise.param,
                                    rng.random())
            s = ns
    return total / episodes


def run_ppo_qdelta(mdp: MdpSpec, schedule: TimescaleSchedule, horizon: int,
                   iterations: int, alpha_omega: float, clip_eps: float,
                   seed: int, ratio_mode: str = "policy_likelihood",
                   epsilon: float = 0.1, steps_per_iteration: int = None,
                   temperature: float = 1.0, start_state: int = 0):
    """Streaming actor-critic training with a T-step buffer.

    Per iteration (episode), behavior is epsilon-greedy on the aggregate
    critic reconstruction; once t >= T the window starting at t - T gets its
    per-scale truncated lambda-return critic updates, its aggregate advantage,
    and one clipped-objective ascent step on the actor (trailing windows are
    flushed with shortened tails at episode end). In 'paper_q_ratio' mode the
    ratio does not depend on the actor weights, so the objective value scales
    the score-function direction instead of the likelihood-ratio gradient;
    samples with a degenerate denominator are skipped and counted.

    Returns (actor, table, rows) with one metrics row per iteration:
    {iteration, mean_return, actor_loss, critic_loss_z..., ratio_skips}.
    """
    if ratio_mode not in ("paper_q_ratio", "policy_likelihood"):
        raise ValueError("ratio_mode must be 'paper_q_ratio' or 'policy_likelihood'")
    if horizon < 1 or iterations < 0:
        raise ValueError("horizon must be >= 1 and iterations >= 0")
    if np.any(schedule.lambdas * schedule.gammas >= 1.0):
        raise ValueError("need lambda_z * gamma_z < 1 for every scale")
    if steps_per_iteration is None:
        steps_per_iteration = 4 * horizon
    S, A = mdp.n_states, mdp.n_actions
    n_scales = schedule.n_scales
    gammas = schedule.gammas
    alphas = schedule.alphas
    gamma_top = float(gammas[-1])
    factor_top = float(schedule.lambdas[-1] * gammas[-1])
    factors = [float(schedule.lambdas[z] * gammas[z]) for z in range(n_scales)]
    terminal = mdp.terminal_mask()

    actor = ActorModel.uniform(S, A, temperature)
    w = np.zeros((n_scales, S, A))
    table = DeltaTable(w, schedule)
    rng = np.random.default_rng(seed)
    rows = []

    def scale_delta(z, s, a, r, ns):
        if z == 0:
            return r + float(gammas[0]) * float(np.max(w[0, ns])) - w[0, s, a]
        prev = float(np.max(table.partial_sum(z - 1)[ns]))
        return (float(gammas[z] - gammas[z - 1]) * prev
                + float(gammas[z]) * float(np.max(w[z, ns])) - w[z, s, a])

    def process_window(buf, u, actor_old, q_old):
        """Critic + actor updates for the window starting at buffer index u."""
        n = min(horizon, len(buf) - u)
        s0, a0 = buf[u][0], buf[u][1]
        G = w[:, s0, a0].copy()
        adv = 0.0
        wk = [1.0] * n_scales
        wk_top = 1.0
        for k in range(n):
            s, a, r, ns = buf[u + k]
            for z in range(n_scales):
                G[z] += wk[z] * scale_delta(z, s, a, r, ns)
                wk[z] *= factors[z]
            adv += wk_top * _delta_errors_aggregate(w, gamma_top, [buf[u + k]])[0]
            wk_top *= factor_top
        resid = G - w[:, s0, a0]
        closs = resid * resid
        w[:, s0, a0] += alphas * resid

        skipped = 0
        if ratio_mode == "policy_likelihood":
            ratio = policy_ratio(None, None, s0, a0, ratio_mode,
                                 actor_new=actor, actor_old=actor_old)
        else:
            try:
                ratio = policy_ratio(QTable(table.reconstruct(), gamma_top),
                                     q_old, s0, a0, ratio_mode)
            except DegenerateRatioError:
                return closs, 0.0, 1
        objective = clipped_objective(ratio, adv, clip_eps)
        if ratio_mode == "policy_likelihood":
            clipped = min(max(ratio, 1.0 - clip_eps), 1.0 + clip_eps)
            # gradient of min(rA, clip(r)A): zero when the clipped branch binds
            coeff = ratio * adv if ratio * adv <= clipped * adv else 0.0
        else:
            coeff = objective
        if coeff != 0.0:
            actor.omega += alpha_omega * coeff * actor.grad_log_prob(s0, a0)
        return closs, objective, skipped

    for it in range(iterations):
        actor_old = actor.copy()
        q_old = QTable(table.reconstruct().copy(), gamma_top)
        buf = []
        ret = 0.0
        s = start_state
        closs_sum = np.zeros(n_scales)
        obj_sum = 0.0
        skips = 0
        n_windows = 0
        next_u = 0
        for _ in range(steps_per_iteration):
            if terminal[s]:
                break
            if rng.random() < epsilon:
                a = min(int(rng.random() * A), A - 1)
            else:
                a = int(np.argmax(table.reconstruct()[s]))
            ns = _cdf_pick(mdp.transition[s, a], rng.random())
            r = _sample_reward(float(mdp.mean_reward[s, a]), mdp.noise.code,
                               mdp.noise.param, rng.random())
            buf.append((s, a, r, ns))
            ret += r
            s = ns
            # the window t - T becomes complete once its full tail is buffered
            while next_u + horizon <= len(buf):
                closs, obj, skipped = process_window(buf, next_u, actor_old,
                                                     q_old)
                closs_sum += closs
                obj_sum += obj
                skips += skipped
                n_windows += 1
                next_u += 1
        while next_u < len(buf):  # flush shortened tails at episode end
            closs, obj, skipped = process_window(buf, next_u, actor_old, q_old)
            closs_sum += closs
            obj_sum += obj
            skips += skipped
            n_windows += 1
            next_u += 1
        row = {"iteration": it,
               "mean_return": ret,
               "actor_loss": obj_sum / n_windows if n_windows else 0.0,
               "ratio_skips": skips}
        for z in range(n_scales):
            row[f"critic_loss_{z}"] = (closs_sum[z] / n_windows
                                       if n_windows else 0.0)
        rows.append(row)
    return actor, table, rows
