"""Tabular learning: baseline Q-learning, single-step delta updates, and the
multi-step delta-decomposed learning loop."""

import numpy as np

from ._backend import run_qdelta_kernel
from ._kernels_py import _cdf_pick, _sample_reward
from .mdp import MdpSpec
from .oracle import QTable
from .schedule import DeltaTable, TimescaleSchedule

AGGREGATE = "aggregate"
COMPONENT = "component"


class WindowTooShortError(ValueError):
    def __init__(self, scale, needed, available):
        super().__init__(
            f"scale {scale} needs a window of {needed} transitions, "
            f"only {available} available")
        self.scale = scale


def q_learning_step(q: QTable, transition, alpha: float) -> QTable:
    """One off-policy update: Q(s,a) += alpha * (r + gamma max_a' Q(s',a') - Q(s,a))."""
    if not 0.0 < alpha <= 1.0:
        raise ValueError("alpha must lie in (0, 1]")
    s, a, r, ns = transition
    values = q.values.copy()
    target = r + q.gamma * float(np.max(values[ns]))
    values[s, a] += alpha * (target - values[s, a])
    return QTable(values, q.gamma)


def _next_state_max(table: DeltaTable, z: int, state: int) -> float:
    return float(np.max(table.w[z, state]))


def _prev_scale_value(table: DeltaTable, z: int, state: int, max_mode: str) -> float:
    """M_{z-1}(state): max of the partial sum up to z-1 (aggregate mode) or the
    sum of per-component maxes (literal-pseudocode component mode)."""
    if max_mode == AGGREGATE:
        return float(np.max(table.partial_sum(z - 1)[state]))
    if max_mode == COMPONENT:
        return float(sum(np.max(table.w[u, state]) for u in range(z)))
    raise ValueError(f"unknown max_mode {max_mode!r}")


def single_step_w_update(table: DeltaTable, transition,
                         max_mode: str = AGGREGATE) -> DeltaTable:
    """One-step update of every scale at the visited (s, a) cell, all scales
    using pre-update values."""
    s, a, r, ns = transition
    sched = table.schedule
    gammas = sched.gammas
    targets = np.empty(sched.n_scales)
    targets[0] = r + gammas[0] * _next_state_max(table, 0, ns)
    for z in range(1, sched.n_scales):
        targets[z] = ((gammas[z] - gammas[z - 1]) * _prev_scale_value(table, z, ns, max_mode)
                      + gammas[z] * _next_state_max(table, z, ns))
    return apply_targets(table, s, a, targets)


def multistep_targets(table: DeltaTable, window, t: int,
                      max_mode: str = AGGREGATE) -> np.ndarray:
    """Per-scale multi-step bootstrapped targets G[0..Z] read from a trajectory
    window starting at offset ``t``.

    Scale z consumes rewards r_t..r_{t+k_z-1} and bootstraps at s_{t+k_z};
    raises WindowTooShortError if the window cannot supply them.
    """
    sched = table.schedule
    gammas = sched.gammas
    n = len(window)
    targets = np.empty(sched.n_scales)
    for z in range(sched.n_scales):
        kz = int(sched.ks[z])
        if t + kz > n:
            raise WindowTooShortError(z, kz, n - t)
        rewards = [window[t + j][2] for j in range(kz)]
        boot_state = window[t + kz - 1][3]
        if z == 0:
            acc = 0.0
            for j in range(kz):
                acc += gammas[0] ** j * rewards[j]
            acc += gammas[0] ** kz * _next_state_max(table, 0, boot_state)
        else:
            acc = 0.0
            for j in range(1, kz):
                acc += (gammas[z] ** j - gammas[z - 1] ** j) * rewards[j]
            acc += ((gammas[z] ** kz - gammas[z - 1] ** kz)
                    * _prev_scale_value(table, z, boot_state, max_mode))
            acc += gammas[z] ** kz * _next_state_max(table, z, boot_state)
        targets[z] = acc
    return targets


def apply_targets(table: DeltaTable, s: int, a: int, targets) -> DeltaTable:
    """W_z(s,a) += alpha_z (G^z - W_z(s,a)) for all scales simultaneously."""
    targets = np.asarray(targets, dtype=np.float64)
    if targets.shape != (table.schedule.n_scales,):
        raise ValueError(
            f"expected {table.schedule.n_scales} targets, got {targets.shape}")
    w = table.w.copy()
    w[:, s, a] += table.schedule.alphas * (targets - w[:, s, a])
    return DeltaTable(w, table.schedule)


def epsilon_array(epsilon_schedule, total_steps: int) -> np.ndarray:
    """Constant or linearly annealed (start, end) exploration schedule."""
    if np.isscalar(epsilon_schedule):
        return np.full(total_steps, float(epsilon_schedule))
    start, end = epsilon_schedule
    if total_steps <= 1:
        return np.full(max(total_steps, 1), float(start))[:total_steps]
    return np.linspace(float(start), float(end), total_steps)


def run_qdelta(mdp: MdpSpec, schedule: TimescaleSchedule, episodes: int,
               steps_per_episode: int, epsilon_schedule, seed: int,
               variant: str = "multi_step", max_mode: str = AGGREGATE,
               oracle: QTable = None, start_state: int = 0,
               backend: str = None):
    """Run episodic delta-decomposed Q-learning; behavior is epsilon-greedy on
    the full reconstruction.

    Returns (DeltaTable, metrics) where metrics is one row per episode:
    {episode, step, return, sup_error, epsilon}. Deterministic per seed.
    """
    if variant not in ("single_step", "multi_step"):
        raise ValueError("variant must be 'single_step' or 'multi_step'")
    if max_mode not in (AGGREGATE, COMPONENT):
        raise ValueError("max_mode must be 'aggregate' or 'component'")
    table = DeltaTable.zeros(schedule, mdp.n_states, mdp.n_actions)
    if episodes == 0:
        return table, []
    total = episodes * steps_per_episode
    rng = np.random.default_rng(seed)
    uniforms = rng.random((total, 4))
    eps = epsilon_array(epsilon_schedule, total)
    pow_table = schedule.gamma_powers(schedule.k_max)
    oracle_values = None if oracle is None else np.ascontiguousarray(oracle.values)
    ep_return, ep_sup = run_qdelta_kernel(
        mdp.transition, mdp.mean_reward, mdp.noise.code, mdp.noise.param,
        mdp.terminal_mask(), schedule.ks, schedule.alphas, pow_table,
        eps, uniforms, table.w, episodes, steps_per_episode, start_state,
        variant == "multi_step", max_mode == AGGREGATE,
        oracle=oracle_values, backend=backend)
    metrics = []
    for ep in range(episodes):
        step = (ep + 1) * steps_per_episode
        metrics.append({
            "episode": ep,
            "step": step,
            "return": float(ep_return[ep]),
            "sup_error": float(ep_sup[ep]) if oracle is not None else "",
            "epsilon": float(eps[min(step, total) - 1]),
        })
    return table, metrics


def run_q_learning(mdp: MdpSpec, gamma: float, alpha: float, episodes: int,
                   steps_per_episode: int, epsilon_schedule, seed: int,
                   start_state: int = 0) -> QTable:
    """Plain single-scale Q-learning built on ``q_learning_step``.

    Consumes the same pre-drawn uniform stream as ``run_qdelta`` (four draws
    per step), so a Z=0 single-step delta run with the same seed reproduces it
    bit for bit.
    """
    total = episodes * steps_per_episode
    rng = np.random.default_rng(seed)
    uniforms = rng.random((total, 4))
    eps = epsilon_array(epsilon_schedule, total)
    q = QTable(np.zeros((mdp.n_states, mdp.n_actions)), gamma)
    n_actions = mdp.n_actions
    row = 0
    for _ in range(episodes):
        s = start_state
        for _ in range(steps_per_episode):
            if s in mdp.terminal_states:
                break
            u0, u1, u2, u3 = uniforms[row]
            e = eps[row]
            row += 1
            if u0 < e:
                a = min(int(u1 * n_actions), n_actions - 1)
            else:
                a = int(np.argmax(q.values[s]))
            ns = _cdf_pick(mdp.transition[s, a], u2)
            r = _sample_reward(mdp.mean_reward[s, a], mdp.noise.code,
                               mdp.noise.param, u3)
            q = q_learning_step(q, (s, a, r, ns), alpha)
            s = ns
    return q
