"""Finite MDPs, environment generators, policies, and seeded trajectory sampling.

All randomness is routed through explicit ``numpy.random.Generator`` objects or
integer seeds; identical inputs always reproduce identical outputs.
"""

import json
from dataclasses import dataclass, field

import numpy as np

PROB_TOL = 1e-12

NOISE_NONE = 0
NOISE_UNIFORM_CLIPPED = 1
NOISE_BERNOULLI_SYMMETRIC = 2

_NOISE_NAMES = {
    "none": NOISE_NONE,
    "uniform_clipped": NOISE_UNIFORM_CLIPPED,
    "bernoulli_symmetric": NOISE_BERNOULLI_SYMMETRIC,
}
_NOISE_CODES = {v: k for k, v in _NOISE_NAMES.items()}


@dataclass(frozen=True)
class RewardNoise:
    """Bounded reward noise; realized rewards are always clipped to [-1, 1]."""

    kind: str = "none"
    param: float = 0.0

    def __post_init__(self):
        if self.kind not in _NOISE_NAMES:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        if self.param < 0.0:
            raise ValueError("noise param must be nonnegative")

    @property
    def code(self) -> int:
        return _NOISE_NAMES[self.kind]


def sample_reward(mean: float, noise: RewardNoise, u: float) -> float:
    """Draw one reward from ``mean`` plus noise, using uniform draw ``u`` in [0, 1).

    Mirrors the arithmetic used inside the compiled kernels so results agree
    bit for bit.
    """
    if noise.kind == "uniform_clipped":
        r = mean + (2.0 * u - 1.0) * noise.param
    elif noise.kind == "bernoulli_symmetric":
        r = mean + (noise.param if u < 0.5 else -noise.param)
    else:
        r = mean
    if r > 1.0:
        r = 1.0
    if r < -1.0:
        r = -1.0
    return r


@dataclass
class MdpSpec:
    """A finite MDP: transition tensor P[s][a][s'], bounded mean rewards, noise."""

    transition: np.ndarray
    mean_reward: np.ndarray
    noise: RewardNoise = field(default_factory=RewardNoise)
    terminal_states: frozenset = frozenset()

    def __post_init__(self):
        self.transition = np.asarray(self.transition, dtype=np.float64)
        self.mean_reward = np.asarray(self.mean_reward, dtype=np.float64)
        self.terminal_states = frozenset(int(t) for t in self.terminal_states)
        self.validate()

    @property
    def n_states(self) -> int:
        return self.transition.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transition.shape[1]

    def validate(self):
        P, r = self.transition, self.mean_reward
        if P.ndim != 3 or P.shape[0] != P.shape[2]:
            raise ValueError("transition must have shape (S, A, S)")
        if P.shape[0] < 1 or P.shape[1] < 1:
            raise ValueError("n_states and n_actions must be >= 1")
        if r.shape != P.shape[:2]:
            raise ValueError("mean_reward must have shape (S, A)")
        if np.any(P < 0.0):
            raise ValueError("transition probabilities must be nonnegative")
        row_sums = P.sum(axis=2)
        if np.max(np.abs(row_sums - 1.0)) > PROB_TOL:
            raise ValueError("every transition row must sum to 1 within 1e-12")
        if np.any(np.abs(r) > 1.0):
            raise ValueError("mean rewards must lie in [-1, 1]")
        for t in self.terminal_states:
            if not 0 <= t < self.n_states:
                raise ValueError(f"terminal state {t} out of range")

    def terminal_mask(self) -> np.ndarray:
        mask = np.zeros(self.n_states, dtype=np.uint8)
        for t in self.terminal_states:
            mask[t] = 1
        return mask

    def to_json(self) -> str:
        doc = {
            "n_states": self.n_states,
            "n_actions": self.n_actions,
            "transition": self.transition.tolist(),
            "mean_reward": self.mean_reward.tolist(),
            "noise": {"kind": self.noise.kind, "param": self.noise.param},
            "terminals": sorted(self.terminal_states),
        }
        return json.dumps(doc)

    @classmethod
    def from_json(cls, text: str) -> "MdpSpec":
        doc = json.loads(text)
        spec = cls(
            transition=np.array(doc["transition"], dtype=np.float64),
            mean_reward=np.array(doc["mean_reward"], dtype=np.float64),
            noise=RewardNoise(doc["noise"]["kind"], doc["noise"]["param"]),
            terminal_states=frozenset(doc.get("terminals", [])),
        )
        if spec.n_states != doc["n_states"] or spec.n_actions != doc["n_actions"]:
            raise ValueError("declared sizes disagree with array shapes")
        return spec


@dataclass
class Trajectory:
    """An ordered list of (state, action, reward, next_state) transitions."""

    transitions: list
    seed: int
    policy_tag: str = ""

    def __len__(self):
        return len(self.transitions)

    def validate(self):
        for i in range(len(self.transitions) - 1):
            if self.transitions[i][3] != self.transitions[i + 1][0]:
                raise ValueError(f"transition chain broken at step {i}")
        for s, a, r, ns in self.transitions:
            if not -1.0 <= r <= 1.0:
                raise ValueError("trajectory reward outside [-1, 1]")

    def states(self) -> np.ndarray:
        return np.array([t[0] for t in self.transitions], dtype=np.int64)

    def actions(self) -> np.ndarray:
        return np.array([t[1] for t in self.transitions], dtype=np.int64)

    def rewards(self) -> np.ndarray:
        return np.array([t[2] for t in self.transitions], dtype=np.float64)

    def next_states(self) -> np.ndarray:
        return np.array([t[3] for t in self.transitions], dtype=np.int64)


def build_ring_mdp(n_states, slip_prob, reward_spec=0.0,
                   noise=RewardNoise(), terminal_states=()) -> MdpSpec:
    """An N-state ring: action 0 moves clockwise, action 1 stays.

    Each action achieves its intended effect with probability 1 - slip_prob and
    the other effect with probability slip_prob. ``reward_spec`` may be a
    scalar, a per-state vector (shared by both actions), or an (S, 2) table of
    mean rewards in [-1, 1]. Terminal states become absorbing self-loops with
    zero reward.
    """
    if n_states < 2:
        raise ValueError("ring needs n_states >= 2")
    if not 0.0 <= slip_prob <= 1.0:
        raise ValueError("slip_prob must lie in [0, 1]")
    r = np.asarray(reward_spec, dtype=np.float64)
    if r.ndim == 0:
        r = np.full((n_states, 2), float(r))
    elif r.ndim == 1:
        if r.shape[0] != n_states:
            raise ValueError("per-state reward vector has wrong length")
        r = np.stack([r, r], axis=1)
    elif r.shape != (n_states, 2):
        raise ValueError("reward_spec must be scalar, (S,) or (S, 2)")
    if np.any(np.abs(r) > 1.0):
        raise ValueError("mean rewards must lie in [-1, 1]")

    P = np.zeros((n_states, 2, n_states))
    for s in range(n_states):
        nxt = (s + 1) % n_states
        P[s, 0, nxt] += 1.0 - slip_prob
        P[s, 0, s] += slip_prob
        P[s, 1, s] += 1.0 - slip_prob
        P[s, 1, nxt] += slip_prob
    r = r.copy()
    for t in terminal_states:
        P[t, :, :] = 0.0
        P[t, :, t] = 1.0
        r[t, :] = 0.0
    return MdpSpec(P, r, noise=noise, terminal_states=frozenset(terminal_states))


def build_random_mdp(n_states, n_actions, seed, reward_scale=1.0) -> MdpSpec:
    """A seeded random MDP: Dirichlet(1) transition rows, uniform mean rewards."""
    if n_states < 1 or n_actions < 1:
        raise ValueError("sizes must be >= 1")
    if not 0.0 < reward_scale <= 1.0:
        raise ValueError("reward_scale must lie in (0, 1]")
    rng = np.random.default_rng(seed)
    draws = rng.exponential(size=(n_states, n_actions, n_states))
    P = draws / draws.sum(axis=2, keepdims=True)
    r = rng.uniform(-reward_scale, reward_scale, size=(n_states, n_actions))
    return MdpSpec(P, r)


def uniform_policy():
    def policy(state, rng):
        return None  # resolved by the sampler: uniform over actions
    policy.tag = "uniform"
    return policy


def fixed_policy(action):
    def policy(state, rng):
        return action
    policy.tag = f"fixed:{action}"
    return policy


def greedy_policy(q_values):
    """Deterministic greedy policy over a (S, A) table; ties go to lowest index."""
    q = np.asarray(q_values, dtype=np.float64)

    def policy(state, rng):
        return int(np.argmax(q[state]))
    policy.tag = "greedy"
    return policy


def epsilon_greedy(q_values, epsilon, rng) -> int:
    """Greedy action with probability 1 - epsilon (ties to lowest index),
    otherwise uniform random."""
    q = np.asarray(q_values, dtype=np.float64)
    if q.ndim != 1 or q.shape[0] == 0:
        raise ValueError("q_values must be a non-empty vector")
    if not 0.0 <= epsilon <= 1.0:
        raise ValueError("epsilon must lie in [0, 1]")
    n = q.shape[0]
    if rng.random() < epsilon:
        return min(int(rng.random() * n), n - 1)
    return int(np.argmax(q))


def epsilon_greedy_policy(q_values, epsilon):
    q = np.asarray(q_values, dtype=np.float64)

    def policy(state, rng):
        return epsilon_greedy(q[state], epsilon, rng)
    policy.tag = f"eps_greedy:{epsilon}"
    return policy


def _sample_next_state(row, u):
    acc = 0.0
    last = row.shape[0] - 1
    for j in range(row.shape[0]):
        acc += row[j]
        if u < acc:
            return j
    return last


def sample_trajectory(mdp: MdpSpec, policy, horizon: int, seed: int,
                      start_state: int = 0) -> Trajectory:
    """Roll out ``horizon`` transitions (fewer if a terminal state is reached)."""
    if horizon < 0:
        raise ValueError("horizon must be >= 0")
    rng = np.random.default_rng(seed)
    s = int(start_state)
    transitions = []
    for _ in range(horizon):
        if s in mdp.terminal_states:
            break
        a = policy(s, rng)
        if a is None:
            a = min(int(rng.random() * mdp.n_actions), mdp.n_actions - 1)
        a = int(a)
        ns = _sample_next_state(mdp.transition[s, a], rng.random())
        r = sample_reward(float(mdp.mean_reward[s, a]), mdp.noise, rng.random())
        transitions.append((s, a, r, ns))
        s = ns
    traj = Trajectory(transitions, seed=seed, policy_tag=getattr(policy, "tag", ""))
    traj.validate()
    return traj
