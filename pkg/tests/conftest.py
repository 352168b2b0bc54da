import numpy as np
import pytest

from qdelta import TimescaleSchedule, build_ring_mdp


@pytest.fixture
def dominant_ring():
    """Deterministic 5-state ring where action 0 is strictly better in every
    state, so the greedy policy is the same at every discount factor."""
    r0 = np.array([0.4, 0.1, 0.3, 0.0, 0.2])
    return build_ring_mdp(5, 0.0, reward_spec=np.stack([r0, r0 - 0.3], axis=1))


@pytest.fixture
def ladder_59():
    return TimescaleSchedule(gammas=[0.5, 0.9], ks=[2, 10], lambdas=[0.0, 0.0],
                             alphas=[0.05, 0.05])
