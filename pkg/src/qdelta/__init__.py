"""Multi-timescale value decomposition for Q-learning.

Action-value functions are learned as sums of per-timescale difference
components W_z = Q_{gamma_z} - Q_{gamma_{z-1}}, with tabular, lambda-return,
linear, phased, and actor-critic training modes plus exact solvers and a
verification harness for the associated error bounds. Hot loops run in a
compiled extension when available, with a bitwise-identical pure-Python
fallback (see ``qdelta.backend_name``).
"""

from ._backend import BACKEND as backend_name
from .lambda_returns import (TdErrorSeries, audit_contraction,
                             contraction_coefficient, lambda_return_delta,
                             lambda_return_q, statement_coefficient,
                             td_errors_delta)
from .linear import (FeatureMap, LinearModel, equivalence_run, make_features,
                     td_lambda_delta_step, td_lambda_step)
from .mdp import (MdpSpec, RewardNoise, Trajectory, build_random_mdp,
                  build_ring_mdp, sample_trajectory)
from .oracle import (NonConvergenceError, QTable, apply_t_lambda, exact_delta,
                     value_iteration)
from .phased import (hoeffding_epsilon, k_schedule_from_gammas,
                     phased_q_update, phased_w_update, run_phased_experiment,
                     thm3_bound, thm4_bound)
from .ppo import (ActorModel, AdvantageSeries, DegenerateRatioError,
                  clipped_objective, critic_loss, evaluate_actor, gae_baseline,
                  gae_delta, policy_ratio, run_ppo_qdelta)
from .runner import ConfigError, ExperimentConfig, load_config, run
from .schedule import DeltaTable, TimescaleSchedule
from .seeding import derive_seed
from .tabular import (WindowTooShortError, apply_targets, multistep_targets,
                      q_learning_step, run_q_learning, run_qdelta,
                      single_step_w_update)

__version__ = "0.1.0"

__all__ = [
    "ActorModel", "AdvantageSeries", "ConfigError", "DegenerateRatioError",
    "DeltaTable", "ExperimentConfig", "FeatureMap", "LinearModel", "MdpSpec",
    "NonConvergenceError", "QTable", "RewardNoise", "TdErrorSeries",
    "TimescaleSchedule", "Trajectory", "WindowTooShortError",
    "apply_t_lambda", "apply_targets", "audit_contraction", "backend_name",
    "build_random_mdp", "build_ring_mdp", "clipped_objective",
    "contraction_coefficient", "critic_loss", "derive_seed", "equivalence_run",
    "evaluate_actor", "exact_delta", "gae_baseline", "gae_delta",
    "hoeffding_epsilon", "k_schedule_from_gammas", "lambda_return_delta",
    "lambda_return_q", "load_config", "make_features", "multistep_targets",
    "phased_q_update", "phased_w_update", "policy_ratio", "q_learning_step",
    "run", "run_phased_experiment", "run_ppo_qdelta", "run_q_learning",
    "run_qdelta", "sample_trajectory", "single_step_w_update",
    "statement_coefficient", "td_errors_delta", "td_lambda_delta_step",
    "td_lambda_step", "thm3_bound", "thm4_bound", "value_iteration",
]
