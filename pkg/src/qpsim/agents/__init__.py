"""Training algorithms: PPO, SAC, ES and analytic policy gradients."""

from qpsim.agents.apg import APGConfig, APGProblem, require_differentiable, train_apg
from qpsim.agents.common import LOG_HEADER, Policy, TrainingDiverged, TrainingLog, evaluate, random_returns, read_log
from qpsim.agents.es import ESConfig, centered_ranks, es_gradient, es_optimize, train_es
from qpsim.agents.ppo import PPOConfig, train_ppo
from qpsim.agents.sac import ReplayBuffer, SACConfig, train_sac

ALGORITHMS = {"ppo": (PPOConfig, train_ppo), "sac": (SACConfig, train_sac), "es": (ESConfig, train_es),
              "apg": (APGConfig, train_apg)}

__all__ = ["ALGORITHMS", "APGConfig", "APGProblem", "ESConfig", "LOG_HEADER", "PPOConfig", "Policy", "ReplayBuffer",
           "SACConfig", "TrainingDiverged", "TrainingLog", "centered_ranks", "es_gradient", "es_optimize",
           "evaluate", "random_returns", "read_log", "require_differentiable", "train_apg", "train_es", "train_ppo",
           "train_sac"]
