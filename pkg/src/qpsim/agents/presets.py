"""Per-environment hyperparameter presets layered over the config defaults.

Config defaults are the published locomotion settings.  PointMass is a
small debugging task those settings were never meant for, so it gets a
preset sized to train in seconds on one core.  Halfcheetah has its own
published SAC settings.
"""

from __future__ import annotations

from qpsim.agents.apg import APGConfig
from qpsim.agents.es import ESConfig
from qpsim.agents.ppo import PPOConfig
from qpsim.agents.sac import SACConfig

CONFIGS = {"ppo": PPOConfig, "sac": SACConfig, "es": ESConfig, "apg": APGConfig}

PRESETS = {
    ("ppo", "pointmass"): dict(total_env_steps=1_000_000, num_envs=128, unroll_length=20, batch_size=64,
                               num_minibatches=8, num_update_epochs=4, learning_rate=3e-3, reward_scaling=1.0,
                               discounting=0.99, hidden_sizes=(32, 32), activation="tanh", eval_frequency=10,
                               num_shards=4),
    ("sac", "pointmass"): dict(total_env_steps=200_000, num_envs=64, learning_rate=1e-3, reward_scale=10.0,
                               min_replay_size=2000, grad_updates_per_batch=4, batch_size=256, discount=0.99,
                               hidden_sizes=(64, 64), activation="tanh", eval_every_steps=40_000, num_shards=4),
    ("es", "pointmass"): dict(total_env_steps=400_000, population_size=32, learning_rate=0.03,
                              hidden_sizes=(16, 16), activation="tanh", eval_frequency=4, num_shards=4),
    ("sac", "halfcheetah"): dict(learning_rate=6e-4, reward_scale=10.0, grad_updates_per_batch=32, discount=0.97),
}


def preset(algo: str, env: str) -> dict:
    return dict(PRESETS.get((algo, env), {}))


def make_config(algo: str, env: str, /, **overrides):
    """The algorithm's config with the env preset and then ``overrides`` applied."""
    if algo not in CONFIGS:
        raise KeyError(f"unknown algorithm {algo!r}; choose from {sorted(CONFIGS)}")
    values = preset(algo, env)
    values.update({k: v for k, v in overrides.items() if v is not None})
    return CONFIGS[algo](**values)
