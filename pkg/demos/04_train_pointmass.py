"""Train PPO on PointMass, save the policy, load it back and evaluate."""

import tempfile
from pathlib import Path

from qpsim.agents import Policy, evaluate, random_returns, train_ppo
from qpsim.agents.presets import make_config
from qpsim.envs import make

env = make("pointmass")
print("random policy return", random_returns(env, 128, seed=0).mean())

# the PointMass preset, cut to a quarter of its budget to finish in seconds
cfg = make_config("ppo", "pointmass", total_env_steps=250_000)
policy, log = train_ppo(env, cfg, seed=0, verbose=True)

out = Path(tempfile.mkdtemp()) / "ppo_pointmass.ckpt"
policy.save(out)
loaded = Policy.load(out)
print("reloaded policy return", evaluate(env, loaded.act, 128, seed=0).mean())

# the log has no randomness beyond the seed, so a rerun gives identical rows
_, again = train_ppo(env, cfg, seed=0)
print("rerun identical:", again.deterministic_rows() == log.deterministic_rows())
