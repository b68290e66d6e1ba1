"""Analytic policy gradients through the physics step.

The loss is the negated discounted reward of a short rollout from a fixed
set of initial states.  It is evaluated once with tracked scalars, so a
single reverse sweep gives the gradient with respect to every policy
parameter, and Adam descends it.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass

import numpy as np

from qpsim import diff
from qpsim.agents.common import Policy, TrainingLog, check, check_finite, eval_points, evaluate, stream, unwrap
from qpsim.envs.base import NonDifferentiableEnv
from qpsim.nn import MLP, adam_init, adam_step


@dataclass(frozen=True)
class APGConfig:
    env: str = "pointmass"
    horizon: int = 20
    learning_rate: float = 1e-3
    iterations: int = 50
    num_envs: int = 4
    discount: float = 0.99
    hidden_sizes: tuple = (16, 16)
    activation: str = "tanh"
    strict: bool = True
    eval_frequency: int = 10
    eval_episodes: int = 128

    def replace(self, **kw) -> "APGConfig":
        return APGConfig(**{**asdict(self), **kw})

    def validate(self) -> "APGConfig":
        check(self.horizon >= 1, "horizon must be at least 1")
        check(self.iterations >= 1 and self.num_envs >= 1, "iterations and num_envs must be at least 1")
        check(self.learning_rate > 0, "learning_rate must be positive")
        check(0.0 <= self.discount <= 1.0, "discount must lie in [0, 1]")
        check(self.eval_frequency >= 1 and self.eval_episodes >= 1, "eval settings must be at least 1")
        check(self.activation in ("tanh", "swish"), "activation must be tanh or swish")
        return self


def require_differentiable(env):
    """Raises :class:`NonDifferentiableEnv` unless the env is smooth."""
    env = unwrap(env)
    if env.differentiable:
        return
    reasons = []
    if env.sys.contacts.size:
        reasons.append(f"{len(env.config.collide_pairs)} collider pairs with contacts")
    if env.sys.joints.has_limits:
        reasons.append("joint angle limits")
    raise NonDifferentiableEnv(f"env {env.name!r} is not differentiable: {' and '.join(reasons)}; "
                               "disable strict mode to treat these kinks as subgradient points")


class APGProblem:
    """The rollout loss as a function of the flat policy parameters."""

    def __init__(self, env, cfg: APGConfig, seed: int = 0):
        self.env = unwrap(env).with_dtype(np.float64)
        self.cfg = cfg
        self.net = MLP((self.env.obs_dim, *cfg.hidden_sizes, self.env.act_dim), cfg.activation)
        self.state0 = self.env.reset(int(stream(seed, 20).integers(2**31)), cfg.num_envs)

    def act(self, theta, obs):
        return np.tanh(self.net.forward(theta, obs))

    def loss(self, theta):
        """``-(1/S) sum_t discount^t sum_s reward[t, s]``; accepts plain
        floats or tracked scalars."""
        state = self.state0
        total = 0.0
        for t in range(self.cfg.horizon):
            state = self.env.step(state, self.act(theta, state.obs))
            total = total + (self.cfg.discount**t) * np.sum(state.reward)
        return -total / self.cfg.num_envs

    def value_and_grad(self, theta):
        return diff.value_and_grad(self.loss, theta)


def train_apg(env, cfg: APGConfig = None, seed: int = 0, verbose: bool = False):
    """Returns ``(Policy, TrainingLog)``; ``log.events["loss"]`` holds the
    loss before each update."""
    cfg = (cfg or APGConfig()).validate()
    if cfg.strict:
        require_differentiable(env)
    problem = APGProblem(env, cfg, seed)
    env64 = problem.env
    theta = problem.net.init(stream(seed, 0), last_scale=0.1)
    opt = adam_init(theta, cfg.learning_rate)
    log = TrainingLog(verbose=verbose, label="apg ")
    eval_seed = int(stream(seed, 1).integers(2**31))
    evals = set(eval_points(cfg.iterations, cfg.eval_frequency + 1))
    losses = log.events.setdefault("loss", [])

    def policy(th):
        return Policy(env64.name, "apg", problem.net.sizes, cfg.activation, env64.act_dim, th.copy(), None, "tanh")

    per_iter = cfg.horizon * cfg.num_envs
    try:
        for it in range(cfg.iterations + 1):
            if it in evals:
                log.add(it * per_iter, evaluate(env64, policy(theta).act, cfg.eval_episodes, eval_seed))
            if it == cfg.iterations:
                break
            value, g = problem.value_and_grad(theta)
            check_finite("APG loss", value, g)
            losses.append(value)
            opt, theta = adam_step(opt, theta, g)
    except KeyboardInterrupt:
        log.events["interrupted"] = True
    return policy(theta), log
