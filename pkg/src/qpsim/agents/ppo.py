"""Proximal policy optimization over sharded, auto-resetting scene batches.

One iteration collects ``batch_size * num_minibatches`` segments of
``unroll_length`` steps, which is ``batch_size * num_minibatches //
num_envs`` consecutive unrolls of the whole scene batch.  Observation
statistics are folded in per scene shard and tree-merged, advantages come
from GAE(lambda), and every minibatch gradient is a fixed-shard sum reduced
in shard order before one Adam step.
"""

from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from qpsim.agents.common import (
    Policy,
    TrainingDiverged,
    TrainingLog,
    check,
    check_finite,
    eval_points,
    evaluate,
    gaussian_entropy,
    gaussian_log_prob,
    maybe_normalize,
    sharded_stats,
    sharded_sum,
    stream,
    unwrap,
)
from qpsim.nn import MLP, RunningStats, adam_init, adam_step
from qpsim.parallel import WorkerPool


@dataclass(frozen=True)
class PPOConfig:
    total_env_steps: int = 10_000_000
    num_envs: int = 2048
    unroll_length: int = 5
    batch_size: int = 1024
    num_minibatches: int = 16
    num_update_epochs: int = 4
    learning_rate: float = 3e-4
    entropy_cost: float = 1e-3
    discounting: float = 0.95
    reward_scaling: float = 10.0
    gae_lambda: float = 0.95
    clip_epsilon: float = 0.2
    value_loss_coef: float = 0.5
    normalize_observations: bool = True
    eval_frequency: int = 20
    eval_episodes: int = 128
    hidden_sizes: tuple = (256, 256)
    activation: str = "swish"
    init_log_std: float = 0.0
    num_shards: int = 8
    workers: int = 1

    def replace(self, **kw) -> "PPOConfig":
        return PPOConfig(**{**asdict(self), **kw})

    @property
    def num_unrolls(self) -> int:
        return self.batch_size * self.num_minibatches // self.num_envs

    @property
    def steps_per_iteration(self) -> int:
        return self.num_unrolls * self.unroll_length * self.num_envs

    def validate(self) -> "PPOConfig":
        for f in fields(self):
            if f.type == "int":
                check(getattr(self, f.name) >= 1, f"{f.name} must be at least 1")
        check(self.batch_size % self.num_minibatches == 0, "batch_size must be divisible by num_minibatches")
        check(self.num_envs * self.unroll_length >= self.batch_size,
              "num_envs * unroll_length must be at least batch_size")
        check(self.batch_size * self.num_minibatches % self.num_envs == 0,
              "batch_size * num_minibatches must be a multiple of num_envs")
        check(self.learning_rate > 0, "learning_rate must be positive")
        check(0.0 <= self.discounting <= 1.0, "discounting must lie in [0, 1]")
        check(0.0 <= self.gae_lambda <= 1.0, "gae_lambda must lie in [0, 1]")
        check(self.clip_epsilon > 0, "clip_epsilon must be positive")
        check(self.reward_scaling > 0, "reward_scaling must be positive")
        check(self.entropy_cost >= 0 and self.value_loss_coef >= 0, "loss coefficients must be non-negative")
        check(self.activation in ("tanh", "swish"), "activation must be tanh or swish")
        return self


def gae(rewards, values, next_values, terminal, done, discounting: float, lam: float):
    """Generalized advantage estimates over ``[T, N]`` arrays.

    ``terminal`` steps do not bootstrap; ``done`` steps (terminal or
    truncated) cut the advantage recursion at the episode boundary.
    """
    t_len = rewards.shape[0]
    adv = np.zeros_like(values)
    delta = rewards + discounting * (1.0 - terminal) * next_values - values
    run = np.zeros_like(values[0])
    for t in range(t_len - 1, -1, -1):
        run = delta[t] + discounting * lam * (1.0 - done[t]) * run
        adv[t] = run
    return adv


def clipped_surrogate(ratio, advantage, clip_epsilon: float):
    """Per-sample ``min(r A, clip(r, 1-eps, 1+eps) A)`` and whether the
    unclipped branch (the one carrying gradient) is selected."""
    s1 = ratio * advantage
    s2 = np.clip(ratio, 1.0 - clip_epsilon, 1.0 + clip_epsilon) * advantage
    return np.minimum(s1, s2), s1 <= s2


class PPOLearner:
    """Parameter layout and loss gradient for the Gaussian actor and critic."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: PPOConfig):
        self.cfg = cfg
        self.act_dim = act_dim
        self.policy = MLP((obs_dim, *cfg.hidden_sizes, act_dim), cfg.activation)
        self.value = MLP((obs_dim, *cfg.hidden_sizes, 1), cfg.activation)
        self.n_pi = self.policy.num_params
        self.n_v = self.value.num_params
        self.num_params = self.n_pi + act_dim + self.n_v

    def init(self, rng) -> np.ndarray:
        return np.concatenate([self.policy.init(rng, last_scale=0.01),
                               np.full(self.act_dim, self.cfg.init_log_std), self.value.init(rng)])

    def split(self, params):
        a, b = self.n_pi, self.n_pi + self.act_dim
        return params[:a], params[a:b], params[b:]

    def mean(self, params, obs):
        return self.policy.forward(self.split(params)[0], obs)

    def values(self, params, obs):
        return self.value.forward(self.split(params)[2], obs)[:, 0]

    def shard_loss_grad(self, params, batch, lo: int, hi: int, n: int):
        """Sum over rows ``[lo, hi)`` of the per-sample loss and gradient,
        each already divided by the minibatch size ``n``."""
        cfg = self.cfg
        pp, log_std, vp = self.split(params)
        obs, act, logp_old = batch["obs"][lo:hi], batch["act"][lo:hi], batch["logp"][lo:hi]
        adv, ret = batch["adv"][lo:hi], batch["ret"][lo:hi]
        mu, pcache = self.policy.forward(pp, obs, keep_cache=True)
        std = np.exp(log_std)
        ratio = np.exp(gaussian_log_prob(act, mu, log_std) - logp_old)
        surr, active = clipped_surrogate(ratio, adv, cfg.clip_epsilon)
        g_logp = -(active * adv * ratio) / n
        z = (act - mu) / std
        gp, _ = self.policy.backward(pp, pcache, g_logp[:, None] * z / std)
        g_log_std = np.sum(g_logp[:, None] * (z * z - 1.0), axis=0)
        v, vcache = self.value.forward(vp, obs, keep_cache=True)
        err = v[:, 0] - ret
        gv, _ = self.value.backward(vp, vcache, (cfg.value_loss_coef * err / n)[:, None])
        losses = np.array([-surr.sum() / n, 0.5 * cfg.value_loss_coef * np.sum(err * err) / n])
        return np.concatenate([gp, g_log_std, gv]), losses

    def entropy_grad(self, params):
        """Gradient of ``-entropy_cost * H``; the entropy depends only on ``log_std``."""
        g = np.zeros(self.num_params)
        g[self.n_pi : self.n_pi + self.act_dim] = -self.cfg.entropy_cost
        return g, -self.cfg.entropy_cost * gaussian_entropy(self.split(params)[1])


def train_ppo(env, cfg: PPOConfig = None, seed: int = 0, pool: WorkerPool = None, verbose: bool = False):
    """Trains a Gaussian policy; returns ``(Policy, TrainingLog)``."""
    cfg = (cfg or PPOConfig()).validate()
    env = unwrap(env)
    own_pool = pool is None and cfg.workers > 1
    if own_pool:
        pool = WorkerPool(cfg.workers)
    env.set_parallel(pool, cfg.num_shards)
    try:
        return _train(env, cfg, seed, pool, verbose)
    finally:
        env.set_parallel(None, 1)
        if own_pool:
            pool.close()


def _train(env, cfg, seed, pool, verbose):
    learner = PPOLearner(env.obs_dim, env.act_dim, cfg)
    params = learner.init(stream(seed, 0))
    opt = adam_init(params, cfg.learning_rate)
    stats = RunningStats.empty(env.obs_dim)
    log = TrainingLog(verbose=verbose, label="ppo ")
    eval_seed = int(stream(seed, 1).integers(2**31))
    iterations = max(1, math.ceil(cfg.total_env_steps / cfg.steps_per_iteration))
    evals = set(eval_points(iterations, cfg.eval_frequency + 1))
    norm = cfg.normalize_observations
    n_env, t_len, n_unroll = cfg.num_envs, cfg.unroll_length, cfg.num_unrolls

    def policy_now():
        return Policy(env.name, "ppo", learner.policy.sizes, cfg.activation, env.act_dim,
                      learner.split(params)[0].copy(), stats if norm else None, "clip",
                      {"log_std": learner.split(params)[1].copy()})

    state = env.reset(seed, n_env)
    env_steps = 0
    # wall seconds spent stepping the env and in everything else of an
    # iteration; evaluation is excluded from both
    phases = log.events.setdefault("phase_seconds", {"env": 0.0, "learn": 0.0})
    try:
        for it in range(iterations + 1):
            if it in evals:
                pol = policy_now()
                log.add(env_steps, evaluate(env, pol.act, cfg.eval_episodes, eval_seed))
            if it == iterations:
                break
            t_iter = time.perf_counter()
            t_env = 0.0

            # rollouts ----------------------------------------------------------
            shape = (n_unroll, t_len, n_env)
            obs = np.zeros(shape + (env.obs_dim,))
            next_obs = np.zeros_like(obs)
            act = np.zeros(shape + (env.act_dim,))
            logp = np.zeros(shape)
            rew, term, done = np.zeros(shape), np.zeros(shape), np.zeros(shape)
            _, log_std, _ = learner.split(params)
            for u in range(n_unroll):
                for t in range(t_len):
                    o = np.asarray(state.obs, dtype=np.float64)
                    mu = learner.mean(params, maybe_normalize(stats, o, norm))
                    eps = stream(seed, 2, it, u, t).standard_normal(mu.shape)
                    a = mu + np.exp(log_std) * eps
                    t0 = time.perf_counter()
                    state = env.step(state, np.clip(a, -1.0, 1.0))
                    t_env += time.perf_counter() - t0
                    check_finite("observation", state.obs)
                    obs[u, t], act[u, t] = o, a
                    logp[u, t] = gaussian_log_prob(a, mu, log_std)
                    rew[u, t] = state.reward
                    d = state.done
                    trunc = state.metrics["truncation"] > 0
                    done[u, t], term[u, t] = d, d & ~trunc
                    next_obs[u, t] = state.obs
                    state = env.reset_done(state)
            env_steps += cfg.steps_per_iteration

            # statistics sync point: per scene shard, merged in shard order --------
            if norm:
                stats = sharded_stats(stats, obs.transpose(2, 0, 1, 3), cfg.num_shards, pool)
            nobs = maybe_normalize(stats, obs, norm)
            nnext = maybe_normalize(stats, next_obs, norm)

            # advantages ---------------------------------------------------------
            flat = (-1, env.obs_dim)
            v = learner.values(params, nobs.reshape(flat)).reshape(shape)
            v_next = learner.values(params, nnext.reshape(flat)).reshape(shape)
            adv = np.stack([gae(rew[u] * cfg.reward_scaling, v[u], v_next[u], term[u], done[u],
                                cfg.discounting, cfg.gae_lambda) for u in range(n_unroll)])
            ret = adv + v

            # segments are [unroll, env] pairs of unroll_length consecutive steps
            def segments(x):
                x = np.moveaxis(x, 2, 1)
                return x.reshape((n_unroll * n_env, t_len) + x.shape[3:])

            data = {"obs": segments(nobs), "act": segments(act), "logp": segments(logp),
                    "adv": segments(adv), "ret": segments(ret)}

            # SGD ------------------------------------------------------------------
            for epoch in range(cfg.num_update_epochs):
                perm = stream(seed, 3, it, epoch).permutation(n_unroll * n_env)
                for mb in range(cfg.num_minibatches):
                    rows = perm[mb * cfg.batch_size : (mb + 1) * cfg.batch_size]
                    batch = {k: x[rows].reshape((-1,) + x.shape[2:]) for k, x in data.items()}
                    a = batch["adv"]
                    batch["adv"] = (a - a.mean()) / (a.std() + 1e-8)
                    n = a.shape[0]
                    grad, losses = sharded_sum(lambda lo, hi: learner.shard_loss_grad(params, batch, lo, hi, n),
                                               n, cfg.num_shards, pool)
                    g_ent, ent_loss = learner.entropy_grad(params)
                    grad = grad + g_ent
                    total = losses.sum() + ent_loss
                    if not np.isfinite(total) or not np.all(np.isfinite(grad)):
                        raise TrainingDiverged(f"non-finite PPO loss at iteration {it}, epoch {epoch}, minibatch {mb}: "
                                               f"policy {losses[0]}, value {losses[1]}, entropy {ent_loss}")
                    opt, params = adam_step(opt, params, grad)
            phases["env"] += t_env
            phases["learn"] += time.perf_counter() - t_iter - t_env
    except KeyboardInterrupt:
        log.events["interrupted"] = True
    return policy_now(), log
