"""Soft actor-critic with one replay buffer per scene shard.

Each iteration steps every scene once and appends the transitions to the
buffer of the shard that owns the scene.  Observation statistics are folded
in per shard and tree-merged.  Each gradient update draws a fixed share of
the batch from every shard buffer, computes the twin-Q, actor and
temperature gradients on that share, sums the shares in shard order and
applies Adam; the target critics then track the online ones by Polyak
averaging.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np

from qpsim.agents.common import (
    LOG_2PI,
    LOG_STD_MAX,
    LOG_STD_MIN,
    Policy,
    TrainingDiverged,
    TrainingLog,
    check,
    check_finite,
    evaluate,
    maybe_normalize,
    sharded_stats,
    stream,
    tree_add,
    unwrap,
)
from qpsim.nn import MLP, RunningStats, adam_init, adam_step
from qpsim.parallel import WorkerPool, shard_bounds

TANH_EPS = 1e-6


@dataclass(frozen=True)
class SACConfig:
    total_env_steps: int = 5_000_000
    num_envs: int = 128
    learning_rate: float = 3e-4
    reward_scale: float = 0.1
    min_replay_size: int = 10_000
    replay_capacity: int = 1_000_000
    grad_updates_per_batch: int = 64
    batch_size: int = 256
    discount: float = 0.99
    tau: float = 0.005
    target_entropy: float = None
    init_alpha: float = 1.0
    normalize_observations: bool = True
    eval_every_steps: int = 10_000
    eval_episodes: int = 128
    hidden_sizes: tuple = (256, 256)
    activation: str = "swish"
    num_shards: int = 8
    workers: int = 1

    def replace(self, **kw) -> "SACConfig":
        return SACConfig(**{**asdict(self), **kw})

    def validate(self) -> "SACConfig":
        for name in ("total_env_steps", "num_envs", "min_replay_size", "replay_capacity", "grad_updates_per_batch",
                     "batch_size", "eval_every_steps", "eval_episodes", "num_shards", "workers"):
            check(getattr(self, name) >= 1, f"{name} must be at least 1")
        check(self.min_replay_size <= self.replay_capacity, "min_replay_size must not exceed replay_capacity")
        check(self.learning_rate > 0 and self.reward_scale > 0 and self.init_alpha > 0,
              "learning_rate, reward_scale and init_alpha must be positive")
        check(0.0 <= self.discount <= 1.0, "discount must lie in [0, 1]")
        check(0.0 < self.tau <= 1.0, "tau must lie in (0, 1]")
        check(self.activation in ("tanh", "swish"), "activation must be tanh or swish")
        return self


class ReplayBuffer:
    """Ring buffer of ``(obs, action, reward, next_obs, done)`` transitions.

    ``done`` marks transitions whose successor is terminal, so the target
    does not bootstrap; time-limit truncations are stored as not done.
    """

    def __init__(self, capacity: int, obs_dim: int, act_dim: int, min_size: int = 1):
        if capacity < 1 or min_size > capacity:
            raise ValueError("need 1 <= min_size <= capacity")
        self.capacity, self.min_size = int(capacity), max(1, int(min_size))
        self.obs = np.zeros((capacity, obs_dim))
        self.action = np.zeros((capacity, act_dim))
        self.reward = np.zeros(capacity)
        self.next_obs = np.zeros((capacity, obs_dim))
        self.done = np.zeros(capacity)
        self.cursor = 0
        self.fill = 0

    @property
    def ready(self) -> bool:
        return self.fill >= self.min_size

    def add(self, obs, action, reward, next_obs, done):
        n = len(reward)
        idx = (self.cursor + np.arange(n)) % self.capacity
        self.obs[idx], self.action[idx], self.reward[idx] = obs, action, reward
        self.next_obs[idx], self.done[idx] = next_obs, done
        self.cursor = int((self.cursor + n) % self.capacity)
        self.fill = min(self.capacity, self.fill + n)

    def sample(self, rng: np.random.Generator, n: int) -> dict:
        """``n`` transitions drawn uniformly, with replacement, from the filled region."""
        if not self.ready:
            raise RuntimeError(f"buffer holds {self.fill} transitions, fewer than the minimum {self.min_size}")
        idx = rng.integers(0, self.fill, size=n)
        return {"obs": self.obs[idx], "action": self.action[idx], "reward": self.reward[idx],
                "next_obs": self.next_obs[idx], "done": self.done[idx]}


def squashed_sample(mean, log_std, eps):
    """``a = tanh(mean + std * eps)`` and its log density with the tanh correction."""
    a = np.tanh(mean + np.exp(log_std) * eps)
    logp = np.sum(-0.5 * eps * eps - log_std - 0.5 * LOG_2PI - np.log(1.0 - a * a + TANH_EPS), axis=-1)
    return a, logp


class SACLearner:
    """Networks and loss gradients.  Parameters are a dict of flat vectors:
    ``policy``, ``q`` (both critics), ``q_target`` and ``log_alpha``."""

    def __init__(self, obs_dim: int, act_dim: int, cfg: SACConfig):
        self.cfg = cfg
        self.act_dim = act_dim
        self.policy = MLP((obs_dim, *cfg.hidden_sizes, 2 * act_dim), cfg.activation)
        self.critic = MLP((obs_dim + act_dim, *cfg.hidden_sizes, 1), cfg.activation)
        self.target_entropy = -float(act_dim) if cfg.target_entropy is None else float(cfg.target_entropy)

    def init(self, rng) -> dict:
        q = np.concatenate([self.critic.init(rng), self.critic.init(rng)])
        return {"policy": self.policy.init(rng), "q": q, "q_target": q.copy(),
                "log_alpha": np.array([math.log(self.cfg.init_alpha)])}

    def q_split(self, q):
        n = self.critic.num_params
        return q[:n], q[n:]

    def head(self, pp, obs, keep_cache=False):
        out = self.policy.forward(pp, obs, keep_cache=keep_cache)
        y = out[0] if keep_cache else out
        mean, raw = y[:, : self.act_dim], y[:, self.act_dim:]
        res = (mean, np.clip(raw, LOG_STD_MIN, LOG_STD_MAX), raw)
        return res + (out[1],) if keep_cache else res

    def q_values(self, q, obs, act):
        x = np.concatenate([obs, act], axis=1)
        q1, q2 = self.q_split(q)
        return self.critic.forward(q1, x)[:, 0], self.critic.forward(q2, x)[:, 0]

    def critic_target(self, params, q_target, batch, eps_next):
        """Soft Bellman target evaluated with the critic parameters ``q_target``."""
        mean, log_std, _ = self.head(params["policy"], batch["next_obs"])
        a_next, logp_next = squashed_sample(mean, log_std, eps_next)
        alpha = math.exp(params["log_alpha"][0])
        q_next = np.minimum(*self.q_values(q_target, batch["next_obs"], a_next))
        return (self.cfg.reward_scale * batch["reward"]
                + self.cfg.discount * (1.0 - batch["done"]) * (q_next - alpha * logp_next))

    def critic_loss(self, params, q_target, batch, eps_next):
        y = self.critic_target(params, q_target, batch, eps_next)
        q1, q2 = self.q_values(params["q"], batch["obs"], batch["action"])
        return 0.5 * np.mean((q1 - y) ** 2 + (q2 - y) ** 2)

    def grads(self, params, batch, eps_next, eps_cur, n: int):
        """Gradient sums for one shard of the batch, each term divided by the
        full batch size ``n``: ``((g_policy, g_q, g_log_alpha), losses)``."""
        alpha = math.exp(params["log_alpha"][0])
        obs, act = batch["obs"], batch["action"]
        q1p, q2p = self.q_split(params["q"])

        # critics
        y = self.critic_target(params, params["q_target"], batch, eps_next)
        x = np.concatenate([obs, act], axis=1)
        gq, critic_loss = [], 0.0
        for qp in (q1p, q2p):
            q, cache = self.critic.forward(qp, x, keep_cache=True)
            err = q[:, 0] - y
            gq.append(self.critic.backward(qp, cache, (err / n)[:, None])[0])
            critic_loss += 0.5 * np.sum(err * err) / n

        # actor, reparameterized through the tanh squash
        mean, log_std, raw, pcache = self.head(params["policy"], obs, keep_cache=True)
        std = np.exp(log_std)
        a, logp = squashed_sample(mean, log_std, eps_cur)
        xa = np.concatenate([obs, a], axis=1)
        q1, c1 = self.critic.forward(q1p, xa, keep_cache=True)
        q2, c2 = self.critic.forward(q2p, xa, keep_cache=True)
        pick1 = (q1[:, 0] <= q2[:, 0]).astype(np.float64)
        dq_da = (self.critic.backward(q1p, c1, (pick1 / n)[:, None])[1]
                 + self.critic.backward(q2p, c2, ((1.0 - pick1) / n)[:, None])[1])[:, obs.shape[1]:]
        one_minus = 1.0 - a * a
        dlogp_du = 2.0 * a * one_minus / (one_minus + TANH_EPS)
        du_dls = std * eps_cur
        d_mean = alpha * dlogp_du / n - dq_da * one_minus
        d_ls = alpha * (dlogp_du * du_dls - 1.0) / n - dq_da * one_minus * du_dls
        d_ls = d_ls * ((raw > LOG_STD_MIN) & (raw < LOG_STD_MAX))
        gp = self.policy.backward(params["policy"], pcache, np.concatenate([d_mean, d_ls], axis=1))[0]
        actor_loss = np.sum(alpha * logp - np.minimum(q1[:, 0], q2[:, 0])) / n

        # temperature
        g_alpha = np.array([-np.sum(logp + self.target_entropy) / n])
        alpha_loss = -params["log_alpha"][0] * np.sum(logp + self.target_entropy) / n
        return (gp, np.concatenate(gq), g_alpha), np.array([critic_loss, actor_loss, alpha_loss])


def train_sac(env, cfg: SACConfig = None, seed: int = 0, pool: WorkerPool = None, verbose: bool = False):
    """Trains a tanh-squashed Gaussian policy; returns ``(Policy, TrainingLog)``.

    ``log.events["first_update_env_steps"]`` records the env-step count at
    which the first gradient update happened.
    """
    cfg = (cfg or SACConfig()).validate()
    env = unwrap(env)
    own_pool = pool is None and cfg.workers > 1
    if own_pool:
        pool = WorkerPool(cfg.workers)
    num_shards = min(cfg.num_shards, cfg.num_envs, cfg.batch_size)
    env.set_parallel(pool, num_shards)
    try:
        return _train(env, cfg, seed, pool, num_shards, verbose)
    finally:
        env.set_parallel(None, 1)
        if own_pool:
            pool.close()


def _train(env, cfg, seed, pool, num_shards, verbose):
    learner = SACLearner(env.obs_dim, env.act_dim, cfg)
    params = learner.init(stream(seed, 0))
    opts = {k: adam_init(params[k], cfg.learning_rate) for k in ("policy", "q", "log_alpha")}
    stats = RunningStats.empty(env.obs_dim)
    norm = cfg.normalize_observations
    log = TrainingLog(verbose=verbose, label="sac ")
    eval_seed = int(stream(seed, 1).integers(2**31))

    env_shards = shard_bounds(cfg.num_envs, num_shards)
    batch_shards = shard_bounds(cfg.batch_size, num_shards)
    buffers = []
    for lo, hi in env_shards:
        share = (hi - lo) / cfg.num_envs
        buffers.append(ReplayBuffer(max(1, int(cfg.replay_capacity * share)), env.obs_dim, env.act_dim,
                                    min_size=math.ceil(cfg.min_replay_size * share)))

    def policy_now():
        return Policy(env.name, "sac", learner.policy.sizes, cfg.activation, env.act_dim, params["policy"].copy(),
                      stats if norm else None, "tanh")

    def run_map(fn, items):
        return pool.map(fn, items) if pool is not None else [fn(x) for x in items]

    state = env.reset(seed, cfg.num_envs)
    env_steps, next_eval, it, updates = 0, 0, 0, 0
    try:
        while True:
            if env_steps >= next_eval or env_steps >= cfg.total_env_steps:
                log.add(env_steps, evaluate(env, policy_now().act, cfg.eval_episodes, eval_seed))
                next_eval = (env_steps // cfg.eval_every_steps + 1) * cfg.eval_every_steps
            if env_steps >= cfg.total_env_steps:
                break

            # experience: every scene steps once; each shard fills its own buffer
            o = np.asarray(state.obs, dtype=np.float64)
            mean, log_std, _ = learner.head(params["policy"], maybe_normalize(stats, o, norm))
            a, _ = squashed_sample(mean, log_std, stream(seed, 2, it).standard_normal(mean.shape))
            state = env.step(state, a)
            check_finite("observation", state.obs)
            nxt = np.asarray(state.obs, dtype=np.float64)
            terminal = state.done & ~(state.metrics["truncation"] > 0)
            for (lo, hi), buf in zip(env_shards, buffers):
                buf.add(o[lo:hi], a[lo:hi], state.reward[lo:hi], nxt[lo:hi], terminal[lo:hi])
            state = env.reset_done(state)
            env_steps += cfg.num_envs
            if norm:
                stats = sharded_stats(stats, o, num_shards, pool)

            # updates: each shard samples its own share from its own buffer
            if all(b.ready for b in buffers):
                log.events.setdefault("first_update_env_steps", env_steps)
                for _ in range(cfg.grad_updates_per_batch):
                    def shard(k):
                        rng = stream(seed, 3, updates, k)
                        lo, hi = batch_shards[k]
                        b = buffers[k].sample(rng, hi - lo)
                        b["obs"] = maybe_normalize(stats, b["obs"], norm)
                        b["next_obs"] = maybe_normalize(stats, b["next_obs"], norm)
                        shape = (hi - lo, env.act_dim)
                        return learner.grads(params, b, rng.standard_normal(shape), rng.standard_normal(shape),
                                             cfg.batch_size)

                    parts = run_map(shard, range(len(batch_shards)))
                    while len(parts) > 1:
                        parts = [tree_add(parts[i], parts[i + 1]) if i + 1 < len(parts) else parts[i]
                                 for i in range(0, len(parts), 2)]
                    (gp, gq, ga), losses = parts[0]
                    if not (np.all(np.isfinite(losses)) and all(np.all(np.isfinite(g)) for g in (gp, gq, ga))):
                        raise TrainingDiverged(f"non-finite SAC loss at update {updates}: critic {losses[0]}, "
                                               f"actor {losses[1]}, temperature {losses[2]}")
                    for key, g in (("policy", gp), ("q", gq), ("log_alpha", ga)):
                        opts[key], params[key] = adam_step(opts[key], params[key], g)
                    params["q_target"] = (1.0 - cfg.tau) * params["q_target"] + cfg.tau * params["q"]
                    updates += 1
            it += 1
    except KeyboardInterrupt:
        log.events["interrupted"] = True
    log.events["updates"] = updates
    return policy_now(), log
