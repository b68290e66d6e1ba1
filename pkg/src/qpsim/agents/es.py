"""Evolution strategies with mirrored sampling and centered-rank shaping.

The lead draws ``population_size / 2`` Gaussian directions per generation
and forms the mirrored population ``theta + sigma * eps`` followed by
``theta - sigma * eps``.  Members are split into fixed shards whose
fitnesses are gathered in shard order; the lead shapes them by centered
ranks and takes an Adam step along the estimated gradient.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.stats import rankdata

from qpsim.agents.common import Policy, TrainingLog, check, check_finite, eval_points, evaluate, stream, unwrap
from qpsim.nn import MLP, adam_init, adam_step
from qpsim.parallel import WorkerPool, shard_bounds


@dataclass(frozen=True)
class ESConfig:
    total_env_steps: int = 10_000_000
    population_size: int = 256
    sigma: float = 0.1
    learning_rate: float = 1e-2
    fitness_shaping: str = "centered_rank"
    episodes_per_eval: int = 1
    l2_coef: float = 0.0
    eval_frequency: int = 20
    eval_episodes: int = 128
    hidden_sizes: tuple = (256, 256)
    activation: str = "swish"
    num_shards: int = 8
    workers: int = 1

    def replace(self, **kw) -> "ESConfig":
        return ESConfig(**{**asdict(self), **kw})

    def validate(self) -> "ESConfig":
        check(self.population_size >= 2 and self.population_size % 2 == 0,
              "population_size must be even and at least 2 (mirrored sampling)")
        check(self.sigma > 0 and self.learning_rate > 0, "sigma and learning_rate must be positive")
        check(self.fitness_shaping in ("centered_rank", "none"), "fitness_shaping must be centered_rank or none")
        for name in ("total_env_steps", "episodes_per_eval", "eval_frequency", "eval_episodes", "num_shards",
                     "workers"):
            check(getattr(self, name) >= 1, f"{name} must be at least 1")
        check(self.l2_coef >= 0, "l2_coef must be non-negative")
        check(self.activation in ("tanh", "swish"), "activation must be tanh or swish")
        return self


def centered_ranks(fitness) -> np.ndarray:
    """Ranks scaled to ``[-0.5, 0.5]``; ties share their average rank, so a
    population of equal fitnesses shapes to all zeros."""
    f = np.asarray(fitness, dtype=np.float64)
    if f.size < 2:
        return np.zeros_like(f)
    return (rankdata(f, method="average") - 1.0) / (f.size - 1) - 0.5


def mirrored(theta, eps, sigma: float):
    """``[P, n]`` population: ``theta + sigma * eps`` rows, then the mirrors."""
    return np.concatenate([theta + sigma * eps, theta - sigma * eps])


def es_gradient(eps, fitness, sigma: float, shaping: str = "centered_rank"):
    """``(1 / (P sigma)) * sum_i shaped_i * eps_i`` over the mirrored
    population whose first half used ``+eps`` and second half ``-eps``."""
    shaped = centered_ranks(fitness) if shaping == "centered_rank" else np.asarray(fitness, dtype=np.float64)
    full = np.concatenate([eps, -eps])
    return shaped @ full / (full.shape[0] * sigma)


def es_optimize(fitness_fn, theta0, population_size: int = 256, sigma: float = 0.1, learning_rate: float = 1e-2,
                iterations: int = 100, seed: int = 0, shaping: str = "centered_rank", l2_coef: float = 0.0,
                num_shards: int = 1, pool: WorkerPool = None, callback=None):
    """Maximizes ``fitness_fn(population [P, n]) -> [P]``; returns ``theta``.

    ``fitness_fn`` is called once per shard with that shard's members; the
    shard results are concatenated in shard order.  ``callback(generation,
    theta, fitness)`` runs after every update; returning ``True`` stops.
    """
    if population_size < 2 or population_size % 2:
        raise ValueError("population_size must be even and at least 2")
    theta = np.asarray(theta0, dtype=np.float64).copy()
    opt = adam_init(theta, learning_rate)
    bounds = shard_bounds(population_size, num_shards)
    for gen in range(iterations):
        eps = stream(seed, 10, gen).standard_normal((population_size // 2,) + theta.shape)
        pop = mirrored(theta, eps, sigma)
        run = (lambda b: np.asarray(fitness_fn(pop[b[0]:b[1]]), dtype=np.float64))
        fitness = np.concatenate(pool.map(run, bounds) if pool is not None else [run(b) for b in bounds])
        check_finite("fitness", fitness)
        g = es_gradient(eps, fitness, sigma, shaping)
        opt, theta = adam_step(opt, theta, -g + l2_coef * theta)
        if callback is not None and callback(gen, theta, fitness):
            break
    return theta


def population_forward(net: MLP, thetas, obs):
    """Each member's network on its own observations: ``thetas [P, n]``,
    ``obs [P, E, d]`` to ``[P, E, out]``."""
    h = obs
    at = 0
    for k, (i, o) in enumerate(net.shapes):
        w = thetas[:, at : at + i * o].reshape(-1, i, o)
        at += i * o
        b = thetas[:, at : at + o]
        at += o
        h = np.matmul(h, w) + b[:, None, :]
        if k < len(net.shapes) - 1:
            h = net._act(h)
    return h


def member_returns(env, net: MLP, thetas, episodes: int, seed: int):
    """Mean return of each member over ``episodes`` shared initial states,
    and the number of env steps taken by live scenes."""
    p = thetas.shape[0]
    state = env.reset(seed, p * episodes, scene_ids=np.tile(np.arange(episodes), p))
    total = np.zeros(p * episodes)
    alive = np.ones(p * episodes, dtype=bool)
    steps = 0
    for _ in range(env.episode_length):
        obs = np.asarray(state.obs, dtype=np.float64).reshape(p, episodes, -1)
        act = np.clip(population_forward(net, thetas, obs), -1.0, 1.0).reshape(p * episodes, -1)
        state = env.step(state, act)
        steps += int(alive.sum())
        total += np.where(alive, state.reward, 0.0)
        alive &= ~state.done
        if not alive.any():
            break
    return total.reshape(p, episodes).mean(axis=1), steps


def train_es(env, cfg: ESConfig = None, seed: int = 0, pool: WorkerPool = None, verbose: bool = False):
    """Trains a deterministic policy; returns ``(Policy, TrainingLog)``."""
    cfg = (cfg or ESConfig()).validate()
    env = unwrap(env)
    own_pool = pool is None and cfg.workers > 1
    if own_pool:
        pool = WorkerPool(cfg.workers)
    try:
        net = MLP((env.obs_dim, *cfg.hidden_sizes, env.act_dim), cfg.activation)
        theta = net.init(stream(seed, 0), last_scale=0.01)
        log = TrainingLog(verbose=verbose, label="es ")
        eval_seed = int(stream(seed, 1).integers(2**31))
        per_gen = cfg.population_size * cfg.episodes_per_eval * env.episode_length
        generations = max(1, math.ceil(cfg.total_env_steps / per_gen))
        evals = set(eval_points(generations, cfg.eval_frequency + 1))
        env_steps = 0

        def policy(th):
            return Policy(env.name, "es", net.sizes, cfg.activation, env.act_dim, th.copy(), None, "clip")

        log.add(0, evaluate(env, policy(theta).act, cfg.eval_episodes, eval_seed))
        opt = adam_init(theta, cfg.learning_rate)
        bounds = shard_bounds(cfg.population_size, cfg.num_shards)
        try:
            for gen in range(generations):
                eps = stream(seed, 10, gen).standard_normal((cfg.population_size // 2, theta.size))
                pop = mirrored(theta, eps, cfg.sigma)
                # every member of a generation starts from the same initial states
                gen_seed = int(stream(seed, 11, gen).integers(2**31))

                def shard(b, pop=pop, gen_seed=gen_seed):
                    return member_returns(env, net, pop[b[0]:b[1]], cfg.episodes_per_eval, gen_seed)

                parts = pool.map(shard, bounds) if pool is not None else [shard(b) for b in bounds]
                fit = np.concatenate([r for r, _ in parts])
                env_steps += sum(s for _, s in parts)
                check_finite("fitness", fit)
                g = es_gradient(eps, fit, cfg.sigma, cfg.fitness_shaping)
                opt, theta = adam_step(opt, theta, -g + cfg.l2_coef * theta)
                if gen + 1 in evals:
                    log.add(env_steps, evaluate(env, policy(theta).act, cfg.eval_episodes, eval_seed))
        except KeyboardInterrupt:
            log.events["interrupted"] = True
        return policy(theta), log
    finally:
        if own_pool:
            pool.close()
