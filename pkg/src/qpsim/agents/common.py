"""Pieces shared by the trainers: logs, evaluation, policy heads, reductions."""

from __future__ import annotations

import csv
import math
import time
from dataclasses import dataclass, field

import numpy as np

from qpsim.config import ConfigError
from qpsim.envs.base import AutoReset
from qpsim.nn import MLP, RunningStats, load_checkpoint, merge_all, normalize, save_checkpoint
from qpsim.parallel import WorkerPool, shard_bounds

LOG_HEADER = ("wall_seconds", "env_steps", "eval_reward_mean", "eval_reward_min", "eval_reward_max")
LOG_STD_MIN, LOG_STD_MAX = -5.0, 2.0


class TrainingDiverged(RuntimeError):
    """A loss or parameter became non-finite."""


def stream(seed: int, *keys) -> np.random.Generator:
    """Counter-based generator keyed by ``(seed, *keys)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed)] + [int(k) for k in keys])))


def check(cond: bool, message: str):
    if not cond:
        raise ConfigError(message)


def check_finite(name: str, *values):
    for v in values:
        if not np.all(np.isfinite(v)):
            raise TrainingDiverged(f"{name} became non-finite")


@dataclass
class TrainingLog:
    """Evaluation rows plus named events (first update step and the like)."""

    rows: list = field(default_factory=list)
    events: dict = field(default_factory=dict)
    start: float = field(default_factory=time.perf_counter)
    verbose: bool = False
    label: str = ""

    def add(self, env_steps: int, returns) -> tuple:
        r = np.asarray(returns, dtype=np.float64)
        row = (time.perf_counter() - self.start, int(env_steps), float(r.mean()), float(r.min()), float(r.max()))
        self.rows.append(row)
        if self.verbose:
            print(f"{self.label}steps {row[1]:>10d}  reward {row[2]:10.4f}  "
                  f"[{row[3]:.4f}, {row[4]:.4f}]  {row[0]:7.1f}s", flush=True)
        return row

    def deterministic_rows(self) -> list:
        """Rows without the wall clock, which is the only run-dependent column."""
        return [row[1:] for row in self.rows]

    def column(self, name: str) -> np.ndarray:
        k = LOG_HEADER.index(name)
        return np.array([row[k] for row in self.rows])

    def write_csv(self, path):
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(LOG_HEADER)
            for row in self.rows:
                w.writerow([repr(v) if isinstance(v, float) else v for v in row])


def read_log(path) -> list:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if tuple(rows[0]) != LOG_HEADER:
        raise ValueError(f"{path}: unexpected header {rows[0]}")
    return [(float(r[0]), int(r[1]), float(r[2]), float(r[3]), float(r[4])) for r in rows[1:]]


def eval_points(total: int, count: int) -> list:
    """``count`` evenly spaced positions in ``[0, total]``, including both ends."""
    if count <= 1:
        return [total]
    return sorted({int(round(total * k / (count - 1))) for k in range(count)})


def unwrap(env):
    """The bare env under an auto-reset wrapper."""
    return env.env if isinstance(env, AutoReset) else env


def evaluate(env, act_fn, episodes: int = 128, seed: int = 0) -> np.ndarray:
    """Returns of ``episodes`` full episodes run side by side without resets.

    ``act_fn(obs [S, d]) -> [S, a]``; a scene stops accumulating reward once
    it is done.
    """
    env = unwrap(env)
    state = env.reset(seed, episodes)
    total = np.zeros(episodes)
    alive = np.ones(episodes, dtype=bool)
    for _ in range(env.episode_length):
        state = env.step(state, act_fn(state.obs))
        total += np.where(alive, state.reward, 0.0)
        alive &= ~state.done
        if not alive.any():
            break
    return total


def random_returns(env, episodes: int = 128, seed: int = 0) -> np.ndarray:
    """Returns of uniform random actions in ``[-1, 1]``: the learning baseline."""
    rng = stream(seed, 0x52414E44)
    return evaluate(env, lambda obs: rng.uniform(-1.0, 1.0, size=(obs.shape[0], unwrap(env).act_dim)),
                    episodes, seed)


# observation statistics -----------------------------------------------------

def sharded_stats(stats: RunningStats, obs, num_shards: int, pool: WorkerPool = None) -> RunningStats:
    """Folds ``obs [S, ..., d]`` into ``stats``: each scene shard builds its
    own statistics, which are tree-merged in shard order."""
    obs = np.asarray(obs, dtype=np.float64)
    bounds = shard_bounds(obs.shape[0], num_shards)
    dim = stats.mean.shape[0]

    def part(b):
        return RunningStats.empty(dim).update(obs[b[0]:b[1]].reshape(-1, dim))

    parts = pool.map(part, bounds) if pool is not None else [part(b) for b in bounds]
    return stats.merge(merge_all(parts))


def maybe_normalize(stats: RunningStats, obs, enabled: bool):
    return normalize(stats, obs) if enabled else np.asarray(obs, dtype=np.float64)


def sharded_sum(fn, n: int, num_shards: int, pool: WorkerPool = None):
    """``sum_k fn(lo_k, hi_k)`` over fixed row shards, reduced pairwise in
    shard order so the result does not depend on how many workers ran it."""
    bounds = shard_bounds(n, num_shards)
    parts = pool.map(lambda b: fn(*b), bounds) if pool is not None else [fn(*b) for b in bounds]
    while len(parts) > 1:
        parts = [tree_add(parts[i], parts[i + 1]) if i + 1 < len(parts) else parts[i]
                 for i in range(0, len(parts), 2)]
    return parts[0]


def tree_add(a, b):
    if isinstance(a, tuple):
        return tuple(tree_add(x, y) for x, y in zip(a, b))
    return a + b


# Gaussian policy heads -------------------------------------------------------

LOG_2PI = math.log(2.0 * math.pi)


def gaussian_log_prob(x, mean, log_std):
    """Diagonal Gaussian log density, summed over the last axis."""
    z = (x - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def gaussian_entropy(log_std):
    return np.sum(log_std + 0.5 * (1.0 + LOG_2PI), axis=-1)


@dataclass
class Policy:
    """A trained policy: the network producing the action mean plus the
    observation statistics it was trained with.

    ``squash`` is ``"clip"`` (mean clipped to the action box) or ``"tanh"``.
    The network may emit more than ``act_dim`` outputs (a SAC head also
    emits log-stds); only the first ``act_dim`` are the mean.
    """

    env: str
    algo: str
    sizes: tuple
    activation: str
    act_dim: int
    params: np.ndarray
    stats: RunningStats = None
    squash: str = "clip"
    extra: dict = field(default_factory=dict)

    @property
    def net(self) -> MLP:
        return MLP(self.sizes, self.activation)

    def normalize(self, obs):
        if self.stats is None:
            return np.asarray(obs, dtype=np.float64)
        return normalize(self.stats, obs)

    def act(self, obs):
        mean = self.net.forward(self.params, self.normalize(obs))[..., : self.act_dim]
        return np.tanh(mean) if self.squash == "tanh" else np.clip(mean, -1.0, 1.0)

    def save(self, path, meta: dict = None):
        arrays = {"policy": self.params}
        if self.stats is not None:
            arrays["stats_mean"] = self.stats.mean
            arrays["stats_m2"] = self.stats.m2
        for k, v in self.extra.items():
            arrays[k] = v
        info = {"env": self.env, "algo": self.algo, "activation": self.activation, "act_dim": self.act_dim,
                "squash": self.squash, "stats_count": None if self.stats is None else self.stats.count}
        info.update(meta or {})
        save_checkpoint(path, self.sizes, arrays, info)

    @staticmethod
    def load(path) -> "Policy":
        dims, arrays, meta = load_checkpoint(path)
        stats = None
        if meta.get("stats_count") is not None:
            stats = RunningStats(float(meta["stats_count"]), arrays.pop("stats_mean"), arrays.pop("stats_m2"))
        params = arrays.pop("policy")
        return Policy(meta["env"], meta["algo"], tuple(dims), meta["activation"], int(meta["act_dim"]), params,
                      stats, meta.get("squash", "clip"), arrays)
