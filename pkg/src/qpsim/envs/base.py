"""Batched gym-style environments over the physics step."""

from __future__ import annotations

import copy
from dataclasses import dataclass, field, replace

import numpy as np

from qpsim.config import default_angles, default_qp, load_config, scene_path, traversal
from qpsim.parallel import WorkerPool, shard_bounds
from qpsim.physics import QP, NumericalBlowup, System, system_step


class NonDifferentiableEnv(RuntimeError):
    """Raised when a gradient is requested through contacts or other kinks."""


@dataclass
class EnvState:
    qp: QP
    obs: np.ndarray
    reward: np.ndarray
    done: np.ndarray
    steps: np.ndarray
    metrics: dict = field(default_factory=dict)
    # how many times each scene has been reset; keys the reset noise stream
    reset_count: np.ndarray = None
    seed: int = 0
    info: dict = field(default_factory=dict)
    # stream id of each scene's reset noise; defaults to the scene position
    scene_ids: np.ndarray = None

    @property
    def num_scenes(self) -> int:
        return self.obs.shape[0]

    def replace(self, **kw) -> "EnvState":
        return replace(self, **kw)


def scene_rng(seed: int, scene: int, reset_count: int = 0) -> np.random.Generator:
    """Counter-based stream keyed by ``(seed, scene, reset_count)``."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), int(scene), int(reset_count)])))


class Env:
    """Base environment: subclasses set ``scene`` and define observation,
    reward and termination.

    ``noise_scale`` multiplies the reset noise: joint angles get
    ``U(-0.1, 0.1)`` rad, root bodies ``U(-0.1, 0.1)`` m on horizontal free
    axes and every free linear velocity component ``U(-0.1, 0.1)`` m/s.
    """

    name = "env"
    scene = None
    episode_length = 1000
    noise_scale = 1.0
    joint_noise = 0.1
    root_noise = 0.1
    vel_noise = 0.1

    def __init__(self, config=None, episode_length: int = None, noise_scale: float = None, dtype=np.float32):
        self.config = config if config is not None else load_config(scene_path(self.scene))
        self.sys = System(self.config, dtype=dtype)
        self.dtype = np.dtype(dtype)
        if episode_length is not None:
            self.episode_length = int(episode_length)
        if noise_scale is not None:
            self.noise_scale = float(noise_scale)
        self._angles0 = default_angles(self.config)
        self._roots = traversal(self.config)[0]
        self._default = default_qp(self.config, dtype=dtype)
        self.obs_dim = self.observe(self._default).shape[1]
        self.pool = None
        self.num_shards = 1

    def set_parallel(self, pool: WorkerPool = None, num_shards: int = 1):
        """Steps physics in ``num_shards`` fixed scene shards on ``pool``.

        The shard layout, not the worker count, decides the arithmetic, so
        any pool size gives bitwise identical states.
        """
        self.pool = pool
        self.num_shards = max(1, int(num_shards))
        return self

    def physics_step(self, qp: QP, action) -> QP:
        if self.pool is None or self.num_shards == 1 or qp.num_scenes == 1 or action.dtype == object:
            return system_step(self.sys, qp, action)
        bounds = shard_bounds(qp.num_scenes, self.num_shards)

        def run(b):
            try:
                return system_step(self.sys, qp.take(slice(*b)), action[b[0]:b[1]])
            except NumericalBlowup as e:
                scenes = [b[0] + s for s in e.scenes]
                raise NumericalBlowup(f"state blew up in scenes {scenes}", scenes) from e

        return QP.concatenate(self.pool.map(run, bounds))

    def with_dtype(self, dtype) -> "Env":
        """A copy of this env that simulates in ``dtype``."""
        if np.dtype(dtype) == self.dtype:
            return self
        out = copy.copy(self)
        out.sys = System(self.config, dtype=dtype)
        out.dtype = np.dtype(dtype)
        out._default = default_qp(self.config, dtype=dtype)
        return out

    @property
    def act_dim(self) -> int:
        return self.sys.act_dim

    @property
    def dt(self) -> float:
        return self.config.dt

    @property
    def differentiable(self) -> bool:
        """Smooth in state and action: no contacts and no joint limits."""
        return self.sys.contacts.size == 0 and not self.sys.joints.has_limits

    # subclass hooks -----------------------------------------------------
    def observe(self, qp: QP) -> np.ndarray:
        raise NotImplementedError

    def reward(self, qp: QP, next_qp: QP, action) -> tuple:
        """``(reward [S], metrics dict of [S])``."""
        raise NotImplementedError

    def terminated(self, qp: QP) -> np.ndarray:
        return np.zeros(qp.num_scenes, dtype=bool)

    # noise --------------------------------------------------------------
    def sample_qp(self, seed: int, scenes, reset_counts, noise_scale: float = None) -> QP:
        scale = self.noise_scale if noise_scale is None else float(noise_scale)
        scenes = np.asarray(scenes)
        n = len(scenes)
        if scale == 0.0:
            return self._default.tile(n)
        cfg, sys = self.config, self.sys
        nj, nb = len(cfg.joints), len(cfg.bodies)
        angles = np.broadcast_to(self._angles0, (n, nj, 3)).copy()
        root_pos = np.broadcast_to(np.array([b.pos for b in cfg.bodies], dtype=np.float64).reshape(nb, 3),
                                   (n, nb, 3)).copy()
        vel = np.zeros((n, nb, 3))
        dofs = np.array([j.dof for j in cfg.joints], dtype=np.int64)
        # horizontal root noise only where the root is free to translate
        root_mask = sys.pos_free.astype(np.float64)
        root_mask[:, 2] = 0.0
        vel_mask = sys.pos_free.astype(np.float64) * sys.movable[:, None]
        for row, (scene, count) in enumerate(zip(scenes, reset_counts)):
            rng = scene_rng(seed, scene, count)
            ja = rng.uniform(-self.joint_noise, self.joint_noise, size=(nj, 3)) * scale
            ja[dofs == 1, 1:] = 0.0
            angles[row] += ja
            rp = rng.uniform(-self.root_noise, self.root_noise, size=(nb, 3)) * scale
            for r in self._roots:
                root_pos[row, r] += rp[r] * root_mask[r]
            vel[row] = rng.uniform(-self.vel_noise, self.vel_noise, size=(nb, 3)) * scale * vel_mask
        qp = default_qp(cfg, angles=angles, root_pos=root_pos, dtype=self.dtype)
        return qp.replace(vel=vel.astype(self.dtype))

    # gym-style API -------------------------------------------------------
    def reset(self, seed: int, num_scenes: int = 1, noise_scale: float = None, scene_ids=None) -> EnvState:
        """Fresh batch; ``scene_ids`` (default ``0..S-1``) pick each scene's
        noise stream, so repeated ids give repeated initial states."""
        if num_scenes < 1:
            raise ValueError("num_scenes must be at least 1")
        ids = np.arange(num_scenes) if scene_ids is None else np.asarray(scene_ids, dtype=np.int64)
        if ids.shape != (num_scenes,):
            raise ValueError("scene_ids must have one entry per scene")
        counts = np.zeros(num_scenes, dtype=np.int64)
        qp = self.sample_qp(seed, ids, counts, noise_scale)
        zeros = np.zeros(num_scenes, dtype=self.dtype)
        _, metrics = self.reward(qp, qp, np.zeros((num_scenes, self.act_dim), dtype=self.dtype))
        metrics = {k: np.zeros(num_scenes, dtype=self.dtype) for k in metrics}
        metrics["truncation"] = np.zeros(num_scenes, dtype=self.dtype)
        return EnvState(qp=qp, obs=self.observe(qp), reward=zeros, done=np.zeros(num_scenes, dtype=bool),
                        steps=np.zeros(num_scenes, dtype=np.int64), metrics=metrics, reset_count=counts,
                        seed=int(seed), info={"noise_scale": noise_scale}, scene_ids=ids)

    def step(self, state: EnvState, action) -> EnvState:
        action = np.asarray(action)
        if action.dtype != object:
            action = action.astype(self.dtype, copy=False)
        if action.shape != (state.num_scenes, self.act_dim):
            raise ValueError(f"action shape {action.shape} does not match ({state.num_scenes}, {self.act_dim})")
        qp = self.physics_step(state.qp, action)
        reward, metrics = self.reward(state.qp, qp, action)
        steps = np.minimum(state.steps + 1, self.episode_length)
        term = np.asarray(self.terminated(qp), dtype=bool)
        trunc = steps >= self.episode_length
        metrics["truncation"] = (trunc & ~term).astype(self.dtype)
        return state.replace(qp=qp, obs=self.observe(qp), reward=reward, done=term | trunc, steps=steps,
                             metrics=metrics, info=dict(state.info))

    def reset_done(self, state: EnvState) -> EnvState:
        """Re-initializes done scenes from fresh reset noise.

        ``done`` and ``reward`` keep the values of the finishing step; the
        pre-reset observation is kept in ``info["final_obs"]``.
        """
        idx = np.flatnonzero(state.done)
        if len(idx) == 0:
            return state
        counts = state.reset_count.copy()
        counts[idx] += 1
        ids = np.arange(state.num_scenes) if state.scene_ids is None else state.scene_ids
        fresh = self.sample_qp(state.seed, ids[idx], counts[idx], state.info.get("noise_scale"))
        fields = []
        for old, new in zip(state.qp.fields(), fresh.fields()):
            f = old.copy()
            f[idx] = new
            fields.append(f)
        qp = QP(*fields)
        obs = state.obs.copy()
        obs[idx] = self.observe(fresh)
        steps = state.steps.copy()
        steps[idx] = 0
        info = dict(state.info)
        info["final_obs"] = state.obs
        return state.replace(qp=qp, obs=obs, steps=steps, reset_count=counts, info=info)


class AutoReset:
    """Wraps an env so scenes that finish are reset in place on the same step."""

    def __init__(self, env: Env):
        self.env = env

    def __getattr__(self, name):
        return getattr(self.env, name)

    def reset(self, seed: int, num_scenes: int = 1, noise_scale: float = None, scene_ids=None) -> EnvState:
        return self.env.reset(seed, num_scenes, noise_scale, scene_ids)

    def step(self, state: EnvState, action) -> EnvState:
        return self.env.reset_done(self.env.step(state, action))


def reset(env: Env, seed: int, num_scenes: int = 1, noise_scale: float = None) -> EnvState:
    return env.reset(seed, num_scenes, noise_scale)


def env_step(env: Env, state: EnvState, actions) -> EnvState:
    return env.step(state, actions)


def observe(env: Env, qp: QP) -> np.ndarray:
    return env.observe(qp)
