"""Conservation and throughput measurements, written as CSV."""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass, field

import numpy as np

from qpsim.config import default_qp
from qpsim.envs import make
from qpsim.parallel import WorkerPool, shard_bounds
from qpsim.physics import NumericalBlowup, System, measure_momentum_energy, system_step

CONSERVATION_HEADER = ("dt", "dP", "dL", "dE", "seeds")
THROUGHPUT_HEADER = ("batch", "workers", "steps_per_sec")
DEFAULT_LADDER = (0.02, 0.01, 0.005, 0.0025)


@dataclass
class ConservationReport:
    dt: list
    dP: list
    dL: list
    dE: list
    seeds: int

    def rows(self):
        return [(d, p, l, e, self.seeds) for d, p, l, e in zip(self.dt, self.dP, self.dL, self.dE)]


@dataclass
class ThroughputReport:
    batch: list
    steps_per_sec: list
    workers: int
    steps: list = field(default_factory=list)

    def rows(self):
        return [(b, self.workers, s) for b, s in zip(self.batch, self.steps_per_sec)]


def protocol_config(cfg, dt: float, actuators: bool):
    """Scene with damping, contacts and gravity removed, at step ``dt``."""
    joints = tuple(j.__class__(**{**j.__dict__, "damping": 0.0, "angular_damping": 0.0}) for j in cfg.joints)
    return cfg.replace(dt=float(dt), substeps=1, gravity=(0.0, 0.0, 0.0), joints=joints, colliders=(),
                       collide_include=None, actuators=cfg.actuators if actuators else ())


def _seed_rng(seed: int, stream: int):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([int(seed), stream])))


def run_conservation(cfg, dt_ladder=DEFAULT_LADDER, seeds=128, duration: float = 1.0,
                     torque: float = 0.5, kick: float = 1.0, dtype=np.float64) -> ConservationReport:
    """Momentum and energy drift over ``duration`` seconds for each ``dt``.

    Momentum runs drive every actuator with torques drawn uniformly from
    ``[-torque, torque]`` N·m each step; energy runs switch actuators off and
    kick every movable body with a ``kick`` m/s velocity in a random
    direction.  Each seed is one scene of a batch.  Drift is the mean over
    seeds of ``|X(T) - X(0)|``.
    """
    seed_list = list(range(seeds)) if isinstance(seeds, int) else list(seeds)
    if not seed_list:
        raise ValueError("need at least one seed")
    if not cfg.joints:
        raise ValueError("conservation protocol needs a scene with joints")
    n = len(seed_list)
    out = ConservationReport([], [], [], [], n)
    for dt in dt_ladder:
        steps = int(round(duration / dt))
        # momentum protocol
        mcfg = protocol_config(cfg, dt, actuators=True)
        sys = System(mcfg, dtype=dtype)
        qp = default_qp(mcfg, dtype=dtype).tile(n)
        p0, l0, _ = measure_momentum_energy(sys, qp)
        strength = np.array([a.strength for a in mcfg.actuators], dtype=np.float64)
        rngs = [_seed_rng(s, 0) for s in seed_list]
        try:
            for _ in range(steps):
                u = np.stack([r.uniform(-torque, torque, size=len(strength)) for r in rngs])
                action = np.where(strength > 0, u / np.where(strength > 0, strength, 1.0), 0.0)
                qp = system_step(sys, qp, action.astype(dtype))
        except NumericalBlowup as e:
            raise NumericalBlowup(f"momentum protocol blew up at dt={dt}: {e}", e.scenes) from e
        p1, l1, _ = measure_momentum_energy(sys, qp)
        out.dP.append(float(np.linalg.norm(p1 - p0, axis=1).mean()))
        out.dL.append(float(np.linalg.norm(l1 - l0, axis=1).mean()))

        # energy protocol
        ecfg = protocol_config(cfg, dt, actuators=False)
        sys = System(ecfg, dtype=dtype)
        qp = default_qp(ecfg, dtype=dtype).tile(n)
        vel = np.zeros_like(qp.vel)
        for row, s in enumerate(seed_list):
            d = _seed_rng(s, 1).normal(size=(sys.num_bodies, 3))
            d /= np.linalg.norm(d, axis=1, keepdims=True)
            vel[row] = kick * d * sys.movable[:, None] * sys.pos_free
        qp = qp.replace(vel=vel)
        _, _, e0 = measure_momentum_energy(sys, qp)
        try:
            for _ in range(steps):
                qp = system_step(sys, qp)
        except NumericalBlowup as e:
            raise NumericalBlowup(f"energy protocol blew up at dt={dt}: {e}", e.scenes) from e
        _, _, e1 = measure_momentum_energy(sys, qp)
        out.dE.append(float(np.abs(e1 - e0).mean()))
        out.dt.append(float(dt))
    return out


def run_throughput(env_name: str, batch_sizes=(1, 64, 1024), workers: int = 1, duration: float = 2.0,
                   warmup: int = 2, num_shards: int = None, seed: int = 0) -> ThroughputReport:
    """Random-action stepping rate in effective env steps per wall second.

    Each batch is cut into ``num_shards`` (default ``workers``) contiguous
    shards stepped on a thread pool.
    """
    batch_sizes = list(batch_sizes)
    if any(b <= a for a, b in zip(batch_sizes, batch_sizes[1:])):
        raise ValueError("batch sizes must be strictly increasing")
    env = make(env_name)
    rate, counts = [], []
    with WorkerPool(workers) as pool:
        for b in batch_sizes:
            bounds = shard_bounds(b, num_shards or workers)
            state = env.reset(seed, b)
            qps = [state.qp.take(slice(lo, hi)) for lo, hi in bounds]
            rng = np.random.default_rng(seed)

            def advance(args):
                qp, act = args
                return system_step(env.sys, qp, act)

            def one_step(qps):
                acts = rng.uniform(-1, 1, size=(b, env.act_dim)).astype(env.dtype)
                return pool.map(advance, [(q, acts[lo:hi]) for q, (lo, hi) in zip(qps, bounds)])

            for _ in range(warmup):
                qps = one_step(qps)
            n = 0
            t0 = time.perf_counter()
            while True:
                qps = one_step(qps)
                n += 1
                elapsed = time.perf_counter() - t0
                if elapsed >= duration:
                    break
            rate.append(b * n / elapsed)
            counts.append(n)
    return ThroughputReport(batch_sizes, rate, workers, counts)


def write_csv(path, header, rows):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow(r)
