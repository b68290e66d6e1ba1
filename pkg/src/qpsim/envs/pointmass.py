"""PointMass: a smooth, contact-free debugging task (not a locomotion benchmark)."""

from __future__ import annotations

import numpy as np

from qpsim.envs.base import Env


class PointMass(Env):
    """Steer a unit mass in the plane toward a fixed target with two thrusters.

    Observation is ``[x, y, vx, vy]``.  Reward is ``exp(-d^2)`` where ``d``
    is the distance to ``target`` after the step.  There is no gravity, no
    contact and no joint, so the whole episode is differentiable.
    """

    name = "pointmass"
    scene = "pointmass"
    episode_length = 100
    target = (2.0, 0.0)

    def __init__(self, *args, target=None, **kw):
        if target is not None:
            self.target = tuple(float(t) for t in target)
        super().__init__(*args, **kw)

    def observe(self, qp):
        return np.concatenate([qp.pos[:, 0, :2], qp.vel[:, 0, :2]], axis=1)

    def distance_sq(self, qp):
        d = qp.pos[:, 0, :2] - np.asarray(self.target, dtype=self.dtype)
        return d[:, 0] * d[:, 0] + d[:, 1] * d[:, 1]

    def reward(self, qp, next_qp, action):
        d2 = self.distance_sq(next_qp)
        return np.exp(-d2), {"distance_sq": d2}
