"""Ant and Halfcheetah locomotion tasks."""

from __future__ import annotations

import numpy as np

from qpsim.envs.base import Env
from qpsim.physics import joint_state


def _concat(parts):
    return np.concatenate([np.asarray(p).reshape(p.shape[0], -1) for p in parts], axis=1)


class Ant(Env):
    """Quadruped on a ground plane, 8 hip/knee torque actuators.

    Observation layout (75 values, version 1):

    ======  =====================================================
    0       torso height
    1:5     torso rotation quaternion (w, x, y, z)
    5:13    joint angles, in scene-file joint order
    13:21   joint angular rates
    21:48   linear velocity of the 9 non-ground bodies
    48:75   angular velocity of the 9 non-ground bodies
    ======  =====================================================

    Reward is forward x-velocity of the torso, plus 1.0 for staying up,
    minus ``0.5 * |a|^2``.  An episode ends when the torso leaves the
    height band [0.2, 1.0] or at the horizon.
    """

    name = "ant"
    scene = "ant"
    survive_bonus = 1.0
    ctrl_cost = 0.5
    healthy_z = (0.2, 1.0)

    def __init__(self, *args, **kw):
        self._setup = False
        super().__init__(*args, **kw)

    def _indices(self):
        if not self._setup:
            self.torso = self.config.body_index("torso")
            self.moving = np.flatnonzero(self.sys.movable)
            self._setup = True

    def observe(self, qp):
        self._indices()
        angle, rate = joint_state(self.sys, qp)
        t = self.torso
        return _concat([qp.pos[:, t, 2:3], qp.rot[:, t], angle, rate, qp.vel[:, self.moving], qp.ang[:, self.moving]])

    def reward(self, qp, next_qp, action):
        self._indices()
        fwd = next_qp.vel[:, self.torso, 0]
        ctrl = self.ctrl_cost * (action * action).sum(axis=1)
        survive = np.full(fwd.shape, self.survive_bonus, dtype=self.dtype)
        return fwd + survive - ctrl, {"forward_vel": fwd, "ctrl_cost": ctrl, "survive": survive}

    def terminated(self, qp):
        self._indices()
        z = qp.pos[:, self.torso, 2]
        lo, hi = self.healthy_z
        return (z < lo) | (z > hi)


class Halfcheetah(Env):
    """Planar runner: two-piece torso joined by a spine, two 3-link legs.

    Every body is frozen in world y-translation and x/z-rotation, so the
    motion stays in the x-z plane and spins only about y.

    Observation layout (25 values, version 1):

    ======  ===================================
    0       torso height
    1:5     torso rotation quaternion
    5:12    joint angles (spine, back leg, front leg)
    12:19   joint angular rates
    19:22   torso linear velocity
    22:25   torso angular velocity
    ======  ===================================

    Reward is forward x-velocity of the torso minus ``0.1 * |a|^2``; there
    is no early termination.
    """

    name = "halfcheetah"
    scene = "halfcheetah"
    ctrl_cost = 0.1

    def observe(self, qp):
        t = self.config.body_index("torso")
        angle, rate = joint_state(self.sys, qp)
        return _concat([qp.pos[:, t, 2:3], qp.rot[:, t], angle, rate, qp.vel[:, t], qp.ang[:, t]])

    def reward(self, qp, next_qp, action):
        fwd = next_qp.vel[:, self.config.body_index("torso"), 0]
        ctrl = self.ctrl_cost * (action * action).sum(axis=1)
        return fwd - ctrl, {"forward_vel": fwd, "ctrl_cost": ctrl}
