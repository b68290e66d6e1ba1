"""Actuators: torques and servos on joints, thrusters on bodies."""

from __future__ import annotations

import numpy as np

from qpsim import math
from qpsim.physics.joints import JointGroup, gather, revolute_angle
from qpsim.physics.types import DP, QP


class ActuatorGroup:
    """Actuators bucketed by kind, each bucket with its action columns."""

    def __init__(self, sys, indices=None):
        from qpsim.physics.system import Scatter

        cfg = sys.config
        indices = range(len(cfg.actuators)) if indices is None else indices
        columns = {}
        col = 0
        for i, a in enumerate(cfg.actuators):
            width = cfg.actuator_dof(a)
            columns[i] = list(range(col, col + width))
            col += width
        self.act_dim = col
        picked = [(i, cfg.actuators[i]) for i in indices]
        self.size = len(picked)

        rev_torque = [(i, a) for i, a in picked if a.kind == "torque" and cfg.joints[a.joint].dof == 1]
        sph_torque = [(i, a) for i, a in picked if a.kind == "torque" and cfg.joints[a.joint].dof == 3]
        servo = [(i, a) for i, a in picked if a.kind == "angle"]
        thrust = [(i, a) for i, a in picked if a.kind == "thruster"]

        def joint_bucket(items):
            if not items:
                return None
            g = JointGroup(sys, [a.joint for _, a in items])
            g.strength = np.asarray([a.strength for _, a in items], dtype=sys.dtype)
            g.columns = np.array([columns[i] for i, _ in items], dtype=np.int64)
            return g

        self.rev_torque = joint_bucket(rev_torque)
        self.sph_torque = joint_bucket(sph_torque)
        self.servo = joint_bucket(servo)
        self.thrust = None
        if thrust:
            body = np.array([a.body for _, a in thrust], dtype=np.int64)
            direction = np.array([np.asarray(a.direction, float) / np.linalg.norm(a.direction) for _, a in thrust])
            self.thrust = dict(
                body=body,
                gain=np.asarray(direction * np.array([a.strength for _, a in thrust])[:, None]
                                * sys.inv_mass[body][:, None], dtype=sys.dtype),
                columns=np.array([columns[i][0] for i, _ in thrust], dtype=np.int64),
                scatter=Scatter(body, sys.num_bodies),
            )


def _pair_dp(sys, g: JointGroup, rot_p, rot_c, tau):
    """Equal-and-opposite torque ``tau`` (on the child) as angular accelerations."""
    alpha_c = sys.inv_inertia_apply(g.inv_inertia_c, rot_c, tau, g.child)
    alpha_p = sys.inv_inertia_apply(g.inv_inertia_p, rot_p, -tau, g.parent)
    return g.scatter.apply(np.concatenate([alpha_p, alpha_c], axis=1))


def actuator_apply(sys, qp: QP, action, actuators=None) -> DP:
    """Accelerations from actuators given ``action`` of shape ``[S, act_dim]``.

    Torque actuators apply ``strength * clip(action, -1, 1)`` about the free
    axis, angle servos drive toward a target mapped from ``[-1, 1]`` onto the
    joint limits, thrusters push their body along a fixed world direction.
    """
    grp = sys.actuators if actuators is None else ActuatorGroup(sys, np.atleast_1d(actuators))
    dvel = np.zeros_like(qp.vel)
    dang = np.zeros_like(qp.ang)
    if grp.size == 0:
        return DP(dvel, dang)
    action = np.asarray(action)
    if action.ndim == 1:
        action = action[None]
    action = math.clip(action, -1.0, 1.0)

    g = grp.rev_torque
    if g is not None:
        _, rot_p, _, _ = gather(qp, g.parent)
        _, rot_c, _, _ = gather(qp, g.child)
        axis_p = math.quat_rotate(rot_p, g.axis)
        tau = (g.strength * action[:, g.columns[:, 0]])[..., None] * axis_p
        dang = dang + _pair_dp(sys, g, rot_p, rot_c, tau)

    g = grp.servo
    if g is not None:
        _, rot_p, _, _ = gather(qp, g.parent)
        _, rot_c, _, _ = gather(qp, g.child)
        axis_p = math.quat_rotate(rot_p, g.axis)
        angle = revolute_angle(g, rot_p, rot_c, axis_p)
        a = action[:, g.columns[:, 0]]
        target = g.servo_lo + 0.5 * (a + 1.0) * (g.servo_hi - g.servo_lo)
        tau = (g.strength * (target - angle))[..., None] * axis_p
        dang = dang + _pair_dp(sys, g, rot_p, rot_c, tau)

    g = grp.sph_torque
    if g is not None:
        _, rot_p, _, _ = gather(qp, g.parent)
        _, rot_c, _, _ = gather(qp, g.child)
        tau = 0.0
        for k, basis in enumerate((g.axis, g.ref, g.third)):
            tau = tau + (g.strength * action[:, g.columns[:, k]])[..., None] * math.quat_rotate(rot_p, basis)
        dang = dang + _pair_dp(sys, g, rot_p, rot_c, tau)

    t = grp.thrust
    if t is not None:
        acc = action[:, t["columns"]][..., None] * t["gain"]
        dvel = dvel + t["scatter"].apply(acc)
    return DP(dvel, dang)
