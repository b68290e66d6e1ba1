"""Spring joints in maximal coordinates.

Each joint pulls its parent and child anchor points together with a linear
spring-damper, aligns the constrained rotational axes with an angular
spring, and pushes back softly beyond its angle limits.  Every force acts
equal-and-opposite on the pair, so linear and angular momentum of the pair
are untouched.
"""

from __future__ import annotations

import numpy as np

from qpsim import math
from qpsim.physics.types import DP, QP

INF = np.inf


def gather(qp: QP, idx):
    return qp.pos[:, idx], qp.rot[:, idx], qp.vel[:, idx], qp.ang[:, idx]


class JointGroup:
    def __init__(self, sys, indices):
        from qpsim.physics.system import Scatter

        cfg = sys.config
        self.indices = list(indices)
        js = [cfg.joints[i] for i in self.indices]
        f = lambda a, shape=None: np.asarray(a, dtype=sys.dtype).reshape(shape) if shape else np.asarray(a, dtype=sys.dtype)  # noqa: E731
        n = len(js)
        self.size = n
        self.parent = np.array([j.parent for j in js], dtype=np.int64)
        self.child = np.array([j.child for j in js], dtype=np.int64)
        self.stiffness = f([j.stiffness for j in js], (n, 1))
        self.damping = f([j.damping for j in js], (n, 1))
        self.angular_stiffness = f([j.angular_stiffness for j in js], (n, 1))
        self.angular_damping = f([j.angular_damping for j in js], (n, 1))
        self.parent_offset = f([j.parent_offset for j in js], (n, 3))
        self.child_offset = f([j.child_offset for j in js], (n, 3))
        axes = np.array([np.asarray(j.axis, float) / np.linalg.norm(j.axis) for j in js]).reshape(n, 3)
        refs = np.array([math.perpendicular(a) for a in axes]).reshape(n, 3)
        self.axis = f(axes)
        self.ref = f(refs)
        self.third = f(np.cross(axes, refs).reshape(n, 3))
        revolute = np.array([j.dof == 1 for j in js], dtype=bool)
        self.revolute = f(revolute.astype(float), (n, 1))
        lo = np.full(n, -INF)
        hi = np.full(n, INF)
        for i, j in enumerate(js):
            if j.dof == 1 and j.angle_limits:
                lo[i], hi[i] = j.angle_limits[0]
        self.lo = f(lo)
        self.hi = f(hi)
        self.has_limits = bool(np.isfinite(lo).any() or np.isfinite(hi).any())
        # servo target range falls back to a full turn when unlimited
        self.servo_lo = f(np.where(np.isfinite(lo), lo, -np.pi))
        self.servo_hi = f(np.where(np.isfinite(hi), hi, np.pi))
        sph = [i for i, j in enumerate(js) if j.dof == 3]
        self.spherical = np.array(sph, dtype=np.int64)
        self.sph_lo = f([[lim[0] for lim in js[i].angle_limits] for i in sph], (len(sph), 3))
        self.sph_hi = f([[lim[1] for lim in js[i].angle_limits] for i in sph], (len(sph), 3))
        self.sph_basis = f(np.stack([axes[sph], refs[sph], np.cross(axes[sph], refs[sph])], axis=1) if sph else np.zeros((0, 3, 3)))
        self.inv_mass_p = sys.inv_mass[self.parent][:, None]
        self.inv_mass_c = sys.inv_mass[self.child][:, None]
        self.inv_inertia_p = sys.inv_inertia[self.parent]
        self.inv_inertia_c = sys.inv_inertia[self.child]
        self.scatter = Scatter(np.concatenate([self.parent, self.child]), sys.num_bodies)


def revolute_angle(g: JointGroup, rot_p, rot_c, axis_p):
    """Signed rotation of the child about the (parent-frame) joint axis."""
    ref_p = math.quat_rotate(rot_p, g.ref)
    ref_c = math.quat_rotate(rot_c, g.ref)
    return np.arctan2(math.dot(math.cross(ref_p, ref_c), axis_p), math.dot(ref_p, ref_c))


def spherical_angles(g: JointGroup, rot_p, rot_c):
    """Per-axis rotation of child relative to parent in the joint basis."""
    rel = math.quat_mul(math.quat_inv(rot_p), rot_c)
    w = rel[..., 0]
    v = rel[..., 1:]
    comps = [math.dot(v, g.sph_basis[:, k]) for k in range(3)]
    return np.stack([2.0 * np.arctan2(c, w) for c in comps], axis=-1)


def joint_state(sys, qp: QP, group: JointGroup = None):
    """Angle and angular rate about each joint's primary axis, ``[S, J]`` each."""
    g = group or sys.joints
    _, rot_p, _, ang_p = gather(qp, g.parent)
    _, rot_c, _, ang_c = gather(qp, g.child)
    axis_p = math.quat_rotate(rot_p, g.axis)
    angle = revolute_angle(g, rot_p, rot_c, axis_p)
    rate = math.dot(ang_c - ang_p, axis_p)
    return angle, rate


def joint_apply(sys, qp: QP, joints=None) -> DP:
    """Velocity-rate update (accelerations) produced by the joint springs.

    ``joints`` selects a subset of joint indices; all joints by default.
    """
    g = sys.joints if joints is None else JointGroup(sys, np.atleast_1d(joints))
    if g.size == 0:
        return DP(np.zeros_like(qp.vel), np.zeros_like(qp.ang))
    pos_p, rot_p, vel_p, ang_p = gather(qp, g.parent)
    pos_c, rot_c, vel_c, ang_c = gather(qp, g.child)

    arm_p = math.quat_rotate(rot_p, g.parent_offset)
    arm_c = math.quat_rotate(rot_c, g.child_offset)
    dx = (pos_c + arm_c) - (pos_p + arm_p)
    dv = (vel_c + math.cross(ang_c, arm_c)) - (vel_p + math.cross(ang_p, arm_p))
    force = -g.stiffness * dx - g.damping * dv  # on the child
    torque_c = math.cross(arm_c, force)
    torque_p = math.cross(arm_p, -force)

    axis_p = math.quat_rotate(rot_p, g.axis)
    axis_c = math.quat_rotate(rot_c, g.axis)
    dw = ang_c - ang_p
    dw_free = math.dot(dw, axis_p)[..., None] * axis_p
    tau = g.revolute * (g.angular_stiffness * math.cross(axis_c, axis_p) - g.angular_damping * (dw - dw_free))
    if g.has_limits:
        angle = revolute_angle(g, rot_p, rot_c, axis_p)
        excess = angle - math.clip(angle, g.lo, g.hi)
        tau = tau - (g.angular_stiffness * excess[..., None]) * axis_p
    if len(g.spherical):
        tau = tau + _spherical_limit_torque(g, rot_p, rot_c)
    torque_c = torque_c + tau
    torque_p = torque_p - tau

    acc_c = force * g.inv_mass_c
    acc_p = -force * g.inv_mass_p
    alpha_c = sys.inv_inertia_apply(g.inv_inertia_c, rot_c, torque_c, g.child)
    alpha_p = sys.inv_inertia_apply(g.inv_inertia_p, rot_p, torque_p, g.parent)
    dvel = g.scatter.apply(np.concatenate([acc_p, acc_c], axis=1))
    dang = g.scatter.apply(np.concatenate([alpha_p, alpha_c], axis=1))
    return DP(dvel, dang)


def _spherical_limit_torque(g: JointGroup, rot_p, rot_c):
    idx = g.spherical
    rp, rc = rot_p[:, idx], rot_c[:, idx]
    angles = spherical_angles(g, rp, rc)
    excess = angles - math.clip(angles, g.sph_lo, g.sph_hi)
    k = g.angular_stiffness[idx]
    t = 0.0
    for a in range(3):
        t = t - (k * excess[..., a : a + 1]) * math.quat_rotate(rp, g.sph_basis[:, a])
    out = np.zeros(rot_p.shape[:2] + (3,), dtype=np.result_type(rot_p, g.axis))
    if out.dtype == object:
        out[...] = 0.0
    out[:, idx] = t
    return out


def joint_potential(sys, qp: QP):
    """Elastic energy stored in all joint springs, ``[S]``."""
    g = sys.joints
    if g.size == 0:
        return np.zeros(qp.num_scenes)
    pos_p, rot_p, _, _ = gather(qp, g.parent)
    pos_c, rot_c, _, _ = gather(qp, g.child)
    dx = (pos_c + math.quat_rotate(rot_c, g.child_offset)) - (pos_p + math.quat_rotate(rot_p, g.parent_offset))
    e = 0.5 * g.stiffness[:, 0] * math.dot(dx, dx)
    axis_p = math.quat_rotate(rot_p, g.axis)
    axis_c = math.quat_rotate(rot_c, g.axis)
    k = g.angular_stiffness[:, 0]
    e = e + g.revolute[:, 0] * k * (1.0 - math.dot(axis_p, axis_c))
    angle = revolute_angle(g, rot_p, rot_c, axis_p)
    excess = angle - np.clip(angle, g.lo, g.hi)
    e = e + 0.5 * k * excess * excess
    if len(g.spherical):
        idx = g.spherical
        angles = spherical_angles(g, rot_p[:, idx], rot_c[:, idx])
        ex = angles - np.clip(angles, g.sph_lo, g.sph_hi)
        e[:, idx] += 0.5 * k[idx] * (ex * ex).sum(-1)
    return e.sum(axis=1)
