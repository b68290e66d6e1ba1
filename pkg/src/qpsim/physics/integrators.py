"""Integrator transformations and the physics step loop."""

from __future__ import annotations

import numpy as np

from qpsim import math
from qpsim.physics.actuators import actuator_apply
from qpsim.physics.colliders import collide
from qpsim.physics.joints import joint_apply, joint_potential
from qpsim.physics.system import System, check_blowup
from qpsim.physics.types import DP, QP


def _masked(sys: System, free, new, old):
    if not sys.any_frozen:
        return new
    return np.where(free, new, old)


def kinematic_apply(sys: System, qp: QP, dt: float) -> QP:
    """Advances positions and rotations from the current velocities."""
    pos = _masked(sys, sys.pos_free, qp.pos + qp.vel * dt, qp.pos)
    ang = qp.ang
    if sys.any_frozen:
        ang = np.where(sys.rot_free, ang, 0.0)
    rot = math.quat_integrate(qp.rot, ang, dt)
    if sys.rot_locked.any():
        rot = np.where(sys.rot_locked[:, None], qp.rot, rot)
    return QP(pos, rot, qp.vel, qp.ang)


def gyroscopic_apply(sys: System, qp: QP) -> DP:
    """Angular acceleration ``-I⁻¹(ω × Iω)`` of torque-free anisotropic bodies.

    Zero for bodies with isotropic inertia, so it is skipped entirely when
    every body is isotropic.
    """
    w_b = math.quat_rotate_inv(qp.rot, qp.ang)
    alpha_b = -sys.inv_inertia * math.cross(w_b, sys.inertia * w_b)
    return DP(np.zeros_like(qp.vel), math.quat_rotate(qp.rot, alpha_b))


def potential_integrate(sys: System, qp: QP, dp: DP, dt: float) -> QP:
    """Applies joint/actuator accelerations and gravity over ``dt``."""
    vel = _masked(sys, sys.pos_free, qp.vel + (dp.dvel + sys.gravity) * dt, qp.vel)
    ang = _masked(sys, sys.rot_free, qp.ang + dp.dang * dt, qp.ang)
    return QP(qp.pos, qp.rot, vel, ang)


def collision_integrate(sys: System, qp: QP, dp: DP) -> QP:
    """Applies contact impulses directly (no ``dt`` factor)."""
    vel = _masked(sys, sys.pos_free, qp.vel + dp.dvel, qp.vel)
    ang = _masked(sys, sys.rot_free, qp.ang + dp.dang, qp.ang)
    return QP(qp.pos, qp.rot, vel, ang)


def system_step(sys: System, qp: QP, actions=None, check: bool = True) -> QP:
    """One environment-level step: ``substeps`` passes of the physics loop.

    Each pass advances positions first, then gathers joint, actuator and
    contact updates from that state, then integrates them.
    """
    cfg = sys.config
    dt = cfg.dt / cfg.substeps
    if actions is None:
        actions = np.zeros((qp.num_scenes, sys.act_dim), dtype=qp.vel.dtype)
    for _ in range(cfg.substeps):
        qp = kinematic_apply(sys, qp, dt)
        dp = joint_apply(sys, qp)
        if not sys.isotropic:
            dp = dp + gyroscopic_apply(sys, qp)
        if sys.actuators.size:
            dp = dp + actuator_apply(sys, qp, actions)
        if sys.contacts.size:
            dp_c = collide(sys, qp, dt)
        qp = potential_integrate(sys, qp, dp, dt)
        if sys.contacts.size:
            qp = collision_integrate(sys, qp, dp_c)
    if check:
        check_blowup(qp)
    return qp


def measure_momentum_energy(sys: System, qp: QP):
    """Linear momentum ``[S,3]``, angular momentum about the origin ``[S,3]``
    and total energy ``[S]`` (kinetic + gravitational + joint springs).

    Fully frozen bodies are excluded.
    """
    w = sys.movable.astype(np.float64)
    m = sys.mass.astype(np.float64) * w
    pos = np.asarray(qp.pos, dtype=np.float64)
    rot = np.asarray(qp.rot, dtype=np.float64)
    vel = np.asarray(qp.vel, dtype=np.float64)
    ang = np.asarray(qp.ang, dtype=np.float64)
    mv = vel * m[:, None]
    p = mv.sum(axis=1)
    inertia = sys.inertia.astype(np.float64)
    spin = math.quat_rotate(rot, inertia * math.quat_rotate_inv(rot, ang)) * w[:, None]
    l_mom = (math.cross(pos, mv) + spin).sum(axis=1)
    ke = 0.5 * (m * math.dot(vel, vel)).sum(axis=1) + 0.5 * math.dot(ang, spin).sum(axis=1)
    pe = -(m * math.dot(pos, sys.gravity.astype(np.float64))).sum(axis=1)
    e = ke + pe + joint_potential(sys.with_dtype(np.float64), QP(pos, rot, vel, ang))
    return p, l_mom, e
