"""Compiled system: static config flattened into index/parameter arrays."""

from __future__ import annotations

import numpy as np

from qpsim import math
from qpsim.physics.types import QP, DP, NumericalBlowup, SystemConfig

BLOWUP_LIMIT = 1e6


class Scatter:
    """Sums per-contribution rows into per-body rows in a fixed order.

    Built once from the body index of every contribution; ``apply`` is a
    gather of a zero-padded table followed by a sum over a short axis, so
    the reduction order never depends on the number of scenes.
    """

    def __init__(self, body_ids, num_bodies: int):
        body_ids = np.asarray(body_ids, dtype=np.int64)
        k = len(body_ids)
        slots = [[] for _ in range(num_bodies)]
        for c, b in enumerate(body_ids):
            slots[b].append(c)
        width = max((len(s) for s in slots), default=0)
        table = np.full((num_bodies, max(width, 1)), k, dtype=np.int64)
        for b, s in enumerate(slots):
            table[b, : len(s)] = s
        self.table = table
        self.size = k
        self.num_bodies = num_bodies
        # a contribution list with no repeats can be written with one take
        self.direct = width <= 1

    def apply(self, contrib):
        """``contrib`` is ``[S, K, 3]``; returns ``[S, num_bodies, 3]``."""
        s = contrib.shape[0]
        pad = np.zeros((s, 1, contrib.shape[2]), dtype=contrib.dtype)
        padded = np.concatenate([contrib, pad], axis=1)
        if self.direct:
            return padded[:, self.table[:, 0]]
        return padded[:, self.table].sum(axis=2)


class System:
    """Array view of a :class:`SystemConfig` used by every transformation.

    ``dtype`` sets the precision of the static parameters; state arrays of
    another dtype (including tracked object arrays) are promoted by numpy.
    """

    def __init__(self, config: SystemConfig, dtype=np.float32):
        from qpsim.physics import actuators, colliders, joints

        self.config = config
        self.dtype = np.dtype(dtype)
        bodies = config.bodies
        self.num_bodies = len(bodies)
        f = lambda a: np.asarray(a, dtype=self.dtype)  # noqa: E731
        self.mass = f([b.mass for b in bodies])
        self.inv_mass = f([1.0 / b.mass for b in bodies])
        self.inertia = f([b.inertia for b in bodies]).reshape(-1, 3)
        self.inv_inertia = f([[1.0 / i for i in b.inertia] for b in bodies]).reshape(-1, 3)
        self.pos_free = np.array([[not x for x in b.frozen_pos] for b in bodies], dtype=bool).reshape(-1, 3)
        self.rot_free = np.array([[not x for x in b.frozen_rot] for b in bodies], dtype=bool).reshape(-1, 3)
        self.pos_locked = ~self.pos_free.any(axis=1)
        self.rot_locked = ~self.rot_free.any(axis=1)
        self.movable = ~(self.pos_locked & self.rot_locked)
        self.any_frozen = bool((~self.pos_free).any() or (~self.rot_free).any())
        self.anisotropic = ~np.all(self.inertia == self.inertia[:, :1], axis=1)
        self.isotropic = not self.anisotropic.any()
        self.pos_free_f = self.pos_free.astype(self.dtype)
        self.rot_free_f = self.rot_free.astype(self.dtype)
        # contacts see frozen world axes as immovable
        self.contact_inv_mass = self.inv_mass[:, None] * self.pos_free_f
        self.gravity = f(config.gravity)
        self.gravity_masked = self.gravity * self.pos_free_f
        self.joints = joints.JointGroup(self, range(len(config.joints)))
        self.actuators = actuators.ActuatorGroup(self)
        self.contacts = colliders.ContactGroup(self, config.collide_pairs)

    @property
    def act_dim(self) -> int:
        return self.config.act_dim

    def with_dtype(self, dtype) -> "System":
        dtype = np.dtype(dtype)
        if dtype == self.dtype:
            return self
        cache = self.__dict__.setdefault("_dtype_cache", {})
        if dtype not in cache:
            cache[dtype] = System(self.config, dtype=dtype)
        return cache[dtype]

    def inv_inertia_apply(self, inv_i, rot, torque, body=None):
        """World-frame ``I⁻¹ τ`` given body-frame diagonal ``inv_i`` rows.

        ``body`` (indices aligned with the second-to-last axis) lets bodies
        with isotropic inertia skip the two frame rotations.
        """
        if self.isotropic:
            return torque * inv_i[..., :1]
        if body is None:
            return math.quat_rotate(rot, inv_i * math.quat_rotate_inv(rot, torque))
        cols = np.flatnonzero(self.anisotropic[body])
        if len(cols) == len(body):
            return math.quat_rotate(rot, inv_i * math.quat_rotate_inv(rot, torque))
        out = torque * inv_i[..., :1]
        if len(cols):
            r = rot[..., cols, :]
            out[..., cols, :] = math.quat_rotate(r, inv_i[..., cols, :] * math.quat_rotate_inv(r, torque[..., cols, :]))
        return out


def as_system(sys) -> System:
    if isinstance(sys, System):
        return sys
    return System(sys)


def check_blowup(qp: QP, limit: float = BLOWUP_LIMIT):
    bad = np.zeros(qp.num_scenes, dtype=bool)
    for f in (qp.pos, qp.vel, qp.ang):
        if f.dtype == object:
            from qpsim.diff import value_of

            f = value_of(f)
        a = np.abs(f).reshape(f.shape[0], -1)
        with np.errstate(invalid="ignore"):
            bad |= ~(a <= limit).all(axis=1)
    if bad.any():
        scenes = np.flatnonzero(bad).tolist()
        raise NumericalBlowup(f"state exceeded {limit:g} or went non-finite in scenes {scenes}", scenes)


def zero_dp(qp: QP) -> DP:
    return DP(np.zeros_like(qp.vel), np.zeros_like(qp.ang))
