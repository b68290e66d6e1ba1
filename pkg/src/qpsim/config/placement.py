"""Default placement: bodies posed so every joint's anchors coincide."""

from __future__ import annotations

from collections import deque

import numpy as np

from qpsim import math
from qpsim.config.errors import CyclicJointGraph
from qpsim.physics.types import QP, SystemConfig


def default_angles(cfg: SystemConfig) -> np.ndarray:
    """``[J, 3]`` default joint angles in radians.

    Each limited degree of freedom sits at 0 when its range contains 0 and
    at the midpoint of the range otherwise.  Unlimited ones sit at 0.
    Revolute joints use column 0 only.
    """
    out = np.zeros((len(cfg.joints), 3))
    for i, j in enumerate(cfg.joints):
        for k, (lo, hi) in enumerate(j.angle_limits):
            out[i, k] = 0.0 if lo <= 0.0 <= hi else 0.5 * (lo + hi)
    return out


def traversal(cfg: SystemConfig):
    """Roots and the ``(joint, forward)`` placement order over the forest.

    ``forward`` means the joint's parent is already placed.  Raises
    :class:`CyclicJointGraph` when the joints do not form a forest.
    """
    n = len(cfg.bodies)
    root_of = list(range(n))

    def find(b):
        while root_of[b] != b:
            root_of[b] = root_of[root_of[b]]
            b = root_of[b]
        return b

    adj = [[] for _ in range(n)]
    for i, j in enumerate(cfg.joints):
        a, b = find(j.parent), find(j.child)
        if a == b:
            raise CyclicJointGraph(sorted({cfg.bodies[j.parent].name, cfg.bodies[j.child].name}))
        root_of[a] = b
        adj[j.parent].append((i, j.child, True))
        adj[j.child].append((i, j.parent, False))

    children = {j.child for j in cfg.joints}
    order, roots, placed = [], [], [False] * n
    # prefer bodies that are never a joint child as roots, in index order
    for start in sorted(range(n), key=lambda b: (b in children, b)):
        if placed[start]:
            continue
        roots.append(start)
        placed[start] = True
        queue = deque([start])
        while queue:
            b = queue.popleft()
            for i, other, forward in adj[b]:
                if not placed[other]:
                    placed[other] = True
                    order.append((i, forward))
                    queue.append(other)
    return roots, order


def _relative_rotation(cfg, angles):
    """``[S, J, 4]`` child-in-parent rotation for the given joint angles."""
    s = angles.shape[0]
    q = np.zeros((s, len(cfg.joints), 4))
    for i, j in enumerate(cfg.joints):
        axis = np.asarray(j.axis, dtype=np.float64)
        axis = axis / np.linalg.norm(axis)
        if j.dof == 1:
            q[:, i] = math.quat_from_axis_angle(axis, angles[:, i, 0])
        else:
            ref = math.perpendicular(axis)
            basis = np.stack([axis, ref, np.cross(axis, ref)])
            rotvec = angles[:, i] @ basis
            theta = np.linalg.norm(rotvec, axis=-1)
            unit = np.where(theta[:, None] > 0, rotvec / np.where(theta > 0, theta, 1.0)[:, None], axis)
            q[:, i] = math.quat_from_axis_angle(unit, theta)
    return q


def default_qp(cfg, num_scenes: int = 1, angles=None, root_pos=None, dtype=np.float32) -> QP:
    """Places every body in a valid joint configuration with zero velocity.

    Roots go to their configured ``pos`` (or ``root_pos[S, B, 3]`` rows
    when given) with identity rotation; each child is then posed at its
    joint angle and translated so its anchor meets the parent's anchor.
    ``angles`` is ``[S, J]`` or ``[S, J, 3]`` radians and defaults to
    :func:`default_angles`.
    """
    cfg = getattr(cfg, "config", cfg)
    nb, nj = len(cfg.bodies), len(cfg.joints)
    if angles is None:
        angles = np.broadcast_to(default_angles(cfg), (num_scenes, nj, 3))
    angles = np.asarray(angles, dtype=np.float64)
    if angles.ndim == 2:
        angles = np.concatenate([angles[..., None], np.zeros(angles.shape + (2,))], axis=-1)
    num_scenes = angles.shape[0]
    roots, order = traversal(cfg)

    pos = np.zeros((num_scenes, nb, 3))
    rot = np.zeros((num_scenes, nb, 4))
    rot[..., 0] = 1.0
    body_pos = np.array([b.pos for b in cfg.bodies], dtype=np.float64).reshape(nb, 3)
    for r in roots:
        pos[:, r] = body_pos[r] if root_pos is None else root_pos[:, r]
    q_rel = _relative_rotation(cfg, angles)
    for i, forward in order:
        j = cfg.joints[i]
        off_p = np.asarray(j.parent_offset, dtype=np.float64)
        off_c = np.asarray(j.child_offset, dtype=np.float64)
        p, c = j.parent, j.child
        if forward:
            rot[:, c] = math.quat_mul(rot[:, p], q_rel[:, i])
            pos[:, c] = pos[:, p] + math.quat_rotate(rot[:, p], off_p) - math.quat_rotate(rot[:, c], off_c)
        else:
            rot[:, p] = math.quat_mul(rot[:, c], math.quat_inv(q_rel[:, i]))
            pos[:, p] = pos[:, c] + math.quat_rotate(rot[:, c], off_c) - math.quat_rotate(rot[:, p], off_p)
    zeros = np.zeros((num_scenes, nb, 3), dtype=dtype)
    return QP(pos.astype(dtype), rot.astype(dtype), zeros, zeros.copy())


def anchor_separation(cfg, qp: QP) -> np.ndarray:
    """``[S, J]`` distance between each joint's parent and child anchors."""
    cfg = getattr(cfg, "config", cfg)
    out = np.zeros((qp.num_scenes, len(cfg.joints)))
    pos = np.asarray(qp.pos, dtype=np.float64)
    rot = np.asarray(qp.rot, dtype=np.float64)
    for i, j in enumerate(cfg.joints):
        a = pos[:, j.parent] + math.quat_rotate(rot[:, j.parent], np.asarray(j.parent_offset, float))
        b = pos[:, j.child] + math.quat_rotate(rot[:, j.child], np.asarray(j.child_offset, float))
        out[:, i] = np.linalg.norm(a - b, axis=-1)
    return out
