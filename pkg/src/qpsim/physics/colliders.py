"""Narrowphase and velocity-level contact impulses.

Every configured collider pair is tested every substep (no broadphase).
Capsule-plane pairs become two ball-plane contacts at the capsule's end
caps.  Contacts are resolved in parallel from the same state: each one
computes an impulse

    j = max(0, -(1 + e) v_n + beta * depth / dt) / k_n

along the normal, plus Coulomb friction clamped to ``mu * j``.
"""

from __future__ import annotations

import numpy as np

from qpsim import math
from qpsim.physics.types import DP, QP, Capsule, Plane, Sphere

_SUPPORTED = {
    (Sphere, Plane),
    (Plane, Sphere),
    (Capsule, Plane),
    (Plane, Capsule),
    (Sphere, Sphere),
}


def supported_pair(a, b) -> bool:
    return (type(a), type(b)) in _SUPPORTED


def _balls(collider):
    """(local center, radius) list for a sphere or capsule collider."""
    s = collider.shape
    p = np.asarray(collider.position, dtype=float)
    if isinstance(s, Sphere):
        return [(p, s.radius)]
    axis = np.asarray(s.axis, dtype=float)
    axis = axis / np.linalg.norm(axis)
    half = max(0.5 * s.length - s.radius, 0.0)
    return [(p + half * axis, s.radius), (p - half * axis, s.radius)]


def _pair_params(cfg, a, b):
    def pick(c, name):
        v = getattr(c, name)
        return getattr(cfg, name) if v is None else v

    mu = float(np.sqrt(pick(a, "friction") * pick(b, "friction")))
    e = 0.5 * (pick(a, "elasticity") + pick(b, "elasticity"))
    beta = 0.5 * (pick(a, "baumgarte_beta") + pick(b, "baumgarte_beta"))
    return mu, e, beta


class ContactGroup:
    """Flattened contact primitives for a list of collider index pairs."""

    def __init__(self, sys, pairs):
        from qpsim.physics.system import Scatter

        cfg = sys.config
        bp = []  # ball-plane: plane body, normal, offset, ball body, center, radius, mu, e, beta
        bb = []  # ball-ball: body a, center a, radius a, body b, center b, radius b, mu, e, beta
        for i, k in pairs:
            ca, cb = cfg.colliders[i], cfg.colliders[k]
            if isinstance(ca.shape, Plane) and not isinstance(cb.shape, Plane):
                ca, cb = cb, ca
            params = _pair_params(cfg, ca, cb)
            if isinstance(cb.shape, Plane):
                n = np.asarray(cb.shape.normal, dtype=float)
                n = n / np.linalg.norm(n)
                off = cb.shape.offset + float(np.dot(n, cb.position))
                for center, r in _balls(ca):
                    bp.append((cb.body, n, off, ca.body, center, r) + params)
            elif isinstance(ca.shape, Sphere) and isinstance(cb.shape, Sphere):
                (c1, r1), (c2, r2) = _balls(ca)[0], _balls(cb)[0]
                bb.append((ca.body, c1, r1, cb.body, c2, r2) + params)
            else:
                raise ValueError(f"unsupported collider pair {type(ca.shape).__name__}-{type(cb.shape).__name__}")
        f = lambda a, shape=None: np.asarray(a, dtype=sys.dtype).reshape(shape)  # noqa: E731
        self.size = len(bp) + len(bb)
        self.ball_plane = None
        self.ball_ball = None
        if bp:
            n = len(bp)
            cols = list(zip(*bp))
            self.ball_plane = dict(
                body_a=np.array(cols[0], dtype=np.int64),
                normal=f(cols[1], (n, 3)),
                offset=f(cols[2], (n,)),
                body_b=np.array(cols[3], dtype=np.int64),
                center=f(cols[4], (n, 3)),
                radius=f(cols[5], (n,)),
                mu=f(cols[6], (n,)),
                e=f(cols[7], (n,)),
                beta=f(cols[8], (n,)),
            )
        if bb:
            n = len(bb)
            cols = list(zip(*bb))
            self.ball_ball = dict(
                body_a=np.array(cols[0], dtype=np.int64),
                center_a=f(cols[1], (n, 3)),
                radius_a=f(cols[2], (n,)),
                body_b=np.array(cols[3], dtype=np.int64),
                center_b=f(cols[4], (n, 3)),
                radius_b=f(cols[5], (n,)),
                mu=f(cols[6], (n,)),
                e=f(cols[7], (n,)),
                beta=f(cols[8], (n,)),
            )
        self.scatters = {}
        for key, grp in (("bp", self.ball_plane), ("bb", self.ball_ball)):
            if grp is not None:
                ids = np.concatenate([grp["body_a"], grp["body_b"]])
                self.scatters[key] = Scatter(ids, sys.num_bodies)


def ball_plane_geometry(qp: QP, g):
    """Contact point, world normal (plane to ball) and penetration depth."""
    pos_a, rot_a = qp.pos[:, g["body_a"]], qp.rot[:, g["body_a"]]
    pos_b, rot_b = qp.pos[:, g["body_b"]], qp.rot[:, g["body_b"]]
    n = math.quat_rotate(rot_a, g["normal"])
    center = pos_b + math.quat_rotate(rot_b, g["center"])
    dist = math.dot(center - pos_a, n) - g["offset"]
    depth = g["radius"] - dist
    point = center - n * g["radius"][:, None]
    return point, n, depth


def ball_ball_geometry(qp: QP, g):
    ca = qp.pos[:, g["body_a"]] + math.quat_rotate(qp.rot[:, g["body_a"]], g["center_a"])
    cb = qp.pos[:, g["body_b"]] + math.quat_rotate(qp.rot[:, g["body_b"]], g["center_b"])
    delta = cb - ca
    dist = math.safe_norm(delta)
    n = delta / dist[..., None]
    depth = g["radius_a"] + g["radius_b"] - dist
    point = ca + n * (g["radius_a"] - 0.5 * depth)[..., None]
    return point, n, depth


def _effective(sys, body, rot, arm, d):
    """``d · M⁻¹ d`` including the rotational lever term."""
    inv_m = sys.contact_inv_mass[body]
    alpha = sys.inv_inertia_apply(sys.inv_inertia[body], rot, math.cross(arm, d), body) * sys.rot_free_f[body]
    lin = math.dot(d, inv_m * d)
    rot_term = math.dot(d, math.cross(alpha, arm))
    return lin + rot_term


def _impulses(sys, g, ia, ib, a, b, point, n, depth, dt):
    """Velocity and angular velocity changes of both bodies of each contact.

    ``a`` and ``b`` are ``(pos, rot, vel, ang)`` of the two bodies, ``ia``
    and ``ib`` their body indices and ``g`` the contact parameters, all
    aligned on the same leading axes.  Every operation is per contact.
    """
    pos_a, rot_a, vel_a, ang_a = a
    pos_b, rot_b, vel_b, ang_b = b
    arm_a = point - pos_a
    arm_b = point - pos_b
    v_rel = (vel_b + math.cross(ang_b, arm_b)) - (vel_a + math.cross(ang_a, arm_a))
    vn = math.dot(v_rel, n)
    k_n = _effective(sys, ia, rot_a, arm_a, n) + _effective(sys, ib, rot_b, arm_b, n)
    touching = depth > 0
    j = math.maximum(-(1.0 + g["e"]) * vn + g["beta"] * depth / dt, 0.0) / k_n
    j = np.where(touching, j, 0.0)

    vt = v_rel - vn[..., None] * n
    vt_norm = math.safe_norm(vt)
    t = vt / vt_norm[..., None]
    k_t = _effective(sys, ia, rot_a, arm_a, t) + _effective(sys, ib, rot_b, arm_b, t)
    # k_t is 0 only when there is no slip, so t and the friction term vanish too
    k_t = np.where(k_t > 0, k_t, 1.0)
    jt = math.minimum(vt_norm / k_t, g["mu"] * j)
    impulse = j[..., None] * n - jt[..., None] * t  # on body b

    dvel_a = -impulse * sys.contact_inv_mass[ia]
    dvel_b = impulse * sys.contact_inv_mass[ib]
    dang_a = sys.inv_inertia_apply(sys.inv_inertia[ia], rot_a, math.cross(arm_a, -impulse), ia) * sys.rot_free_f[ia]
    dang_b = sys.inv_inertia_apply(sys.inv_inertia[ib], rot_b, math.cross(arm_b, impulse), ib) * sys.rot_free_f[ib]
    return dvel_a, dvel_b, dang_a, dang_b


# below this share of touching contacts, only touching ones are resolved
COMPACT_BELOW = 0.5


def _resolve(sys, qp: QP, g, scatter, point, n, depth, dt):
    ia, ib = g["body_a"], g["body_b"]
    touching = depth > 0
    tracked = qp.vel.dtype == object or point.dtype == object
    if tracked or touching.mean() >= COMPACT_BELOW:
        a = (qp.pos[:, ia], qp.rot[:, ia], qp.vel[:, ia], qp.ang[:, ia])
        b = (qp.pos[:, ib], qp.rot[:, ib], qp.vel[:, ib], qp.ang[:, ib])
        dvel_a, dvel_b, dang_a, dang_b = _impulses(sys, g, ia, ib, a, b, point, n, depth, dt)
    else:
        # separated contacts contribute exactly zero, so resolving only the
        # touching ones gives the same numbers with less work
        si, ci = np.nonzero(touching)
        sa, sb = ia[ci], ib[ci]
        a = (qp.pos[si, sa], qp.rot[si, sa], qp.vel[si, sa], qp.ang[si, sa])
        b = (qp.pos[si, sb], qp.rot[si, sb], qp.vel[si, sb], qp.ang[si, sb])
        gc = {k: g[k][ci] for k in ("e", "beta", "mu")}
        parts = _impulses(sys, gc, sa, sb, a, b, point[si, ci], n[si, ci], depth[si, ci], dt)
        full = []
        for part in parts:
            f = np.zeros(depth.shape + (3,), dtype=part.dtype)
            f[si, ci] = part
            full.append(f)
        dvel_a, dvel_b, dang_a, dang_b = full
    dvel = scatter.apply(np.concatenate([dvel_a, dvel_b], axis=1))
    dang = scatter.apply(np.concatenate([dang_a, dang_b], axis=1))
    return DP(dvel, dang)


def collide(sys, qp: QP, dt: float, pairs=None) -> DP:
    """Summed contact impulses over all configured (or given) collider pairs."""
    grp = sys.contacts if pairs is None else ContactGroup(sys, pairs)
    dp = DP(np.zeros_like(qp.vel), np.zeros_like(qp.ang))
    if grp.ball_plane is not None:
        point, n, depth = ball_plane_geometry(qp, grp.ball_plane)
        dp = dp + _resolve(sys, qp, grp.ball_plane, grp.scatters["bp"], point, n, depth, dt)
    if grp.ball_ball is not None:
        point, n, depth = ball_ball_geometry(qp, grp.ball_ball)
        dp = dp + _resolve(sys, qp, grp.ball_ball, grp.scatters["bb"], point, n, depth, dt)
    return dp


def collide_pair(sys, a: int, b: int, qp: QP, dt: float) -> DP:
    """Impulse update from the single collider pair ``(a, b)``."""
    cfg = sys.config
    if not supported_pair(cfg.colliders[a].shape, cfg.colliders[b].shape):
        raise ValueError(f"collider pair ({a}, {b}) is not a supported shape combination")
    return collide(sys, qp, dt, pairs=[(a, b)])


def contact_geometry(sys, a: int, b: int, qp: QP):
    """Narrowphase only: contact points, normals and depths for one pair."""
    grp = ContactGroup(sys, [(a, b)])
    if grp.ball_plane is not None:
        return ball_plane_geometry(qp, grp.ball_plane)
    return ball_ball_geometry(qp, grp.ball_ball)
