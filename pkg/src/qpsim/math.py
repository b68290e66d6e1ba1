"""Vector and quaternion primitives over batched arrays.

Every function works on arrays whose trailing axis holds the components
(3 for vectors, 4 for ``(w, x, y, z)`` quaternions) and any number of
leading batch axes.  Only ``+ - * /``, ``sqrt`` and comparisons are used
in the hot kernels, so the same code runs on float arrays and on object
arrays of :class:`qpsim.diff.TrackedScalar`.
"""

from __future__ import annotations

import numpy as np

from qpsim import diff


def vec(x: float = 0.0, y: float = 0.0, z: float = 0.0, dtype=np.float32) -> np.ndarray:
    return np.array([x, y, z], dtype=dtype)


def is_tracked(a) -> bool:
    return isinstance(a, np.ndarray) and a.dtype == object


def dot(a, b):
    return a[..., 0] * b[..., 0] + a[..., 1] * b[..., 1] + a[..., 2] * b[..., 2]


def cross(a, b):
    ax, ay, az = a[..., 0], a[..., 1], a[..., 2]
    bx, by, bz = b[..., 0], b[..., 1], b[..., 2]
    return np.stack([ay * bz - az * by, az * bx - ax * bz, ax * by - ay * bx], axis=-1)


def norm(a):
    return np.sqrt(dot(a, a))


def safe_norm(a, eps: float = 1e-12):
    """Norm with a floor inside the root so the gradient exists at zero."""
    return np.sqrt(dot(a, a) + eps)


def quat_identity(shape=(), dtype=np.float32) -> np.ndarray:
    q = np.zeros(tuple(shape) + (4,), dtype=dtype)
    q[..., 0] = 1
    return q


def quat_mul(a, b):
    """Hamilton product ``a ⊗ b``."""
    aw, ax, ay, az = a[..., 0], a[..., 1], a[..., 2], a[..., 3]
    bw, bx, by, bz = b[..., 0], b[..., 1], b[..., 2], b[..., 3]
    return np.stack(
        [
            aw * bw - ax * bx - ay * by - az * bz,
            aw * bx + ax * bw + ay * bz - az * by,
            aw * by - ax * bz + ay * bw + az * bx,
            aw * bz + ax * by - ay * bx + az * bw,
        ],
        axis=-1,
    )


def quat_inv(q):
    """Inverse of a unit quaternion (its conjugate)."""
    return np.concatenate([q[..., :1], -q[..., 1:]], axis=-1)


def quat_rotate(q, v):
    """Rotates ``v`` by unit quaternion ``q``."""
    w = q[..., 0:1]
    u = q[..., 1:]
    t = cross(u, v)
    t = t + t
    return v + w * t + cross(u, t)


def quat_rotate_inv(q, v):
    return quat_rotate(quat_inv(q), v)


def quat_normalize(q):
    n = np.sqrt(q[..., 0] * q[..., 0] + q[..., 1] * q[..., 1] + q[..., 2] * q[..., 2] + q[..., 3] * q[..., 3])
    return q / n[..., None]


def quat_integrate(q, omega, dt):
    """First-order rotation update from a world-frame angular velocity.

    ``q' = normalize(q + dt/2 * (omega ⊗ q))``
    """
    ox, oy, oz = omega[..., 0], omega[..., 1], omega[..., 2]
    qw, qx, qy, qz = q[..., 0], q[..., 1], q[..., 2], q[..., 3]
    h = 0.5 * dt
    dq = np.stack(
        [
            -ox * qx - oy * qy - oz * qz,
            ox * qw + oy * qz - oz * qy,
            -ox * qz + oy * qw + oz * qx,
            ox * qy - oy * qx + oz * qw,
        ],
        axis=-1,
    )
    return quat_normalize(q + h * dq)


def quat_from_axis_angle(axis, angle):
    """Quaternion for a rotation of ``angle`` radians about unit ``axis``."""
    axis = np.asarray(axis)
    angle = np.asarray(angle)
    half = 0.5 * angle
    s = np.sin(half)[..., None]
    return np.concatenate([np.cos(half)[..., None], axis * s], axis=-1)


def quat_to_axis_angle(q):
    """Inverse of :func:`quat_from_axis_angle` for float arrays (test oracle use)."""
    q = np.asarray(q, dtype=np.float64)
    q = np.where(q[..., :1] < 0, -q, q)
    s = np.linalg.norm(q[..., 1:], axis=-1)
    angle = 2.0 * np.arctan2(s, q[..., 0])
    axis = np.where(s[..., None] > 1e-12, q[..., 1:] / np.maximum(s, 1e-12)[..., None], 0.0)
    return axis, angle


def quat_exp(omega, dt):
    """Exact rotation quaternion for constant ``omega`` over ``dt`` (oracle only)."""
    omega = np.asarray(omega, dtype=np.float64)
    theta = np.linalg.norm(omega, axis=-1) * dt
    n = np.linalg.norm(omega, axis=-1)
    axis = np.where(n[..., None] > 0, omega / np.where(n > 0, n, 1.0)[..., None], 0.0)
    return quat_from_axis_angle(axis, theta)


def perpendicular(axis) -> np.ndarray:
    """A fixed unit vector orthogonal to ``axis`` (float input only)."""
    axis = np.asarray(axis, dtype=np.float64)
    helper = np.array([1.0, 0.0, 0.0]) if abs(axis[0]) < 0.9 else np.array([0.0, 1.0, 0.0])
    p = np.cross(axis, helper)
    return p / np.linalg.norm(p)


_tmax = np.frompyfunc(diff.tmax, 2, 1)
_tmin = np.frompyfunc(diff.tmin, 2, 1)


def maximum(a, b):
    """Elementwise max; ties resolve to ``a`` on tracked inputs."""
    if is_tracked(a) or is_tracked(b):
        return _tmax(a, b)
    return np.maximum(a, b)


def minimum(a, b):
    if is_tracked(a) or is_tracked(b):
        return _tmin(a, b)
    return np.minimum(a, b)


def clip(a, lo, hi):
    return minimum(maximum(a, lo), hi)
