"""Static scene description and the dynamic QP/DP state records."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Optional, Sequence, Union

import numpy as np

Vec3 = tuple  # (x, y, z) of floats
AXES = "xyz"


class NumericalBlowup(FloatingPointError):
    """A state component went non-finite or exceeded the blowup threshold."""

    def __init__(self, message: str, scenes: Sequence[int] = ()):
        super().__init__(message)
        self.scenes = list(scenes)


@dataclass(frozen=True)
class Body:
    name: str
    mass: float = 1.0
    inertia: Vec3 = (1.0, 1.0, 1.0)
    frozen_pos: tuple = (False, False, False)
    frozen_rot: tuple = (False, False, False)
    # placement of a root body in default_qp; ignored for joint children
    pos: Vec3 = (0.0, 0.0, 0.0)

    @property
    def fully_frozen(self) -> bool:
        return all(self.frozen_pos) and all(self.frozen_rot)


@dataclass(frozen=True)
class Joint:
    """Spring joint between two bodies.

    ``angle_limits`` holds (min, max) radian pairs, one per rotational
    degree of freedom: none or one for a revolute joint about ``axis``,
    three for a spherical joint.
    """

    name: str
    parent: int
    child: int
    stiffness: float = 1000.0
    damping: float = 0.0
    angular_stiffness: float = 1000.0
    angular_damping: float = 0.0
    parent_offset: Vec3 = (0.0, 0.0, 0.0)
    child_offset: Vec3 = (0.0, 0.0, 0.0)
    axis: Vec3 = (1.0, 0.0, 0.0)
    angle_limits: tuple = ()

    @property
    def dof(self) -> int:
        return 3 if len(self.angle_limits) == 3 else 1


@dataclass(frozen=True)
class Actuator:
    """Maps a slice of the action vector onto a joint or body.

    ``kind`` is ``"torque"`` (about the joint's free axes), ``"angle"`` (a
    proportional servo toward a target inside the joint limits), or
    ``"thruster"`` (a world-frame force along ``direction`` on ``body``).
    """

    name: str
    kind: str = "torque"
    strength: float = 1.0
    joint: Optional[int] = None
    body: Optional[int] = None
    direction: Vec3 = (1.0, 0.0, 0.0)


@dataclass(frozen=True)
class Sphere:
    radius: float


@dataclass(frozen=True)
class Capsule:
    """Capsule of total end-to-end ``length`` along body-frame ``axis``."""

    radius: float
    length: float
    axis: Vec3 = (0.0, 0.0, 1.0)


@dataclass(frozen=True)
class Plane:
    """Half-space ``normal · x <= offset`` in the body frame is solid."""

    normal: Vec3 = (0.0, 0.0, 1.0)
    offset: float = 0.0


Shape = Union[Sphere, Capsule, Plane]


@dataclass(frozen=True)
class Collider:
    body: int
    shape: Shape
    position: Vec3 = (0.0, 0.0, 0.0)
    # None inherits the system-wide value
    friction: Optional[float] = None
    elasticity: Optional[float] = None
    baumgarte_beta: Optional[float] = None


@dataclass(frozen=True)
class SystemConfig:
    dt: float = 0.01
    substeps: int = 1
    gravity: Vec3 = (0.0, 0.0, 0.0)
    friction: float = 0.6
    elasticity: float = 0.0
    baumgarte_beta: float = 0.2
    bodies: tuple = ()
    joints: tuple = ()
    actuators: tuple = ()
    colliders: tuple = ()
    # body index pairs whose colliders may touch; None means every supported pair
    collide_include: Optional[tuple] = None

    def body_index(self, name: str) -> int:
        for i, b in enumerate(self.bodies):
            if b.name == name:
                return i
        raise KeyError(name)

    def joint_index(self, name: str) -> int:
        for i, j in enumerate(self.joints):
            if j.name == name:
                return i
        raise KeyError(name)

    def actuator_dof(self, a: Actuator) -> int:
        if a.kind == "thruster":
            return 1
        return self.joints[a.joint].dof

    @property
    def act_dim(self) -> int:
        return sum(self.actuator_dof(a) for a in self.actuators)

    def replace(self, **kw) -> "SystemConfig":
        return dataclasses.replace(self, **kw)

    @property
    def collide_pairs(self) -> tuple:
        """Collider index pairs evaluated every substep (no broadphase)."""
        from qpsim.physics.colliders import supported_pair

        joined = {frozenset((j.parent, j.child)) for j in self.joints}
        include = None
        if self.collide_include is not None:
            include = {frozenset(p) for p in self.collide_include}
        pairs = []
        for i, ci in enumerate(self.colliders):
            for k in range(i + 1, len(self.colliders)):
                ck = self.colliders[k]
                if ci.body == ck.body or not supported_pair(ci.shape, ck.shape):
                    continue
                key = frozenset((ci.body, ck.body))
                if include is not None:
                    if key not in include:
                        continue
                elif key in joined:
                    continue
                if self.bodies[ci.body].fully_frozen and self.bodies[ck.body].fully_frozen:
                    continue
                pairs.append((i, k))
        return tuple(pairs)


@dataclass
class QP:
    """Batched dynamic state; every field is ``[scenes, bodies, k]``."""

    pos: np.ndarray
    rot: np.ndarray
    vel: np.ndarray
    ang: np.ndarray

    @property
    def num_scenes(self) -> int:
        return self.pos.shape[0]

    @property
    def num_bodies(self) -> int:
        return self.pos.shape[1]

    def replace(self, **kw) -> "QP":
        return dataclasses.replace(self, **kw)

    def fields(self):
        return (self.pos, self.rot, self.vel, self.ang)

    def take(self, scenes) -> "QP":
        """Selects a subset of scenes (index array or slice)."""
        return QP(*(f[scenes] for f in self.fields()))

    def astype(self, dtype) -> "QP":
        return QP(*(np.asarray(f).astype(dtype) for f in self.fields()))

    def tile(self, n: int) -> "QP":
        return QP(*(np.repeat(f, n, axis=0) for f in self.fields()))

    @staticmethod
    def concatenate(qps: Sequence["QP"]) -> "QP":
        return QP(*(np.concatenate(fs, axis=0) for fs in zip(*(q.fields() for q in qps))))

    @staticmethod
    def zero(num_scenes: int, num_bodies: int, dtype=np.float32) -> "QP":
        rot = np.zeros((num_scenes, num_bodies, 4), dtype=dtype)
        rot[..., 0] = 1
        z = np.zeros((num_scenes, num_bodies, 3), dtype=dtype)
        return QP(z.copy(), rot, z.copy(), z.copy())

    def check(self):
        s, b = self.pos.shape[:2]
        for name, f, k in (("pos", self.pos, 3), ("rot", self.rot, 4), ("vel", self.vel, 3), ("ang", self.ang, 3)):
            if f.shape != (s, b, k):
                raise ValueError(f"QP.{name} has shape {f.shape}, expected {(s, b, k)}")

    def __eq__(self, other):
        if not isinstance(other, QP):
            return NotImplemented
        return all(np.array_equal(a, b) for a, b in zip(self.fields(), other.fields()))


@dataclass
class DP:
    """Velocity-level update: ``dvel`` and ``dang`` per scene per body."""

    dvel: np.ndarray
    dang: np.ndarray

    def __add__(self, other: "DP") -> "DP":
        return DP(self.dvel + other.dvel, self.dang + other.dang)

    @staticmethod
    def zero_like(qp: QP) -> "DP":
        return DP(np.zeros_like(qp.vel), np.zeros_like(qp.ang))
