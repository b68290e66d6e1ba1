"""Programmatic scene construction with the same checks as the text parser.

Example::

    b = SceneBuilder(dt=0.01, gravity=(0, 0, -9.8))
    b.add_body("Parent", frozen_pos=(1, 1, 1), frozen_rot=(1, 1, 1))
    b.add_body("Child")
    b.add_joint("Joint", "Parent", "Child", stiffness=10000,
                child_offset=(0, 0, 1), angle_limits=[(-180, 180)])
    config = b.finalize()

Angles passed to the builder are in degrees, as in scene files.
"""

from __future__ import annotations

import math as _m
from dataclasses import dataclass
from typing import Optional

from qpsim.config.errors import ValidationError
from qpsim.physics.colliders import supported_pair
from qpsim.physics.types import (
    Actuator,
    Body,
    Capsule,
    Collider,
    Joint,
    Plane,
    Sphere,
    SystemConfig,
)

ACTUATOR_KINDS = ("torque", "angle", "thruster")


@dataclass
class _Item:
    """A pending entry plus where it came from, for error messages."""

    path: str
    fields: dict
    line: Optional[int] = None


def _finite(x) -> bool:
    try:
        return _m.isfinite(float(x))
    except (TypeError, ValueError):
        return False


def _vec(v, path, line, what="vector"):
    try:
        t = tuple(float(c) for c in v)
    except (TypeError, ValueError):
        raise ValidationError(path, f"expected a 3-{what}", line) from None
    if len(t) != 3:
        raise ValidationError(path, f"expected 3 components, got {len(t)}", line)
    if not all(_m.isfinite(c) for c in t):
        raise ValidationError(path, "components must be finite", line)
    return t


def _nonzero(v, path, line):
    if not any(v):
        raise ValidationError(path, "must be non-zero", line)
    return v


def _mask(v, path, line):
    try:
        t = tuple(bool(c) for c in v)
    except TypeError:
        raise ValidationError(path, "expected three flags", line) from None
    if len(t) != 3:
        raise ValidationError(path, f"expected 3 flags, got {len(t)}", line)
    return t


def _number(x, path, line, lo=None, hi=None, lo_open=False):
    if isinstance(x, bool) or not _finite(x):
        raise ValidationError(path, f"expected a finite number, got {x!r}", line)
    x = float(x)
    if lo is not None and (x < lo or (lo_open and x == lo)):
        raise ValidationError(path, f"must be {'>' if lo_open else '>='} {lo:g}, got {x:g}", line)
    if hi is not None and x > hi:
        raise ValidationError(path, f"must be <= {hi:g}, got {x:g}", line)
    return x


def _optional(x, path, line, **kw):
    return None if x is None else _number(x, path, line, **kw)


class SceneBuilder:
    """Accumulates bodies, joints, actuators and colliders by name.

    Nothing is checked until :meth:`finalize`, which resolves names and
    raises :class:`ValidationError` naming the offending entry.
    """

    def __init__(self, dt=0.01, substeps=1, gravity=(0.0, 0.0, 0.0), friction=0.6, elasticity=0.0,
                 baumgarte_beta=0.2):
        self.dt = dt
        self.substeps = substeps
        self.gravity = gravity
        self.friction = friction
        self.elasticity = elasticity
        self.baumgarte_beta = baumgarte_beta
        self.bodies: list = []
        self.joints: list = []
        self.actuators: list = []
        self.colliders: list = []
        self.collide_include: Optional[list] = None
        self.lines: dict = {}

    def add_body(self, name, mass=1.0, inertia=(1.0, 1.0, 1.0), frozen_pos=(False,) * 3, frozen_rot=(False,) * 3,
                 pos=(0.0, 0.0, 0.0), _line=None):
        self.bodies.append(_Item(f"bodies[{len(self.bodies)}]", dict(
            name=name, mass=mass, inertia=inertia, frozen_pos=frozen_pos, frozen_rot=frozen_rot, pos=pos), _line))
        return self

    def add_joint(self, name, parent, child, stiffness=1000.0, damping=0.0, angular_stiffness=1000.0,
                  angular_damping=0.0, parent_offset=(0.0, 0.0, 0.0), child_offset=(0.0, 0.0, 0.0),
                  axis=(1.0, 0.0, 0.0), angle_limits=(), _line=None):
        """``angle_limits`` is a list of ``(min, max)`` pairs in degrees."""
        self.joints.append(_Item(f"joints[{len(self.joints)}]", dict(
            name=name, parent=parent, child=child, stiffness=stiffness, damping=damping,
            angular_stiffness=angular_stiffness, angular_damping=angular_damping,
            parent_offset=parent_offset, child_offset=child_offset, axis=axis,
            angle_limits=list(angle_limits)), _line))
        return self

    def add_actuator(self, name, kind="torque", strength=1.0, joint=None, body=None, direction=None, _line=None):
        self.actuators.append(_Item(f"actuators[{len(self.actuators)}]", dict(
            name=name, kind=kind, strength=strength, joint=joint, body=body, direction=direction), _line))
        return self

    def add_collider(self, body, sphere=None, capsule=None, plane=None, position=(0.0, 0.0, 0.0), friction=None,
                     elasticity=None, baumgarte_beta=None, _line=None):
        """Exactly one shape: ``sphere=radius``, ``capsule=(radius, length[, axis])``
        or ``plane=(normal, offset)``."""
        self.colliders.append(_Item(f"colliders[{len(self.colliders)}]", dict(
            body=body, sphere=sphere, capsule=capsule, plane=plane, position=position, friction=friction,
            elasticity=elasticity, baumgarte_beta=baumgarte_beta), _line))
        return self

    def include_collision(self, first, second, _line=None):
        if self.collide_include is None:
            self.collide_include = []
        self.collide_include.append(_Item(f"collide_include[{len(self.collide_include)}]",
                                          dict(first=first, second=second), _line))
        return self

    def finalize(self) -> SystemConfig:
        ln = self.lines.get
        dt = _number(self.dt, "dt", ln("dt"), lo=0.0, lo_open=True)
        if isinstance(self.substeps, bool) or not isinstance(self.substeps, int) or self.substeps < 1:
            raise ValidationError("substeps", f"must be a positive integer, got {self.substeps!r}", ln("substeps"))
        gravity = _vec(self.gravity, "gravity", ln("gravity"))
        friction = _number(self.friction, "friction", ln("friction"), lo=0.0)
        elasticity = _number(self.elasticity, "elasticity", ln("elasticity"), lo=0.0, hi=1.0)
        beta = _number(self.baumgarte_beta, "baumgarte_beta", ln("baumgarte_beta"), lo=0.0, hi=1.0)

        if not self.bodies:
            raise ValidationError("bodies", "no bodies")
        bodies, names = [], {}
        for it in self.bodies:
            f, p, line = it.fields, it.path, it.line
            name = f["name"]
            if not isinstance(name, str) or not name:
                raise ValidationError(f"{p}.name", "missing or empty body name", line)
            if name in names:
                raise ValidationError(f"{p}.name", f"duplicate name {name!r}", line)
            names[name] = len(bodies)
            inertia = _vec(f["inertia"], f"{p}.inertia", line)
            if min(inertia) <= 0:
                raise ValidationError(f"{p}.inertia", "components must be positive", line)
            bodies.append(Body(
                name=name,
                mass=_number(f["mass"], f"{p}.mass", line, lo=0.0, lo_open=True),
                inertia=inertia,
                frozen_pos=_mask(f["frozen_pos"], f"{p}.frozen.position", line),
                frozen_rot=_mask(f["frozen_rot"], f"{p}.frozen.rotation", line),
                pos=_vec(f["pos"], f"{p}.pos", line),
            ))

        def body_ref(value, path, line):
            if value not in names:
                raise ValidationError(path, f"unknown body {value!r}", line)
            return names[value]

        joints, joint_names = [], {}
        for it in self.joints:
            f, p, line = it.fields, it.path, it.line
            name = f["name"]
            if not isinstance(name, str) or not name:
                raise ValidationError(f"{p}.name", "missing or empty joint name", line)
            if name in joint_names:
                raise ValidationError(f"{p}.name", f"duplicate name {name!r}", line)
            joint_names[name] = len(joints)
            parent = body_ref(f["parent"], f"{p}.parent", line)
            child = body_ref(f["child"], f"{p}.child", line)
            if parent == child:
                raise ValidationError(f"{p}.child", "parent and child are the same body", line)
            limits = []
            for k, lim in enumerate(f["angle_limits"]):
                lp = f"{p}.angle_limit[{k}]"
                try:
                    lo, hi = lim
                except (TypeError, ValueError):
                    raise ValidationError(lp, "expected a (min, max) pair", line) from None
                lo = _number(lo, f"{lp}.min", line)
                hi = _number(hi, f"{lp}.max", line)
                if lo > hi:
                    raise ValidationError(lp, f"min {lo:g} exceeds max {hi:g}", line)
                limits.append((_m.radians(lo), _m.radians(hi)))
            if len(limits) not in (0, 1, 3):
                raise ValidationError(f"{p}.angle_limit", f"expected 0, 1 or 3 limits, got {len(limits)}", line)
            joints.append(Joint(
                name=name, parent=parent, child=child,
                stiffness=_number(f["stiffness"], f"{p}.stiffness", line, lo=0.0),
                damping=_number(f["damping"], f"{p}.damping", line, lo=0.0),
                angular_stiffness=_number(f["angular_stiffness"], f"{p}.angular_stiffness", line, lo=0.0),
                angular_damping=_number(f["angular_damping"], f"{p}.angular_damping", line, lo=0.0),
                parent_offset=_vec(f["parent_offset"], f"{p}.parent_offset", line),
                child_offset=_vec(f["child_offset"], f"{p}.child_offset", line),
                axis=_nonzero(_vec(f["axis"], f"{p}.axis", line), f"{p}.axis", line),
                angle_limits=tuple(limits),
            ))

        actuators, act_names = [], set()
        for it in self.actuators:
            f, p, line = it.fields, it.path, it.line
            name = f["name"]
            if not isinstance(name, str) or not name:
                raise ValidationError(f"{p}.name", "missing or empty actuator name", line)
            if name in act_names:
                raise ValidationError(f"{p}.name", f"duplicate name {name!r}", line)
            act_names.add(name)
            kind = f["kind"]
            if kind not in ACTUATOR_KINDS:
                raise ValidationError(p, f"actuator kind must be one of {ACTUATOR_KINDS}, got {kind!r}", line)
            strength = _number(f["strength"], f"{p}.strength", line, lo=0.0)
            if kind == "thruster":
                if f["joint"] is not None:
                    raise ValidationError(f"{p}.joint", "a thruster acts on a body, not a joint", line)
                if f["body"] is None:
                    raise ValidationError(f"{p}.body", "thruster needs a body", line)
                body = body_ref(f["body"], f"{p}.body", line)
                direction = _nonzero(_vec(f["direction"] if f["direction"] is not None else (1.0, 0.0, 0.0),
                                          f"{p}.thruster", line), f"{p}.thruster", line)
                actuators.append(Actuator(name=name, kind=kind, strength=strength, body=body, direction=direction))
                continue
            if f["body"] is not None or f["direction"] is not None:
                raise ValidationError(p, f"{kind} actuators act on a joint, not a body", line)
            if f["joint"] not in joint_names:
                raise ValidationError(f"{p}.joint", f"unknown joint {f['joint']!r}", line)
            j = joint_names[f["joint"]]
            if kind == "angle" and joints[j].dof != 1:
                raise ValidationError(p, "angle actuators need a single-axis joint", line)
            actuators.append(Actuator(name=name, kind=kind, strength=strength, joint=j))

        colliders = []
        for it in self.colliders:
            f, p, line = it.fields, it.path, it.line
            body = body_ref(f["body"], f"{p}.body", line)
            given = [k for k in ("sphere", "capsule", "plane") if f[k] is not None]
            if len(given) != 1:
                raise ValidationError(p, f"expected exactly one shape, got {given or 'none'}", line)
            kind = given[0]
            if kind == "sphere":
                shape = Sphere(_number(f["sphere"], f"{p}.sphere.radius", line, lo=0.0, lo_open=True))
            elif kind == "capsule":
                c = tuple(f["capsule"])
                radius = _number(c[0], f"{p}.capsule.radius", line, lo=0.0, lo_open=True)
                length = _number(c[1], f"{p}.capsule.length", line, lo=0.0, lo_open=True)
                if length < 2 * radius:
                    raise ValidationError(f"{p}.capsule.length", "length must be at least twice the radius", line)
                axis = _nonzero(_vec(c[2] if len(c) > 2 else (0.0, 0.0, 1.0), f"{p}.capsule.axis", line),
                                f"{p}.capsule.axis", line)
                shape = Capsule(radius, length, axis)
            else:
                normal, offset = f["plane"]
                shape = Plane(_nonzero(_vec(normal, f"{p}.plane.normal", line), f"{p}.plane.normal", line),
                              _number(offset, f"{p}.plane.offset", line))
            colliders.append(Collider(
                body=body, shape=shape, position=_vec(f["position"], f"{p}.position", line),
                friction=_optional(f["friction"], f"{p}.friction", line, lo=0.0),
                elasticity=_optional(f["elasticity"], f"{p}.elasticity", line, lo=0.0, hi=1.0),
                baumgarte_beta=_optional(f["baumgarte_beta"], f"{p}.baumgarte_beta", line, lo=0.0, hi=1.0),
            ))

        include = None
        if self.collide_include is not None:
            include = []
            for it in self.collide_include:
                f, p, line = it.fields, it.path, it.line
                a = body_ref(f["first"], f"{p}.first", line)
                b = body_ref(f["second"], f"{p}.second", line)
                if a == b:
                    raise ValidationError(p, "a body cannot collide with itself", line)
                for ca in (c for c in colliders if c.body == a):
                    for cb in (c for c in colliders if c.body == b):
                        if not supported_pair(ca.shape, cb.shape):
                            raise ValidationError(p, "unsupported collider pair "
                                                  f"{type(ca.shape).__name__.lower()}-{type(cb.shape).__name__.lower()}",
                                                  line)
                include.append((a, b))
            include = tuple(include)

        return SystemConfig(
            dt=dt, substeps=self.substeps, gravity=gravity, friction=friction, elasticity=elasticity,
            baumgarte_beta=beta, bodies=tuple(bodies), joints=tuple(joints), actuators=tuple(actuators),
            colliders=tuple(colliders), collide_include=include,
        )
