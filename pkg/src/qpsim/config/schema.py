"""Mapping between parsed documents and :class:`SystemConfig`.

Format reference (units: metres, kilograms, seconds, degrees)::

    substeps: 1                       # physics passes per step
    dt: 0.01                          # seconds per step
    gravity { x: 0 y: 0 z: -9.8 }     # default 0
    friction: 0.6                     # default contact friction
    elasticity: 0                     # default restitution
    baumgarte_beta: 0.2               # default penetration correction
    bodies {
      name: "torso"
      mass: 1                         # default 1
      inertia { x: 1 y: 1 z: 1 }      # default 1
      frozen { position { z: 1 } rotation { x: 1 y: 1 } }   # or { all: true }
      pos { z: 0.5 }                  # placement of a root body
    }
    joints {
      name: "hip"  parent: "torso"  child: "thigh"
      stiffness: 1000  damping: 0     # anchor spring
      angular_stiffness: 1000  angular_damping: 0
      parent_offset { x: 0.2 }  child_offset { x: -0.2 }
      axis { z: 1 }                   # default x, the free axis
      angle_limit { min: -30 max: 30 }   # 0 or 1 blocks: hinge; 3 blocks: ball
    }
    actuators { name: "hip" joint: "hip" strength: 150 torque {} }   # or angle {}
    actuators { name: "push_x" body: "ball" strength: 1 thruster { x: 1 } }
    colliders { body: "torso" sphere { radius: 0.25 } }
    colliders { body: "thigh" capsule { radius: 0.08 length: 0.5 axis { x: 1 } } position { x: 0.1 } }
    colliders { body: "ground" plane { normal { z: 1 } offset: 0 } friction: 1 }
    collide_include { first: "ground" second: "torso" }   # omit for all pairs

Vector blocks default missing components to 0.  Unknown keys, repeated
singular keys and wrong value types are validation errors.
"""

from __future__ import annotations

import math as _m

from qpsim.config.builder import SceneBuilder
from qpsim.config.errors import ValidationError
from qpsim.config.textformat import ConfigDocument, Entry
from qpsim.physics.types import Capsule, Plane, Sphere, SystemConfig

_TOP = ("substeps", "dt", "gravity", "friction", "elasticity", "baumgarte_beta", "bodies", "joints",
        "actuators", "colliders", "collide_include")
_REPEATED_TOP = ("bodies", "joints", "actuators", "colliders", "collide_include")


class _Block:
    """Typed, consume-once access to a document block."""

    def __init__(self, doc: ConfigDocument, path: str, allowed, repeated=()):
        self.doc = doc
        self.path = path
        seen = set()
        for e in doc.entries:
            if e.key not in allowed:
                raise ValidationError(self._p(e.key), f"unknown key {e.key!r}", e.line)
            if e.key in seen and e.key not in repeated:
                raise ValidationError(self._p(e.key), "repeated singular field", e.line)
            seen.add(e.key)

    def _p(self, key):
        return f"{self.path}.{key}" if self.path else key

    def entry(self, key):
        found = self.doc.get_all(key)
        return found[0] if found else None

    def _scalar_entry(self, key):
        e = self.entry(key)
        if e is not None and isinstance(e.value, ConfigDocument):
            raise ValidationError(self._p(key), "expected a value, got a block", e.line)
        return e

    def number(self, key, default):
        e = self._scalar_entry(key)
        if e is None:
            return default
        if isinstance(e.value, bool) or not isinstance(e.value, (int, float)):
            raise ValidationError(self._p(key), f"expected a number, got {e.value!r}", e.line)
        return e.value

    def integer(self, key, default):
        e = self._scalar_entry(key)
        if e is None:
            return default
        if isinstance(e.value, bool) or not isinstance(e.value, int):
            raise ValidationError(self._p(key), f"expected an integer, got {e.value!r}", e.line)
        return e.value

    def string(self, key, default=None):
        e = self._scalar_entry(key)
        if e is None:
            return default
        if not isinstance(e.value, str):
            raise ValidationError(self._p(key), f"expected a string, got {e.value!r}", e.line)
        return e.value

    def flag(self, key, default=False):
        e = self._scalar_entry(key)
        if e is None:
            return default
        if isinstance(e.value, bool):
            return e.value
        if isinstance(e.value, (int, float)) and e.value in (0, 1):
            return bool(e.value)
        raise ValidationError(self._p(key), f"expected true/false or 0/1, got {e.value!r}", e.line)

    def block(self, key, allowed, repeated=()):
        e = self.entry(key)
        if e is None:
            return None
        if not isinstance(e.value, ConfigDocument):
            raise ValidationError(self._p(key), "expected a block", e.line)
        return _Block(e.value, self._p(key), allowed, repeated)

    def blocks(self, key, allowed, repeated=()):
        out = []
        for i, e in enumerate(self.doc.get_all(key)):
            if not isinstance(e.value, ConfigDocument):
                raise ValidationError(f"{self._p(key)}[{i}]", "expected a block", e.line)
            out.append((_Block(e.value, f"{self._p(key)}[{i}]", allowed, repeated), e.line))
        return out

    def vec(self, key, default):
        b = self.block(key, ("x", "y", "z"))
        if b is None:
            return default
        return (b.number("x", 0.0), b.number("y", 0.0), b.number("z", 0.0))

    def mask(self, key):
        b = self.block(key, ("x", "y", "z"))
        if b is None:
            return (False, False, False)
        return (b.flag("x"), b.flag("y"), b.flag("z"))


def document_to_config(doc: ConfigDocument) -> SystemConfig:
    top = _Block(doc, "", _TOP, _REPEATED_TOP)
    b = SceneBuilder(
        dt=top.number("dt", 0.01),
        substeps=top.integer("substeps", 1),
        gravity=top.vec("gravity", (0.0, 0.0, 0.0)),
        friction=top.number("friction", 0.6),
        elasticity=top.number("elasticity", 0.0),
        baumgarte_beta=top.number("baumgarte_beta", 0.2),
    )
    for key in ("dt", "substeps", "gravity", "friction", "elasticity", "baumgarte_beta"):
        e = top.entry(key)
        if e is not None:
            b.lines[key] = e.line

    for blk, line in top.blocks("bodies", ("name", "mass", "inertia", "frozen", "pos")):
        frozen = blk.block("frozen", ("position", "rotation", "all"))
        fp = fr = (False, False, False)
        if frozen is not None:
            if frozen.flag("all"):
                fp = fr = (True, True, True)
            else:
                fp, fr = frozen.mask("position"), frozen.mask("rotation")
        b.add_body(blk.string("name"), mass=blk.number("mass", 1.0), inertia=blk.vec("inertia", (1.0, 1.0, 1.0)),
                   frozen_pos=fp, frozen_rot=fr, pos=blk.vec("pos", (0.0, 0.0, 0.0)), _line=line)

    joint_keys = ("name", "parent", "child", "stiffness", "damping", "angular_stiffness", "angular_damping",
                  "parent_offset", "child_offset", "axis", "angle_limit")
    for blk, line in top.blocks("joints", joint_keys, ("angle_limit",)):
        limits = [(lb.number("min", 0.0), lb.number("max", 0.0)) for lb, _ in blk.blocks("angle_limit", ("min", "max"))]
        b.add_joint(blk.string("name"), blk.string("parent"), blk.string("child"),
                    stiffness=blk.number("stiffness", 1000.0), damping=blk.number("damping", 0.0),
                    angular_stiffness=blk.number("angular_stiffness", 1000.0),
                    angular_damping=blk.number("angular_damping", 0.0),
                    parent_offset=blk.vec("parent_offset", (0.0, 0.0, 0.0)),
                    child_offset=blk.vec("child_offset", (0.0, 0.0, 0.0)),
                    axis=blk.vec("axis", (1.0, 0.0, 0.0)), angle_limits=limits, _line=line)

    for blk, line in top.blocks("actuators", ("name", "joint", "body", "strength", "torque", "angle", "thruster")):
        kinds = [k for k in ("torque", "angle", "thruster") if blk.entry(k) is not None]
        if len(kinds) != 1:
            raise ValidationError(blk.path, f"expected exactly one of torque/angle/thruster, got {kinds or 'none'}", line)
        kind = kinds[0]
        direction = None
        if kind == "thruster":
            direction = blk.vec("thruster", (1.0, 0.0, 0.0))
        else:
            blk.block(kind, ())
        b.add_actuator(blk.string("name"), kind=kind, strength=blk.number("strength", 1.0),
                       joint=blk.string("joint"), body=blk.string("body"), direction=direction, _line=line)

    col_keys = ("body", "sphere", "capsule", "plane", "position", "friction", "elasticity", "baumgarte_beta")
    for blk, line in top.blocks("colliders", col_keys):
        sphere = capsule = plane = None
        s = blk.block("sphere", ("radius",))
        if s is not None:
            sphere = s.number("radius", 0.0)
        c = blk.block("capsule", ("radius", "length", "axis"))
        if c is not None:
            capsule = (c.number("radius", 0.0), c.number("length", 0.0), c.vec("axis", (0.0, 0.0, 1.0)))
        pl = blk.block("plane", ("normal", "offset"))
        if pl is not None:
            plane = (pl.vec("normal", (0.0, 0.0, 1.0)), pl.number("offset", 0.0))
        b.add_collider(blk.string("body"), sphere=sphere, capsule=capsule, plane=plane,
                       position=blk.vec("position", (0.0, 0.0, 0.0)), friction=blk.number("friction", None),
                       elasticity=blk.number("elasticity", None),
                       baumgarte_beta=blk.number("baumgarte_beta", None), _line=line)

    for blk, line in top.blocks("collide_include", ("first", "second")):
        if not blk.doc.entries:
            # an empty block declares an explicit (possibly empty) include list
            b.collide_include = b.collide_include or []
            continue
        b.include_collision(blk.string("first"), blk.string("second"), _line=line)

    return b.finalize()


def degrees_exact(rad: float) -> float:
    """A degree value ``d`` with ``math.radians(d) == rad``, shortest first."""
    d0 = _m.degrees(rad)
    for digits in range(0, 18):
        d = round(d0, digits)
        if _m.radians(d) == rad:
            return d
    d = d0
    for _ in range(64):
        if _m.radians(d) == rad:
            return d
        d = _m.nextafter(d, _m.inf if _m.radians(d) < rad else -_m.inf)
    raise ValueError(f"no degree value maps exactly onto {rad!r} radians")


class _Out:
    def __init__(self):
        self.doc = ConfigDocument()

    def put(self, key, value):
        self.doc.entries.append(Entry(key, value, 0, 0))

    def vec(self, key, v, default=(0.0, 0.0, 0.0), always=False):
        if tuple(v) == tuple(default) and not always:
            return
        sub = _Out()
        for axis, c in zip("xyz", v):
            if c != 0:
                sub.put(axis, float(c))
        self.put(key, sub.doc)

    def mask(self, key, m):
        sub = _Out()
        for axis, c in zip("xyz", m):
            if c:
                sub.put(axis, 1)
        self.put(key, sub.doc)


def config_to_document(cfg: SystemConfig) -> ConfigDocument:
    out = _Out()
    out.put("substeps", int(cfg.substeps))
    out.put("dt", float(cfg.dt))
    out.vec("gravity", cfg.gravity)
    out.put("friction", float(cfg.friction))
    out.put("elasticity", float(cfg.elasticity))
    out.put("baumgarte_beta", float(cfg.baumgarte_beta))
    names = [body.name for body in cfg.bodies]
    for body in cfg.bodies:
        o = _Out()
        o.put("name", body.name)
        o.put("mass", float(body.mass))
        o.vec("inertia", body.inertia, always=True)
        if any(body.frozen_pos) or any(body.frozen_rot):
            fr = _Out()
            if any(body.frozen_pos):
                fr.mask("position", body.frozen_pos)
            if any(body.frozen_rot):
                fr.mask("rotation", body.frozen_rot)
            o.put("frozen", fr.doc)
        o.vec("pos", body.pos)
        out.put("bodies", o.doc)
    for j in cfg.joints:
        o = _Out()
        o.put("name", j.name)
        o.put("parent", names[j.parent])
        o.put("child", names[j.child])
        o.put("stiffness", float(j.stiffness))
        o.put("damping", float(j.damping))
        o.put("angular_stiffness", float(j.angular_stiffness))
        o.put("angular_damping", float(j.angular_damping))
        o.vec("parent_offset", j.parent_offset)
        o.vec("child_offset", j.child_offset)
        o.vec("axis", j.axis, default=(1.0, 0.0, 0.0))
        for lo, hi in j.angle_limits:
            lim = _Out()
            lim.put("min", degrees_exact(lo))
            lim.put("max", degrees_exact(hi))
            o.put("angle_limit", lim.doc)
        out.put("joints", o.doc)
    joint_names = [j.name for j in cfg.joints]
    for a in cfg.actuators:
        o = _Out()
        o.put("name", a.name)
        if a.kind == "thruster":
            o.put("body", names[a.body])
        else:
            o.put("joint", joint_names[a.joint])
        o.put("strength", float(a.strength))
        if a.kind == "thruster":
            o.vec("thruster", a.direction, always=True)
        else:
            o.put(a.kind, ConfigDocument())
        out.put("actuators", o.doc)
    for c in cfg.colliders:
        o = _Out()
        o.put("body", names[c.body])
        s = c.shape
        sub = _Out()
        if isinstance(s, Sphere):
            sub.put("radius", float(s.radius))
            o.put("sphere", sub.doc)
        elif isinstance(s, Capsule):
            sub.put("radius", float(s.radius))
            sub.put("length", float(s.length))
            sub.vec("axis", s.axis, default=(0.0, 0.0, 1.0))
            o.put("capsule", sub.doc)
        elif isinstance(s, Plane):
            sub.vec("normal", s.normal, default=(0.0, 0.0, 1.0))
            sub.put("offset", float(s.offset))
            o.put("plane", sub.doc)
        o.vec("position", c.position)
        for key in ("friction", "elasticity", "baumgarte_beta"):
            v = getattr(c, key)
            if v is not None:
                o.put(key, float(v))
        out.put("colliders", o.doc)
    if cfg.collide_include is not None:
        if not cfg.collide_include:
            out.put("collide_include", ConfigDocument())
        for a, b in cfg.collide_include:
            o = _Out()
            o.put("first", names[a])
            o.put("second", names[b])
            out.put("collide_include", o.doc)
    return out.doc
