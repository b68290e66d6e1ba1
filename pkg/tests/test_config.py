import numpy as np
import pytest
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from qpsim.config import (
    CyclicJointGraph,
    ParseError,
    SceneBuilder,
    ValidationError,
    anchor_separation,
    default_qp,
    load_config,
    parse_config,
    render_config,
    scene_path,
)
from qpsim.physics import System, joint_apply


def build_appendix_a():
    b = SceneBuilder(dt=0.01, substeps=1, gravity=(0.0, 0.0, -9.8))
    b.add_body("Parent", mass=1.0, inertia=(1.0, 1.0, 1.0), frozen_pos=(True,) * 3, frozen_rot=(True,) * 3)
    b.add_body("Child", mass=1.0, inertia=(1.0, 1.0, 1.0))
    b.add_joint("Joint", "Parent", "Child", stiffness=10000.0, child_offset=(0.0, 0.0, 1.0),
                angle_limits=[(-180.0, 180.0)])
    return b.finalize()


def test_appendix_a_golden_file(appendix_a):
    cfg = appendix_a
    assert cfg.dt == 0.01
    assert cfg.substeps == 1
    assert cfg.gravity == (0.0, 0.0, -9.8)
    assert len(cfg.bodies) == 2
    assert len(cfg.joints) == 1
    j = cfg.joints[0]
    assert j.stiffness == 10000.0
    assert j.child_offset[2] == 1.0
    lo, hi = j.angle_limits[0]
    assert np.degrees(lo) == pytest.approx(-180.0) and np.degrees(hi) == pytest.approx(180.0)
    assert all(cfg.bodies[0].frozen_pos) and all(cfg.bodies[0].frozen_rot)


def test_programmatic_equals_parsed(appendix_a):
    assert build_appendix_a() == appendix_a


def test_appendix_a_default_placement(appendix_a):
    qp = default_qp(appendix_a, dtype=np.float64)
    np.testing.assert_allclose(qp.pos[0, 1], [0.0, 0.0, -1.0], atol=1e-12)
    assert anchor_separation(appendix_a, qp).max() < 1e-6
    dp = joint_apply(System(appendix_a, dtype=np.float64), qp)
    assert np.abs(dp.dvel).max() < 1e-6


def test_empty_text_has_no_bodies():
    with pytest.raises(ValidationError, match="no bodies"):
        parse_config("")


def test_dangling_body_reference(appendix_a):
    text = open(scene_path("appendix_a")).read().replace('parent: "Parent"', 'parent: "Ghost"')
    with pytest.raises(ValidationError, match="Ghost"):
        parse_config(text)


def test_unknown_key_rejected():
    with pytest.raises(ValidationError):
        parse_config('bodies { name: "a" colour: 3 }')


@pytest.mark.parametrize("text", ['bodies { name: "a" ', 'bodies { name: }', 'dt: .01 }', 'bodies { name: "a\n" }',
                                  'gravity { z: -9.8 ', '@'])
def test_syntax_errors_carry_position(text):
    with pytest.raises(ParseError) as err:
        parse_config(text)
    assert err.value.line >= 1 and err.value.column >= 1


def test_non_positive_mass_rejected():
    with pytest.raises(ValidationError, match="mass"):
        parse_config('bodies { name: "a" mass: 0 }')


def test_unsupported_collider_pair_rejected():
    text = """
    bodies { name: "a" }
    bodies { name: "b" }
    colliders { body: "a" plane {} }
    colliders { body: "b" plane {} }
    collide_include { first: "a" second: "b" }
    """
    with pytest.raises(ValidationError, match="unsupported collider pair"):
        parse_config(text)


def test_builder_without_bodies():
    with pytest.raises(ValidationError):
        SceneBuilder().finalize()


def test_builder_duplicate_body():
    b = SceneBuilder()
    b.add_body("a")
    b.add_body("a")
    with pytest.raises(ValidationError, match="duplicate"):
        b.finalize()


def test_single_free_body_placement():
    b = SceneBuilder()
    b.add_body("solo")
    qp = default_qp(b.finalize(), dtype=np.float64)
    np.testing.assert_array_equal(qp.pos[0, 0], [0.0, 0.0, 0.0])
    np.testing.assert_array_equal(qp.rot[0, 0], [1.0, 0.0, 0.0, 0.0])


def test_chain_placement():
    b = SceneBuilder()
    for name in "abc":
        b.add_body(name)
    b.add_joint("ab", "a", "b", child_offset=(0.0, 0.0, 1.0))
    b.add_joint("bc", "b", "c", child_offset=(0.0, 0.0, 1.0))
    qp = default_qp(b.finalize(), dtype=np.float64)
    np.testing.assert_allclose(qp.pos[0], [[0, 0, 0], [0, 0, -1], [0, 0, -2]], atol=1e-12)


def test_asymmetric_limits_place_joint_at_midpoint():
    b = SceneBuilder()
    b.add_body("a")
    b.add_body("b")
    b.add_joint("ab", "a", "b", axis=(0.0, 0.0, 1.0), child_offset=(-1.0, 0.0, 0.0), angle_limits=[(30.0, 90.0)])
    cfg = b.finalize()
    qp = default_qp(cfg, dtype=np.float64)
    from qpsim.physics import joint_state

    angle, _ = joint_state(System(cfg, dtype=np.float64), qp)
    assert angle[0, 0] == pytest.approx(np.radians(60.0))
    assert anchor_separation(cfg, qp).max() < 1e-6


def test_cycle_rejected():
    b = SceneBuilder()
    for name in "abc":
        b.add_body(name)
    b.add_joint("ab", "a", "b")
    b.add_joint("bc", "b", "c")
    b.add_joint("ca", "c", "a")
    with pytest.raises(CyclicJointGraph):
        default_qp(b.finalize())


@pytest.mark.parametrize("name", ["ant", "halfcheetah", "pointmass", "appendix_a"])
def test_shipped_scenes_round_trip_and_place(name):
    cfg = load_config(scene_path(name))
    assert parse_config(render_config(cfg)) == cfg
    assert np.all(anchor_separation(cfg, default_qp(cfg, dtype=np.float64)) < 1e-6)


# generated scenes ------------------------------------------------------------

finite = st.floats(min_value=-50.0, max_value=50.0, allow_nan=False, allow_infinity=False)
positive = st.floats(min_value=1e-3, max_value=100.0, allow_nan=False, allow_infinity=False)
vec3 = st.tuples(finite, finite, finite)
mask = st.tuples(st.booleans(), st.booleans(), st.booleans())
unit_axes = st.sampled_from([(1.0, 0.0, 0.0), (0.0, 1.0, 0.0), (0.0, 0.0, 1.0), (0.6, 0.8, 0.0), (-1.0, 0.0, 0.0)])


@st.composite
def limit_pair(draw):
    a = draw(st.floats(min_value=-180.0, max_value=180.0, allow_nan=False))
    b = draw(st.floats(min_value=-180.0, max_value=180.0, allow_nan=False))
    return (min(a, b), max(a, b))


@st.composite
def scenes(draw):
    b = SceneBuilder(dt=draw(positive), substeps=draw(st.integers(1, 8)), gravity=draw(vec3),
                     friction=draw(st.floats(0.0, 2.0)), elasticity=draw(st.floats(0.0, 1.0)),
                     baumgarte_beta=draw(st.floats(0.0, 1.0)))
    n = draw(st.integers(1, 6))
    for i in range(n):
        b.add_body(f"b{i}", mass=draw(positive), inertia=(draw(positive), draw(positive), draw(positive)),
                   frozen_pos=draw(mask), frozen_rot=draw(mask), pos=draw(vec3))
    joints = []
    for i in range(1, n):
        if draw(st.booleans()):
            parent = draw(st.integers(0, i - 1))
            dof = draw(st.sampled_from([0, 1, 3]))
            b.add_joint(f"j{i}", f"b{parent}", f"b{i}", stiffness=draw(positive), damping=draw(positive),
                        angular_stiffness=draw(positive), angular_damping=draw(positive),
                        parent_offset=draw(vec3), child_offset=draw(vec3), axis=draw(unit_axes),
                        angle_limits=[draw(limit_pair()) for _ in range(dof)])
            joints.append((f"j{i}", dof))
    for name, dof in joints:
        if draw(st.booleans()):
            kind = "angle" if dof <= 1 and draw(st.booleans()) else "torque"
            b.add_actuator(f"a_{name}", kind=kind, strength=draw(positive), joint=name)
    if draw(st.booleans()):
        b.add_actuator("thrust", kind="thruster", strength=draw(positive), body="b0", direction=(0.0, 1.0, 0.0))
    for i in range(n):
        shape = draw(st.sampled_from(["none", "sphere", "capsule", "plane"]))
        if shape == "sphere":
            b.add_collider(f"b{i}", sphere=draw(positive), position=draw(vec3),
                           friction=draw(st.none() | st.floats(0.0, 2.0)))
        elif shape == "capsule":
            r = draw(positive)
            b.add_collider(f"b{i}", capsule=(r, 2 * r + draw(positive), draw(unit_axes)))
        elif shape == "plane":
            b.add_collider(f"b{i}", plane=(draw(unit_axes), draw(finite)), elasticity=draw(st.none() | st.floats(0, 1)))
    return b.finalize()


@settings(max_examples=200, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(scenes())
def test_render_parse_round_trip(cfg):
    assert parse_config(render_config(cfg)) == cfg


@settings(max_examples=100, deadline=None)
@given(st.text(alphabet='abcdefgxyz{}:"\\ .-+0123456789e\n#', max_size=60))
def test_parsing_is_total(text):
    try:
        parse_config(text)
    except (ParseError, ValidationError):
        pass
