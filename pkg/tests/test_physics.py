import io

import numpy as np
import pytest

from qpsim import math
from qpsim.config import SceneBuilder, default_qp
from qpsim.diagnostics import protocol_config
from qpsim.physics import (
    DP,
    QP,
    NumericalBlowup,
    System,
    actuator_apply,
    collide,
    collide_pair,
    collision_integrate,
    contact_geometry,
    joint_apply,
    kinematic_apply,
    measure_momentum_energy,
    potential_integrate,
    read_trajectory,
    system_step,
    write_trajectory,
)

from conftest import free_body_scene, two_body_scene


def ball_on_ground(z, radius=0.5, beta=0.2, elasticity=0.0, friction=0.0):
    b = SceneBuilder(dt=0.01, friction=friction, elasticity=elasticity, baumgarte_beta=beta)
    b.add_body("ground", frozen_pos=(True,) * 3, frozen_rot=(True,) * 3)
    b.add_body("ball", mass=1.0, pos=(0.0, 0.0, z))
    b.add_collider("ground", plane=((0.0, 0.0, 1.0), 0.0))
    b.add_collider("ball", sphere=radius)
    cfg = b.finalize()
    return System(cfg, dtype=np.float64), default_qp(cfg, dtype=np.float64)


# kinematic_apply -------------------------------------------------------------

def test_kinematic_rest_state_is_unchanged():
    sys = System(free_body_scene(), dtype=np.float64)
    qp = QP.zero(2, 1, dtype=np.float64)
    assert kinematic_apply(sys, qp, 0.01) == qp


def test_kinematic_linear_motion():
    sys = System(free_body_scene(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.vel[0, 0] = (1.0, 0.0, 0.0)
    out = kinematic_apply(sys, qp, 0.01)
    assert out.pos[0, 0, 0] == 0.01
    np.testing.assert_array_equal(out.vel, qp.vel)


def test_kinematic_respects_position_freeze():
    b = SceneBuilder()
    b.add_body("pinned", frozen_pos=(True,) * 3)
    sys = System(b.finalize(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.vel[0, 0] = (3.0, -2.0, 1.0)
    np.testing.assert_array_equal(kinematic_apply(sys, qp, 0.01).pos, qp.pos)


# joint_apply -----------------------------------------------------------------

def test_joint_at_default_placement_exerts_nothing():
    cfg = two_body_scene()
    sys = System(cfg, dtype=np.float64)
    dp = joint_apply(sys, default_qp(cfg, dtype=np.float64))
    assert np.abs(dp.dvel).max() < 1e-6
    assert np.abs(dp.dang).max() < 1e-6


def test_joint_hooke_force_on_stretch():
    cfg = two_body_scene(stiffness=10000.0)
    sys = System(cfg, dtype=np.float64)
    qp = default_qp(cfg, dtype=np.float64)
    qp.pos[0, 1, 0] += 0.1
    dp = joint_apply(sys, qp)
    # unit masses, so accelerations equal the anchor forces
    np.testing.assert_allclose(dp.dvel[0, 1], [-1000.0, 0.0, 0.0], atol=1e-9)
    np.testing.assert_allclose(dp.dvel[0, 0], [1000.0, 0.0, 0.0], atol=1e-9)


def test_joint_forces_obey_third_law(rng):
    cfg = two_body_scene(child_inertia=(1.0, 2.0, 3.0))
    sys = System(cfg, dtype=np.float32)
    qp = default_qp(cfg, num_scenes=1, dtype=np.float32).tile(16)
    qp.pos += rng.normal(scale=0.05, size=qp.pos.shape).astype(np.float32)
    qp.vel += rng.normal(size=qp.vel.shape).astype(np.float32)
    dp = joint_apply(sys, qp)
    net = (dp.dvel * sys.mass[None, :, None]).sum(axis=1)
    assert np.abs(net).max() < 1e-6 * np.abs(dp.dvel).max()


# actuator_apply ----------------------------------------------------------------

def test_zero_action_gives_zero_update():
    cfg = two_body_scene()
    sys = System(cfg, dtype=np.float64)
    dp = actuator_apply(sys, default_qp(cfg, dtype=np.float64), np.zeros((1, 1)))
    assert not dp.dvel.any() and not dp.dang.any()


def test_unit_torque_on_unit_inertia():
    cfg = two_body_scene()
    sys = System(cfg, dtype=np.float64)
    dp = actuator_apply(sys, default_qp(cfg, dtype=np.float64), np.ones((1, 1)))
    np.testing.assert_allclose(dp.dang[0, 1], [0.0, 0.0, 1.0], atol=1e-15)
    np.testing.assert_allclose(dp.dang[0, 0], [0.0, 0.0, -1.0], atol=1e-15)


def test_action_is_clamped():
    cfg = two_body_scene()
    sys = System(cfg, dtype=np.float64)
    qp = default_qp(cfg, dtype=np.float64)
    big = actuator_apply(sys, qp, np.full((1, 1), 7.0))
    one = actuator_apply(sys, qp, np.ones((1, 1)))
    np.testing.assert_array_equal(big.dang, one.dang)


def test_actuated_step_keeps_angular_momentum():
    cfg = two_body_scene(child_inertia=(2.0, 1.0, 0.5))
    sys = System(cfg, dtype=np.float64)
    qp = default_qp(cfg, dtype=np.float64)
    _, l0, _ = measure_momentum_energy(sys, qp)
    qp1 = system_step(sys, qp, np.full((1, 1), 0.8))
    _, l1, _ = measure_momentum_energy(sys, qp1)
    assert np.abs(l1 - l0).max() < 1e-6


# contacts --------------------------------------------------------------------------

def test_separated_sphere_has_no_contact():
    sys, qp = ball_on_ground(0.6)
    dp = collide_pair(sys, 0, 1, qp, 0.01)
    assert not dp.dvel.any() and not dp.dang.any()


def test_penetrating_sphere_geometry():
    sys, qp = ball_on_ground(0.4)
    point, normal, depth = contact_geometry(sys, 0, 1, qp)
    np.testing.assert_allclose(depth[0, 0], 0.1, rtol=1e-12)
    np.testing.assert_allclose(normal[0, 0], [0.0, 0.0, 1.0])
    np.testing.assert_allclose(point[0, 0], [0.0, 0.0, -0.1], atol=1e-12)


def test_resting_sphere_bias_impulse():
    # j = beta * d / dt with unit mass and an arm parallel to the normal
    sys, qp = ball_on_ground(0.49, beta=0.2)
    dp = collide_pair(sys, 0, 1, qp, 0.01)
    np.testing.assert_allclose(dp.dvel[0, 1], [0.0, 0.0, 0.2 * 0.01 / 0.01], atol=1e-12)
    assert not dp.dvel[0, 0].any()


def test_restitution_reflects_approach_speed():
    sys, qp = ball_on_ground(0.5 - 1e-12, beta=0.0, elasticity=1.0)
    qp.vel[0, 1] = (0.0, 0.0, -2.0)
    dp = collide(sys, qp, 0.01)
    np.testing.assert_allclose(dp.dvel[0, 1, 2], 4.0, rtol=1e-9)


def test_friction_is_inside_coulomb_cone():
    sys, qp = ball_on_ground(0.45, beta=0.2, friction=0.5)
    qp.vel[0, 1] = (3.0, 0.0, 0.0)
    dp = collide(sys, qp, 0.01)
    # the impulse acts at the contact point, so the linear change is the impulse
    j = dp.dvel[0, 1]
    assert j[2] > 0
    assert np.hypot(j[0], j[1]) <= 0.5 * j[2] + 1e-12
    assert j[0] < 0


def test_unsupported_pair_rejected():
    b = SceneBuilder()
    b.add_body("a")
    b.add_body("b")
    b.add_collider("a", plane=((0.0, 0.0, 1.0), 0.0))
    b.add_collider("b", plane=((0.0, 0.0, 1.0), 0.0))
    sys = System(b.finalize())
    with pytest.raises(ValueError):
        collide_pair(sys, 0, 1, QP.zero(1, 2), 0.01)


# integrators -----------------------------------------------------------------------

def test_potential_integrate_gravity_only():
    sys = System(free_body_scene(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    out = potential_integrate(sys, qp, DP.zero_like(qp), 0.01)
    np.testing.assert_allclose(out.vel[0, 0], [0.0, 0.0, -0.098], rtol=1e-15)
    np.testing.assert_array_equal(out.pos, qp.pos)


def test_potential_integrate_without_forces_is_identity():
    sys = System(free_body_scene(gravity=(0.0, 0.0, 0.0)), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.vel[:] = 1.5
    assert potential_integrate(sys, qp, DP.zero_like(qp), 0.01) == qp


def test_potential_integrate_frozen_body_ignores_gravity():
    b = SceneBuilder(gravity=(0.0, 0.0, -9.8))
    b.add_body("pinned", frozen_pos=(True,) * 3)
    sys = System(b.finalize(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    np.testing.assert_array_equal(potential_integrate(sys, qp, DP.zero_like(qp), 0.01).vel, qp.vel)


def test_collision_integrate_adds_impulse_directly():
    sys = System(free_body_scene(), dtype=np.float64)
    qp = QP.zero(2, 1, dtype=np.float64)
    dp = DP.zero_like(qp)
    assert collision_integrate(sys, qp, dp) == qp
    dp.dvel[1, 0, 2] = 1.0
    out = collision_integrate(sys, qp, dp)
    assert out.vel[1, 0, 2] == 1.0
    assert not out.vel[0].any()


# system_step ----------------------------------------------------------------------

def test_free_fall_closed_form():
    sys = System(free_body_scene(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    for _ in range(100):
        qp = system_step(sys, qp)
    n, dt, g = 100, 0.01, 9.8
    assert abs(qp.vel[0, 0, 2] - (-g * n * dt)) <= 1e-12
    expected = -g * dt * dt * n * (n - 1) / 2
    assert expected == pytest.approx(-4.851)
    assert abs(qp.pos[0, 0, 2] - expected) <= 1e-6 * abs(expected)


def test_uniform_motion_without_forces():
    sys = System(free_body_scene(gravity=(0.0, 0.0, 0.0)), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.vel[0, 0] = (1.0, -2.0, 0.5)
    p0, _, _ = measure_momentum_energy(sys, qp)
    for _ in range(50):
        qp = system_step(sys, qp)
    p1, _, _ = measure_momentum_energy(sys, qp)
    np.testing.assert_array_equal(p0, p1)
    np.testing.assert_allclose(qp.pos[0, 0], [0.5, -1.0, 0.25], rtol=1e-12)


def test_two_body_momentum_drift_small(rng):
    cfg = two_body_scene(child_inertia=(1.0, 2.0, 1.5))
    sys = System(cfg)
    qp = default_qp(cfg)
    p0, _, _ = measure_momentum_energy(sys, qp)
    for _ in range(100):
        qp = system_step(sys, qp, rng.uniform(-1, 1, size=(1, 1)).astype(np.float32))
    p1, _, _ = measure_momentum_energy(sys, qp)
    assert np.linalg.norm(p1 - p0) < 1e-4


def test_scene_independence(ant_config, rng):
    sys = System(ant_config)
    qp = default_qp(ant_config).tile(6)
    qp.vel += rng.normal(scale=0.3, size=qp.vel.shape).astype(np.float32)
    act = rng.uniform(-1, 1, size=(6, sys.act_dim)).astype(np.float32)
    batch = system_step(sys, qp, act)
    for s in range(6):
        alone = system_step(sys, qp.take(slice(s, s + 1)), act[s : s + 1])
        assert alone == batch.take(slice(s, s + 1))


def test_step_is_deterministic(ant_config, rng):
    sys = System(ant_config)
    qp = default_qp(ant_config).tile(4)
    act = rng.uniform(-1, 1, size=(4, sys.act_dim)).astype(np.float32)
    assert system_step(sys, qp, act) == system_step(sys, qp, act)


def test_fully_frozen_body_is_bitwise_unchanged(ant_config, rng):
    sys = System(ant_config)
    qp = default_qp(ant_config).tile(3)
    ground = ant_config.body_index("ground")
    for _ in range(20):
        qp = system_step(sys, qp, rng.uniform(-1, 1, size=(3, sys.act_dim)).astype(np.float32))
    start = default_qp(ant_config).tile(3)
    for a, b in zip(qp.fields(), start.fields()):
        np.testing.assert_array_equal(a[:, ground], b[:, ground])


def test_blowup_is_signalled():
    cfg = two_body_scene(stiffness=1e9, actuated=False)
    sys = System(cfg, dtype=np.float64)
    qp = default_qp(cfg, dtype=np.float64)
    qp.pos[0, 1, 0] += 0.5
    with pytest.raises(NumericalBlowup):
        for _ in range(100):
            qp = system_step(sys, qp)


def test_rotations_stay_unit(ant_config, rng):
    sys = System(ant_config)
    qp = default_qp(ant_config).tile(4)
    for _ in range(50):
        qp = system_step(sys, qp, rng.uniform(-1, 1, size=(4, sys.act_dim)).astype(np.float32))
    np.testing.assert_allclose(np.linalg.norm(qp.rot, axis=-1), 1.0, atol=1e-5)


def test_anisotropic_fast_path_matches_full_rotation(ant_config, rng):
    # per-body shortcut for isotropic inertia must agree with the rotated form
    sys = System(ant_config, dtype=np.float64)
    q = rng.normal(size=(5, sys.num_bodies, 4))
    q /= np.linalg.norm(q, axis=-1, keepdims=True)
    tau = rng.normal(size=(5, sys.num_bodies, 3))
    body = np.arange(sys.num_bodies)
    full = math.quat_rotate(q, sys.inv_inertia * math.quat_rotate_inv(q, tau))
    np.testing.assert_allclose(sys.inv_inertia_apply(sys.inv_inertia, q, tau, body), full, atol=1e-12)


# measurement ---------------------------------------------------------------------

def test_measure_rest_at_origin():
    sys = System(free_body_scene(), dtype=np.float64)
    p, l_mom, e = measure_momentum_energy(sys, QP.zero(1, 1, dtype=np.float64))
    assert not p.any() and not l_mom.any() and e[0] == 0.0


def test_measure_linear_momentum():
    b = SceneBuilder()
    b.add_body("m", mass=2.0)
    sys = System(b.finalize(), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.vel[0, 0] = (1.0, 0.0, 0.0)
    p, _, _ = measure_momentum_energy(sys, qp)
    np.testing.assert_array_equal(p[0], [2.0, 0.0, 0.0])


def test_free_fall_energy_constant():
    sys = System(free_body_scene(dt=1e-3), dtype=np.float64)
    qp = QP.zero(1, 1, dtype=np.float64)
    qp.pos[0, 0, 2] = 10.0
    _, _, e0 = measure_momentum_energy(sys, qp)
    for _ in range(1000):
        qp = system_step(sys, qp)
    _, _, e1 = measure_momentum_energy(sys, qp)
    assert abs(e1[0] - e0[0]) < 1e-3 * abs(e0[0])


def test_protocol_scene_conserves_linear_momentum(ant_config, rng):
    cfg = protocol_config(ant_config, 0.01, actuators=True)
    sys = System(cfg)
    qp = default_qp(cfg).tile(4)
    p0, _, _ = measure_momentum_energy(sys, qp)
    for _ in range(100):
        qp = system_step(sys, qp, rng.uniform(-0.005, 0.005, size=(4, sys.act_dim)).astype(np.float32))
    p1, _, _ = measure_momentum_energy(sys, qp)
    assert np.linalg.norm(p1 - p0, axis=1).max() < 1e-4 * (1 + np.linalg.norm(p0, axis=1).max())


# trajectory dump -------------------------------------------------------------------

def test_trajectory_round_trip(ant_config):
    sys = System(ant_config, dtype=np.float64)
    qp = default_qp(ant_config, dtype=np.float64).tile(2)
    frames = [(0, qp), (1, system_step(sys, qp))]
    buf = io.StringIO()
    assert write_trajectory(buf, frames) == 2
    buf.seek(0)
    back = list(read_trajectory(buf, 2, sys.num_bodies))
    assert [s for s, _ in back] == [0, 1]
    for (_, a), (_, b) in zip(frames, back):
        assert a == b
