import numpy as np
import pytest
from scipy.spatial.transform import Rotation

from qpsim import diff, math


def random_quats(rng, n):
    q = rng.normal(size=(n, 4))
    return q / np.linalg.norm(q, axis=1, keepdims=True)


def scipy_rotate(q, v):
    # scipy stores quaternions scalar-last
    return Rotation.from_quat(np.concatenate([q[..., 1:], q[..., :1]], axis=-1)).apply(v)


def test_quat_rotate_identity():
    v = np.array([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(math.quat_rotate(math.quat_identity(dtype=np.float64), v), v)


def test_quat_rotate_quarter_turn_about_z():
    q = math.quat_from_axis_angle(np.array([0.0, 0.0, 1.0]), np.pi / 2)
    np.testing.assert_allclose(math.quat_rotate(q, np.array([1.0, 0.0, 0.0])), [0.0, 1.0, 0.0], atol=1e-15)


def test_quat_rotate_matches_rotation_matrix(rng):
    q = random_quats(rng, 200)
    v = rng.normal(size=(200, 3))
    np.testing.assert_allclose(math.quat_rotate(q, v), scipy_rotate(q, v), atol=1e-12)


def test_quat_rotate_round_trip_and_norm(rng):
    q = random_quats(rng, 100)
    v = rng.normal(size=(100, 3))
    w = math.quat_rotate(q, v)
    np.testing.assert_allclose(np.linalg.norm(w, axis=1), np.linalg.norm(v, axis=1), rtol=1e-12)
    np.testing.assert_allclose(math.quat_rotate_inv(q, w), v, atol=1e-12)
    np.testing.assert_allclose(math.quat_rotate(math.quat_inv(q), w), v, atol=1e-12)


def test_quat_mul_composes_rotations(rng):
    a, b = random_quats(rng, 50), random_quats(rng, 50)
    v = rng.normal(size=(50, 3))
    np.testing.assert_allclose(math.quat_rotate(math.quat_mul(a, b), v),
                               math.quat_rotate(a, math.quat_rotate(b, v)), atol=1e-12)


def test_cross_and_dot_match_numpy(rng):
    a, b = rng.normal(size=(2, 30, 7, 3))
    np.testing.assert_allclose(math.cross(a, b), np.cross(a, b), atol=1e-14)
    np.testing.assert_allclose(math.dot(a, b), np.einsum("...k,...k", a, b), atol=1e-14)


def test_quat_integrate_zero_rate_is_identity(rng):
    q = random_quats(rng, 10)
    np.testing.assert_allclose(math.quat_integrate(q, np.zeros((10, 3)), 0.01), q, atol=1e-15)


def test_quat_integrate_half_turn_matches_exponential():
    q = math.quat_identity(dtype=np.float64)
    omega = np.array([0.0, 0.0, np.pi])
    for _ in range(1000):
        q = math.quat_integrate(q, omega, 1e-3)
    exact = math.quat_exp(omega, 1.0)
    # angle between the two rotations
    rel = math.quat_mul(math.quat_inv(exact), q)
    _, angle = math.quat_to_axis_angle(rel)
    assert angle < 1e-3
    _, total = math.quat_to_axis_angle(q)
    assert abs(total - np.pi) < 1e-3


def test_quat_integrate_stays_unit(rng):
    q = random_quats(rng, 500)
    q2 = math.quat_integrate(q, rng.normal(scale=20.0, size=(500, 3)), 0.05)
    np.testing.assert_allclose(np.linalg.norm(q2, axis=1), 1.0, atol=1e-6)


def test_batched_ops_commute_with_scene_permutation(rng):
    q = random_quats(rng, 64).reshape(8, 8, 4)
    v = rng.normal(size=(8, 8, 3))
    perm = rng.permutation(8)
    np.testing.assert_array_equal(math.quat_rotate(q, v)[perm], math.quat_rotate(q[perm], v[perm]))
    np.testing.assert_array_equal(math.cross(q[..., 1:], v)[perm], math.cross(q[perm, :, 1:], v[perm]))


def test_kernels_accept_tracked_scalars(rng):
    q = random_quats(rng, 3)
    v = rng.normal(size=(3, 3))
    tape = diff.Tape()
    tv = np.vectorize(tape.variable, otypes=[object])(v)
    out = diff.value_of(math.quat_rotate(q, tv))
    np.testing.assert_allclose(out, math.quat_rotate(q, v), atol=1e-14)


@pytest.mark.parametrize("dtype", [np.float32, np.float64])
def test_dtype_is_preserved(dtype, rng):
    q = random_quats(rng, 4).astype(dtype)
    v = rng.normal(size=(4, 3)).astype(dtype)
    assert math.quat_rotate(q, v).dtype == dtype
    assert math.quat_integrate(q, v, 0.01).dtype == dtype
