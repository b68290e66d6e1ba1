import numpy as np
import pytest

from qpsim import diff
from qpsim.nn import (
    MLP,
    RunningStats,
    adam_init,
    adam_step,
    load_checkpoint,
    merge_all,
    mlp_backward,
    mlp_forward,
    normalize,
    save_checkpoint,
    stats_update,
)


def test_zero_weights_return_output_bias():
    net = MLP((3, 5, 2))
    params = np.zeros(net.num_params)
    params[-2:] = (0.25, -1.5)
    y = mlp_forward(net, params, np.random.default_rng(0).normal(size=(4, 3)))
    np.testing.assert_array_equal(y, np.tile([0.25, -1.5], (4, 1)))


def test_linear_layer_weight_gradient_is_outer_product():
    net = MLP((3, 2))
    rng = np.random.default_rng(1)
    params = net.init(rng)
    x = rng.normal(size=(1, 3))
    dy = rng.normal(size=(1, 2))
    dp, dx = mlp_backward(net, params, x, dy)
    np.testing.assert_allclose(dp[:6].reshape(3, 2), x.T @ dy, rtol=1e-14)
    np.testing.assert_allclose(dp[6:], dy[0], rtol=1e-14)
    w, _ = net.layers(params)[0]
    np.testing.assert_allclose(dx, dy @ w.T, rtol=1e-14)


@pytest.mark.parametrize("activation", ["tanh", "swish"])
def test_backprop_matches_finite_differences(activation):
    net = MLP((4, 8, 8, 3), activation)
    rng = np.random.default_rng(2)
    params = net.init(rng)
    x = rng.normal(size=(5, 4))
    dy = rng.normal(size=(5, 3))

    def loss(p):
        return float(np.sum(dy * mlp_forward(net, p, x)))

    dp, _ = mlp_backward(net, params, x, dy)
    h = 1e-6
    for i in rng.choice(net.num_params, size=40, replace=False):
        e = np.zeros(net.num_params)
        e[i] = h
        fd = (loss(params + e) - loss(params - e)) / (2 * h)
        assert abs(dp[i] - fd) <= 1e-4 * max(1.0, abs(fd))


def test_forward_accepts_tracked_inputs():
    net = MLP((2, 4, 1), "swish")
    params = net.init(np.random.default_rng(3))
    x = np.array([0.3, -0.7])
    g = diff.grad(lambda v: mlp_forward(net, params, v)[0], x)
    _, dx = mlp_backward(net, params, x, np.ones(1))
    np.testing.assert_allclose(g, dx[0], rtol=1e-10)


def test_adam_zero_gradient_is_a_no_op():
    params = np.array([1.0, -2.0, 3.0])
    state = adam_init(params, 0.1)
    for _ in range(5):
        state, params = adam_step(state, params, np.zeros(3))
    np.testing.assert_array_equal(params, [1.0, -2.0, 3.0])


def test_adam_minimizes_quadratic():
    x = np.array([3.0, -4.0])
    state = adam_init(x, 0.1)
    for _ in range(200):
        state, x = adam_step(state, x, 2 * x)
        if np.sum(x * x) < 1e-3:
            break
    assert np.sum(x * x) < 1e-3


def test_adam_is_deterministic():
    def run():
        x = np.array([1.0, 2.0])
        s = adam_init(x, 0.05)
        for k in range(20):
            s, x = adam_step(s, x, np.sin(x * (k + 1)))
        return x

    np.testing.assert_array_equal(run(), run())


def test_adam_rejects_mismatched_gradient():
    with pytest.raises(ValueError):
        adam_step(adam_init(np.zeros(3)), np.zeros(3), np.zeros(2))


def test_stats_of_two_points():
    s = stats_update(RunningStats.empty(1), np.array([[0.0], [2.0]]))
    assert s.mean[0] == 1.0 and s.var[0] == 1.0


def test_merge_equals_union():
    rng = np.random.default_rng(4)
    a = rng.normal(3.0, 2.0, size=(37, 4))
    b = rng.normal(-1.0, 0.5, size=(91, 4))
    merged = RunningStats.empty(4).update(a).merge(RunningStats.empty(4).update(b))
    both = np.concatenate([a, b])
    np.testing.assert_allclose(merged.mean, both.mean(axis=0), atol=1e-10)
    np.testing.assert_allclose(merged.var, both.var(axis=0), atol=1e-10)
    assert merged.count == 128


def test_merge_is_associative():
    rng = np.random.default_rng(5)
    parts = [RunningStats.empty(3).update(rng.normal(k, 1.0 + k, size=(10 + 7 * k, 3))) for k in range(3)]
    left = parts[0].merge(parts[1]).merge(parts[2])
    right = parts[0].merge(parts[1].merge(parts[2]))
    np.testing.assert_allclose(left.mean, right.mean, atol=1e-9)
    np.testing.assert_allclose(left.var, right.var, atol=1e-9)


def test_merge_all_matches_union():
    rng = np.random.default_rng(6)
    chunks = [rng.normal(size=(5, 2)) for _ in range(7)]
    tree = merge_all([RunningStats.empty(2).update(c) for c in chunks])
    np.testing.assert_allclose(tree.var, np.concatenate(chunks).var(axis=0), atol=1e-10)


def test_empty_stats_normalize_is_identity():
    x = np.array([[10.0, -3.0]])
    assert normalize(RunningStats.empty(2), x) is x
    np.testing.assert_array_equal(RunningStats.empty(2).var, [1.0, 1.0])


def test_normalized_values_are_clipped():
    s = RunningStats.empty(2).update(np.random.default_rng(7).normal(size=(100, 2)))
    y = normalize(s, np.array([[1e6, -1e6], [0.0, 0.0]]))
    assert np.all(np.abs(y) <= 5.0)
    np.testing.assert_array_equal(y[0], [5.0, -5.0])


def test_checkpoint_round_trip(tmp_path):
    rng = np.random.default_rng(8)
    arrays = {"policy": rng.normal(size=17), "mean": rng.normal(size=3), "empty": np.zeros(0)}
    path = tmp_path / "x.ckpt"
    save_checkpoint(path, [3, 8, 2], arrays, {"algo": "ppo"})
    dims, loaded, meta = load_checkpoint(path)
    assert dims == [3, 8, 2]
    assert meta["algo"] == "ppo"
    assert list(loaded) == list(arrays)
    for k in arrays:
        np.testing.assert_array_equal(loaded[k], arrays[k])


def test_checkpoint_rejects_foreign_file(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"NOTACKPT" + bytes(16))
    with pytest.raises(ValueError, match="not a checkpoint"):
        load_checkpoint(path)
