"""Numeric kernel tests: forward/backward exactness, Adam, checkpoints."""

import numpy as np
import pytest

from slicetl import nn
from slicetl.errors import (
    ContractViolationError,
    DimensionError,
    DomainError,
    NumericError,
)


def finite_difference_check(params, x, rng, h=1e-6):
    """Max relative error between analytic and central-difference gradients
    of the scalar loss L = sum(c * f(x)) over every weight and bias."""

    y, cache = nn.mlp_forward(params, x)
    c = rng.standard_normal(y.shape)
    grads, _ = nn.mlp_backward(params, cache, c)

    def loss():
        out, _ = nn.mlp_forward(params, x)
        return float(np.sum(c * out))

    worst = 0.0
    for i in range(params.n_layers):
        for arr, g in ((params.weights[i], grads[i][0]),
                       (params.biases[i], grads[i][1])):
            flat = arr.ravel()
            gflat = g.ravel()
            for j in range(flat.size):
                orig = flat[j]
                flat[j] = orig + h
                up = loss()
                flat[j] = orig - h
                down = loss()
                flat[j] = orig
                fd = (up - down) / (2 * h)
                denom = max(abs(fd), abs(gflat[j]), 1e-8)
                worst = max(worst, abs(fd - gflat[j]) / denom)
    return worst


@pytest.mark.parametrize("sizes,head", [
    ([5, 8, 6, 3], "softmax"),
    ([7, 8, 6, 1], "identity"),
    ([4, 6, 5, 8], "identity"),
    ([3, 5, 6, 4], "tanh"),
])
def test_gradients_match_finite_differences(sizes, head):
    rng = np.random.default_rng(0)
    params = nn.init_mlp(sizes, head, rng)
    x = rng.standard_normal((3, sizes[0]))
    assert finite_difference_check(params, x, rng) < 1e-4


def test_input_gradient_matches_finite_differences():
    rng = np.random.default_rng(1)
    params = nn.init_mlp([4, 6, 2], "identity", rng)
    x = rng.standard_normal(4)
    y, cache = nn.mlp_forward(params, x)
    c = rng.standard_normal(y.shape)
    _, dx = nn.mlp_backward(params, cache, c)
    h = 1e-6
    for j in range(4):
        xp, xm = x.copy(), x.copy()
        xp[j] += h
        xm[j] -= h
        fd = (np.sum(c * nn.mlp_forward(params, xp)[0])
              - np.sum(c * nn.mlp_forward(params, xm)[0])) / (2 * h)
        assert dx[j] == pytest.approx(fd, rel=1e-5, abs=1e-8)


def test_softmax_rows_sum_to_one_and_is_stable():
    z = np.array([[1000.0, 1001.0], [-1000.0, -999.0]])
    p = nn.softmax(z)
    assert np.allclose(p.sum(axis=1), 1.0)
    assert np.all(np.isfinite(p))
    assert np.allclose(p[0], p[1])  # shift invariance


def test_forward_1d_matches_batched():
    rng = np.random.default_rng(2)
    params = nn.init_mlp([5, 7, 3], "softmax", rng)
    x = rng.standard_normal((4, 5))
    batched, _ = nn.mlp_forward(params, x)
    for i in range(4):
        single, _ = nn.mlp_forward(params, x[i])
        assert np.array_equal(single, batched[i])


def test_logits_are_the_pre_head_output():
    rng = np.random.default_rng(3)
    params = nn.init_mlp([5, 7, 3], "softmax", rng)
    x = rng.standard_normal(5)
    logits = nn.mlp_logits(params, x)
    out, _ = nn.mlp_forward(params, x)
    assert np.allclose(nn.softmax(logits), out)


def test_backward_rejects_stale_cache():
    rng = np.random.default_rng(4)
    a = nn.init_mlp([3, 4, 2], "identity", rng)
    b = nn.init_mlp([3, 4, 2], "identity", rng)
    _, cache = nn.mlp_forward(a, rng.standard_normal(3))
    with pytest.raises(ContractViolationError):
        nn.mlp_backward(b, cache, np.zeros(2))


def test_forward_rejects_wrong_input_dim():
    rng = np.random.default_rng(5)
    params = nn.init_mlp([3, 4, 2], "identity", rng)
    with pytest.raises(DimensionError):
        nn.mlp_forward(params, np.zeros(7))


def test_mlp_rejects_unknown_head_and_bad_chain():
    rng = np.random.default_rng(6)
    with pytest.raises(DomainError):
        nn.Mlp([np.zeros((2, 3))], [np.zeros(3)], head="relu6")
    w = [rng.standard_normal((2, 3)), rng.standard_normal((4, 1))]
    b = [np.zeros(3), np.zeros(1)]
    with pytest.raises(DimensionError):
        nn.Mlp(w, b)


def test_glorot_init_bounds():
    rng = np.random.default_rng(7)
    params = nn.init_mlp([10, 20, 5], "identity", rng)
    for w in params.weights:
        bound = np.sqrt(6.0 / (w.shape[0] + w.shape[1]))
        assert np.all(np.abs(w) <= bound)
    for b in params.biases:
        assert np.all(b == 0.0)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------


def test_adam_minimizes_quadratic():
    rng = np.random.default_rng(8)
    params = nn.init_mlp([2, 2], "identity", rng)
    adam = nn.AdamState.for_params(params)
    target = np.array([[1.0, -2.0], [0.5, 3.0]])
    for _ in range(3000):
        grads = [(params.weights[0] - target, params.biases[0] * 0.0)]
        nn.adam_step(adam, params, grads, lr=0.01)
    assert np.allclose(params.weights[0], target, atol=1e-3)


def test_adam_first_step_matches_hand_calculation():
    # With bias correction, the very first Adam step is -lr * sign(g).
    params = nn.Mlp([np.zeros((1, 1))], [np.zeros(1)], "identity")
    adam = nn.AdamState.for_params(params)
    nn.adam_step(adam, params, [(np.array([[4.0]]), np.array([-2.0]))], lr=0.1)
    assert params.weights[0][0, 0] == pytest.approx(-0.1, rel=1e-6)
    assert params.biases[0][0] == pytest.approx(0.1, rel=1e-6)


def test_adam_skip_layers_freezes_parameters():
    rng = np.random.default_rng(9)
    params = nn.init_mlp([3, 4, 2], "identity", rng)
    adam = nn.AdamState.for_params(params)
    before = [w.copy() for w in params.weights]
    grads = [(np.ones_like(w), np.ones_like(b))
             for w, b in zip(params.weights, params.biases)]
    nn.adam_step(adam, params, grads, lr=0.1, skip_layers=frozenset({0}))
    assert np.array_equal(params.weights[0], before[0])
    assert not np.array_equal(params.weights[1], before[1])


def test_adam_rejects_non_finite_gradient():
    params = nn.Mlp([np.zeros((1, 1))], [np.zeros(1)], "identity")
    adam = nn.AdamState.for_params(params)
    with pytest.raises(NumericError):
        nn.adam_step(adam, params, [(np.array([[np.nan]]), np.zeros(1))], lr=0.1)


def test_adam_reset_zeroes_accumulators():
    params = nn.Mlp([np.zeros((1, 1))], [np.zeros(1)], "identity")
    adam = nn.AdamState.for_params(params)
    nn.adam_step(adam, params, [(np.ones((1, 1)), np.ones(1))], lr=0.1)
    adam.reset()
    assert adam.t == 0
    assert np.all(adam.m_w[0] == 0.0) and np.all(adam.v_w[0] == 0.0)


# ---------------------------------------------------------------------------
# Sampling and checkpoints
# ---------------------------------------------------------------------------


def test_gaussian_sample_statistics():
    rng = np.random.default_rng(10)
    n = 200_000
    z = nn.gaussian_sample(np.full(n, 2.0), np.full(n, 3.0), rng)
    # 3-sigma bands for the sample mean and std of n draws.
    assert abs(z.mean() - 2.0) < 3 * 3.0 / np.sqrt(n)
    assert abs(z.std() - 3.0) < 3 * 3.0 / np.sqrt(2 * n)


def test_gaussian_sample_rejects_negative_sigma():
    with pytest.raises(DomainError):
        nn.gaussian_sample(np.zeros(2), np.array([1.0, -1.0]),
                           np.random.default_rng(0))


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    rng = np.random.default_rng(11)
    net = nn.init_mlp([4, 6, 3], "softmax", rng)
    adam = nn.AdamState.for_params(net)
    nn.adam_step(adam, net, [(rng.standard_normal(w.shape),
                              rng.standard_normal(b.shape))
                             for w, b in zip(net.weights, net.biases)], lr=0.01)
    path = tmp_path / "ckpt.npz"
    nn.save_checkpoint(path, {"net": net}, {"net": adam}, {"tag": 42})
    nets, adams, meta = nn.load_checkpoint(path)
    assert meta == {"tag": 42}
    assert nets["net"].head == "softmax"
    for w1, w2 in zip(net.weights, nets["net"].weights):
        assert np.array_equal(w1, w2)
    for m1, m2 in zip(adam.m_w, adams["net"].m_w):
        assert np.array_equal(m1, m2)
    assert adams["net"].t == adam.t


def test_checkpoint_rejects_unknown_version(tmp_path):
    path = tmp_path / "bad.npz"
    np.savez(path, version=np.array(999), net_names=np.array([]),
             meta_json=np.array("{}"))
    with pytest.raises(ContractViolationError):
        nn.load_checkpoint(path)
