import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from sanitone import nn
from sanitone.errors import ShapeMismatch

from gradcheck import check_network, derivative, layer_cases


def naive_conv(x, w, b, stride):
    """Direct nested-loop 'same' convolution."""
    batch, cin, t = x.shape
    cout, _, k = w.shape
    t_out = -(-t // stride)
    total = max((t_out - 1) * stride + k - t, 0)
    left = total // 2
    y = np.zeros((batch, cout, t_out))
    for n in range(batch):
        for o in range(cout):
            for j in range(t_out):
                acc = b[o]
                for c in range(cin):
                    for q in range(k):
                        src = j * stride + q - left
                        if 0 <= src < t:
                            acc += w[o, c, q] * x[n, c, src]
                y[n, o, j] = acc
    return y


def test_zero_weights_zero_output(rng):
    net = nn.Network([("g", nn.GatedConv1d(3, 4, 3)), ("out", nn.Conv1d(4, 2, 3))])
    for p in net.params.values():
        p[:] = 0.0
    assert np.all(net(rng.standard_normal((1, 3, 10))) == 0.0)


def test_identity_kernel(rng):
    net = nn.Network([("c", nn.Conv1d(5, 5, 1))])
    net.params["c.weight"][:] = np.eye(5)[:, :, None]
    net.params["c.bias"][:] = 0.0
    x = rng.standard_normal((2, 5, 9))
    assert np.array_equal(net(x), x)


@pytest.mark.parametrize("stride,k,t", [(1, 3, 10), (2, 5, 11), (2, 3, 8), (1, 7, 5)])
def test_conv_matches_nested_loops(rng, stride, k, t):
    net = nn.Network([("c", nn.Conv1d(3, 4, k, stride))], seed=3)
    net.params["c.bias"][:] = rng.standard_normal(4)
    x = rng.standard_normal((2, 3, t))
    oracle = naive_conv(x, net.params["c.weight"], net.params["c.bias"], stride)
    assert np.max(np.abs(net(x) - oracle)) <= 1e-10


def test_small_network_matches_reference(rng):
    net = nn.Network([("g", nn.GatedConv1d(2, 3, 3)), ("c", nn.Conv1d(3, 2, 5, 2))], seed=5)
    assert net.n_params() <= 1000
    x = rng.standard_normal((1, 2, 13))
    p = net.params
    h = naive_conv(x, p["g.weight"], p["g.bias"], 1)
    h = h[:, :3] / (1 + np.exp(-h[:, 3:]))
    oracle = naive_conv(h, p["c.weight"], p["c.bias"], 2)
    assert np.max(np.abs(net(x) - oracle)) <= 1e-10


def test_sum_loss_identity_gradient(rng):
    net = nn.Network([("c", nn.Conv1d(3, 3, 1))])
    net.params["c.weight"][:] = np.eye(3)[:, :, None]
    x = rng.standard_normal((1, 3, 6))
    y, cache = net.forward(x)
    dx, _ = net.backward(cache, np.ones_like(y))
    assert np.array_equal(dx, np.ones_like(x))


def test_zero_upstream_gives_zero_gradients():
    for name, (net, x) in layer_cases(0).items():
        y, cache = net.forward(x)
        dx, grads = net.backward(cache, np.zeros_like(y))
        assert not np.any(dx), name
        assert all(not np.any(g) for g in grads.values()), name


@pytest.mark.parametrize("kind", list(layer_cases(0)))
def test_gradients_match_finite_differences(kind):
    net, x = layer_cases(7)[kind]
    assert check_network(net, x, np.random.default_rng(0)) <= 1e-4


def test_three_point_error_is_second_order():
    net, x = layer_cases(1)["composed"]
    rng = np.random.default_rng(2)
    y, cache = net.forward(x)
    w = rng.standard_normal(y.shape)
    _, grads = net.backward(cache, w)
    p = net.params["in.weight"]

    def loss():
        return float(np.sum(w * net(x)))

    errs = [abs(derivative(loss, lambda v: p.__setitem__((0, 0, 0), v), p[0, 0, 0], h, points=3)
                - grads["in.weight"][0, 0, 0]) for h in (1e-2, 1e-3)]
    assert 50 < errs[0] / errs[1] < 200


def test_forward_is_pure(rng):
    net, x = layer_cases(3)["composed"]
    assert np.array_equal(net(x), net(x))


def test_shape_errors(rng):
    with pytest.raises(ShapeMismatch):
        nn.Network([("c", nn.Conv1d(3, 4, 3))])(rng.standard_normal((1, 2, 5)))
    with pytest.raises(ShapeMismatch):
        nn.Network([("l", nn.Linear(3, 4))])(rng.standard_normal((2, 5)))
    with pytest.raises(ShapeMismatch):
        nn.Network([("p", nn.PixelShuffle1d(2))])(rng.standard_normal((1, 3, 5)))
    with pytest.raises(ShapeMismatch):
        nn.Network([("c", nn.Conv1d(3, 4, 3))], params={"c.weight": np.zeros((4, 3, 5)),
                                                          "c.bias": np.zeros(4)})
    params = {"w": np.zeros(3)}
    with pytest.raises(ShapeMismatch):
        nn.adam_step(params, {"w": np.zeros(4)}, nn.AdamState.zeros_like(params), 0.1)


def test_adam_zero_gradient():
    params = {"w": np.array([1.0, -2.0])}
    state = nn.AdamState.zeros_like(params)
    nn.adam_step(params, {"w": np.zeros(2)}, state, 0.1)
    assert np.array_equal(params["w"], [1.0, -2.0]) and state.step == 1


def test_adam_quadratic_against_recurrence():
    params = {"w": np.array([1.0])}
    state = nn.AdamState.zeros_like(params)
    w, m, v = 1.0, 0.0, 0.0
    hit = None
    for t in range(1, 201):
        g = 2 * params["w"][0]
        nn.adam_step(params, {"w": np.array([g])}, state, 0.1)
        # scalar reference recurrence
        gw = 2 * w
        m = 0.9 * m + 0.1 * gw
        v = 0.999 * v + 0.001 * gw * gw
        w -= 0.1 * (m / (1 - 0.9 ** t)) / (np.sqrt(v / (1 - 0.999 ** t)) + 1e-8)
        assert params["w"][0] == pytest.approx(w, rel=1e-12, abs=1e-15)
        if hit is None and abs(w) < 0.05:
            hit = t
    assert hit is not None and hit <= 200


def test_adam_deterministic(rng):
    g = {"a": rng.standard_normal((3, 2)), "b": rng.standard_normal(4)}
    p1 = {"a": np.ones((3, 2)), "b": np.zeros(4)}
    p2 = {k: v.copy() for k, v in p1.items()}
    s1, s2 = nn.AdamState.zeros_like(p1), nn.AdamState.zeros_like(p2)
    for _ in range(5):
        nn.adam_step(p1, g, s1, 0.01)
        nn.adam_step(p2, g, s2, 0.01)
    assert all(np.array_equal(p1[k], p2[k]) for k in p1)


def test_float32_inference_close(rng):
    net, x = layer_cases(4)["composed"]
    lo = net.copy(np.float32)
    y64 = net(x)
    y32 = lo(x.astype(np.float32))
    assert y32.dtype == np.float32
    assert np.max(np.abs(y32 - y64)) <= 1e-4 * np.max(np.abs(y64))


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2 ** 31), st.floats(1e-3, 1e3))
def test_no_non_finite_outputs(seed, scale):
    net, x = layer_cases(seed % 50)["composed"]
    y, cache = net.forward(x * scale)
    dx, grads = net.backward(cache, np.ones_like(y))
    assert np.all(np.isfinite(y)) and np.all(np.isfinite(dx))
    assert all(np.all(np.isfinite(g)) for g in grads.values())
