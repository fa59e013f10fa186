"""Central finite-difference checking shared by the nn tests and the acceptance gate."""
import numpy as np

H = 1e-4


def derivative(loss, set_value, origin, h=H, points=5):
    """Central difference of loss along one coordinate.

    The five-point stencil keeps truncation at O(h^4); three points leave an
    O(h^2) term that swamps gradient entries close to zero.
    """
    if points == 3:
        set_value(origin + h); up = loss()
        set_value(origin - h); down = loss()
        set_value(origin)
        return (up - down) / (2 * h)
    vals = []
    for step in (2, 1, -1, -2):
        set_value(origin + step * h)
        vals.append(loss())
    set_value(origin)
    return (-vals[0] + 8 * vals[1] - 8 * vals[2] + vals[3]) / (12 * h)


def rel_error(analytic, numeric, floor=1e-6):
    return abs(analytic - numeric) / max(abs(analytic), abs(numeric), floor)


def check_network(net, x, rng, n_probe=None):
    """Max relative error over parameters and inputs for loss = sum(w * net(x))."""
    y, cache = net.forward(x)
    w = rng.standard_normal(y.shape)
    dx, grads = net.backward(cache, w)

    def loss():
        return float(np.sum(w * net(x)))

    worst = 0.0
    for name, p in net.params.items():
        flat = range(p.size) if n_probe is None else rng.choice(p.size, min(n_probe, p.size), replace=False)
        for k in flat:
            idx = np.unravel_index(k, p.shape)
            numeric = derivative(loss, lambda v: p.__setitem__(idx, v), p[idx])
            worst = max(worst, rel_error(grads[name][idx], numeric))
    xs = x.reshape(-1)
    probe = range(xs.size) if n_probe is None else rng.choice(xs.size, min(n_probe, xs.size), replace=False)
    for k in probe:
        numeric = derivative(loss, lambda v: xs.__setitem__(k, v), xs[k])
        worst = max(worst, rel_error(dx.reshape(-1)[k], numeric))
    return worst


def layer_cases(seed):
    """One small network per layer kind plus a composed one, with inputs."""
    from sanitone import nn
    rng = np.random.default_rng(seed)
    b, t = 2, 12
    cases = {
        "conv1d": ([("c", nn.Conv1d(3, 4, 5))], (b, 3, t)),
        "conv1d-stride": ([("c", nn.Conv1d(3, 4, 3, stride=2))], (b, 3, t)),
        "conv1d-glu": ([("g", nn.GatedConv1d(3, 4, 3))], (b, 3, t)),
        "conv1d-glu-norm": ([("g", nn.GatedConv1d(3, 4, 3, stride=2, norm=True))], (b, 3, t)),
        "instance-norm": ([("n", nn.InstanceNorm1d(3))], (b, 3, t)),
        "glu": ([("g", nn.GLU())], (b, 4, t)),
        "pixel-shuffle": ([("p", nn.PixelShuffle1d(2))], (b, 4, t)),
        "linear": ([("l", nn.Linear(6, 5))], (7, 6)),
        "tanh": ([("a", nn.Tanh())], (7, 6)),
        "composed": ([
            ("in", nn.GatedConv1d(2, 3, 3)),
            ("down", nn.GatedConv1d(3, 4, 3, stride=2, norm=True)),
            ("res", nn.Residual([("g", nn.GatedConv1d(4, 4, 3, norm=True)),
                                 ("c", nn.Conv1d(4, 4, 3)), ("n", nn.InstanceNorm1d(4))])),
            ("up", nn.Sequential([("c", nn.Conv1d(4, 4, 3)), ("p", nn.PixelShuffle1d(2)),
                                  ("n", nn.InstanceNorm1d(2)), ("g", nn.GLU())])),
            ("out", nn.Conv1d(1, 2, 3)),
        ], (1, 2, 16)),
    }
    out = {}
    for name, (layers, shape) in cases.items():
        net = nn.Network(layers, seed=int(rng.integers(2 ** 31)))
        for p in net.params.values():   # perturb away from the init so norms/biases matter
            p += 0.1 * rng.standard_normal(p.shape)
        out[name] = (net, rng.standard_normal(shape))
    return out
