"""A small numpy layer library with exact reverse-mode gradients and Adam.

Tensors are plain ``ndarray``; sequence layers take ``(batch, channels, time)``.
Every layer is a stateless description: ``forward(params, x)`` returns the
output and a cache, ``backward(params, cache, dy)`` returns the input gradient
and a dict of parameter gradients. A :class:`Network` owns the parameter
arrays for an ordered list of named layers.
"""
from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy.special import expit

from .errors import ShapeMismatch

NORM_EPS = 1e-5


def _glorot(rng, shape, fan_in, fan_out):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


def _same_padding(length: int, kernel: int, stride: int):
    out = -(-length // stride)
    total = max((out - 1) * stride + kernel - length, 0)
    return out, total // 2, total - total // 2


@lru_cache(maxsize=256)
def _window_index(t_out: int, kernel: int, stride: int):
    return np.arange(t_out)[:, None] * stride + np.arange(kernel)


# ---------------------------------------------------------------------------
# primitive ops
# ---------------------------------------------------------------------------

def conv1d_forward(x, weight, bias, stride=1):
    """'same'-padded strided 1-D convolution (cross-correlation)."""
    b, cin, t = x.shape
    cout, cin_w, k = weight.shape
    if cin != cin_w:
        raise ShapeMismatch(f"conv expects {cin_w} input channels, got {cin}")
    t_out, left, right = _same_padding(t, k, stride)
    xp = np.zeros((b, cin, t + left + right), dtype=np.result_type(x, weight))
    xp[:, :, left:left + t] = x
    cols = xp[:, :, _window_index(t_out, k, stride)]          # (b, cin, t_out, k)
    cols = cols.transpose(0, 2, 1, 3).reshape(b * t_out, cin * k)
    y = cols @ weight.reshape(cout, cin * k).T + bias
    y = y.reshape(b, t_out, cout).transpose(0, 2, 1)
    return np.ascontiguousarray(y), (cols, x.shape, left, stride)


def conv1d_backward(weight, cache, dy):
    cols, (b, cin, t), left, stride = cache
    cout, _, k = weight.shape
    t_out = dy.shape[2]
    dy2 = dy.transpose(0, 2, 1).reshape(b * t_out, cout)
    dw = (dy2.T @ cols).reshape(weight.shape)
    db = dy2.sum(axis=0)
    dcols = (dy2 @ weight.reshape(cout, cin * k)).reshape(b, t_out, cin, k)
    padded = (t_out - 1) * stride + k
    dxp = np.zeros((b, cin, max(padded, left + t)))
    for j in range(k):
        dxp[:, :, j:j + stride * (t_out - 1) + 1:stride] += dcols[:, :, :, j].transpose(0, 2, 1)
    return dxp[:, :, left:left + t], dw, db


def instance_norm_forward(x, gamma, beta):
    mu = x.mean(axis=2, keepdims=True)
    xc = x - mu
    inv = 1.0 / np.sqrt((xc * xc).mean(axis=2, keepdims=True) + NORM_EPS)
    xhat = xc * inv
    return gamma[:, None] * xhat + beta[:, None], (xhat, inv)


def instance_norm_backward(gamma, cache, dy):
    xhat, inv = cache
    dgamma = (dy * xhat).sum(axis=(0, 2))
    dbeta = dy.sum(axis=(0, 2))
    dxhat = dy * gamma[:, None]
    t = dy.shape[2]
    dx = inv / t * (t * dxhat - dxhat.sum(axis=2, keepdims=True)
                    - xhat * (dxhat * xhat).sum(axis=2, keepdims=True))
    return dx, dgamma, dbeta


def glu_forward(x):
    """Split channels in half: linear path times sigmoid of the gate path."""
    c = x.shape[1] // 2
    a, g = x[:, :c], x[:, c:]
    s = expit(g)
    return a * s, (a, s)


def glu_backward(cache, dy):
    a, s = cache
    return np.concatenate([dy * s, dy * a * s * (1.0 - s)], axis=1)


# ---------------------------------------------------------------------------
# layers
# ---------------------------------------------------------------------------

class Layer:
    kind = "layer"

    def param_shapes(self):
        return {}

    def init_params(self, rng):
        return {name: np.zeros(shape) for name, shape in self.param_shapes().items()}

    def forward(self, params, x):
        raise NotImplementedError

    def backward(self, params, cache, dy):
        raise NotImplementedError

    def describe(self):
        return {"kind": self.kind}


class Conv1d(Layer):
    kind = "conv1d"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1):
        self.in_channels, self.out_channels = in_channels, out_channels
        self.kernel_size, self.stride = kernel_size, stride

    def param_shapes(self):
        return {"weight": (self.out_channels, self.in_channels, self.kernel_size),
                "bias": (self.out_channels,)}

    def init_params(self, rng):
        k = self.kernel_size
        return {"weight": _glorot(rng, self.param_shapes()["weight"],
                                  self.in_channels * k, self.out_channels * k),
                "bias": np.zeros(self.out_channels)}

    def forward(self, params, x):
        return conv1d_forward(x, params["weight"], params["bias"], self.stride)

    def backward(self, params, cache, dy):
        dx, dw, db = conv1d_backward(params["weight"], cache, dy)
        return dx, {"weight": dw, "bias": db}

    def describe(self):
        return {"kind": self.kind, "in": self.in_channels, "out": self.out_channels,
                "kernel": self.kernel_size, "stride": self.stride}


class InstanceNorm1d(Layer):
    kind = "instance-norm"

    def __init__(self, channels):
        self.channels = channels

    def param_shapes(self):
        return {"weight": (self.channels,), "bias": (self.channels,)}

    def init_params(self, rng):
        return {"weight": np.ones(self.channels), "bias": np.zeros(self.channels)}

    def forward(self, params, x):
        if x.shape[1] != self.channels:
            raise ShapeMismatch(f"instance norm expects {self.channels} channels, got {x.shape[1]}")
        return instance_norm_forward(x, params["weight"], params["bias"])

    def backward(self, params, cache, dy):
        dx, dg, db = instance_norm_backward(params["weight"], cache, dy)
        return dx, {"weight": dg, "bias": db}

    def describe(self):
        return {"kind": self.kind, "channels": self.channels}


class GatedConv1d(Layer):
    """Convolution to twice the width, optional instance norm, then GLU."""

    kind = "conv1d-glu"

    def __init__(self, in_channels, out_channels, kernel_size, stride=1, norm=False):
        self.conv = Conv1d(in_channels, 2 * out_channels, kernel_size, stride)
        self.norm = InstanceNorm1d(2 * out_channels) if norm else None
        self.in_channels, self.out_channels = in_channels, out_channels

    def param_shapes(self):
        shapes = dict(self.conv.param_shapes())
        if self.norm:
            shapes.update({"norm_" + k: v for k, v in self.norm.param_shapes().items()})
        return shapes

    def init_params(self, rng):
        params = self.conv.init_params(rng)
        if self.norm:
            params.update({"norm_" + k: v for k, v in self.norm.init_params(rng).items()})
        return params

    def _norm_params(self, params):
        return {"weight": params["norm_weight"], "bias": params["norm_bias"]}

    def forward(self, params, x):
        h, c_conv = self.conv.forward(params, x)
        c_norm = None
        if self.norm:
            h, c_norm = self.norm.forward(self._norm_params(params), h)
        y, c_glu = glu_forward(h)
        return y, (c_conv, c_norm, c_glu)

    def backward(self, params, cache, dy):
        c_conv, c_norm, c_glu = cache
        dh = glu_backward(c_glu, dy)
        grads = {}
        if self.norm:
            dh, g = self.norm.backward(self._norm_params(params), c_norm, dh)
            grads.update({"norm_" + k: v for k, v in g.items()})
        dx, g = self.conv.backward(params, c_conv, dh)
        grads.update(g)
        return dx, grads

    def describe(self):
        d = self.conv.describe()
        d.update(kind=self.kind, out=self.out_channels, norm=bool(self.norm))
        return d


class PixelShuffle1d(Layer):
    """(B, C*r, T) -> (B, C, T*r)."""

    kind = "pixel-shuffle"

    def __init__(self, factor=2):
        self.factor = factor

    def forward(self, params, x):
        b, c, t = x.shape
        r = self.factor
        if c % r:
            raise ShapeMismatch(f"{c} channels not divisible by shuffle factor {r}")
        y = x.reshape(b, c // r, r, t).transpose(0, 1, 3, 2).reshape(b, c // r, t * r)
        return y, x.shape

    def backward(self, params, cache, dy):
        b, c, t = cache
        r = self.factor
        return dy.reshape(b, c // r, t, r).transpose(0, 1, 3, 2).reshape(b, c, t), {}

    def describe(self):
        return {"kind": self.kind, "factor": self.factor}


class Linear(Layer):
    kind = "linear"

    def __init__(self, in_features, out_features):
        self.in_features, self.out_features = in_features, out_features

    def param_shapes(self):
        return {"weight": (self.out_features, self.in_features), "bias": (self.out_features,)}

    def init_params(self, rng):
        return {"weight": _glorot(rng, (self.out_features, self.in_features),
                                  self.in_features, self.out_features),
                "bias": np.zeros(self.out_features)}

    def forward(self, params, x):
        if x.shape[-1] != self.in_features:
            raise ShapeMismatch(f"linear expects {self.in_features} features, got {x.shape[-1]}")
        return x @ params["weight"].T + params["bias"], x

    def backward(self, params, cache, dy):
        x = cache
        dy2 = dy.reshape(-1, self.out_features)
        x2 = x.reshape(-1, self.in_features)
        return dy @ params["weight"], {"weight": dy2.T @ x2, "bias": dy2.sum(axis=0)}

    def describe(self):
        return {"kind": self.kind, "in": self.in_features, "out": self.out_features}


class GLU(Layer):
    kind = "glu"

    def forward(self, params, x):
        if x.shape[1] % 2:
            raise ShapeMismatch("GLU needs an even channel count")
        return glu_forward(x)

    def backward(self, params, cache, dy):
        return glu_backward(cache, dy), {}


class Tanh(Layer):
    kind = "tanh"

    def forward(self, params, x):
        y = np.tanh(x)
        return y, y

    def backward(self, params, cache, dy):
        return dy * (1.0 - cache * cache), {}


class Sequential(Layer):
    kind = "sequential"

    def __init__(self, layers):
        self.layers = list(layers)  # [(name, layer)]

    def _sub(self, params, name):
        prefix = name + "."
        return {k[len(prefix):]: v for k, v in params.items() if k.startswith(prefix)}

    def param_shapes(self):
        return {f"{n}.{k}": s for n, layer in self.layers for k, s in layer.param_shapes().items()}

    def init_params(self, rng):
        out = {}
        for n, layer in self.layers:
            out.update({f"{n}.{k}": v for k, v in layer.init_params(rng).items()})
        return out

    def forward(self, params, x):
        caches = []
        for n, layer in self.layers:
            x, c = layer.forward(self._sub(params, n), x)
            caches.append(c)
        return x, caches

    def backward(self, params, cache, dy):
        grads = {}
        for (n, layer), c in zip(reversed(self.layers), reversed(cache)):
            dy, g = layer.backward(self._sub(params, n), c, dy)
            grads.update({f"{n}.{k}": v for k, v in g.items()})
        return dy, grads

    def describe(self):
        return {"kind": self.kind, "layers": [[n, layer.describe()] for n, layer in self.layers]}


class Residual(Sequential):
    """x + body(x)."""

    kind = "residual"

    def forward(self, params, x):
        y, cache = super().forward(params, x)
        if y.shape != x.shape:
            raise ShapeMismatch(f"residual body maps {x.shape} to {y.shape}")
        return x + y, cache

    def backward(self, params, cache, dy):
        dx, grads = super().backward(params, cache, dy)
        return dx + dy, grads


# ---------------------------------------------------------------------------
# network container
# ---------------------------------------------------------------------------

class Network:
    """Ordered named layers plus their parameters (the model's weights)."""

    def __init__(self, layers, params=None, seed=0):
        self.body = Sequential(layers)
        shapes = self.body.param_shapes()
        if params is None:
            params = self.body.init_params(np.random.default_rng(seed))
        self.params = OrderedDict((k, np.asarray(params[k])) for k in shapes)
        for k, shape in shapes.items():
            if self.params[k].shape != tuple(shape):
                raise ShapeMismatch(f"{k}: expected {tuple(shape)}, got {self.params[k].shape}")

    @property
    def layers(self):
        return self.body.layers

    def forward(self, x):
        return self.body.forward(self.params, np.asarray(x))

    def backward(self, cache, dy):
        dx, grads = self.body.backward(self.params, cache, dy)
        return dx, OrderedDict((k, grads[k]) for k in self.params)

    def __call__(self, x):
        return self.forward(x)[0]

    def n_params(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def copy(self, dtype=None) -> "Network":
        params = {k: (v.astype(dtype) if dtype else v.copy()) for k, v in self.params.items()}
        return Network(self.body.layers, params)

    def describe(self):
        return self.body.describe()["layers"]


def forward(net: Network, x):
    return net.forward(x)


def backward(net: Network, cache, upstream):
    return net.backward(cache, upstream)


def add_grads(a, b):
    """Sum two gradient dicts key by key (either may be None)."""
    if a is None:
        return b
    if b is None:
        return a
    return OrderedDict((k, a[k] + b[k]) for k in a)


# ---------------------------------------------------------------------------
# Adam
# ---------------------------------------------------------------------------

@dataclass
class AdamState:
    m: dict
    v: dict
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params, **kw):
        return cls({k: np.zeros_like(p) for k, p in params.items()},
                   {k: np.zeros_like(p) for k, p in params.items()}, **kw)


def adam_step(params, grads, state: AdamState, lr: float):
    """Bias-corrected Adam update, applied in place; returns ``(params, state)``."""
    if set(grads) != set(params):
        raise ShapeMismatch("gradient keys do not match parameters")
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for k, p in params.items():
        g = grads[k]
        if g.shape != p.shape:
            raise ShapeMismatch(f"{k}: gradient {g.shape} vs parameter {p.shape}")
        m, v = state.m[k], state.v[k]
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return params, state
