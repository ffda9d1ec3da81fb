"""Layers with hand-written reverse-mode gradients.

Activations are channels-last, ``(batch, length, channels)``.  Every layer
exposes::

    init(rng, params, state, dtype)
    forward(params, state, x, train, update_stats) -> (y, cache)
    backward(params, cache, dy, grads) -> dx

``backward`` accumulates parameter gradients into ``grads`` (a dict keyed by
parameter name) and returns the gradient with respect to the layer input.
"""
from __future__ import annotations

import math

import numpy as np

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _accumulate(grads, name, value):
    if name in grads:
        grads[name] += value
    else:
        grads[name] = value


def _out_len(length, k, stride, pad):
    return (length + 2 * pad - k) // stride + 1


def _he_uniform(rng, shape, fan_in, dtype):
    bound = math.sqrt(6.0 / fan_in)
    return rng.uniform(-bound, bound, size=shape).astype(dtype)


class Conv1d:
    """Dense 1-D convolution without bias (a batch norm always follows)."""

    def __init__(self, name, cin, cout, k, stride=1, input_grad=True):
        self.name, self.cin, self.cout, self.k, self.stride = name, cin, cout, k, stride
        self.pad = k // 2
        self.w = f"{name}.w"
        # the network input needs no gradient, which spares the col2im scatter
        self.input_grad = input_grad

    def out_len(self, length):
        return _out_len(length, self.k, self.stride, self.pad)

    def init(self, rng, params, state, dtype):
        params[self.w] = _he_uniform(rng, (self.k, self.cin, self.cout), self.k * self.cin, dtype)

    def forward(self, params, state, x, train, update_stats=True):
        B, L, _ = x.shape
        Lo = self.out_len(L)
        s, k = self.stride, self.k
        xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0))) if self.pad else x
        span = s * (Lo - 1) + 1
        cols = np.stack([xp[:, j:j + span:s, :] for j in range(k)], axis=2).reshape(B * Lo, k * self.cin)
        w2 = params[self.w].reshape(k * self.cin, self.cout)
        y = (cols @ w2).reshape(B, Lo, self.cout)
        return y, (cols, xp.shape, L, Lo)

    def backward(self, params, cache, dy, grads):
        cols, xp_shape, L, Lo = cache
        B = dy.shape[0]
        s, k = self.stride, self.k
        dy2 = dy.reshape(B * Lo, self.cout)
        _accumulate(grads, self.w, (cols.T @ dy2).reshape(k, self.cin, self.cout))
        if not self.input_grad:
            return None
        dcols = (dy2 @ params[self.w].reshape(k * self.cin, self.cout).T).reshape(B, Lo, k, self.cin)
        dxp = np.zeros(xp_shape, dtype=dy.dtype)
        span = s * (Lo - 1) + 1
        for j in range(k):
            dxp[:, j:j + span:s, :] += dcols[:, :, j, :]
        return dxp[:, self.pad:self.pad + L, :]


class Pointwise:
    """1-tap channel mixing, optionally strided (used on residual skip paths)."""

    def __init__(self, name, cin, cout, stride=1):
        self.name, self.cin, self.cout, self.stride = name, cin, cout, stride
        self.w = f"{name}.w"

    def out_len(self, length):
        return _out_len(length, 1, self.stride, 0)

    def init(self, rng, params, state, dtype):
        params[self.w] = _he_uniform(rng, (self.cin, self.cout), self.cin, dtype)

    def forward(self, params, state, x, train, update_stats=True):
        xs = x[:, ::self.stride, :] if self.stride > 1 else x
        B, Lo, _ = xs.shape
        y = (xs.reshape(B * Lo, self.cin) @ params[self.w]).reshape(B, Lo, self.cout)
        return y, (xs, x.shape if self.stride > 1 else None)

    def backward(self, params, cache, dy, grads):
        xs, full_shape = cache
        B, Lo, _ = dy.shape
        _accumulate(grads, self.w, xs.reshape(-1, self.cin).T @ dy.reshape(-1, self.cout))
        dxs = (dy.reshape(B * Lo, self.cout) @ params[self.w].T).reshape(B, Lo, self.cin)
        if full_shape is None:
            return dxs
        dx = np.zeros(full_shape, dtype=dy.dtype)
        dx[:, ::self.stride, :] = dxs
        return dx


class Depthwise:
    """Per-channel convolution, ``k`` taps, 'same' padding."""

    def __init__(self, name, channels, k=3, stride=1):
        self.name, self.c, self.k, self.stride = name, channels, k, stride
        self.pad = k // 2
        self.w = f"{name}.w"

    def out_len(self, length):
        return _out_len(length, self.k, self.stride, self.pad)

    def init(self, rng, params, state, dtype):
        params[self.w] = _he_uniform(rng, (self.k, self.c), self.k, dtype)

    def forward(self, params, state, x, train, update_stats=True):
        L = x.shape[1]
        Lo = self.out_len(L)
        s = self.stride
        xp = np.pad(x, ((0, 0), (self.pad, self.pad), (0, 0)))
        w = params[self.w]
        span = s * (Lo - 1) + 1
        y = xp[:, 0:span:s, :] * w[0]
        for j in range(1, self.k):
            y += xp[:, j:j + span:s, :] * w[j]
        return y, (xp, L, Lo)

    def backward(self, params, cache, dy, grads):
        xp, L, Lo = cache
        s = self.stride
        w = params[self.w]
        span = s * (Lo - 1) + 1
        dw = np.empty_like(w)
        dxp = np.zeros_like(xp)
        for j in range(self.k):
            sl = xp[:, j:j + span:s, :]
            dw[j] = np.einsum("blc,blc->c", sl, dy)
            dxp[:, j:j + span:s, :] += dy * w[j]
        _accumulate(grads, self.w, dw)
        return dxp[:, self.pad:self.pad + L, :]


class BatchNorm:
    def __init__(self, name, channels):
        self.name, self.c = name, channels
        self.gamma, self.beta = f"{name}.gamma", f"{name}.beta"
        self.mean, self.var = f"{name}.running_mean", f"{name}.running_var"

    def out_len(self, length):
        return length

    def init(self, rng, params, state, dtype):
        params[self.gamma] = np.ones(self.c, dtype=dtype)
        params[self.beta] = np.zeros(self.c, dtype=dtype)
        state[self.mean] = np.zeros(self.c, dtype=dtype)
        state[self.var] = np.ones(self.c, dtype=dtype)

    def forward(self, params, state, x, train, update_stats=True):
        g, b = params[self.gamma], params[self.beta]
        B, L, C = x.shape
        if not train:
            inv = 1.0 / np.sqrt(state[self.var] + BN_EPS)
            xc = x - state[self.mean]
            y = xc * (g * inv)
            y += b
            return y, (False, xc, inv)
        n = B * L
        x2 = x.reshape(n, C)
        mu = x2.sum(axis=0) / n
        xc = x - mu
        xc2 = xc.reshape(n, C)
        var = np.einsum("nc,nc->c", xc2, xc2) / n
        inv = 1.0 / np.sqrt(var + BN_EPS)
        if update_stats:
            m = BN_MOMENTUM
            state[self.mean] = ((1 - m) * state[self.mean] + m * mu).astype(x.dtype)
            state[self.var] = ((1 - m) * state[self.var] + m * var).astype(x.dtype)
        y = xc * (g * inv)
        y += b
        return y, (True, xc, inv)

    def backward(self, params, cache, dy, grads):
        train, xc, inv = cache
        g = params[self.gamma]
        B, L, C = dy.shape
        n = B * L
        dy2 = dy.reshape(n, C)
        sdy = dy2.sum(axis=0)
        _accumulate(grads, self.beta, sdy)
        sdyxc = np.einsum("nc,nc->c", dy2, xc.reshape(n, C))
        _accumulate(grads, self.gamma, sdyxc * inv)
        a = g * inv
        if not train:
            return dy * a
        dx = dy * a
        dx -= xc * (a * inv * inv * sdyxc / n)
        dx -= a * sdy / n
        return dx


class ReLU:
    name = "relu"

    def out_len(self, length):
        return length

    def init(self, rng, params, state, dtype):
        pass

    def forward(self, params, state, x, train, update_stats=True):
        mask = x > 0
        return x * mask, mask

    def backward(self, params, cache, dy, grads):
        return dy * cache


class Sequential:
    def __init__(self, layers):
        self.layers = list(layers)

    def out_len(self, length):
        for layer in self.layers:
            length = layer.out_len(length)
        return length

    def init(self, rng, params, state, dtype):
        for layer in self.layers:
            layer.init(rng, params, state, dtype)

    def forward(self, params, state, x, train, update_stats=True):
        caches = []
        for layer in self.layers:
            x, c = layer.forward(params, state, x, train, update_stats)
            caches.append(c)
        return x, caches

    def backward(self, params, cache, dy, grads):
        for layer, c in zip(reversed(self.layers), reversed(cache)):
            dy = layer.backward(params, c, dy, grads)
        return dy


def separable(name, cin, cout, stride=1, k=3):
    """Depthwise ``k``-tap conv followed by pointwise mixing."""
    return [Depthwise(f"{name}.dw", cin, k, stride), Pointwise(f"{name}.pw", cin, cout)]


class ResidualBlock:
    """Two separable convs with BN; the skip path gets a strided 1-tap projection when shapes change."""

    def __init__(self, name, cin, cout, stride=1):
        self.name = name
        self.main = Sequential(
            separable(f"{name}.conv1", cin, cout, stride)
            + [BatchNorm(f"{name}.bn1", cout), ReLU()]
            + separable(f"{name}.conv2", cout, cout)
            + [BatchNorm(f"{name}.bn2", cout)]
        )
        self.skip = None
        if stride != 1 or cin != cout:
            self.skip = Sequential([Pointwise(f"{name}.proj", cin, cout, stride), BatchNorm(f"{name}.bn_proj", cout)])

    def out_len(self, length):
        return self.main.out_len(length)

    def init(self, rng, params, state, dtype):
        self.main.init(rng, params, state, dtype)
        if self.skip is not None:
            self.skip.init(rng, params, state, dtype)

    def forward(self, params, state, x, train, update_stats=True):
        y, main_cache = self.main.forward(params, state, x, train, update_stats)
        if self.skip is None:
            s, skip_cache = x, None
        else:
            s, skip_cache = self.skip.forward(params, state, x, train, update_stats)
        pre = y + s
        mask = pre > 0
        return pre * mask, (main_cache, skip_cache, mask)

    def backward(self, params, cache, dy, grads):
        main_cache, skip_cache, mask = cache
        dpre = dy * mask
        dx = self.main.backward(params, main_cache, dpre, grads)
        if self.skip is None:
            return dx + dpre
        return dx + self.skip.backward(params, skip_cache, dpre, grads)


class GlobalAvgPool:
    name = "gap"

    def out_len(self, length):
        return 1

    def init(self, rng, params, state, dtype):
        pass

    def forward(self, params, state, x, train, update_stats=True):
        return x.mean(axis=1), x.shape

    def backward(self, params, cache, dy, grads):
        B, L, C = cache
        return np.broadcast_to(dy[:, None, :] / L, cache).copy()


class Dense:
    def __init__(self, name, cin, cout):
        self.name, self.cin, self.cout = name, cin, cout
        self.w, self.b = f"{name}.w", f"{name}.b"

    def out_len(self, length):
        return length

    def init(self, rng, params, state, dtype):
        bound = 1.0 / math.sqrt(self.cin)
        params[self.w] = rng.uniform(-bound, bound, size=(self.cin, self.cout)).astype(dtype)
        params[self.b] = np.zeros(self.cout, dtype=dtype)

    def forward(self, params, state, x, train, update_stats=True):
        return x @ params[self.w] + params[self.b], x

    def backward(self, params, cache, dy, grads):
        _accumulate(grads, self.w, cache.T @ dy)
        _accumulate(grads, self.b, dy.sum(axis=0))
        return dy @ params[self.w].T


def softmax(logits):
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_backward(probs, dprobs):
    return probs * (dprobs - np.sum(dprobs * probs, axis=-1, keepdims=True))
