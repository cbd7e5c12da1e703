"""Layers with hand-derived backward passes.

All layers are batch-first. ``forward`` caches what ``backward`` needs unless
called with ``record=False`` (used for read-only inference). ``backward``
takes dLoss/dOutput, fills ``self.grads`` and returns dLoss/dInput.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ShapeError


def glorot_uniform(rng: np.random.Generator, shape, fan_in: int, fan_out: int) -> np.ndarray:
    limit = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape)


class Layer:
    def __init__(self, name: str = ""):
        self.name = name
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self._cache = None

    def children(self) -> list["Layer"]:
        return []

    def named_parameters(self, prefix: str = ""):
        """Yield (qualified name, layer, key) for every trainable array."""
        base = f"{prefix}{self.name}" if self.name else prefix.rstrip(".")
        for key in self.params:
            yield f"{base}.{key}" if base else key, self, key
        for child in self.children():
            yield from child.named_parameters(f"{base}." if base else "")

    def n_params(self) -> int:
        return sum(layer.params[k].size for _, layer, k in self.named_parameters())

    def zero_grads(self):
        for _, layer, k in self.named_parameters():
            layer.grads[k] = np.zeros_like(layer.params[k])

    def forward(self, x, training=False, rng=None, record=True):
        raise NotImplementedError

    def backward(self, grad):
        raise NotImplementedError

    __call__ = forward

    def _need_cache(self):
        if self._cache is None:
            raise RuntimeError(f"{type(self).__name__} {self.name!r}: backward without a recorded forward")
        return self._cache


class Conv1D(Layer):
    """Valid cross-correlation, stride 1, on (N, L, C_in) inputs.

    Kernels are stored as (C_out, K, C_in). Narrow inputs go through an
    im2col product; wide inputs multiply every position by all K taps at once
    and sum shifted slices, which moves less memory when C_out < C_in.
    """

    def __init__(self, c_in: int, c_out: int, kernel_size: int, rng=None, name="conv",
                 input_grad: bool = True):
        super().__init__(name)
        self.c_in, self.c_out, self.k = c_in, c_out, kernel_size
        self.input_grad = input_grad
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["kernel"] = glorot_uniform(rng, (c_out, kernel_size, c_in),
                                               kernel_size * c_in, kernel_size * c_out)
        self.params["bias"] = np.zeros(c_out)

    @property
    def _shifted(self) -> bool:
        return self.k > 1 and self.c_out < self.c_in

    def forward(self, x, training=False, rng=None, record=True):
        n, length, c = x.shape
        if c != self.c_in:
            raise ShapeError(f"{self.name}: expected {self.c_in} input channels, got {c}")
        if length < self.k:
            raise ShapeError(f"{self.name}: input length {length} shorter than kernel {self.k}")
        out_len = length - self.k + 1
        kern = self.params["kernel"]
        if self._shifted:
            # z[n, l, j, :] = x[n, l] @ kernel[:, j, :].T
            w_all = kern.transpose(2, 1, 0).reshape(c, self.k * self.c_out)
            z = (x.reshape(n * length, c) @ w_all).reshape(n, length, self.k, self.c_out)
            out = z[:, 0:out_len, 0] + self.params["bias"]
            for j in range(1, self.k):
                out += z[:, j:j + out_len, j]
            self._cache = (x, x.shape) if record else None
            return out
        if self.k == 1:
            cols = x.reshape(n * length, c)
        else:
            # (n, out_len, c, k) -> (n, out_len, k, c)
            cols = sliding_window_view(x, self.k, axis=1).transpose(0, 1, 3, 2)
            cols = cols.reshape(n * out_len, self.k * c)
        w2 = kern.reshape(self.c_out, self.k * c)
        out = cols @ w2.T
        out += self.params["bias"]
        self._cache = (cols, x.shape) if record else None
        return out.reshape(n, out_len, self.c_out)

    def backward(self, grad):
        saved, (n, length, c) = self._need_cache()
        out_len = length - self.k + 1
        kern = self.params["kernel"]
        self.grads["bias"] = grad.reshape(-1, self.c_out).sum(axis=0)
        if self._shifted:
            x2 = saved.reshape(n * length, c)
            dz = np.zeros((n, length, self.k, self.c_out), dtype=grad.dtype)
            for j in range(self.k):
                dz[:, j:j + out_len, j] = grad
            dz2 = dz.reshape(n * length, self.k * self.c_out)
            dw_all = x2.T @ dz2  # (c, k * c_out)
            self.grads["kernel"] = dw_all.reshape(c, self.k, self.c_out).transpose(2, 1, 0).copy()
            if not self.input_grad:
                return None
            w_all = kern.transpose(2, 1, 0).reshape(c, self.k * self.c_out)
            return (dz2 @ w_all.T).reshape(n, length, c)
        cols = saved
        g2 = grad.reshape(n * out_len, self.c_out)
        self.grads["kernel"] = (g2.T @ cols).reshape(self.c_out, self.k, c)
        if not self.input_grad:
            return None
        dcols = g2 @ kern.reshape(self.c_out, self.k * c)
        if self.k == 1:
            return dcols.reshape(n, length, c)
        dcols = dcols.reshape(n, out_len, self.k, c)
        dx = np.zeros((n, length, c), dtype=grad.dtype)
        for j in range(self.k):
            dx[:, j:j + out_len] += dcols[:, :, j]
        return dx


class MaxPool1D(Layer):
    """Non-overlapping pool of 2 along axis 1; a trailing odd element is dropped.
    Ties route the gradient to the first element."""

    def __init__(self, name="pool"):
        super().__init__(name)

    def forward(self, x, training=False, rng=None, record=True):
        if x.shape[1] < 2:
            raise ShapeError(f"{self.name}: need length >= 2, got {x.shape[1]}")
        half = x.shape[1] // 2
        pairs = x[:, :2 * half].reshape(x.shape[0], half, 2, *x.shape[2:])
        a, b = pairs[:, :, 0], pairs[:, :, 1]
        self._cache = (a >= b, x.shape) if record else None
        return np.maximum(a, b)

    def backward(self, grad):
        first, shape = self._need_cache()
        half = shape[1] // 2
        dx = np.empty(shape, dtype=grad.dtype)
        dx[:, 2 * half:] = 0.0
        pairs = dx[:, :2 * half].reshape(shape[0], half, 2, *shape[2:])
        np.multiply(grad, first, out=pairs[:, :, 0])
        np.multiply(grad, ~first, out=pairs[:, :, 1])
        return dx


class GlobalAveragePool1D(Layer):
    """Mean over ``axis`` (1 = positions/time, 2 = features)."""

    def __init__(self, axis: int = 1, name="gap"):
        super().__init__(name)
        self.axis = axis

    def forward(self, x, training=False, rng=None, record=True):
        if x.shape[self.axis] < 1:
            raise ShapeError(f"{self.name}: empty pooling axis")
        self._cache = x.shape if record else None
        return x.mean(axis=self.axis)

    def backward(self, grad):
        shape = self._need_cache()
        g = np.expand_dims(grad, self.axis) / shape[self.axis]
        return np.broadcast_to(g, shape).copy()


class Dense(Layer):
    """Affine map on the last axis; ``W`` is (D_out, D_in)."""

    def __init__(self, d_in: int, d_out: int, rng=None, name="dense"):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params["W"] = glorot_uniform(rng, (d_out, d_in), d_in, d_out)
        self.params["b"] = np.zeros(d_out)

    def forward(self, x, training=False, rng=None, record=True):
        if x.shape[-1] != self.params["W"].shape[1]:
            raise ShapeError(f"{self.name}: expected last dim {self.params['W'].shape[1]}, got {x.shape[-1]}")
        self._cache = x if record else None
        return x @ self.params["W"].T + self.params["b"]

    def backward(self, grad):
        x = self._need_cache()
        x2 = x.reshape(-1, x.shape[-1])
        g2 = grad.reshape(-1, grad.shape[-1])
        self.grads["W"] = g2.T @ x2
        self.grads["b"] = g2.sum(axis=0)
        return grad @ self.params["W"]


class ReLU(Layer):
    def __init__(self, name="relu"):
        super().__init__(name)

    def forward(self, x, training=False, rng=None, record=True):
        out = np.maximum(x, 0.0)
        self._cache = out if record else None
        return out

    def backward(self, grad):
        # relu'(0) = 0
        return grad * (self._need_cache() > 0)


def sigmoid(x):
    x = np.asarray(x, dtype=float) if not isinstance(x, np.ndarray) else x
    e = np.exp(-np.abs(x))
    return np.where(x >= 0, 1.0 / (1.0 + e), e / (1.0 + e))


class Sigmoid(Layer):
    def __init__(self, name="sigmoid"):
        super().__init__(name)

    def forward(self, x, training=False, rng=None, record=True):
        s = sigmoid(x)
        self._cache = s if record else None
        return s

    def backward(self, grad):
        s = self._need_cache()
        return grad * s * (1.0 - s)


class LayerNorm(Layer):
    """Normalise over the last axis with population variance."""

    def __init__(self, d: int, eps: float = 1e-6, name="ln"):
        super().__init__(name)
        self.eps = eps
        self.params["gamma"] = np.ones(d)
        self.params["beta"] = np.zeros(d)

    def forward(self, x, training=False, rng=None, record=True):
        mu = x.mean(axis=-1, keepdims=True)
        xc = x - mu
        inv = 1.0 / np.sqrt((xc * xc).mean(axis=-1, keepdims=True) + self.eps)
        xhat = xc * inv
        self._cache = (xhat, inv) if record else None
        return xhat * self.params["gamma"] + self.params["beta"]

    def backward(self, grad):
        xhat, inv = self._need_cache()
        d = xhat.shape[-1]
        self.grads["gamma"] = (grad * xhat).reshape(-1, d).sum(axis=0)
        self.grads["beta"] = grad.reshape(-1, d).sum(axis=0)
        dxhat = grad * self.params["gamma"]
        return inv * (dxhat - dxhat.mean(axis=-1, keepdims=True)
                      - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True))


def softmax(s, axis=-1):
    z = s - s.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


class MultiHeadSelfAttention(Layer):
    """Scaled dot-product self-attention on (N, T, D).

    Projections are ``x @ W + b`` with W of shape (D, heads * head_dim) for
    queries, keys and values, and (heads * head_dim, D) for the output.
    """

    def __init__(self, d_model: int, heads: int = 3, head_dim: int = 32, rng=None, name="mha"):
        super().__init__(name)
        self.d, self.h, self.hd = d_model, heads, head_dim
        rng = rng if rng is not None else np.random.default_rng(0)
        inner = heads * head_dim
        for key in ("q", "k", "v"):
            self.params[f"W{key}"] = glorot_uniform(rng, (d_model, inner), d_model, inner)
            self.params[f"b{key}"] = np.zeros(inner)
        self.params["Wo"] = glorot_uniform(rng, (inner, d_model), inner, d_model)
        self.params["bo"] = np.zeros(d_model)

    def _split(self, z, n, t):
        return z.reshape(n, t, self.h, self.hd).transpose(0, 2, 1, 3)

    def forward(self, x, training=False, rng=None, record=True):
        if x.ndim != 3 or x.shape[-1] != self.d:
            raise ShapeError(f"{self.name}: expected (N, T, {self.d}), got {x.shape}")
        n, t, _ = x.shape
        p = self.params
        q = self._split(x @ p["Wq"] + p["bq"], n, t)
        k = self._split(x @ p["Wk"] + p["bk"], n, t)
        v = self._split(x @ p["Wv"] + p["bv"], n, t)
        scale = 1.0 / math.sqrt(self.hd)
        a = softmax((q @ k.transpose(0, 1, 3, 2)) * scale)
        o = (a @ v).transpose(0, 2, 1, 3).reshape(n, t, self.h * self.hd)
        self._cache = (x, q, k, v, a, o) if record else None
        return o @ p["Wo"] + p["bo"]

    def backward(self, grad):
        x, q, k, v, a, o = self._need_cache()
        n, t, _ = x.shape
        p = self.params
        inner = self.h * self.hd
        g2 = grad.reshape(-1, self.d)
        self.grads["Wo"] = o.reshape(-1, inner).T @ g2
        self.grads["bo"] = g2.sum(axis=0)
        do = self._split(grad @ p["Wo"].T, n, t)
        da = do @ v.transpose(0, 1, 3, 2)
        dv = a.transpose(0, 1, 3, 2) @ do
        ds = a * (da - (da * a).sum(axis=-1, keepdims=True)) / math.sqrt(self.hd)
        dq = ds @ k
        dk = ds.transpose(0, 1, 3, 2) @ q
        x2 = x.reshape(-1, self.d)
        dx = np.zeros_like(x)
        for key, dz in (("q", dq), ("k", dk), ("v", dv)):
            dz2 = dz.transpose(0, 2, 1, 3).reshape(-1, inner)
            self.grads[f"W{key}"] = x2.T @ dz2
            self.grads[f"b{key}"] = dz2.sum(axis=0)
            dx += (dz2 @ p[f"W{key}"].T).reshape(n, t, self.d)
        return dx

    def attention_weights(self, x):
        n, t, _ = x.shape
        p = self.params
        q = self._split(x @ p["Wq"] + p["bq"], n, t)
        k = self._split(x @ p["Wk"] + p["bk"], n, t)
        return softmax((q @ k.transpose(0, 1, 3, 2)) / math.sqrt(self.hd))


class Dropout(Layer):
    """Inverted dropout: kept units are scaled by 1/(1-rate) in training."""

    def __init__(self, rate: float, name="dropout"):
        super().__init__(name)
        if not 0.0 <= rate < 1.0:
            raise ValueError(f"dropout rate must lie in [0, 1), got {rate}")
        self.rate = rate

    def forward(self, x, training=False, rng=None, record=True):
        if not training or self.rate == 0.0:
            self._cache = None if not record else 1.0
            return x
        if rng is None:
            raise ValueError(f"{self.name}: training-mode dropout needs an rng")
        mask = (rng.random(x.shape) >= self.rate) / (1.0 - self.rate)
        mask = mask.astype(x.dtype, copy=False)
        self._cache = mask if record else None
        return x * mask

    def backward(self, grad):
        return grad * self._need_cache()


class Sequential(Layer):
    def __init__(self, layers, name=""):
        super().__init__(name)
        self.layers = list(layers)

    def children(self):
        return self.layers

    def forward(self, x, training=False, rng=None, record=True):
        for layer in self.layers:
            x = layer.forward(x, training=training, rng=rng, record=record)
        return x

    def backward(self, grad):
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
            if grad is None:
                break
        return grad


class TimeDistributed(Layer):
    """Apply one shared sub-network to every time step of (N, T, ...)."""

    def __init__(self, inner: Layer, name="td"):
        super().__init__(name)
        self.inner = inner

    def children(self):
        return [self.inner]

    def forward(self, x, training=False, rng=None, record=True):
        n, t = x.shape[:2]
        y = self.inner.forward(x.reshape((n * t,) + x.shape[2:]), training, rng, record)
        self._cache = (n, t, x.shape) if record else None
        return y.reshape((n, t) + y.shape[1:])

    def backward(self, grad):
        n, t, shape = self._need_cache()
        g = self.inner.backward(grad.reshape((n * t,) + grad.shape[2:]))
        return None if g is None else g.reshape(shape)


class EncoderBlock(Layer):
    """Pre-norm transformer block.

    norm -> attention -> dropout -> residual add, then
    norm -> kernel-1 conv (ReLU) -> dropout -> kernel-1 conv -> residual add.
    """

    def __init__(self, d_model=32, heads=3, head_dim=32, ff_dim=16, dropout=0.25,
                 rng=None, name="encoder"):
        super().__init__(name)
        rng = rng if rng is not None else np.random.default_rng(0)
        self.ln1 = LayerNorm(d_model, name="ln1")
        self.mha = MultiHeadSelfAttention(d_model, heads, head_dim, rng=rng, name="mha")
        self.drop1 = Dropout(dropout, name="drop1")
        self.ln2 = LayerNorm(d_model, name="ln2")
        self.ff1 = Conv1D(d_model, ff_dim, 1, rng=rng, name="ff1")
        self.act = ReLU(name="ff_relu")
        self.drop2 = Dropout(dropout, name="drop2")
        self.ff2 = Conv1D(ff_dim, d_model, 1, rng=rng, name="ff2")

    def children(self):
        return [self.ln1, self.mha, self.drop1, self.ln2, self.ff1, self.act, self.drop2, self.ff2]

    def forward(self, x, training=False, rng=None, record=True):
        kw = dict(training=training, rng=rng, record=record)
        h = self.drop1.forward(self.mha.forward(self.ln1.forward(x, **kw), **kw), **kw)
        res = x + h
        h = self.ln2.forward(res, **kw)
        h = self.drop2.forward(self.act.forward(self.ff1.forward(h, **kw), **kw), **kw)
        return res + self.ff2.forward(h, **kw)

    def backward(self, grad):
        g = self.ff1.backward(self.act.backward(self.drop2.backward(self.ff2.backward(grad))))
        g_res = grad + self.ln2.backward(g)
        return g_res + self.ln1.backward(self.mha.backward(self.drop1.backward(g_res)))
