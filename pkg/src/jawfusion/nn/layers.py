"""Minimal differentiable layer set: explicit forward/backward in numpy.

Every layer follows the same contract:

    build(in_shape, rng, dtype) -> out_shape   binds parameter shapes
    forward(x, train=False, rng=None) -> y     caches what backward needs
    backward(dy) -> dx                         fills self.grads

Shapes exclude the batch axis; per-window layers see (length, channels) or
(features,). Parameters live in ``self.params`` (name -> array), frozen
statistics in ``self.buffers``. Compute happens at float32 by default and at
float64 in gradient-check mode; float16-stored parameters are cast up at the
point of use so quantization only affects storage.

FLOPs convention: one multiply-accumulate counts as 2 FLOPs, bias adds and
activations as 1 FLOP per output element, max-pooling as (pool-1) comparisons
per output element.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def glorot_uniform(rng: np.random.Generator, shape, fan_in, fan_out, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


def _sigmoid(x):
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def _softmax(x):
    shifted = x - x.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


ACTIVATIONS = ("relu", "sigmoid", "tanh", "softmax", "identity")


class Layer:
    kind = "layer"

    def __init__(self):
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.buffers: dict[str, np.ndarray] = {}
        self.in_shape = None
        self.out_shape = None
        self.dtype = np.float32

    # -- wiring ------------------------------------------------------------
    def build(self, in_shape, rng, dtype):
        self.in_shape = tuple(in_shape)
        self.dtype = dtype
        self.out_shape = self._build(rng)
        return self.out_shape

    def _build(self, rng):
        return self.in_shape

    def compute(self, name):
        """Parameter cast to compute dtype (dequantize-at-use for f16 storage)."""
        p = self.params[name]
        return p if p.dtype == self.dtype else p.astype(self.dtype)

    def zero_grads(self):
        self.grads = {k: np.zeros(v.shape, dtype=self.dtype) for k, v in self.params.items()}

    # -- bookkeeping ---------------------------------------------------------
    def param_count(self) -> int:
        return int(sum(v.size for v in self.params.values()))

    def flops(self) -> int:
        """FLOPs for one sample through this layer (one window unless noted)."""
        return 0

    def config(self) -> dict:
        return {}

    def describe(self) -> dict:
        return {"kind": self.kind, "in_shape": list(self.in_shape),
                "out_shape": list(self.out_shape), **self.config()}

    # -- compute -------------------------------------------------------------
    def forward(self, x, train=False, rng=None):
        raise NotImplementedError

    def backward(self, dy):
        raise NotImplementedError


class Rescale(Layer):
    """Divide by a fixed constant (audio-head input conditioning)."""

    kind = "rescale"

    def __init__(self, scale=1.0):
        super().__init__()
        self.scale = float(scale)

    def config(self):
        return {"scale": self.scale}

    def flops(self):
        return int(np.prod(self.in_shape))

    def forward(self, x, train=False, rng=None):
        return x / self.scale

    def backward(self, dy):
        return dy / self.scale


class ChannelNorm(Layer):
    """Standardize per channel with statistics frozen at fit time."""

    kind = "channel_norm"

    def _build(self, rng):
        ch = self.in_shape[-1]
        self.buffers["mean"] = np.zeros(ch, dtype=self.dtype)
        self.buffers["std"] = np.ones(ch, dtype=self.dtype)
        return self.in_shape

    def set_stats(self, mean, std):
        std = np.maximum(np.asarray(std, dtype=self.dtype), 1e-8)
        self.buffers["mean"] = np.asarray(mean, dtype=self.dtype)
        self.buffers["std"] = std

    def flops(self):
        return 2 * int(np.prod(self.in_shape))

    def forward(self, x, train=False, rng=None):
        return (x - self.buffers["mean"]) / self.buffers["std"]

    def backward(self, dy):
        return dy / self.buffers["std"]


class Dense(Layer):
    """Fully connected layer: activation(W x + b), W is out x in."""

    kind = "dense"

    def __init__(self, units, activation="relu", bias=True):
        super().__init__()
        if activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {activation!r}")
        self.units = int(units)
        self.activation = activation
        self.bias = bias

    def config(self):
        return {"units": self.units, "activation": self.activation, "bias": self.bias}

    def _build(self, rng):
        (fan_in,) = self.in_shape
        self.params["W"] = glorot_uniform(rng, (self.units, fan_in), fan_in, self.units, self.dtype)
        if self.bias:
            self.params["b"] = np.zeros(self.units, dtype=self.dtype)
        return (self.units,)

    def flops(self):
        i, o = self.in_shape[0], self.units
        total = 2 * i * o
        if self.bias:
            total += o
        if self.activation != "identity":
            total += o
        return total

    def _activate(self, pre):
        if self.activation == "relu":
            return np.maximum(pre, 0)
        if self.activation == "sigmoid":
            return _sigmoid(pre)
        if self.activation == "tanh":
            return np.tanh(pre)
        if self.activation == "softmax":
            return _softmax(pre)
        return pre

    def forward(self, x, train=False, rng=None):
        if x.shape[-1] != self.in_shape[0]:
            raise ValueError(f"dense expects width {self.in_shape[0]}, got {x.shape[-1]}")
        pre = x @ self.compute("W").T
        if self.bias:
            pre = pre + self.compute("b")
        y = self._activate(pre)
        self._x, self._y = x, y
        return y

    def backward(self, dy):
        y = self._y
        if self.activation == "relu":
            dpre = dy * (y > 0)
        elif self.activation == "sigmoid":
            dpre = dy * y * (1 - y)
        elif self.activation == "tanh":
            dpre = dy * (1 - y * y)
        elif self.activation == "softmax":
            dot = (dy * y).sum(axis=-1, keepdims=True)
            dpre = y * (dy - dot)
        else:
            dpre = dy
        self.grads["W"] = dpre.T @ self._x
        if self.bias:
            self.grads["b"] = dpre.sum(axis=0)
        return dpre @ self.compute("W")


class Conv1D(Layer):
    """Valid cross-correlation, stride 1: y[l,o] = act(sum_{c,j} x[l+j,c] W[o,c,j] + b[o])."""

    kind = "conv1d"

    def __init__(self, filters, kernel, activation="relu", bias=True):
        super().__init__()
        self.filters = int(filters)
        self.kernel = int(kernel)
        self.activation = activation
        self.bias = bias

    def config(self):
        return {"filters": self.filters, "kernel": self.kernel,
                "activation": self.activation, "bias": self.bias}

    def _build(self, rng):
        length, in_ch = self.in_shape
        if self.kernel > length:
            raise ValueError(f"kernel {self.kernel} exceeds input length {length}")
        fan_in = in_ch * self.kernel
        self.params["W"] = glorot_uniform(
            rng, (self.filters, in_ch, self.kernel), fan_in, self.filters, self.dtype)
        if self.bias:
            self.params["b"] = np.zeros(self.filters, dtype=self.dtype)
        return (length - self.kernel + 1, self.filters)

    def flops(self):
        length, in_ch = self.in_shape
        out_len = length - self.kernel + 1
        total = 2 * out_len * self.filters * in_ch * self.kernel
        if self.bias:
            total += out_len * self.filters
        if self.activation != "identity":
            total += out_len * self.filters
        return total

    def forward(self, x, train=False, rng=None):
        if x.shape[1] < self.kernel:
            raise ValueError(f"input length {x.shape[1]} shorter than kernel {self.kernel}")
        W = self.compute("W")
        xw = sliding_window_view(x, self.kernel, axis=1)    # (N, Lout, C, k)
        pre = np.einsum("nlck,ock->nlo", xw, W, optimize=True)
        if self.bias:
            pre = pre + self.compute("b")
        if self.activation == "relu":
            y = np.maximum(pre, 0)
        elif self.activation == "identity":
            y = pre
        elif self.activation == "tanh":
            y = np.tanh(pre)
        else:
            raise ValueError(f"conv activation {self.activation!r} unsupported")
        self._x, self._y = x, y
        return y

    def backward(self, dy):
        if self.activation == "relu":
            dpre = dy * (self._y > 0)
        elif self.activation == "tanh":
            dpre = dy * (1 - self._y * self._y)
        else:
            dpre = dy
        W = self.compute("W")
        xw = sliding_window_view(self._x, self.kernel, axis=1)
        self.grads["W"] = np.einsum("nlck,nlo->ock", xw, dpre, optimize=True)
        if self.bias:
            self.grads["b"] = dpre.sum(axis=(0, 1))
        # full correlation of dpre with kernel-reversed weights recovers dx
        pad = self.kernel - 1
        padded = np.pad(dpre, ((0, 0), (pad, pad), (0, 0)))
        pw = sliding_window_view(padded, self.kernel, axis=1)  # (N, Lin, O, k)
        return np.einsum("niot,oct->nic", pw, W[:, :, ::-1], optimize=True)


class MaxPool1D(Layer):
    """Non-overlapping max pooling along time; trailing remainder dropped."""

    kind = "maxpool1d"

    def __init__(self, pool):
        super().__init__()
        if pool < 1:
            raise ValueError("pool size must be >= 1")
        self.pool = int(pool)

    def config(self):
        return {"pool": self.pool}

    def _build(self, rng):
        length, ch = self.in_shape
        return (length // self.pool, ch)

    def flops(self):
        out_len, ch = self.out_shape
        return (self.pool - 1) * out_len * ch

    def forward(self, x, train=False, rng=None):
        n, length, ch = x.shape
        q = length // self.pool
        xr = x[:, :q * self.pool].reshape(n, q, self.pool, ch)
        self._arg = xr.argmax(axis=2)
        self._in_len = length
        return xr.max(axis=2)

    def backward(self, dy):
        n, q, ch = dy.shape
        dxr = np.zeros((n, q, self.pool, ch), dtype=dy.dtype)
        np.put_along_axis(dxr, self._arg[:, :, None, :], dy[:, :, None, :], axis=2)
        dx = np.zeros((n, self._in_len, ch), dtype=dy.dtype)
        dx[:, :q * self.pool] = dxr.reshape(n, q * self.pool, ch)
        return dx


class Flatten(Layer):
    kind = "flatten"

    def _build(self, rng):
        return (int(np.prod(self.in_shape)),)

    def forward(self, x, train=False, rng=None):
        self._shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dy):
        return dy.reshape(self._shape)


class Dropout(Layer):
    """Inverted dropout: train-time 1/(1-p) rescale so eval is the identity."""

    kind = "dropout"

    def __init__(self, rate):
        super().__init__()
        if not 0 <= rate < 1:
            raise ValueError("dropout rate must be in [0, 1)")
        self.rate = float(rate)

    def config(self):
        return {"rate": self.rate}

    def forward(self, x, train=False, rng=None):
        if not train or self.rate == 0.0:
            self._mask = None
            return x
        if rng is None:
            raise ValueError("dropout in train mode needs an rng")
        keep = 1.0 - self.rate
        self._mask = (rng.random(x.shape) >= self.rate).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class GruCell:
    """One GRU direction: r/z/n gates with input and recurrent weight blocks.

    r = sigmoid(Wr x + Ur h + br)
    z = sigmoid(Wz x + Uz h + bz)
    n = tanh(Wn x + r * (Un h) + bn)
    h' = (1 - z) * n + z * h
    """

    GATES = ("r", "z", "n")

    def __init__(self, hidden, prefix=""):
        self.hidden = int(hidden)
        self.prefix = prefix
        self.params: dict[str, np.ndarray] = {}
        self.grads: dict[str, np.ndarray] = {}
        self.dtype = np.float32

    def build(self, in_features, rng, dtype):
        H, I = self.hidden, int(in_features)
        self.dtype = dtype
        for g in self.GATES:
            self.params[f"W{g}"] = glorot_uniform(rng, (H, I), I, H, dtype)
            self.params[f"U{g}"] = glorot_uniform(rng, (H, H), H, H, dtype)
            self.params[f"b{g}"] = np.zeros(H, dtype=dtype)

    def _p(self, name):
        p = self.params[name]
        return p if p.dtype == self.dtype else p.astype(self.dtype)

    def zero_grads(self):
        self.grads = {k: np.zeros(v.shape, dtype=self.dtype) for k, v in self.params.items()}

    def param_count(self):
        return int(sum(v.size for v in self.params.values()))

    def step(self, x, h):
        """One recurrence step; returns (h_next, cache)."""
        r = _sigmoid(x @ self._p("Wr").T + h @ self._p("Ur").T + self._p("br"))
        z = _sigmoid(x @ self._p("Wz").T + h @ self._p("Uz").T + self._p("bz"))
        a = h @ self._p("Un").T
        n = np.tanh(x @ self._p("Wn").T + r * a + self._p("bn"))
        h_next = (1.0 - z) * n + z * h
        return h_next, (x, h, r, z, a, n)

    def step_backward(self, cache, dh_next):
        """Backprop one step; accumulates grads, returns (dx, dh_prev)."""
        x, h, r, z, a, n = cache
        dn = dh_next * (1.0 - z)
        dz = dh_next * (h - n)
        dh = dh_next * z

        dpre_n = dn * (1.0 - n * n)
        self.grads["Wn"] += dpre_n.T @ x
        self.grads["bn"] += dpre_n.sum(axis=0)
        dx = dpre_n @ self._p("Wn")
        dr = dpre_n * a
        da = dpre_n * r
        self.grads["Un"] += da.T @ h
        dh += da @ self._p("Un")

        dpre_z = dz * z * (1.0 - z)
        self.grads["Wz"] += dpre_z.T @ x
        self.grads["Uz"] += dpre_z.T @ h
        self.grads["bz"] += dpre_z.sum(axis=0)
        dx += dpre_z @ self._p("Wz")
        dh += dpre_z @ self._p("Uz")

        dpre_r = dr * r * (1.0 - r)
        self.grads["Wr"] += dpre_r.T @ x
        self.grads["Ur"] += dpre_r.T @ h
        self.grads["br"] += dpre_r.sum(axis=0)
        dx += dpre_r @ self._p("Wr")
        dh += dpre_r @ self._p("Ur")
        return dx, dh


class BGRU(Layer):
    """Bidirectional GRU over a window sequence.

    Input (L, F) per sample plus a boolean step mask; output (L, 2H) with the
    forward and reversed recurrences concatenated per step. Masked steps pass
    the hidden state through unchanged and emit zeros, and their inputs get
    exactly zero gradient.
    """

    kind = "bgru"

    def __init__(self, hidden):
        super().__init__()
        self.hidden = int(hidden)
        self.fwd = GruCell(hidden, "fwd_")
        self.bwd = GruCell(hidden, "bwd_")

    def config(self):
        return {"hidden": self.hidden}

    def _build(self, rng):
        L, F = self.in_shape
        self.fwd.build(F, rng, self.dtype)
        self.bwd.build(F, rng, self.dtype)
        for cell, tag in ((self.fwd, "fwd"), (self.bwd, "bwd")):
            for k, v in cell.params.items():
                self.params[f"{tag}_{k}"] = v
        return (L, 2 * self.hidden)

    def _sync_cells(self):
        # checkpoint loading replaces self.params arrays; push them back down
        for cell, tag in ((self.fwd, "fwd"), (self.bwd, "bwd")):
            cell.dtype = self.dtype
            for k in list(cell.params):
                cell.params[k] = self.params[f"{tag}_{k}"]

    def param_count(self):
        return self.fwd.param_count() + self.bwd.param_count()

    def flops(self):
        """Per sequence step, both directions."""
        L, F = self.in_shape
        H = self.hidden
        per_dir = 2 * 3 * (F * H + H * H) + 14 * H
        return 2 * per_dir

    def _run(self, cell, x, mask, order):
        B, L, F = x.shape
        H = cell.hidden
        h = np.zeros((B, H), dtype=x.dtype)
        out = np.zeros((B, L, H), dtype=x.dtype)
        caches = [None] * L
        for t in order:
            h_step, cache = cell.step(x[:, t], h)
            m = mask[:, t][:, None]
            h = np.where(m, h_step, h)
            out[:, t] = np.where(m, h_step, 0.0)
            caches[t] = cache
        return out, caches

    def forward(self, x, train=False, rng=None, mask=None):
        B, L, F = x.shape
        if mask is None:
            mask = np.ones((B, L), dtype=bool)
        if mask.shape != (B, L):
            raise ValueError(f"mask shape {mask.shape} does not match sequence {(B, L)}")
        self._sync_cells()
        self._mask = mask
        out_f, self._cache_f = self._run(self.fwd, x, mask, range(L))
        out_b, self._cache_b = self._run(self.bwd, x, mask, range(L - 1, -1, -1))
        return np.concatenate([out_f, out_b], axis=2)

    def _run_backward(self, cell, caches, dout, mask, order):
        B, L, H = dout.shape
        F = self.in_shape[1]
        dx = np.zeros((B, L, F), dtype=dout.dtype)
        dh = np.zeros((B, H), dtype=dout.dtype)
        for t in order:
            m = mask[:, t][:, None]
            # masked rows bypassed the cell entirely: zero gradient enters the
            # step (so parameter grads stay untouched) and the carry passes on
            g = np.where(m, dh + dout[:, t], 0.0)
            dx_step, dh_step = cell.step_backward(caches[t], g)
            dx[:, t] = dx_step
            dh = np.where(m, dh_step, dh)
        return dx

    def backward(self, dy):
        H = self.hidden
        mask = self._mask
        L = dy.shape[1]
        self.fwd.zero_grads()
        self.bwd.zero_grads()
        dx = self._run_backward(self.fwd, self._cache_f, dy[:, :, :H], mask,
                                range(L - 1, -1, -1))
        dx += self._run_backward(self.bwd, self._cache_b, dy[:, :, H:], mask,
                                 range(L))
        for cell, tag in ((self.fwd, "fwd"), (self.bwd, "bwd")):
            for k, v in cell.grads.items():
                self.grads[f"{tag}_{k}"] = v
        return dx
