"""Layers with manual forward/backward passes.

Every layer caches what its backward pass needs during forward, so the usage
pattern is strictly forward-then-backward per batch. Parameter gradients
ACCUMULATE (+=); the optimizer zeroes them after each step. Matrix products
go through numpy (BLAS); windowing, pooling, cell pointwise math and
embedding scatter go through the kernel backend.
"""

from __future__ import annotations

import numpy as np

from ..errors import ShapeMismatchError
from .tensor import Tensor
from . import kernels


def glorot_uniform(rng, fan_in, fan_out, shape, dtype):
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(dtype)


class Affine:
    """y = x W + b."""

    def __init__(self, n_in, n_out, rng, dtype=np.float32, name="affine"):
        self.name = name
        self.weight = Tensor(glorot_uniform(rng, n_in, n_out, (n_in, n_out), dtype))
        self.bias = Tensor(np.zeros(n_out, dtype=dtype))
        self._x = None

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x):
        if x.shape[-1] != self.weight.shape[0]:
            raise ShapeMismatchError(
                f"{self.name}: input width {x.shape[-1]} != {self.weight.shape[0]}")
        self._x = x
        return x @ self.weight.data + self.bias.data

    def backward(self, dy):
        self.weight.grad += self._x.T @ dy
        self.bias.grad += dy.sum(axis=0)
        return dy @ self.weight.data.T


class Relu:
    def __init__(self):
        self._mask = None

    def forward(self, x):
        self._mask = x > 0
        return np.where(self._mask, x, 0)

    def backward(self, dy):
        return np.where(self._mask, dy, 0)


class TanhAct:
    def __init__(self):
        self._y = None

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dy):
        return dy * (1.0 - self._y * self._y)


class Dropout:
    """Inverted dropout: identity at evaluation, mask/keep at train time."""

    def __init__(self, p, rng):
        self.p = p
        self.rng = rng
        self._mask = None

    def forward(self, x, train):
        if not train or self.p <= 0.0:
            self._mask = None
            return x
        keep = 1.0 - self.p
        self._mask = (self.rng.random(x.shape) < keep).astype(x.dtype) / keep
        return x * self._mask

    def backward(self, dy):
        if self._mask is None:
            return dy
        return dy * self._mask


class Embedding:
    """Index lookup into a (V, D) table; row `pad_index` stays frozen."""

    def __init__(self, table, pad_index=0, trainable=True, name="embedding"):
        self.name = name
        self.table = table if isinstance(table, Tensor) else Tensor(table)
        self.pad_index = pad_index
        self.trainable = trainable
        self._idx = None

    def params(self):
        return [(f"{self.name}.table", self.table)] if self.trainable else []

    def forward(self, idx):
        self._idx = np.ascontiguousarray(idx, dtype=np.int64)
        return self.table.data[self._idx]

    def backward(self, dout):
        if self.trainable:
            kernels.embedding_grad(self.table.grad, self._idx,
                                   np.ascontiguousarray(dout), self.pad_index)
        return None  # integer inputs have no gradient


class Conv1d:
    """Valid 1-D convolution over (B, L, C_in) -> (B, L-width+1, C_out)."""

    def __init__(self, width, c_in, c_out, rng, dtype=np.float32, name="conv"):
        self.name = name
        self.width = width
        self.c_in = c_in
        fan_in = width * c_in
        self.weight = Tensor(glorot_uniform(rng, fan_in, c_out, (fan_in, c_out), dtype))
        self.bias = Tensor(np.zeros(c_out, dtype=dtype))
        self._cols = None
        self._in_len = None

    def params(self):
        return [(f"{self.name}.weight", self.weight), (f"{self.name}.bias", self.bias)]

    def forward(self, x):
        if x.shape[2] != self.c_in:
            raise ShapeMismatchError(f"{self.name}: expected {self.c_in} channels, got {x.shape[2]}")
        if x.shape[1] < self.width:
            raise ShapeMismatchError(
                f"{self.name}: input length {x.shape[1]} shorter than filter width {self.width}")
        self._in_len = x.shape[1]
        self._cols = kernels.im2col_1d(np.ascontiguousarray(x), self.width)
        b, l_out, wc = self._cols.shape
        y = self._cols.reshape(b * l_out, wc) @ self.weight.data + self.bias.data
        return y.reshape(b, l_out, -1)

    def backward(self, dy):
        b, l_out, c_out = dy.shape
        dy2 = dy.reshape(b * l_out, c_out)
        cols2 = self._cols.reshape(b * l_out, -1)
        self.weight.grad += cols2.T @ dy2
        self.bias.grad += dy2.sum(axis=0)
        dcols = (dy2 @ self.weight.data.T).reshape(b, l_out, -1)
        return kernels.col2im_1d(np.ascontiguousarray(dcols), self._in_len, self.width)


class MaxPool1d:
    """Strided max pooling over time (non-overlapping in all built-in models)."""

    def __init__(self, width, stride=None):
        self.width = width
        self.stride = stride if stride is not None else width
        self._arg = None
        self._in_len = None

    def forward(self, x):
        self._in_len = x.shape[1]
        out, self._arg = kernels.maxpool1d_forward(
            np.ascontiguousarray(x), self.width, self.stride)
        return out

    def backward(self, dy):
        return kernels.maxpool1d_backward(
            np.ascontiguousarray(dy), self._arg, self._in_len, self.width, self.stride)


class MaxOverTime:
    """Max over the valid prefix of the time axis; empty rows pool to zero."""

    def __init__(self):
        self._arg = None
        self._in_len = None

    def forward(self, x, lengths):
        self._in_len = x.shape[1]
        out, self._arg = kernels.maxpool_time_forward(
            np.ascontiguousarray(x), np.ascontiguousarray(lengths, dtype=np.int64))
        return out

    def backward(self, dy):
        return kernels.maxpool_time_backward(
            np.ascontiguousarray(dy), self._arg, self._in_len)


class LSTM:
    """Single-direction LSTM over padded batches.

    Padded steps carry state through unchanged, so after the scan the live
    state equals the state at each row's last real token (first real token
    when running backwards). Returns per-step outputs and the final hidden
    state.
    """

    def __init__(self, n_in, hidden, rng, dtype=np.float32, go_backward=False,
                 name="lstm"):
        self.name = name
        self.hidden = hidden
        self.go_backward = go_backward
        k = 1.0 / np.sqrt(hidden)
        self.w_input = Tensor(rng.uniform(-k, k, size=(n_in, 4 * hidden)).astype(dtype))
        self.w_hidden = Tensor(rng.uniform(-k, k, size=(hidden, 4 * hidden)).astype(dtype))
        bias = np.zeros(4 * hidden, dtype=dtype)
        bias[hidden:2 * hidden] = 1.0  # forget-gate bias
        self.bias = Tensor(bias)
        self._cache = None

    def params(self):
        return [
            (f"{self.name}.w_input", self.w_input),
            (f"{self.name}.w_hidden", self.w_hidden),
            (f"{self.name}.bias", self.bias),
        ]

    def _step_order(self, length):
        return range(length - 1, -1, -1) if self.go_backward else range(length)

    def forward(self, x, lengths):
        b, length, _ = x.shape
        dtype = self.w_input.dtype
        mask = (np.arange(length)[None, :] < lengths[:, None]).astype(dtype)
        h = np.zeros((b, self.hidden), dtype=dtype)
        c = np.zeros((b, self.hidden), dtype=dtype)
        outputs = np.zeros((b, length, self.hidden), dtype=dtype)
        steps = []
        for t in self._step_order(length):
            pre = x[:, t, :] @ self.w_input.data + h @ self.w_hidden.data + self.bias.data
            h_new, c_new, gates = kernels.lstm_cell_forward(np.ascontiguousarray(pre), c)
            m = mask[:, t:t + 1]
            h_prev, c_prev = h, c
            h = m * h_new + (1.0 - m) * h_prev
            c = m * c_new + (1.0 - m) * c_prev
            outputs[:, t, :] = h
            steps.append((t, h_prev, c_prev, c_new, gates, m))
        self._cache = (x, steps)
        return outputs, h

    def backward(self, d_outputs=None, d_final=None):
        x, steps = self._cache
        b, length, n_in = x.shape
        dtype = self.w_input.dtype
        dx = np.zeros_like(x)
        dh = np.zeros((b, self.hidden), dtype=dtype) if d_final is None else d_final.astype(dtype, copy=True)
        dc = np.zeros((b, self.hidden), dtype=dtype)
        for t, h_prev, c_prev, c_new, gates, m in reversed(steps):
            if d_outputs is not None:
                dh = dh + d_outputs[:, t, :]
            dh_cell = np.ascontiguousarray(dh * m)
            dc_cell = np.ascontiguousarray(dc * m)
            dpre, dc_prev = kernels.lstm_cell_backward(
                dh_cell, dc_cell, c_prev, c_new, gates)
            self.w_input.grad += x[:, t, :].T @ dpre
            self.w_hidden.grad += h_prev.T @ dpre
            self.bias.grad += dpre.sum(axis=0)
            dx[:, t, :] = dpre @ self.w_input.data.T
            dh = dpre @ self.w_hidden.data.T + dh * (1.0 - m)
            dc = dc_prev + dc * (1.0 - m)
        return dx


class SoftmaxCrossEntropy:
    """Fused softmax + mean cross-entropy over a batch."""

    def __init__(self):
        self._probs = None
        self._labels = None

    @staticmethod
    def probabilities(logits):
        z = logits - logits.max(axis=1, keepdims=True)
        e = np.exp(z)
        return e / e.sum(axis=1, keepdims=True)

    def forward(self, logits, labels):
        if logits.shape[0] != labels.shape[0]:
            raise ShapeMismatchError("logits/labels batch size mismatch")
        z = logits - logits.max(axis=1, keepdims=True)
        log_norm = np.log(np.exp(z).sum(axis=1))
        losses = log_norm - z[np.arange(len(labels)), labels]
        self._probs = np.exp(z - log_norm[:, None])
        self._labels = labels
        return float(losses.mean())

    def backward(self):
        b = len(self._labels)
        d = self._probs.copy()
        d[np.arange(b), self._labels] -= 1.0
        return d / b
