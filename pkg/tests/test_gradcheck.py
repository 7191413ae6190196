"""Finite-difference verification of the manual gradients, layer by layer.

Small wrapper models combine a few layers so grad_check can exercise each
backward rule in float64.
"""

import numpy as np
import pytest

from malclass.nn import grad_check
from malclass.nn.layers import (Affine, Conv1d, Embedding, LSTM, MaxOverTime,
                                MaxPool1d, Relu, SoftmaxCrossEntropy, TanhAct)


class _Stack:
    """Minimal model protocol around an explicit forward/backward pair."""

    def __init__(self):
        self.loss_layer = SoftmaxCrossEntropy()
        self._params = []

    def params(self):
        return self._params

    def compute_loss(self, inputs, lengths, labels, *, train, want_grads):
        if want_grads:
            for _, p in self._params:
                p.zero_grad()
        logits = self.forward(inputs, lengths)
        loss = self.loss_layer.forward(logits, labels)
        if want_grads:
            self.backward(self.loss_layer.backward())
        return loss


class AffineSoftmax(_Stack):
    def __init__(self, rng):
        super().__init__()
        self.fc = Affine(6, 3, rng, np.float64)
        self._params = self.fc.params()

    def forward(self, x, lengths):
        return self.fc.forward(x)

    def backward(self, d):
        self.fc.backward(d)


class ConvPoolSoftmax(_Stack):
    def __init__(self, rng):
        super().__init__()
        self.conv = Conv1d(3, 4, 5, rng, np.float64)
        self.relu = Relu()
        self.pool = MaxPool1d(2)
        self.over_time = MaxOverTime()
        self.fc = Affine(5, 3, rng, np.float64)
        self._params = self.conv.params() + self.fc.params()

    def forward(self, x, lengths):
        y = self.relu.forward(self.conv.forward(x))
        y = self.pool.forward(y)
        pooled = self.over_time.forward(y, np.full(len(x), y.shape[1], dtype=np.int64))
        return self.fc.forward(pooled)

    def backward(self, d):
        dp = self.fc.backward(d)
        dy = self.pool.backward(self.over_time.backward(dp))
        self.conv.backward(self.relu.backward(dy))


class LstmSoftmax(_Stack):
    def __init__(self, rng, go_backward=False):
        super().__init__()
        self.lstm = LSTM(4, 5, rng, np.float64, go_backward=go_backward)
        self.fc = Affine(5, 3, rng, np.float64)
        self._params = self.lstm.params() + self.fc.params()

    def forward(self, x, lengths):
        _, h = self.lstm.forward(x, lengths)
        return self.fc.forward(h)

    def backward(self, d):
        self.lstm.backward(None, self.fc.backward(d))


class LstmOutputsSoftmax(_Stack):
    """Exercises the per-step output gradients and the tanh projection."""

    def __init__(self, rng):
        super().__init__()
        table = rng.normal(size=(9, 4)) * 0.5
        table[0] = 0.0
        self.emb = Embedding(table, pad_index=0)
        self.lstm = LSTM(4, 5, rng, np.float64)
        self.proj = Affine(5, 4, rng, np.float64)
        self.tanh = TanhAct()
        self.pool = MaxOverTime()
        self.fc = Affine(4, 3, rng, np.float64)
        self._params = (self.emb.params() + self.lstm.params()
                        + self.proj.params() + self.fc.params())

    def forward(self, idx, lengths):
        x = self.emb.forward(idx)
        outs, _ = self.lstm.forward(x, lengths)
        b, length, hid = outs.shape
        act = self.tanh.forward(self.proj.forward(outs.reshape(b * length, hid)))
        pooled = self.pool.forward(act.reshape(b, length, -1), lengths)
        self._shape = (b, length)
        return self.fc.forward(pooled)

    def backward(self, d):
        b, length = self._shape
        dp = self.pool.backward(self.fc.backward(d))
        dact = self.tanh.backward(dp.reshape(b * length, -1))
        douts = self.proj.backward(dact).reshape(b, length, -1)
        dx = self.lstm.backward(douts, None)
        self.emb.backward(dx)


def test_affine_softmax_grads():
    rng = np.random.default_rng(0)
    model = AffineSoftmax(rng)
    x = rng.normal(size=(5, 6))
    y = rng.integers(0, 3, size=5)
    assert grad_check(model, x, None, y, samples=400) < 1e-6


def test_conv_pool_grads():
    rng = np.random.default_rng(1)
    model = ConvPoolSoftmax(rng)
    x = rng.normal(size=(3, 12, 4))
    y = rng.integers(0, 3, size=3)
    assert grad_check(model, x, None, y, samples=400) < 1e-5


@pytest.mark.parametrize("go_backward", [False, True])
def test_lstm_grads(go_backward):
    rng = np.random.default_rng(2)
    model = LstmSoftmax(rng, go_backward)
    x = rng.normal(size=(3, 7, 4))
    lengths = np.array([7, 4, 1], dtype=np.int64)
    y = rng.integers(0, 3, size=3)
    assert grad_check(model, x, lengths, y, samples=400) < 1e-4


def test_lstm_per_step_output_grads():
    rng = np.random.default_rng(3)
    model = LstmOutputsSoftmax(rng)
    idx = rng.integers(1, 9, size=(3, 6)).astype(np.int64)
    lengths = np.array([6, 3, 5], dtype=np.int64)
    y = rng.integers(0, 3, size=3)
    assert grad_check(model, idx, lengths, y, samples=400) < 1e-4
