import numpy as np
import pytest

from malclass.nn.layers import (Affine, Conv1d, Dropout, Embedding, LSTM,
                                MaxOverTime, MaxPool1d, Relu,
                                SoftmaxCrossEntropy)
from malclass.nn.optim import Adam, clip_grad_norm
from malclass.nn.tensor import Tensor


def test_softmax_uniform_on_equal_logits():
    probs = SoftmaxCrossEntropy.probabilities(np.zeros((1, 3)))
    assert probs[0] == pytest.approx([1 / 3, 1 / 3, 1 / 3])


def test_softmax_rows_are_distributions():
    rng = np.random.default_rng(0)
    probs = SoftmaxCrossEntropy.probabilities(rng.normal(size=(50, 7)) * 10)
    assert (probs >= 0).all()
    assert probs.sum(axis=1) == pytest.approx(np.ones(50), abs=1e-9)


def test_cross_entropy_zero_on_certain_correct():
    loss_layer = SoftmaxCrossEntropy()
    logits = np.array([[1000.0, 0.0, 0.0]])
    assert loss_layer.forward(logits, np.array([0])) == 0.0


def test_cross_entropy_nonnegative():
    rng = np.random.default_rng(1)
    loss_layer = SoftmaxCrossEntropy()
    for _ in range(20):
        logits = rng.normal(size=(8, 5))
        labels = rng.integers(0, 5, size=8)
        assert loss_layer.forward(logits, labels) >= 0.0


def test_relu_backward_blocks_negative():
    relu = Relu()
    x = np.array([[-2.0, 3.0]])
    relu.forward(x)
    dx = relu.backward(np.array([[1.0, 1.0]]))
    assert dx[0, 0] == 0.0 and dx[0, 1] == 1.0


def test_argmax_invariant_under_logit_rescaling():
    rng = np.random.default_rng(2)
    logits = rng.normal(size=(30, 11))
    a = SoftmaxCrossEntropy.probabilities(logits).argmax(axis=1)
    b = SoftmaxCrossEntropy.probabilities(3.7 * logits).argmax(axis=1)
    assert (a == b).all()


# --- Adam ---

def test_adam_zero_grad_leaves_param():
    p = Tensor(np.ones(4, dtype=np.float64))
    opt = Adam([("p", p)], lr=0.1)
    opt.step()
    assert np.array_equal(p.data, np.ones(4))


def test_adam_first_step_magnitude_is_lr():
    # bias-corrected first step: lr * g / (|g| + eps) ~= lr * sign(g)
    p = Tensor(np.zeros(3, dtype=np.float64))
    p.grad[...] = np.array([0.5, -2.0, 10.0])
    opt = Adam([("p", p)], lr=1e-3)
    opt.step()
    assert p.data == pytest.approx([-1e-3, 1e-3, -1e-3], rel=1e-6)
    assert not p.grad.any()  # gradients zeroed after the step


def test_adam_equal_grads_move_identically():
    a = Tensor(np.full(2, 5.0)); b = Tensor(np.full(2, 5.0))
    a.grad[...] = 0.3; b.grad[...] = 0.3
    opt = Adam([("a", a), ("b", b)], lr=0.01)
    for _ in range(5):
        a.grad[...] = 0.3; b.grad[...] = 0.3
        opt.step()
    assert np.array_equal(a.data, b.data)


def test_clip_grad_norm():
    p = Tensor(np.zeros(4, dtype=np.float64))
    p.grad[...] = 3.0  # norm 6
    norm = clip_grad_norm([("p", p)], 1.5)
    assert norm == pytest.approx(6.0)
    assert np.linalg.norm(p.grad) == pytest.approx(1.5)


# --- dropout ---

def test_dropout_identity_at_eval():
    drop = Dropout(0.5, np.random.default_rng(0))
    x = np.arange(12.0).reshape(3, 4)
    assert np.array_equal(drop.forward(x, train=False), x)


def test_dropout_inverted_scaling_preserves_mean():
    drop = Dropout(0.5, np.random.default_rng(7))
    x = np.ones((100,), dtype=np.float64)
    total = np.zeros_like(x)
    n = 10_000
    for _ in range(n):
        total += drop.forward(x, train=True)
    mean = total.mean() / n
    assert mean == pytest.approx(1.0, rel=0.02)


def test_dropout_backward_uses_same_mask():
    drop = Dropout(0.5, np.random.default_rng(3))
    x = np.ones((4, 8))
    y = drop.forward(x, train=True)
    dy = drop.backward(np.ones_like(x))
    assert np.array_equal(y, dy)  # same mask/scale applied


# --- shape/e2e sanity for individual layers ---

def test_affine_forward_backward_shapes():
    rng = np.random.default_rng(0)
    layer = Affine(6, 4, rng, np.float64)
    x = rng.normal(size=(5, 6))
    y = layer.forward(x)
    assert y.shape == (5, 4)
    dx = layer.backward(np.ones_like(y))
    assert dx.shape == x.shape
    assert layer.weight.grad.shape == (6, 4)


def test_conv1d_output_length():
    rng = np.random.default_rng(0)
    conv = Conv1d(3, 5, 7, rng, np.float64)
    y = conv.forward(rng.normal(size=(2, 10, 5)))
    assert y.shape == (2, 8, 7)


def test_maxpool1d_non_overlapping():
    pool = MaxPool1d(3)
    x = np.arange(18.0).reshape(1, 9, 2)
    y = pool.forward(x)
    assert y.shape == (1, 3, 2)
    assert y[0, 0, 0] == 4.0  # max of positions 0..2, channel 0
    dx = pool.backward(np.ones_like(y))
    assert dx.sum() == 6.0


def test_maxovertime_masks_padding():
    pool = MaxOverTime()
    x = np.array([[[1.0], [9.0], [5.0]]])
    out = pool.forward(x, np.array([2]))  # position 2 masked out
    assert out[0, 0] == 9.0
    out_full = MaxOverTime().forward(x, np.array([3]))
    assert out_full[0, 0] == 9.0


def test_maxovertime_empty_row_pools_to_zero():
    pool = MaxOverTime()
    x = np.ones((1, 4, 3))
    out = pool.forward(x, np.array([0]))
    assert not out.any()
    dx = pool.backward(np.ones((1, 3)))
    assert not dx.any()


def test_lstm_final_state_ignores_padding():
    rng = np.random.default_rng(0)
    lstm = LSTM(4, 3, rng, np.float64)
    x = rng.normal(size=(2, 6, 4))
    x_padded = x.copy()
    x_padded[0, 3:] = 99.0  # garbage beyond length
    lengths = np.array([3, 6])
    _, h1 = lstm.forward(x, lengths)
    _, h2 = lstm.forward(x_padded, lengths)
    assert h1[0] == pytest.approx(h2[0])


def test_embedding_pad_row_not_updated():
    table = np.ones((5, 3), dtype=np.float64)
    table[0] = 0.0
    emb = Embedding(table, pad_index=0, trainable=True)
    idx = np.array([[0, 2, 0], [3, 0, 1]])
    out = emb.forward(idx)
    emb.backward(np.ones_like(out))
    assert not emb.table.grad[0].any()
    assert emb.table.grad[2].sum() == 3.0
