"""Compiled kernels must agree with the numpy reference backend.

Index-producing and copy/scatter kernels must match bit-for-bit (same
iteration order); the LSTM pointwise kernels may differ by libm rounding,
so they get a tight tolerance instead.
"""

import numpy as np
import pytest

from malclass.nn.kernels import _numpy

native = pytest.importorskip("malclass.nn.kernels._native",
                             reason="compiled kernels not built")

DTYPES = [np.float32, np.float64]


def rand(rng, shape, dtype):
    return np.ascontiguousarray(rng.normal(size=shape).astype(dtype))


@pytest.mark.parametrize("dtype", DTYPES)
@pytest.mark.parametrize("width", [1, 3, 7])
def test_im2col_bitwise(dtype, width):
    rng = np.random.default_rng(0)
    x = rand(rng, (3, 17, 5), dtype)
    assert np.array_equal(native.im2col_1d(x, width), _numpy.im2col_1d(x, width))


@pytest.mark.parametrize("dtype", DTYPES)
@pytest.mark.parametrize("width", [1, 3, 7])
def test_col2im_bitwise(dtype, width):
    rng = np.random.default_rng(1)
    l_out = 17 - width + 1
    dcols = rand(rng, (3, l_out, width * 5), dtype)
    assert np.array_equal(native.col2im_1d(dcols, 17, width),
                          _numpy.col2im_1d(dcols, 17, width))


@pytest.mark.parametrize("dtype", DTYPES)
def test_maxpool_time_bitwise(dtype):
    rng = np.random.default_rng(2)
    x = rand(rng, (5, 11, 4), dtype)
    lengths = np.array([11, 4, 1, 0, 7], dtype=np.int64)
    out_n, arg_n = native.maxpool_time_forward(x, lengths)
    out_p, arg_p = _numpy.maxpool_time_forward(x, lengths)
    assert np.array_equal(out_n, out_p)
    assert np.array_equal(arg_n, arg_p)
    dout = rand(rng, (5, 4), dtype)
    assert np.array_equal(native.maxpool_time_backward(dout, arg_n, 11),
                          _numpy.maxpool_time_backward(dout, arg_p, 11))


@pytest.mark.parametrize("dtype", DTYPES)
def test_maxpool_time_tie_breaks_identically(dtype):
    x = np.zeros((2, 6, 3), dtype=dtype)  # all ties
    lengths = np.array([6, 3], dtype=np.int64)
    _, arg_n = native.maxpool_time_forward(x, lengths)
    _, arg_p = _numpy.maxpool_time_forward(x, lengths)
    assert np.array_equal(arg_n, arg_p)
    assert (arg_n == 0).all()  # first maximum wins


@pytest.mark.parametrize("dtype", DTYPES)
@pytest.mark.parametrize("width,stride", [(3, 3), (2, 2), (3, 2)])
def test_maxpool1d_parity(dtype, width, stride):
    rng = np.random.default_rng(3)
    x = rand(rng, (4, 13, 6), dtype)
    out_n, arg_n = native.maxpool1d_forward(x, width, stride)
    out_p, arg_p = _numpy.maxpool1d_forward(x, width, stride)
    assert np.array_equal(out_n, out_p)
    assert np.array_equal(arg_n, arg_p)
    dout = rand(rng, out_n.shape, dtype)
    dx_n = native.maxpool1d_backward(dout, arg_n, 13, width, stride)
    dx_p = _numpy.maxpool1d_backward(dout, arg_p, 13, width, stride)
    np.testing.assert_allclose(dx_n, dx_p, rtol=0, atol=0)


@pytest.mark.parametrize("dtype", DTYPES)
def test_lstm_cell_forward_close(dtype):
    rng = np.random.default_rng(4)
    pre = rand(rng, (6, 20), dtype) * 3
    c_prev = rand(rng, (6, 5), dtype)
    h_n, c_n, g_n = native.lstm_cell_forward(pre, c_prev)
    h_p, c_p, g_p = _numpy.lstm_cell_forward(pre, c_prev)
    tol = 1e-6 if dtype == np.float32 else 1e-14
    np.testing.assert_allclose(h_n, h_p, rtol=tol, atol=tol)
    np.testing.assert_allclose(c_n, c_p, rtol=tol, atol=tol)
    np.testing.assert_allclose(g_n, g_p, rtol=tol, atol=tol)


@pytest.mark.parametrize("dtype", DTYPES)
def test_lstm_cell_backward_close(dtype):
    rng = np.random.default_rng(5)
    pre = rand(rng, (6, 20), dtype)
    c_prev = rand(rng, (6, 5), dtype)
    h, c, gates = _numpy.lstm_cell_forward(pre, c_prev)
    dh = rand(rng, (6, 5), dtype)
    dc = rand(rng, (6, 5), dtype)
    dpre_n, dcp_n = native.lstm_cell_backward(dh, dc, c_prev, c, gates)
    dpre_p, dcp_p = _numpy.lstm_cell_backward(dh, dc, c_prev, c, gates)
    tol = 1e-6 if dtype == np.float32 else 1e-14
    np.testing.assert_allclose(dpre_n, dpre_p, rtol=tol, atol=tol)
    np.testing.assert_allclose(dcp_n, dcp_p, rtol=tol, atol=tol)


def test_lstm_cell_extreme_preactivations_finite():
    pre = np.array([[500.0, -500.0, 200.0, -200.0] * 5], dtype=np.float64)
    c_prev = np.zeros((1, 5), dtype=np.float64)
    for impl in (native, _numpy):
        h, c, gates = impl.lstm_cell_forward(pre, c_prev)
        assert np.isfinite(h).all() and np.isfinite(c).all()
        assert np.isfinite(gates).all()


@pytest.mark.parametrize("dtype", DTYPES)
def test_embedding_grad_bitwise(dtype):
    rng = np.random.default_rng(6)
    idx = rng.integers(0, 9, size=(4, 7)).astype(np.int64)
    dout = rand(rng, (4, 7, 3), dtype)
    g1 = np.zeros((9, 3), dtype=dtype)
    g2 = np.zeros((9, 3), dtype=dtype)
    native.embedding_grad(g1, idx, dout, 0)
    _numpy.embedding_grad(g2, idx, dout, 0)
    assert np.array_equal(g1, g2)
    assert not g1[0].any()


def test_full_model_losses_agree_across_backends():
    """One text_rcnn training step in float64 must agree to near-machine
    precision whichever backend computed it."""
    import malclass.nn.kernels as kern
    from malclass.models import ClassifierSpec, build

    rng = np.random.default_rng(7)
    spec = ClassifierSpec(kind="text_rcnn", num_classes=3, vocab_size=30,
                          embedding_dim=8, hidden=6, dropout=0.0, max_len=10,
                          dtype="float64")
    x = rng.integers(1, 30, size=(4, 10)).astype(np.int32)
    lengths = np.array([10, 3, 7, 1], dtype=np.int64)
    y = rng.integers(0, 3, size=4).astype(np.int64)

    losses = {}
    originals = {name: getattr(kern, name) for name in kern.__all__ if name != "BACKEND"}
    for backend_name, impl in (("native", native), ("python", _numpy)):
        for name in originals:
            setattr(kern, name, getattr(impl, name))
        try:
            model = build(spec, seed=2)
            losses[backend_name] = model.compute_loss(
                x, lengths, y, train=False, want_grads=True)
        finally:
            for name, fn in originals.items():
                setattr(kern, name, fn)
    assert losses["native"] == pytest.approx(losses["python"], rel=1e-12)
