"""Numpy reference implementations of the hot kernels.

These define the semantics the compiled backend must match; matrix products
live in the layers (BLAS) and are not part of the kernel surface.

Conventions: float arrays are C-contiguous float32/float64, index arrays are
int64. Gate layout for the LSTM cell is [input | forget | cell | output]
along the last axis.
"""

from __future__ import annotations

import numpy as np
from scipy.special import expit


def im2col_1d(x: np.ndarray, width: int) -> np.ndarray:
    """(B, L, C) -> (B, L-width+1, width*C) sliding windows."""
    b, length, channels = x.shape
    l_out = length - width + 1
    cols = np.empty((b, l_out, width * channels), dtype=x.dtype)
    view = cols.reshape(b, l_out, width, channels)
    for w in range(width):
        view[:, :, w, :] = x[:, w:w + l_out, :]
    return cols


def col2im_1d(dcols: np.ndarray, length: int, width: int) -> np.ndarray:
    """Scatter-add adjoint of im2col_1d: (B, L_out, width*C) -> (B, L, C)."""
    b, l_out, wc = dcols.shape
    channels = wc // width
    dx = np.zeros((b, length, channels), dtype=dcols.dtype)
    view = dcols.reshape(b, l_out, width, channels)
    for w in range(width):
        dx[:, w:w + l_out, :] += view[:, :, w, :]
    return dx


def maxpool_time_forward(x: np.ndarray, lengths: np.ndarray):
    """Max over the valid time prefix of each row.

    x: (B, L, F); lengths: (B,) int64. Returns (out (B, F), argmax (B, F));
    rows with length 0 get out 0 and argmax -1.
    """
    b, length, feats = x.shape
    valid = np.arange(length)[None, :] < lengths[:, None]
    masked = np.where(valid[:, :, None], x, np.array(-np.inf, dtype=x.dtype))
    arg = masked.argmax(axis=1).astype(np.int64)
    out = np.take_along_axis(masked, arg[:, None, :], axis=1)[:, 0, :]
    empty = lengths == 0
    if empty.any():
        out[empty] = 0.0
        arg[empty] = -1
    return np.ascontiguousarray(out), np.ascontiguousarray(arg)


def maxpool_time_backward(dout: np.ndarray, arg: np.ndarray, length: int) -> np.ndarray:
    b, feats = dout.shape
    dx = np.zeros((b, length, feats), dtype=dout.dtype)
    valid = arg >= 0
    b_idx = np.broadcast_to(np.arange(b)[:, None], arg.shape)
    f_idx = np.broadcast_to(np.arange(feats)[None, :], arg.shape)
    # argmax positions are unique per (b, f), so plain assignment is safe
    dx[b_idx[valid], arg[valid], f_idx[valid]] = dout[valid]
    return dx


def maxpool1d_forward(x: np.ndarray, width: int, stride: int):
    """Strided window max over time: (B, L, C) -> (B, L_out, C).

    Also returns the source time index of each maximum, for the backward
    scatter.
    """
    b, length, channels = x.shape
    l_out = (length - width) // stride + 1
    starts = np.arange(l_out) * stride
    win = x[:, starts[:, None] + np.arange(width)[None, :], :]  # (B, L_out, W, C)
    off = win.argmax(axis=2)
    out = np.take_along_axis(win, off[:, :, None, :], axis=2)[:, :, 0, :]
    arg = (starts[None, :, None] + off).astype(np.int64)
    return np.ascontiguousarray(out), np.ascontiguousarray(arg)


def maxpool1d_backward(dout: np.ndarray, arg: np.ndarray, length: int,
                       width: int, stride: int) -> np.ndarray:
    b, l_out, channels = dout.shape
    dx = np.zeros((b, length, channels), dtype=dout.dtype)
    b_idx = np.broadcast_to(np.arange(b)[:, None, None], arg.shape)
    c_idx = np.broadcast_to(np.arange(channels)[None, None, :], arg.shape)
    if stride >= width:
        # windows are disjoint: at most one write per input position
        dx[b_idx, arg, c_idx] = dout
    else:
        np.add.at(dx, (b_idx, arg, c_idx), dout)
    return dx


def lstm_cell_forward(preact: np.ndarray, c_prev: np.ndarray):
    """One LSTM cell step from pre-activations.

    preact: (B, 4H) gate pre-activations; c_prev: (B, H).
    Returns (h, c, gates) with gates holding the activated values for the
    backward pass.
    """
    hid = c_prev.shape[1]
    gates = np.empty_like(preact)
    gates[:, :hid] = expit(preact[:, :hid])                 # input
    gates[:, hid:2 * hid] = expit(preact[:, hid:2 * hid])   # forget
    gates[:, 2 * hid:3 * hid] = np.tanh(preact[:, 2 * hid:3 * hid])  # cell
    gates[:, 3 * hid:] = expit(preact[:, 3 * hid:])         # output
    c = gates[:, hid:2 * hid] * c_prev + gates[:, :hid] * gates[:, 2 * hid:3 * hid]
    h = gates[:, 3 * hid:] * np.tanh(c)
    return h, c, gates


def lstm_cell_backward(dh: np.ndarray, dc: np.ndarray, c_prev: np.ndarray,
                       c: np.ndarray, gates: np.ndarray):
    """Adjoint of lstm_cell_forward. Returns (dpreact, dc_prev)."""
    hid = c_prev.shape[1]
    gi = gates[:, :hid]
    gf = gates[:, hid:2 * hid]
    gg = gates[:, 2 * hid:3 * hid]
    go = gates[:, 3 * hid:]
    tc = np.tanh(c)
    dc_total = dc + dh * go * (1.0 - tc * tc)
    dpre = np.empty_like(gates)
    dpre[:, :hid] = dc_total * gg * gi * (1.0 - gi)
    dpre[:, hid:2 * hid] = dc_total * c_prev * gf * (1.0 - gf)
    dpre[:, 2 * hid:3 * hid] = dc_total * gi * (1.0 - gg * gg)
    dpre[:, 3 * hid:] = dh * tc * go * (1.0 - go)
    dc_prev = dc_total * gf
    return dpre, dc_prev


def embedding_grad(grad_table: np.ndarray, indices: np.ndarray,
                   dout: np.ndarray, pad_index: int = -1) -> None:
    """Accumulate dout rows into grad_table rows, in place.

    indices: (B, L) int64; dout: (B, L, D). Rows equal to pad_index are
    skipped (pass -1 to disable).
    """
    flat_idx = indices.reshape(-1)
    flat_out = dout.reshape(-1, dout.shape[-1])
    if pad_index >= 0:
        keep = flat_idx != pad_index
        flat_idx = flat_idx[keep]
        flat_out = flat_out[keep]
    np.add.at(grad_table, flat_idx, flat_out)
