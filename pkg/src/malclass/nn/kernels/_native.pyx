# cython: boundscheck=False, wraparound=False, cdivision=True, initializedcheck=False
"""Compiled kernels. Semantics are defined by the numpy backend in
_numpy.py; keep the two in lockstep (test_kernel_parity compares them)."""

import numpy as np

cimport cython
cimport numpy as cnp
from libc.math cimport exp, tanh

cnp.import_array()

ctypedef fused real:
    float
    double


cdef inline real _sigmoid(real x) noexcept nogil:
    cdef real e
    if x >= 0:
        return <real>(1.0 / (1.0 + exp(-x)))
    e = <real>exp(x)
    return <real>(e / (1.0 + e))


cdef object _empty(tuple shape, bint single):
    return np.empty(shape, dtype=np.float32 if single else np.float64)


cdef object _zeros(tuple shape, bint single):
    return np.zeros(shape, dtype=np.float32 if single else np.float64)


def im2col_1d(real[:, :, ::1] x, Py_ssize_t width):
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], nc = x.shape[2]
    cdef Py_ssize_t l_out = length - width + 1
    out_np = _empty((nb, l_out, width * nc), real is float)
    cdef real[:, :, ::1] cols = out_np
    cdef Py_ssize_t i, t, w, c
    with nogil:
        for i in range(nb):
            for t in range(l_out):
                for w in range(width):
                    for c in range(nc):
                        cols[i, t, w * nc + c] = x[i, t + w, c]
    return out_np


def col2im_1d(real[:, :, ::1] dcols, Py_ssize_t length, Py_ssize_t width):
    cdef Py_ssize_t nb = dcols.shape[0], l_out = dcols.shape[1]
    cdef Py_ssize_t nc = dcols.shape[2] // width
    out_np = _zeros((nb, length, nc), real is float)
    cdef real[:, :, ::1] dx = out_np
    cdef Py_ssize_t i, t, w, c
    # w is the outer loop so each position accumulates in the same order as
    # the numpy backend (bitwise-identical sums)
    with nogil:
        for i in range(nb):
            for w in range(width):
                for t in range(l_out):
                    for c in range(nc):
                        dx[i, t + w, c] += dcols[i, t, w * nc + c]
    return out_np


def maxpool_time_forward(real[:, :, ::1] x, cnp.int64_t[::1] lengths):
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], nf = x.shape[2]
    out_np = _empty((nb, nf), real is float)
    arg_np = np.empty((nb, nf), dtype=np.int64)
    cdef real[:, ::1] out = out_np
    cdef cnp.int64_t[:, ::1] arg = arg_np
    cdef Py_ssize_t i, t, f, n
    with nogil:
        for i in range(nb):
            n = lengths[i]
            if n > length:
                n = length
            if n <= 0:
                for f in range(nf):
                    out[i, f] = 0.0
                    arg[i, f] = -1
                continue
            for f in range(nf):
                out[i, f] = x[i, 0, f]
                arg[i, f] = 0
            for t in range(1, n):
                for f in range(nf):
                    if x[i, t, f] > out[i, f]:
                        out[i, f] = x[i, t, f]
                        arg[i, f] = t
    return out_np, arg_np


def maxpool_time_backward(real[:, ::1] dout, cnp.int64_t[:, ::1] arg, Py_ssize_t length):
    cdef Py_ssize_t nb = dout.shape[0], nf = dout.shape[1]
    out_np = _zeros((nb, length, nf), real is float)
    cdef real[:, :, ::1] dx = out_np
    cdef Py_ssize_t i, f
    cdef cnp.int64_t t
    with nogil:
        for i in range(nb):
            for f in range(nf):
                t = arg[i, f]
                if t >= 0:
                    dx[i, t, f] = dout[i, f]
    return out_np


def maxpool1d_forward(real[:, :, ::1] x, Py_ssize_t width, Py_ssize_t stride):
    cdef Py_ssize_t nb = x.shape[0], length = x.shape[1], nc = x.shape[2]
    cdef Py_ssize_t l_out = (length - width) // stride + 1
    out_np = _empty((nb, l_out, nc), real is float)
    arg_np = np.empty((nb, l_out, nc), dtype=np.int64)
    cdef real[:, :, ::1] out = out_np
    cdef cnp.int64_t[:, :, ::1] arg = arg_np
    cdef Py_ssize_t i, t, w, c, s
    cdef real v
    with nogil:
        for i in range(nb):
            for t in range(l_out):
                s = t * stride
                for c in range(nc):
                    out[i, t, c] = x[i, s, c]
                    arg[i, t, c] = s
                for w in range(1, width):
                    for c in range(nc):
                        v = x[i, s + w, c]
                        if v > out[i, t, c]:
                            out[i, t, c] = v
                            arg[i, t, c] = s + w
    return out_np, arg_np


def maxpool1d_backward(real[:, :, ::1] dout, cnp.int64_t[:, :, ::1] arg,
                       Py_ssize_t length, Py_ssize_t width, Py_ssize_t stride):
    cdef Py_ssize_t nb = dout.shape[0], l_out = dout.shape[1], nc = dout.shape[2]
    out_np = _zeros((nb, length, nc), real is float)
    cdef real[:, :, ::1] dx = out_np
    cdef Py_ssize_t i, t, c
    with nogil:
        for i in range(nb):
            for t in range(l_out):
                for c in range(nc):
                    dx[i, arg[i, t, c], c] += dout[i, t, c]
    return out_np


def lstm_cell_forward(real[:, ::1] preact, real[:, ::1] c_prev):
    cdef Py_ssize_t nb = preact.shape[0], hid = c_prev.shape[1]
    h_np = _empty((nb, hid), real is float)
    c_np = _empty((nb, hid), real is float)
    gates_np = _empty((nb, 4 * hid), real is float)
    cdef real[:, ::1] h = h_np
    cdef real[:, ::1] c = c_np
    cdef real[:, ::1] gates = gates_np
    cdef Py_ssize_t i, j
    cdef real gi, gf, gg, go, cc
    with nogil:
        for i in range(nb):
            for j in range(hid):
                gi = _sigmoid(preact[i, j])
                gf = _sigmoid(preact[i, hid + j])
                gg = <real>tanh(preact[i, 2 * hid + j])
                go = _sigmoid(preact[i, 3 * hid + j])
                cc = gf * c_prev[i, j] + gi * gg
                gates[i, j] = gi
                gates[i, hid + j] = gf
                gates[i, 2 * hid + j] = gg
                gates[i, 3 * hid + j] = go
                c[i, j] = cc
                h[i, j] = go * <real>tanh(cc)
    return h_np, c_np, gates_np


def lstm_cell_backward(real[:, ::1] dh, real[:, ::1] dc, real[:, ::1] c_prev,
                       real[:, ::1] c, real[:, ::1] gates):
    cdef Py_ssize_t nb = dh.shape[0], hid = dh.shape[1]
    dpre_np = _empty((nb, 4 * hid), real is float)
    dcp_np = _empty((nb, hid), real is float)
    cdef real[:, ::1] dpre = dpre_np
    cdef real[:, ::1] dcp = dcp_np
    cdef Py_ssize_t i, j
    cdef real gi, gf, gg, go, tc, dct
    with nogil:
        for i in range(nb):
            for j in range(hid):
                gi = gates[i, j]
                gf = gates[i, hid + j]
                gg = gates[i, 2 * hid + j]
                go = gates[i, 3 * hid + j]
                tc = <real>tanh(c[i, j])
                dct = dc[i, j] + dh[i, j] * go * (1.0 - tc * tc)
                dpre[i, j] = dct * gg * gi * (1.0 - gi)
                dpre[i, hid + j] = dct * c_prev[i, j] * gf * (1.0 - gf)
                dpre[i, 2 * hid + j] = dct * gi * (1.0 - gg * gg)
                dpre[i, 3 * hid + j] = dh[i, j] * tc * go * (1.0 - go)
                dcp[i, j] = dct * gf
    return dpre_np, dcp_np


def embedding_grad(real[:, ::1] grad_table, cnp.int64_t[:, ::1] indices,
                   real[:, :, ::1] dout, Py_ssize_t pad_index=-1):
    cdef Py_ssize_t nb = indices.shape[0], length = indices.shape[1]
    cdef Py_ssize_t dim = dout.shape[2]
    cdef Py_ssize_t i, t, d
    cdef cnp.int64_t idx
    with nogil:
        for i in range(nb):
            for t in range(length):
                idx = indices[i, t]
                if idx == pad_index:
                    continue
                for d in range(dim):
                    grad_table[idx, d] += dout[i, t, d]
    return None
