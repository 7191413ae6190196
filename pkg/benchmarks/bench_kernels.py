#!/usr/bin/env python3
"""Benchmark the compiled kernel core against the numpy fallback.

Runs each kernel on training-sized inputs, then a full forward+backward
step of every model kind under both backends. Usage:

    python benchmarks/bench_kernels.py [--repeats 30]
"""

import argparse
import time

import numpy as np

import malclass.nn.kernels as kern
from malclass.nn.kernels import _numpy

try:
    from malclass.nn.kernels import _native
except ImportError:
    _native = None


def timeit(fn, repeats):
    fn()  # warm up
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def kernel_cases(rng):
    """(name, callable-factory) pairs at text-classifier batch sizes."""
    x_conv = np.ascontiguousarray(rng.normal(size=(64, 128, 200)).astype(np.float32))
    dcols = np.ascontiguousarray(rng.normal(size=(64, 124, 5 * 200)).astype(np.float32))
    x_pool = np.ascontiguousarray(rng.normal(size=(64, 126, 128)).astype(np.float32))
    lengths = rng.integers(1, 127, size=64).astype(np.int64)
    x_char = np.ascontiguousarray(rng.normal(size=(64, 336, 256)).astype(np.float32))
    pre = np.ascontiguousarray(rng.normal(size=(64, 512)).astype(np.float32))
    c_prev = np.ascontiguousarray(rng.normal(size=(64, 128)).astype(np.float32))
    dh = np.ascontiguousarray(rng.normal(size=(64, 128)).astype(np.float32))
    idx = rng.integers(0, 36000, size=(64, 128)).astype(np.int64)
    dout = np.ascontiguousarray(rng.normal(size=(64, 128, 200)).astype(np.float32))

    h, c, gates = _numpy.lstm_cell_forward(pre, c_prev)
    _, arg_t = _numpy.maxpool_time_forward(x_pool, lengths)
    _, arg_p = _numpy.maxpool1d_forward(x_char, 3, 3)
    d_time = np.ascontiguousarray(rng.normal(size=(64, 128)).astype(np.float32))
    d_pool = np.ascontiguousarray(
        rng.normal(size=(64, arg_p.shape[1], 256)).astype(np.float32))

    def cases(impl):
        table = np.zeros((36000, 200), dtype=np.float32)
        return [
            ("im2col_1d (w=5)", lambda: impl.im2col_1d(x_conv, 5)),
            ("col2im_1d (w=5)", lambda: impl.col2im_1d(dcols, 128, 5)),
            ("maxpool_time fwd", lambda: impl.maxpool_time_forward(x_pool, lengths)),
            ("maxpool_time bwd", lambda: impl.maxpool_time_backward(d_time, arg_t, 126)),
            ("maxpool1d fwd (w=3)", lambda: impl.maxpool1d_forward(x_char, 3, 3)),
            ("maxpool1d bwd (w=3)", lambda: impl.maxpool1d_backward(d_pool, arg_p, 336, 3, 3)),
            ("lstm cell fwd", lambda: impl.lstm_cell_forward(pre, c_prev)),
            ("lstm cell bwd", lambda: impl.lstm_cell_backward(dh, dh, c_prev, c, gates)),
            ("embedding grad", lambda: impl.embedding_grad(table, idx, dout, 0)),
        ]
    return cases


def model_step(kind):
    from malclass.models import ClassifierSpec, build

    rng = np.random.default_rng(0)
    if kind == "char_cnn":
        spec = ClassifierSpec(kind=kind, num_classes=18, max_len=1014)
        high = 71
    else:
        spec = ClassifierSpec(kind=kind, num_classes=18, vocab_size=36000,
                              embedding_dim=200, max_len=128)
        high = 36000
    model = build(spec, seed=0)
    x = rng.integers(1, high, size=(64, spec.max_len)).astype(np.int32)
    lengths = rng.integers(1, spec.max_len + 1, size=64).astype(np.int64)
    y = rng.integers(0, 18, size=64).astype(np.int64)
    return lambda: model.compute_loss(x, lengths, y, train=True, want_grads=True)


DEFAULT_MIX = {name: getattr(kern, name) for name in kern.__all__
               if name != "BACKEND"}
ALL_NUMPY = {name: getattr(_numpy, name) for name in DEFAULT_MIX}


def swap_backend(mapping):
    for name, fn in mapping.items():
        setattr(kern, name, fn)


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    if _native is None:
        print("compiled kernels unavailable; timing the numpy backend only")
    rng = np.random.default_rng(42)
    cases = kernel_cases(rng)

    print(f"{'kernel':24s} {'numpy':>10s} {'native':>10s} {'speedup':>8s}")
    for (name, py_fn), nat in zip(
            cases(_numpy),
            cases(_native) if _native else cases(_numpy)):
        t_py = timeit(py_fn, args.repeats)
        if _native:
            t_nat = timeit(nat[1], args.repeats)
            print(f"{name:24s} {t_py * 1e3:9.3f}ms {t_nat * 1e3:9.3f}ms "
                  f"{t_py / t_nat:7.1f}x")
        else:
            print(f"{name:24s} {t_py * 1e3:9.3f}ms {'-':>10s} {'-':>8s}")

    # full training steps: pure numpy vs the composed default backend
    # (compiled kernels where they win, numpy for the LSTM pointwise ops)
    print()
    print(f"{'model step (B=64)':24s} {'numpy':>10s} {'default':>10s} {'speedup':>8s}")
    for kind in ("text_cnn", "text_rnn", "text_rcnn", "char_cnn"):
        times = {}
        configs = [("python", ALL_NUMPY)]
        if _native:
            configs.append(("default", DEFAULT_MIX))
        for label, mapping in configs:
            swap_backend(mapping)
            try:
                times[label] = timeit(model_step(kind), max(3, args.repeats // 4))
            finally:
                swap_backend(DEFAULT_MIX)
        if _native:
            print(f"{kind:24s} {times['python'] * 1e3:9.1f}ms "
                  f"{times['default'] * 1e3:9.1f}ms "
                  f"{times['python'] / times['default']:7.2f}x")
        else:
            print(f"{kind:24s} {times['python'] * 1e3:9.1f}ms {'-':>10s} {'-':>8s}")


if __name__ == "__main__":
    main()
