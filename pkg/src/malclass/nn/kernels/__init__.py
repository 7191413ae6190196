"""Hot-loop kernels with a compiled core and a numpy fallback.

The compiled extension (`_native`, Cython) is used when it imported
successfully; otherwise the numpy implementations take over. Set
MALCLASS_KERNELS=python or =native to force a backend (native raises if
the extension is missing).

The LSTM cell pointwise ops are the exception: they are elementwise
transcendental math where numpy's SIMD loops beat scalar compiled code
(see benchmarks/bench_kernels.py), so they always run on the numpy path.
"""

import os

from . import _numpy

_choice = os.environ.get("MALCLASS_KERNELS", "auto")
if _choice not in ("auto", "native", "python"):
    raise RuntimeError(f"MALCLASS_KERNELS must be auto, native or python, not {_choice!r}")

_impl = _numpy
BACKEND = "python"
if _choice in ("auto", "native"):
    try:
        from . import _native as _impl  # type: ignore[no-redef]
        BACKEND = "native"
    except ImportError:
        if _choice == "native":
            raise
        _impl = _numpy

im2col_1d = _impl.im2col_1d
col2im_1d = _impl.col2im_1d
maxpool_time_forward = _impl.maxpool_time_forward
maxpool_time_backward = _impl.maxpool_time_backward
maxpool1d_forward = _impl.maxpool1d_forward
maxpool1d_backward = _impl.maxpool1d_backward
embedding_grad = _impl.embedding_grad
lstm_cell_forward = _numpy.lstm_cell_forward
lstm_cell_backward = _numpy.lstm_cell_backward

__all__ = [
    "BACKEND",
    "im2col_1d", "col2im_1d",
    "maxpool_time_forward", "maxpool_time_backward",
    "maxpool1d_forward", "maxpool1d_backward",
    "lstm_cell_forward", "lstm_cell_backward",
    "embedding_grad",
]
