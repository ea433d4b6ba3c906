"""Backend dispatch for the hot numeric kernels.

``HSIA_BACKEND`` selects the implementation at import time:

* ``auto`` (default) — numba if it imports, else pure numpy
* ``numba``          — require the numba backend
* ``numpy``          — force the pure-numpy fallback

Both backends share one contract (see ``_kernels_np``); ``benchmarks/`` times
them against each other.
"""

import os

from . import _kernels_np as numpy_impl

numba_impl = None


def _resolve():
    choice = os.environ.get("HSIA_BACKEND", "auto").strip().lower()
    if choice not in ("auto", "numba", "numpy"):
        raise ValueError(f"HSIA_BACKEND must be auto, numba or numpy, got {choice!r}")
    if choice == "numpy":
        return numpy_impl
    try:
        from . import _kernels_nb
    except ImportError:
        if choice == "numba":
            raise
        return numpy_impl
    global numba_impl
    numba_impl = _kernels_nb
    return _kernels_nb


_impl = _resolve()
BACKEND = _impl.BACKEND_NAME

conv2d_forward = _impl.conv2d_forward
conv2d_input_gradient = _impl.conv2d_input_gradient
conv2d_param_gradients = _impl.conv2d_param_gradients
maxpool2d_forward = _impl.maxpool2d_forward
maxpool2d_backward = _impl.maxpool2d_backward
box_filter_mean = _impl.box_filter_mean
downsample_mean = _impl.downsample_mean
upsample_nearest = _impl.upsample_nearest
