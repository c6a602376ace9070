"""Hot numeric kernels: graph-attention forward/backward over padded neighbor arrays.

Two interchangeable backends live here. ``gat_numpy`` is the vectorized
pure-numpy reference; ``gat_numba`` holds ``@njit`` twins of the same
functions. The numba backend is used when importable unless the
environment variable ``FLOWGAT_DISABLE_NUMBA`` is set to a truthy value,
in which case the numpy path is selected. ``benchmarks/bench_kernels.py``
compares the two.

Everything else in the model (projections, LSTM, dense head) is matmul
dominated and stays on numpy/BLAS in both modes.
"""

import os

from . import gat_numpy

_flag = os.environ.get("FLOWGAT_DISABLE_NUMBA", "").strip().lower()
NUMBA_DISABLED = _flag not in ("", "0", "false", "no")

if NUMBA_DISABLED:
    gat_numba = None
else:
    try:
        from . import gat_numba
    except ImportError:
        gat_numba = None

if gat_numba is not None:
    BACKEND = "numba"
    gat_forward = gat_numba.gat_forward
    gat_backward = gat_numba.gat_backward
else:
    BACKEND = "numpy"
    gat_forward = gat_numpy.gat_forward
    gat_backward = gat_numpy.gat_backward

__all__ = ["gat_forward", "gat_backward", "BACKEND", "NUMBA_DISABLED", "gat_numpy", "gat_numba"]
