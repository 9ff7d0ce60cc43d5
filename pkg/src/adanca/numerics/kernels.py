"""Backend selection for the hot kernels.

The compiled extension is preferred; set ``ADANCA_PURE_PYTHON=1`` to force the
NumPy fallback (used by the benchmark and the cross-backend tests).
"""

import os

from . import _pykernels as python_backend

try:
    from . import _ckernels as compiled_backend
except ImportError:  # extension not built
    compiled_backend = None

if compiled_backend is not None and not os.environ.get("ADANCA_PURE_PYTHON"):
    _impl = compiled_backend
    BACKEND = "cython"
else:
    _impl = python_backend
    BACKEND = "python"

dwconv_forward = _impl.dwconv_forward
dwconv_backward_input = _impl.dwconv_backward_input
dwconv_backward_kernel = _impl.dwconv_backward_kernel
xoshiro_fill = _impl.xoshiro_fill
gelu_forward = _impl.gelu_forward
gelu_backward = _impl.gelu_backward
