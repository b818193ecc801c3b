"""Backend selection for the convolution lowering kernels.

The compiled extension (``mgan._kernels``) is used when importable.  Setting
``MGAN_PURE_PYTHON=1`` forces the NumPy fallback.  Both backends produce
bit-identical columns; col2im may differ from the fallback only in the
summation order of overlapping taps.
"""
import os

from . import _kernels_py

BACKEND = "python"

if os.environ.get("MGAN_PURE_PYTHON", "") not in ("1", "true", "yes"):
    try:
        from . import _kernels as _impl

        BACKEND = "cython"
    except ImportError:  # extension not built
        _impl = _kernels_py
else:
    _impl = _kernels_py

im2col = _impl.im2col
col2im = _impl.col2im

__all__ = ["BACKEND", "im2col", "col2im"]
