"""Convolution kernel backend selection.

The compiled Cython extension is preferred when it was built; otherwise the
NumPy fallback is used.  Set DIVSYNTH_KERNELS=python or =cython to force a
backend (forcing cython raises if the extension is missing).
"""

import os

_requested = os.environ.get("DIVSYNTH_KERNELS", "auto")
if _requested not in ("auto", "cython", "python"):
    raise ValueError(f"DIVSYNTH_KERNELS must be auto, cython or python, got {_requested!r}")

if _requested == "python":
    from . import _ref as _impl

    BACKEND = "python"
else:
    try:
        from . import _convkernels as _impl  # type: ignore[attr-defined]

        BACKEND = "cython"
    except ImportError:
        if _requested == "cython":
            raise
        from . import _ref as _impl

        BACKEND = "python"

conv2d_forward = _impl.conv2d_forward
conv2d_backward_input = _impl.conv2d_backward_input
conv2d_backward_kernel = _impl.conv2d_backward_kernel


def backend_name() -> str:
    return BACKEND
