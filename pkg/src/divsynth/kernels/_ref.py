"""Pure-NumPy convolution kernels (fallback backend).

All functions assume the input has already been zero-padded; padding is
handled by the calling op.  Shapes follow NCHW / KChw conventions.
"""

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def conv2d_forward(x, w, stride):
    """Cross-correlate x[B,C,H,W] with w[K,C,h,w] at the given stride."""
    h, kw = w.shape[2], w.shape[3]
    cols = sliding_window_view(x, (h, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.einsum("bcijhw,kchw->bkij", cols, w, optimize=True)


def conv2d_backward_input(gy, w, x_shape, stride):
    """Gradient of conv2d_forward w.r.t. the (padded) input."""
    h, kw = w.shape[2], w.shape[3]
    ho, wo = gy.shape[2], gy.shape[3]
    gx = np.zeros(x_shape)
    for i in range(h):
        for j in range(kw):
            # contribution of kernel tap (i, j) lands on a strided grid
            contrib = np.tensordot(gy, w[:, :, i, j], axes=([1], [0]))
            gx[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                contrib.transpose(0, 3, 1, 2)
            )
    return gx


def conv2d_backward_kernel(gy, x, kernel_hw, stride):
    """Gradient of conv2d_forward w.r.t. the kernel."""
    h, kw = kernel_hw
    cols = sliding_window_view(x, (h, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    return np.einsum("bkij,bcijhw->kchw", gy, cols, optimize=True)
