# Compiled convolution kernels: the hot inner loops of synthesis.
# Same contracts as _ref.py; inputs are pre-padded, float64, C-contiguous.

import numpy as np

cimport numpy as cnp

cnp.import_array()


def conv2d_forward(double[:, :, :, ::1] x, double[:, :, :, ::1] w, int stride):
    cdef Py_ssize_t B = x.shape[0], C = x.shape[1], H = x.shape[2], W = x.shape[3]
    cdef Py_ssize_t K = w.shape[0], h = w.shape[2], kw = w.shape[3]
    cdef Py_ssize_t Ho = (H - h) // stride + 1
    cdef Py_ssize_t Wo = (W - kw) // stride + 1
    out_arr = np.zeros((B, K, Ho, Wo))
    cdef double[:, :, :, ::1] y = out_arr
    cdef Py_ssize_t b, k, c, i, j, di, dj
    cdef double acc
    with nogil:
        for b in range(B):
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        acc = 0.0
                        for c in range(C):
                            for di in range(h):
                                for dj in range(kw):
                                    acc += x[b, c, i * stride + di, j * stride + dj] * w[k, c, di, dj]
                        y[b, k, i, j] = acc
    return out_arr


def conv2d_backward_input(double[:, :, :, ::1] gy, double[:, :, :, ::1] w,
                          tuple x_shape, int stride):
    cdef Py_ssize_t B = gy.shape[0], K = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef Py_ssize_t C = w.shape[1], h = w.shape[2], kw = w.shape[3]
    gx_arr = np.zeros(x_shape)
    cdef double[:, :, :, ::1] gx = gx_arr
    cdef Py_ssize_t b, k, c, i, j, di, dj
    cdef double g
    with nogil:
        for b in range(B):
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        g = gy[b, k, i, j]
                        for c in range(C):
                            for di in range(h):
                                for dj in range(kw):
                                    gx[b, c, i * stride + di, j * stride + dj] += g * w[k, c, di, dj]
    return gx_arr


def conv2d_backward_kernel(double[:, :, :, ::1] gy, double[:, :, :, ::1] x,
                           tuple kernel_hw, int stride):
    cdef Py_ssize_t B = gy.shape[0], K = gy.shape[1], Ho = gy.shape[2], Wo = gy.shape[3]
    cdef Py_ssize_t C = x.shape[1]
    cdef Py_ssize_t h = kernel_hw[0], kw = kernel_hw[1]
    gw_arr = np.zeros((K, C, h, kw))
    cdef double[:, :, :, ::1] gw = gw_arr
    cdef Py_ssize_t b, k, c, i, j, di, dj
    cdef double g
    with nogil:
        for b in range(B):
            for k in range(K):
                for i in range(Ho):
                    for j in range(Wo):
                        g = gy[b, k, i, j]
                        for c in range(C):
                            for di in range(h):
                                for dj in range(kw):
                                    gw[k, c, di, dj] += g * x[b, c, i * stride + di, j * stride + dj]
    return gw_arr
