"""Numba kernel backend.

Same contract and dtype behaviour as ``_kernels_np``: filter ops accumulate in
float64 and store back in the input dtype; convolution accumulates in the input
dtype. Kernels are explicit loop nests compiled with @njit(cache=True); the thin
wrappers below handle reshaping and output allocation.
"""

import numpy as np
from numba import njit

BACKEND_NAME = "numba"


# The kernel loops put the output-channel axis innermost over transposed
# (C, kh, kw, F) weights, so the compiler vectorizes across the F contiguous
# filter lanes. Accumulation order is fixed -> bit-deterministic per backend.

@njit(cache=True)
def _conv2d_forward(x, wt, b, stride, y):
    n_in, c_in = x.shape[0], x.shape[1]
    kh, kw, f_out = wt.shape[1], wt.shape[2], wt.shape[3]
    ho, wo = y.shape[2], y.shape[3]
    acc = np.empty(f_out, y.dtype)
    for n in range(n_in):
        for i in range(ho):
            i0 = i * stride
            for j in range(wo):
                j0 = j * stride
                for f in range(f_out):
                    acc[f] = b[f]
                for c in range(c_in):
                    for p in range(kh):
                        for q in range(kw):
                            xv = x[n, c, i0 + p, j0 + q]
                            for f in range(f_out):
                                acc[f] += xv * wt[c, p, q, f]
                for f in range(f_out):
                    y[n, f, i, j] = acc[f]


@njit(cache=True, fastmath={"reassoc", "contract", "nsz"})
def _conv2d_input_gradient(gy, wt, stride, gx):
    n_in, f_out, ho, wo = gy.shape
    c_in, kh, kw = wt.shape[0], wt.shape[1], wt.shape[2]
    gv = np.empty(f_out, gy.dtype)
    for n in range(n_in):
        for i in range(ho):
            i0 = i * stride
            for j in range(wo):
                j0 = j * stride
                for f in range(f_out):
                    gv[f] = gy[n, f, i, j]
                for c in range(c_in):
                    for p in range(kh):
                        for q in range(kw):
                            acc = gv[0] * 0
                            for f in range(f_out):
                                acc += gv[f] * wt[c, p, q, f]
                            gx[n, c, i0 + p, j0 + q] += acc


@njit(cache=True)
def _conv2d_param_gradients(x, gy, stride, gwt, gb):
    n_in, f_out, ho, wo = gy.shape
    c_in, kh, kw = gwt.shape[0], gwt.shape[1], gwt.shape[2]
    gv = np.empty(f_out, gy.dtype)
    for n in range(n_in):
        for i in range(ho):
            i0 = i * stride
            for j in range(wo):
                j0 = j * stride
                for f in range(f_out):
                    gv[f] = gy[n, f, i, j]
                    gb[f] += gv[f]
                for c in range(c_in):
                    for p in range(kh):
                        for q in range(kw):
                            xv = x[n, c, i0 + p, j0 + q]
                            for f in range(f_out):
                                gwt[c, p, q, f] += xv * gv[f]


@njit(cache=True)
def _maxpool2d_forward(x, size, stride, y, switches):
    n_in, c_in, ho, wo = y.shape
    w_in = x.shape[3]
    for n in range(n_in):
        for c in range(c_in):
            for i in range(ho):
                i0 = i * stride
                for j in range(wo):
                    j0 = j * stride
                    best = x[n, c, i0, j0]
                    bi, bj = i0, j0
                    for p in range(size):
                        for q in range(size):
                            v = x[n, c, i0 + p, j0 + q]
                            if v > best:
                                best = v
                                bi, bj = i0 + p, j0 + q
                    y[n, c, i, j] = best
                    switches[n, c, i, j] = bi * w_in + bj


@njit(cache=True)
def _maxpool2d_backward(gy, switches, gx_flat):
    n_in, c_in, ho, wo = gy.shape
    for n in range(n_in):
        for c in range(c_in):
            for i in range(ho):
                for j in range(wo):
                    gx_flat[n, c, switches[n, c, i, j]] += gy[n, c, i, j]


@njit(cache=True)
def _box_filter_mean(planes, window, out):
    b_n, h, w = planes.shape
    r = window // 2
    for b in range(b_n):
        for i in range(h):
            lo_i = max(i - r, 0)
            hi_i = min(i + r, h - 1)
            for j in range(w):
                lo_j = max(j - r, 0)
                hi_j = min(j + r, w - 1)
                acc = 0.0
                for ii in range(lo_i, hi_i + 1):
                    for jj in range(lo_j, hi_j + 1):
                        acc += planes[b, ii, jj]
                out[b, i, j] = acc / ((hi_i - lo_i + 1) * (hi_j - lo_j + 1))


@njit(cache=True)
def _downsample_mean(planes, factor, out):
    b_n, h, w = planes.shape
    ho, wo = out.shape[1], out.shape[2]
    for b in range(b_n):
        for i in range(ho):
            i1 = min(h, (i + 1) * factor)
            for j in range(wo):
                j1 = min(w, (j + 1) * factor)
                acc = 0.0
                for ii in range(i * factor, i1):
                    for jj in range(j * factor, j1):
                        acc += planes[b, ii, jj]
                out[b, i, j] = acc / ((i1 - i * factor) * (j1 - j * factor))


@njit(cache=True)
def _upsample_nearest(planes, out):
    b_n, h, w = planes.shape
    ht, wt = out.shape[1], out.shape[2]
    for b in range(b_n):
        for i in range(ht):
            si = (i * h) // ht
            for j in range(wt):
                out[b, i, j] = planes[b, si, (j * w) // wt]


def conv2d_forward(x, w, b, stride=1):
    x = np.ascontiguousarray(x)
    wt = np.ascontiguousarray(np.transpose(w, (1, 2, 3, 0)))
    ho = (x.shape[2] - w.shape[2]) // stride + 1
    wo = (x.shape[3] - w.shape[3]) // stride + 1
    y = np.empty((x.shape[0], w.shape[0], ho, wo), dtype=x.dtype)
    _conv2d_forward(x, wt, np.ascontiguousarray(b), stride, y)
    return y


def conv2d_input_gradient(gy, w, in_hw, stride=1):
    gy = np.ascontiguousarray(gy)
    wt = np.ascontiguousarray(np.transpose(w, (1, 2, 3, 0)))
    gx = np.zeros((gy.shape[0], w.shape[1], in_hw[0], in_hw[1]), dtype=gy.dtype)
    _conv2d_input_gradient(gy, wt, stride, gx)
    return gx


def conv2d_param_gradients(x, gy, kernel_hw, stride=1):
    x = np.ascontiguousarray(x)
    gy = np.ascontiguousarray(gy)
    gwt = np.zeros((x.shape[1], kernel_hw[0], kernel_hw[1], gy.shape[1]), dtype=x.dtype)
    gb = np.zeros(gy.shape[1], dtype=x.dtype)
    _conv2d_param_gradients(x, gy, stride, gwt, gb)
    return np.ascontiguousarray(np.transpose(gwt, (3, 0, 1, 2))), gb


def maxpool2d_forward(x, size, stride):
    x = np.ascontiguousarray(x)
    ho = (x.shape[2] - size) // stride + 1
    wo = (x.shape[3] - size) // stride + 1
    y = np.empty((x.shape[0], x.shape[1], ho, wo), dtype=x.dtype)
    switches = np.empty((x.shape[0], x.shape[1], ho, wo), dtype=np.int64)
    _maxpool2d_forward(x, size, stride, y, switches)
    return y, switches


def maxpool2d_backward(gy, switches, in_hw):
    gy = np.ascontiguousarray(gy)
    gx = np.zeros((gy.shape[0], gy.shape[1], in_hw[0] * in_hw[1]), dtype=gy.dtype)
    _maxpool2d_backward(gy, switches, gx)
    return gx.reshape(gy.shape[0], gy.shape[1], in_hw[0], in_hw[1])


def box_filter_mean(field, window):
    field = np.asarray(field)
    if window == 1:
        return field.copy()
    shape = field.shape
    planes = np.ascontiguousarray(field.reshape(-1, shape[-2], shape[-1]))
    out = np.empty_like(planes)
    _box_filter_mean(planes, window, out)
    return out.reshape(shape)


def downsample_mean(field, factor):
    field = np.asarray(field)
    if factor == 1:
        return field.copy()
    shape = field.shape
    h, w = shape[-2], shape[-1]
    ho = (h + factor - 1) // factor
    wo = (w + factor - 1) // factor
    planes = np.ascontiguousarray(field.reshape(-1, h, w))
    out = np.empty((planes.shape[0], ho, wo), dtype=field.dtype)
    _downsample_mean(planes, factor, out)
    return out.reshape(shape[:-2] + (ho, wo))


def upsample_nearest(field, target_hw):
    field = np.asarray(field)
    shape = field.shape
    planes = np.ascontiguousarray(field.reshape(-1, shape[-2], shape[-1]))
    out = np.empty((planes.shape[0], target_hw[0], target_hw[1]), dtype=field.dtype)
    _upsample_nearest(planes, out)
    return out.reshape(shape[:-2] + tuple(target_hw))
