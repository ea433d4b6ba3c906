"""Pure-numpy kernel backend.

Convolution uses strided window views fed to tensordot (BLAS); the filter ops
accumulate in float64 and cast back to the input dtype so float32 fields keep
1e-6 agreement with the loop oracles. All functions are stateless and leave
their inputs untouched.
"""

import numpy as np
from numpy.lib.stride_tricks import as_strided

BACKEND_NAME = "numpy"


def _windows(x, kh, kw, sh, sw):
    """View of shape (N, C, Ho, Wo, kh, kw) over x (N, C, H, W)."""
    n, c, h, w = x.shape
    ho = (h - kh) // sh + 1
    wo = (w - kw) // sw + 1
    sn, sc, si, sj = x.strides
    return as_strided(x, (n, c, ho, wo, kh, kw), (sn, sc, si * sh, sj * sw, si, sj))


def conv2d_forward(x, w, b, stride=1):
    x = np.ascontiguousarray(x)
    win = _windows(x, w.shape[2], w.shape[3], stride, stride)
    y = np.tensordot(win, w, axes=([1, 4, 5], [1, 2, 3]))  # (N, Ho, Wo, F)
    y = np.transpose(y, (0, 3, 1, 2))
    return np.ascontiguousarray(y) + b[None, :, None, None]


def conv2d_input_gradient(gy, w, in_hw, stride=1):
    gy = np.ascontiguousarray(gy)
    n, f, ho, wo = gy.shape
    _, c, kh, kw = w.shape
    h, w_in = in_hw
    if stride > 1:
        hd, wd = (ho - 1) * stride + 1, (wo - 1) * stride + 1
        gyd = np.zeros((n, f, hd, wd), dtype=gy.dtype)
        gyd[:, :, ::stride, ::stride] = gy
    else:
        hd, wd = ho, wo
        gyd = gy
    gyp = np.pad(gyd, ((0, 0), (0, 0), (kh - 1, kh - 1), (kw - 1, kw - 1)))
    hr, wr = hd + kh - 1, wd + kw - 1
    sn, sf, si, sj = gyp.strides
    win = as_strided(gyp, (n, f, hr, wr, kh, kw), (sn, sf, si, sj, si, sj))
    wf = np.ascontiguousarray(w[:, :, ::-1, ::-1])
    gx = np.tensordot(win, wf, axes=([1, 4, 5], [0, 2, 3]))  # (N, Hr, Wr, C)
    gx = np.ascontiguousarray(np.transpose(gx, (0, 3, 1, 2)))
    if (hr, wr) != (h, w_in):
        full = np.zeros((n, c, h, w_in), dtype=gy.dtype)
        full[:, :, :hr, :wr] = gx
        return full
    return gx


def conv2d_param_gradients(x, gy, kernel_hw, stride=1):
    x = np.ascontiguousarray(x)
    gy = np.ascontiguousarray(gy)
    win = _windows(x, kernel_hw[0], kernel_hw[1], stride, stride)
    gw = np.tensordot(gy, win, axes=([0, 2, 3], [0, 2, 3]))  # (F, C, kh, kw)
    gb = gy.sum(axis=(0, 2, 3))
    return np.ascontiguousarray(gw), gb


def maxpool2d_forward(x, size, stride):
    x = np.ascontiguousarray(x)
    n, c, h, w = x.shape
    win = _windows(x, size, size, stride, stride)
    ho, wo = win.shape[2], win.shape[3]
    flat = win.reshape(n, c, ho, wo, size * size)
    arg = flat.argmax(axis=-1)
    y = np.take_along_axis(flat, arg[..., None], axis=-1)[..., 0]
    ii = (np.arange(ho) * stride)[None, None, :, None] + arg // size
    jj = (np.arange(wo) * stride)[None, None, None, :] + arg % size
    switches = (ii * w + jj).astype(np.int64)
    return np.ascontiguousarray(y), switches


def maxpool2d_backward(gy, switches, in_hw):
    n, c, ho, wo = gy.shape
    h, w = in_hw
    gx = np.zeros((n, c, h * w), dtype=gy.dtype)
    ni, ci = np.ogrid[:n, :c]
    np.add.at(gx, (ni[..., None, None], ci[..., None, None], switches), gy)
    return gx.reshape(n, c, h, w)


def box_filter_mean(field, window):
    field = np.asarray(field)
    shape = field.shape
    h, w = shape[-2], shape[-1]
    if window == 1:
        return field.copy()
    r = window // 2
    planes = np.ascontiguousarray(field.reshape(-1, h, w))
    padded = np.pad(planes.astype(np.float64), ((0, 0), (r, r), (r, r)))
    acc = np.zeros((planes.shape[0], h, w), dtype=np.float64)
    for di in range(window):
        for dj in range(window):
            acc += padded[:, di:di + h, dj:dj + w]
    idx = np.arange(h)
    cnt_i = np.minimum(idx + r, h - 1) - np.maximum(idx - r, 0) + 1
    idx = np.arange(w)
    cnt_j = np.minimum(idx + r, w - 1) - np.maximum(idx - r, 0) + 1
    acc /= cnt_i[:, None] * cnt_j[None, :]
    return acc.astype(field.dtype).reshape(shape)


def downsample_mean(field, factor):
    field = np.asarray(field)
    shape = field.shape
    h, w = shape[-2], shape[-1]
    if factor == 1:
        return field.copy()
    planes = field.reshape(-1, h, w).astype(np.float64)
    rows = np.arange(0, h, factor)
    cols = np.arange(0, w, factor)
    acc = np.add.reduceat(np.add.reduceat(planes, rows, axis=1), cols, axis=2)
    cnt_i = np.minimum(rows + factor, h) - rows
    cnt_j = np.minimum(cols + factor, w) - cols
    acc /= cnt_i[:, None] * cnt_j[None, :]
    out_shape = shape[:-2] + (len(rows), len(cols))
    return acc.astype(field.dtype).reshape(out_shape)


def upsample_nearest(field, target_hw):
    field = np.asarray(field)
    h, w = field.shape[-2], field.shape[-1]
    ht, wt = target_hw
    ii = (np.arange(ht) * h) // ht
    jj = (np.arange(wt) * w) // wt
    return np.ascontiguousarray(field[..., ii[:, None], jj[None, :]])
