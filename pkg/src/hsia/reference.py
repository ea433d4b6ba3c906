"""Brute-force reference implementations used as test oracles.

Everything here is written as plain, slow loop nests in float64 with no shared
code or clever indexing, so the fast implementations in ``kernels``/``filters``/
``attacks``/``metrics`` can be checked against an independent formulation.
These functions are imported by the test suite and by ``verify``; they are not
part of the production path.
"""

import numpy as np


# ---------------------------------------------------------------------------
# convolution / pooling


def conv2d_forward_ref(x, w, b, stride=1):
    """Direct valid cross-correlation. x (N,C,H,W), w (F,C,kh,kw), b (F,)."""
    x = np.asarray(x, dtype=np.float64)
    w = np.asarray(w, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    n_in, c_in, h_in, w_in = x.shape
    f_out, _, kh, kw = w.shape
    h_out = (h_in - kh) // stride + 1
    w_out = (w_in - kw) // stride + 1
    y = np.zeros((n_in, f_out, h_out, w_out))
    for n in range(n_in):
        for f in range(f_out):
            for i in range(h_out):
                for j in range(w_out):
                    acc = b[f]
                    for c in range(c_in):
                        for p in range(kh):
                            for q in range(kw):
                                acc += x[n, c, i * stride + p, j * stride + q] * w[f, c, p, q]
                    y[n, f, i, j] = acc
    return y


def maxpool2d_forward_ref(x, size, stride):
    x = np.asarray(x, dtype=np.float64)
    n_in, c_in, h_in, w_in = x.shape
    h_out = (h_in - size) // stride + 1
    w_out = (w_in - size) // stride + 1
    y = np.zeros((n_in, c_in, h_out, w_out))
    for n in range(n_in):
        for c in range(c_in):
            for i in range(h_out):
                for j in range(w_out):
                    block = x[n, c, i * stride:i * stride + size, j * stride:j * stride + size]
                    y[n, c, i, j] = block.max()
    return y


# ---------------------------------------------------------------------------
# filters


def box_filter_mean_ref(plane, window):
    """Mean filter on a single 2-D plane; borders renormalize by the in-bounds count."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    r = window // 2
    out = np.zeros((h, w))
    for i in range(h):
        for j in range(w):
            acc = 0.0
            cnt = 0
            for di in range(-r, r + 1):
                for dj in range(-r, r + 1):
                    ii, jj = i + di, j + dj
                    if 0 <= ii < h and 0 <= jj < w:
                        acc += plane[ii, jj]
                        cnt += 1
            out[i, j] = acc / cnt
    return out


def downsample_mean_ref(plane, factor):
    """Non-overlapping block means; ragged trailing blocks average what exists."""
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    h_out = (h + factor - 1) // factor
    w_out = (w + factor - 1) // factor
    out = np.zeros((h_out, w_out))
    for i in range(h_out):
        for j in range(w_out):
            block = plane[i * factor:min(h, (i + 1) * factor),
                          j * factor:min(w, (j + 1) * factor)]
            out[i, j] = block.mean()
    return out


def upsample_nearest_ref(plane, target_hw):
    plane = np.asarray(plane, dtype=np.float64)
    h, w = plane.shape
    h_t, w_t = target_hw
    out = np.zeros((h_t, w_t))
    for i in range(h_t):
        for j in range(w_t):
            out[i, j] = plane[(i * h) // h_t, (j * w) // w_t]
    return out


# ---------------------------------------------------------------------------
# multiscale aggregation (the MIA pyramid, spelled out per plane)


def multiscale_residual_ref(grad, scales, epsilon, sign):
    """Reference for the residual-mode multiscale map.

    grad (K,h,w) float; returns delta (K,h,w) float32: the per-scale
    downsample/upsample round trips of each component gradient are summed over
    components and scales into one spatial map, normalized to unit L-inf, scaled
    by sign*epsilon, and broadcast across components. All in float64, one final
    rounding to float32.
    """
    grad = np.asarray(grad, dtype=np.float64)
    k, h, w = grad.shape
    agg = np.zeros((h, w))
    for s in scales:
        for d in range(k):
            low = downsample_mean_ref(grad[d], s)
            agg += upsample_nearest_ref(low, (h, w))
    m = np.max(np.abs(agg))
    if m == 0.0:
        return np.zeros((k, h, w), dtype=np.float32)
    p = agg / m
    delta = np.broadcast_to(sign * epsilon * p, (k, h, w))
    return np.asarray(delta, dtype=np.float32)


def multiscale_literal_ref(patch, grad, scales, epsilon, sign):
    """Reference delta for literal mode: perturb the downsampled image content,
    upsample, aggregate over components and scales, scale by epsilon."""
    patch = np.asarray(patch, dtype=np.float64)
    grad = np.asarray(grad, dtype=np.float64)
    k, h, w = patch.shape
    agg = np.zeros((h, w))
    for s in scales:
        for d in range(k):
            low_x = downsample_mean_ref(patch[d], s)
            low_g = downsample_mean_ref(grad[d], s)
            pert = low_x + sign * epsilon * low_g
            agg += upsample_nearest_ref(pert, (h, w))
    return np.asarray(np.broadcast_to(epsilon * agg, (k, h, w)), dtype=np.float32)


# ---------------------------------------------------------------------------
# metrics


def confusion_ref(truth, pred, num_classes):
    m = np.zeros((num_classes, num_classes), dtype=np.int64)
    for t, p in zip(truth, pred):
        m[int(t), int(p)] += 1
    return m


def overall_accuracy_ref(m):
    m = np.asarray(m, dtype=np.float64)
    return float(np.trace(m) / m.sum())

def average_accuracy_ref(m):
    m = np.asarray(m, dtype=np.float64)
    accs = []
    for i in range(m.shape[0]):
        row = m[i].sum()
        if row > 0:
            accs.append(m[i, i] / row)
    return float(np.mean(accs))


def cohens_kappa_ref(m):
    m = np.asarray(m, dtype=np.float64)
    total = m.sum()
    p_o = np.trace(m) / total
    p_e = 0.0
    for i in range(m.shape[0]):
        p_e += (m[i, :].sum() / total) * (m[:, i].sum() / total)
    if p_e == 1.0:
        return 1.0 if p_o == 1.0 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def perturbation_budget_ref(clean, adv, tau=1e-8):
    """Budgets with the last two axes spatial; leading axes are components."""
    clean = np.asarray(clean, dtype=np.float64)
    adv = np.asarray(adv, dtype=np.float64)
    diff = np.abs(adv - clean)
    flat = diff.reshape(-1, diff.shape[-2], diff.shape[-1])
    l0 = 0
    for i in range(flat.shape[1]):
        for j in range(flat.shape[2]):
            if np.any(flat[:, i, j] > tau):
                l0 += 1
    l2 = float(np.sqrt(np.sum(diff ** 2)))
    linf = float(diff.max()) if diff.size else 0.0
    return l0, l2, linf


# ---------------------------------------------------------------------------
# finite differences


def directional_derivative(fn, x, direction, h=1e-3):
    """Central finite difference of scalar-valued fn along a direction."""
    x = np.asarray(x, dtype=np.float64)
    d = np.asarray(direction, dtype=np.float64)
    return (fn(x + h * d) - fn(x - h * d)) / (2.0 * h)
