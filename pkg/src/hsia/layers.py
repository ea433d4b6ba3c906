"""Reverse-mode layers for the patch classifier.

Each layer is stateless apart from its parameters: ``forward`` returns the
output plus an opaque cache, ``backward`` consumes that cache and the upstream
gradient and returns the input gradient plus parameter gradients (in the same
order as ``params()``). Layers are dtype-generic — float32 in production,
float64 in the gradient checks.
"""

import numpy as np

from . import kernels
from .errors import ConfigError


def glorot_uniform(rng, shape, fan_in, fan_out, dtype):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def _require_cache(cache):
    if cache is None:
        raise ConfigError("backward called without the cache returned by forward")
    return cache


class Conv2D:
    """Valid cross-correlation, square kernel, no padding."""

    kind = "conv2d"

    def __init__(self, in_channels, out_channels, kernel_size=3, stride=1):
        if kernel_size < 1 or stride < 1:
            raise ConfigError(f"bad Conv2D geometry: kernel {kernel_size}, stride {stride}")
        self.in_channels = int(in_channels)
        self.out_channels = int(out_channels)
        self.kernel_size = int(kernel_size)
        self.stride = int(stride)
        self.weight = None
        self.bias = None

    def init_params(self, rng, dtype=np.float32, zero=False):
        k = self.kernel_size
        shape = (self.out_channels, self.in_channels, k, k)
        fan_in = self.in_channels * k * k
        fan_out = self.out_channels * k * k
        if zero:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            self.weight = glorot_uniform(rng, shape, fan_in, fan_out, dtype)
        self.bias = np.zeros(self.out_channels, dtype=dtype)

    def params(self):
        return [self.weight, self.bias]

    def set_params(self, arrays):
        self.weight, self.bias = arrays

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if c != self.in_channels:
            raise ConfigError(
                f"Conv2D expects {self.in_channels} input channels, got shape {in_shape}")
        k, s = self.kernel_size, self.stride
        if h < k or w < k:
            raise ConfigError(f"Conv2D kernel {k} does not fit input {in_shape}")
        return (self.out_channels, (h - k) // s + 1, (w - k) // s + 1)

    def forward(self, x):
        if x.ndim != 4 or x.shape[1] != self.in_channels:
            raise ConfigError(
                f"Conv2D expects (N, {self.in_channels}, H, W), got shape {x.shape}")
        y = kernels.conv2d_forward(x, self.weight, self.bias, self.stride)
        return y, x

    def backward(self, cache, gy, with_param_grads=True):
        x = _require_cache(cache)
        gx = kernels.conv2d_input_gradient(gy, self.weight, x.shape[2:], self.stride)
        if not with_param_grads:
            return gx, None
        gw, gb = kernels.conv2d_param_gradients(
            x, gy, (self.kernel_size, self.kernel_size), self.stride)
        return gx, [gw, gb]


class ReLU:
    kind = "relu"

    def params(self):
        return []

    def set_params(self, arrays):
        pass

    def init_params(self, rng, dtype=np.float32, zero=False):
        pass

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        mask = x > 0
        return np.where(mask, x, x.dtype.type(0)), mask

    def backward(self, cache, gy, with_param_grads=True):
        mask = _require_cache(cache)
        return np.where(mask, gy, gy.dtype.type(0)), None


class MaxPool2D:
    kind = "maxpool2d"

    def __init__(self, size=2, stride=None):
        if size < 1:
            raise ConfigError(f"bad MaxPool2D size {size}")
        self.size = int(size)
        self.stride = int(stride) if stride is not None else int(size)

    def params(self):
        return []

    def set_params(self, arrays):
        pass

    def init_params(self, rng, dtype=np.float32, zero=False):
        pass

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < self.size or w < self.size:
            raise ConfigError(f"MaxPool2D window {self.size} does not fit input {in_shape}")
        return (c, (h - self.size) // self.stride + 1, (w - self.size) // self.stride + 1)

    def forward(self, x):
        if x.ndim != 4:
            raise ConfigError(f"MaxPool2D expects a 4-D input, got shape {x.shape}")
        y, switches = kernels.maxpool2d_forward(x, self.size, self.stride)
        return y, (switches, x.shape[2:])

    def backward(self, cache, gy, with_param_grads=True):
        switches, in_hw = _require_cache(cache)
        return kernels.maxpool2d_backward(gy, switches, in_hw), None


class Flatten:
    kind = "flatten"

    def params(self):
        return []

    def set_params(self, arrays):
        pass

    def init_params(self, rng, dtype=np.float32, zero=False):
        pass

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        return x.reshape(x.shape[0], -1), x.shape

    def backward(self, cache, gy, with_param_grads=True):
        shape = _require_cache(cache)
        return gy.reshape(shape), None


class Dense:
    kind = "dense"

    def __init__(self, in_features, out_features):
        self.in_features = int(in_features)
        self.out_features = int(out_features)
        self.weight = None
        self.bias = None

    def init_params(self, rng, dtype=np.float32, zero=False):
        shape = (self.out_features, self.in_features)
        if zero:
            self.weight = np.zeros(shape, dtype=dtype)
        else:
            self.weight = glorot_uniform(rng, shape, self.in_features, self.out_features, dtype)
        self.bias = np.zeros(self.out_features, dtype=dtype)

    def params(self):
        return [self.weight, self.bias]

    def set_params(self, arrays):
        self.weight, self.bias = arrays

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_features:
            raise ConfigError(
                f"Dense expects ({self.in_features},) features, got shape {in_shape}")
        return (self.out_features,)

    def forward(self, x):
        if x.ndim != 2 or x.shape[1] != self.in_features:
            raise ConfigError(
                f"Dense expects (N, {self.in_features}), got shape {x.shape}")
        return x @ self.weight.T + self.bias, x

    def backward(self, cache, gy, with_param_grads=True):
        x = _require_cache(cache)
        gx = gy @ self.weight
        if not with_param_grads:
            return gx, None
        return gx, [gy.T @ x, gy.sum(axis=0)]


def softmax(logits):
    """Row-wise softmax of a (N, C) array, numerically shifted."""
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def softmax_cross_entropy(logits, labels):
    """Mean-free per-sample cross-entropy.

    logits (N, C), labels (N,) ints in [0, C). Returns (losses (N,), grad (N, C))
    where grad is the gradient of each per-sample loss w.r.t. its logits row.
    """
    logits = np.asarray(logits)
    labels = np.asarray(labels)
    if logits.ndim != 2:
        raise ConfigError(f"softmax_cross_entropy expects (N, C) logits, got {logits.shape}")
    n, c = logits.shape
    if labels.shape != (n,):
        raise ConfigError(f"labels shape {labels.shape} does not match logits {logits.shape}")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= c:
        raise ConfigError(f"labels must lie in [0, {c}), got range "
                          f"[{labels.min()}, {labels.max()}]")
    z = logits - logits.max(axis=1, keepdims=True)
    log_probs = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    rows = np.arange(n)
    losses = -log_probs[rows, labels]
    grad = np.exp(log_probs)
    grad[rows, labels] -= 1.0
    return losses, grad
