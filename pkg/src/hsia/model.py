"""Patch classifier: a small conv net with explicit reverse-mode gradients.

The reference architecture is Conv(3x3) -> ReLU -> Conv(3x3) -> ReLU -> Flatten
-> Dense(64) -> ReLU -> Dense(num_classes), valid padding throughout, trained
with plain SGD on softmax cross-entropy. Forward and gradient entry points are
read-only on the model, so they are safe to call concurrently.

Models serialize to the ``.hsam`` binary format: magic ``HSAM``, a version, the
input contract (components, patch height/width, classes), per-layer shape
records, all parameters as little-endian float32 in layer order, and a trailing
CRC32 of everything after the magic.
"""

import struct
import zlib
from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, FormatError, TrainingError
from .layers import Conv2D, Dense, Flatten, MaxPool2D, ReLU, softmax, softmax_cross_entropy

MODEL_MAGIC = b"HSAM"
MODEL_VERSION = 1

_LAYER_CODES = {"conv2d": 1, "relu": 2, "maxpool2d": 3, "flatten": 4, "dense": 5}
_CODE_LAYERS = {v: k for k, v in _LAYER_CODES.items()}


@dataclass(frozen=True)
class TrainConfig:
    learning_rate: float = 0.03
    epochs: int = 12
    batch_size: int = 64
    seed: int = 0
    weight_decay: float = 0.0

    def __post_init__(self):
        if not np.isfinite(self.learning_rate) or self.learning_rate < 0:
            raise ConfigError(f"learning_rate must be finite and >= 0, got {self.learning_rate}")
        if self.epochs < 1:
            raise ConfigError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.weight_decay < 0:
            raise ConfigError(f"weight_decay must be >= 0, got {self.weight_decay}")


class PatchClassifier:
    """A stack of layers mapping (components, h, w) patches to class logits."""

    def __init__(self, layers, input_shape, num_classes):
        self.layers = list(layers)
        self.input_shape = tuple(int(v) for v in input_shape)
        self.num_classes = int(num_classes)
        shape = self.input_shape
        for layer in self.layers:
            shape = layer.out_shape(shape)
        if shape != (self.num_classes,):
            raise ConfigError(
                f"layer stack maps {self.input_shape} to {shape}, expected ({num_classes},)")

    @classmethod
    def build(cls, components, patch_size, num_classes, seed, dtype=np.float32, zero_init=False):
        """Reference architecture for the given input contract, seeded init."""
        if patch_size < 5:
            raise ConfigError(f"patch_size must be >= 5 for two 3x3 convs, got {patch_size}")
        reduced = patch_size - 4
        layers = [
            Conv2D(components, 16, 3),
            ReLU(),
            Conv2D(16, 32, 3),
            ReLU(),
            Flatten(),
            Dense(32 * reduced * reduced, 64),
            ReLU(),
            Dense(64, num_classes),
        ]
        rng = np.random.default_rng(seed)
        for layer in layers:
            layer.init_params(rng, dtype=dtype, zero=zero_init)
        return cls(layers, (components, patch_size, patch_size), num_classes)

    # -- forward -----------------------------------------------------------

    def _check_batch(self, patches):
        patches = np.asarray(patches)
        if patches.ndim == 3:
            patches = patches[None]
        if patches.ndim != 4 or patches.shape[1:] != self.input_shape:
            raise ConfigError(
                f"model expects patches of shape {self.input_shape}, got {patches.shape}")
        return patches

    def forward_batch(self, patches):
        """Logits (N, num_classes) for a batch of patches."""
        x = self._check_batch(patches)
        for layer in self.layers:
            x, _ = layer.forward(x)
        return x

    def forward(self, patch):
        """(logits, probabilities) for a single (components, h, w) patch."""
        logits = self.forward_batch(np.asarray(patch)[None])[0]
        return logits, softmax(logits[None])[0]

    def predict_batch(self, patches, batch_size=512):
        patches = self._check_batch(patches)
        out = np.empty(patches.shape[0], dtype=np.int64)
        for lo in range(0, patches.shape[0], batch_size):
            out[lo:lo + batch_size] = np.argmax(
                self.forward_batch(patches[lo:lo + batch_size]), axis=1)
        return out

    # -- gradients ---------------------------------------------------------

    def _forward_with_caches(self, x):
        caches = []
        for layer in self.layers:
            x, cache = layer.forward(x)
            caches.append(cache)
        return x, caches

    def loss_and_input_gradient_batch(self, patches, labels, with_param_grads=False):
        """Per-sample losses, input gradients and (optionally) summed param grads."""
        x = self._check_batch(patches)
        labels = np.asarray(labels).reshape(-1)
        logits, caches = self._forward_with_caches(x)
        losses, gy = softmax_cross_entropy(logits, labels)
        param_grads = []
        for layer, cache in zip(reversed(self.layers), reversed(caches)):
            gy, grads = layer.backward(cache, gy, with_param_grads=with_param_grads)
            if with_param_grads:
                param_grads.append(grads if grads is not None else [])
        if with_param_grads:
            param_grads.reverse()
            return losses, gy, param_grads
        return losses, gy

    def loss_and_input_gradient(self, patch, label):
        """(loss, gradient w.r.t. the patch) for a single patch; read-only."""
        losses, gx = self.loss_and_input_gradient_batch(
            np.asarray(patch)[None], np.asarray([label]))
        return float(losses[0]), gx[0]

    def parameters(self):
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out


def train(model, patches, labels, cfg):
    """Mini-batch SGD. Returns the per-epoch mean training loss.

    Epoch losses are the running per-sample losses gathered while the
    parameters update, averaged in sample-index order so a zero learning rate
    yields a bitwise-constant history.
    """
    x = np.asarray(patches)
    y = np.asarray(labels).reshape(-1)
    if x.ndim != 4 or x.shape[0] == 0:
        raise TrainingError(f"training needs a non-empty (N, K, h, w) patch array, got {x.shape}")
    if y.shape[0] != x.shape[0]:
        raise TrainingError(f"{x.shape[0]} patches but {y.shape[0]} labels")
    rng = np.random.default_rng(cfg.seed)
    lr = cfg.learning_rate
    history = []
    sample_losses = np.empty(x.shape[0], dtype=np.float64)
    for epoch in range(cfg.epochs):
        perm = rng.permutation(x.shape[0])
        for lo in range(0, perm.size, cfg.batch_size):
            idx = perm[lo:lo + cfg.batch_size]
            losses, _, grads = model.loss_and_input_gradient_batch(
                x[idx], y[idx], with_param_grads=True)
            sample_losses[idx] = losses
            scale = lr / idx.size
            for layer, layer_grads in zip(model.layers, grads):
                params = layer.params()
                for p, g in zip(params, layer_grads):
                    if cfg.weight_decay:
                        p -= lr * cfg.weight_decay * p
                    p -= scale * g
        epoch_loss = float(np.mean(sample_losses))
        if not np.isfinite(epoch_loss):
            raise TrainingError(f"training diverged at epoch {epoch + 1}: loss {epoch_loss}")
        history.append(epoch_loss)
    return history


# ---------------------------------------------------------------------------
# serialization


def _layer_record(layer):
    code = _LAYER_CODES[layer.kind]
    if layer.kind == "conv2d":
        return struct.pack("<HHHHH", code, layer.in_channels, layer.out_channels,
                           layer.kernel_size, layer.stride)
    if layer.kind == "maxpool2d":
        return struct.pack("<HHHHH", code, layer.size, layer.stride, 0, 0)
    if layer.kind == "dense":
        return struct.pack("<HHHHH", code, 0, 0, 0, 0) + struct.pack(
            "<II", layer.in_features, layer.out_features)
    return struct.pack("<HHHHH", code, 0, 0, 0, 0)


def save_model(model, path):
    payload = bytearray()
    payload += struct.pack("<H", MODEL_VERSION)
    payload += struct.pack("<HHHH", *model.input_shape, model.num_classes)
    payload += struct.pack("<H", len(model.layers))
    for layer in model.layers:
        payload += _layer_record(layer)
    for p in model.parameters():
        payload += np.ascontiguousarray(p, dtype="<f4").tobytes()
    crc = zlib.crc32(bytes(payload)) & 0xFFFFFFFF
    with open(path, "wb") as fh:
        fh.write(MODEL_MAGIC + bytes(payload) + struct.pack("<I", crc))


class _Reader:
    def __init__(self, blob):
        self.blob = blob
        self.pos = 0

    def take(self, fmt):
        size = struct.calcsize(fmt)
        if self.pos + size > len(self.blob):
            raise FormatError("model file truncated", offset=self.pos)
        out = struct.unpack_from(fmt, self.blob, self.pos)
        self.pos += size
        return out

    def take_array(self, shape, count):
        size = 4 * count
        if self.pos + size > len(self.blob):
            raise FormatError("model file truncated inside parameter data", offset=self.pos)
        arr = np.frombuffer(self.blob, dtype="<f4", count=count, offset=self.pos)
        self.pos += size
        return arr.reshape(shape).copy()


def load_model(path):
    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < 4 or blob[:4] != MODEL_MAGIC:
        raise FormatError(f"bad model magic {blob[:4]!r}, expected {MODEL_MAGIC!r}", offset=0)
    if len(blob) < 8:
        raise FormatError("model file truncated before checksum", offset=len(blob))
    stored_crc = struct.unpack("<I", blob[-4:])[0]
    payload = blob[4:-4]
    actual_crc = zlib.crc32(payload) & 0xFFFFFFFF
    if actual_crc != stored_crc:
        raise FormatError(
            f"model checksum mismatch: stored {stored_crc:#010x}, computed {actual_crc:#010x}",
            offset=len(blob) - 4)
    r = _Reader(payload)
    (version,) = r.take("<H")
    if version != MODEL_VERSION:
        raise FormatError(f"unsupported model version {version}", offset=4)
    components, ph, pw, num_classes = r.take("<HHHH")
    (n_layers,) = r.take("<H")
    layers = []
    for _ in range(n_layers):
        code, a, b, c, d = r.take("<HHHHH")
        kind = _CODE_LAYERS.get(code)
        if kind is None:
            raise FormatError(f"unknown layer code {code}", offset=4 + r.pos - 10)
        if kind == "conv2d":
            layers.append(Conv2D(a, b, c, d))
        elif kind == "maxpool2d":
            layers.append(MaxPool2D(a, b))
        elif kind == "dense":
            fin, fout = r.take("<II")
            layers.append(Dense(fin, fout))
        elif kind == "relu":
            layers.append(ReLU())
        else:
            layers.append(Flatten())
    for layer in layers:
        if layer.kind == "conv2d":
            k = layer.kernel_size
            w = r.take_array((layer.out_channels, layer.in_channels, k, k),
                             layer.out_channels * layer.in_channels * k * k)
            bias = r.take_array((layer.out_channels,), layer.out_channels)
            layer.set_params([w, bias])
        elif layer.kind == "dense":
            w = r.take_array((layer.out_features, layer.in_features),
                             layer.out_features * layer.in_features)
            bias = r.take_array((layer.out_features,), layer.out_features)
            layer.set_params([w, bias])
    if r.pos != len(payload):
        raise FormatError(f"{len(payload) - r.pos} trailing bytes after parameters",
                          offset=4 + r.pos)
    return PatchClassifier(layers, (components, ph, pw), num_classes)
