"""Validated spatial filter operations.

These wrap the backend kernels with argument checking. All of them treat the
last two axes as spatial and apply the operation independently to every leading
plane, preserve the input dtype, and never modify their input.
"""

import numpy as np

from . import kernels
from .errors import ConfigError


def _check_spatial(field, name):
    field = np.asarray(field)
    if field.ndim < 2:
        raise ConfigError(f"{name} needs at least 2 dimensions, got shape {field.shape}")
    return field


def box_filter_mean(field, window):
    """Windowed mean with border renormalization (divide by the in-bounds count)."""
    field = _check_spatial(field, "box_filter_mean")
    if not isinstance(window, (int, np.integer)) or window < 1 or window % 2 == 0:
        raise ConfigError(f"window must be a positive odd integer, got {window!r}")
    return kernels.box_filter_mean(field, int(window))


def downsample(field, factor):
    """Non-overlapping block means; ragged edge blocks average what exists."""
    field = _check_spatial(field, "downsample")
    if not isinstance(factor, (int, np.integer)) or factor < 1:
        raise ConfigError(f"downsample factor must be a positive integer, got {factor!r}")
    return kernels.downsample_mean(field, int(factor))


def upsample(field, target_hw):
    """Nearest-neighbour resize of the spatial axes up to target_hw."""
    field = _check_spatial(field, "upsample")
    ht, wt = int(target_hw[0]), int(target_hw[1])
    h, w = field.shape[-2], field.shape[-1]
    if ht < h or wt < w:
        raise ConfigError(f"upsample target {ht, wt} is smaller than source {h, w}")
    return kernels.upsample_nearest(field, (ht, wt))


def clip_to_range(tensor, low, high):
    """Elementwise clip; low must not exceed high."""
    if not (low <= high):
        raise ConfigError(f"invalid clip range [{low}, {high}]")
    return np.clip(np.asarray(tensor), low, high)
