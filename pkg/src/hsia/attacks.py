"""Adversarial attacks on patch classifiers.

Four attack families, all first-order and all clipping into the valid range:

* ``lpda``     — iterative local-pixel attack: each step box-filters the input
  gradient per component plane, normalizes it to unit L-inf per sample, and
  moves by epsilon (ascending the true-class loss, or descending a target-class
  loss). Default 20 iterations.
* ``mia``      — multiscale attack: the input gradient is pushed through a
  downsample/upsample pyramid at several scales, summed over components and
  scales into one spatial map. In ``residual`` mode the map is normalized to
  unit L-inf and applied once with magnitude epsilon; in ``literal`` mode the
  downsampled image content itself is perturbed and re-aggregated (no
  normalization, not bounded by epsilon).
* ``combined`` — runs both and applies delta_local + delta_multiscale; the
  stored delta is exactly that sum even where clipping trims the applied result.
* ``baseline`` — one signed-gradient step of size epsilon.

Multiscale aggregation runs in float64 and rounds once at the end. Attacks
never mutate their inputs and are deterministic for a fixed model and patch.
"""

import warnings
from dataclasses import dataclass

import numpy as np

from . import filters
from .errors import ConfigError, NumericError
from .data import extract_patches

ATTACK_KINDS = ("none", "baseline", "lpda", "lpda_targeted", "mia", "combined")


@dataclass(frozen=True)
class AttackConfig:
    epsilon: float = 0.03
    iterations: int = 20
    window: int = 3
    scales: tuple = (1, 2, 4)
    multiscale_mode: str = "residual"
    clip_low: float = 0.0
    clip_high: float = 1.0

    def __post_init__(self):
        if not np.isfinite(self.epsilon) or self.epsilon < 0:
            raise ConfigError(f"epsilon must be finite and >= 0, got {self.epsilon}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be >= 1, got {self.iterations}")
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"window must be a positive odd integer, got {self.window}")
        scales = tuple(int(s) for s in self.scales)
        if not scales or any(s < 1 for s in scales):
            raise ConfigError(f"scales must be positive integers, got {self.scales}")
        if len(set(scales)) != len(scales):
            raise ConfigError(f"scales must be distinct, got {self.scales}")
        object.__setattr__(self, "scales", scales)
        if self.multiscale_mode not in ("residual", "literal"):
            raise ConfigError(
                f"multiscale_mode must be 'residual' or 'literal', got {self.multiscale_mode!r}")
        if not (self.clip_low <= self.clip_high):
            raise ConfigError(f"invalid clip range [{self.clip_low}, {self.clip_high}]")


@dataclass
class Perturbation:
    """One attacked patch: the delta, its budgets, and which attack produced it."""

    delta: np.ndarray
    l0: int
    l2: float
    linf: float
    kind: str
    stalled_steps: int = 0
    loss_trace: np.ndarray = None
    parts: dict = None


# ---------------------------------------------------------------------------
# shared pieces


def _check_patches(patches, model, cfg):
    x = np.asarray(patches)
    squeeze = x.ndim == 3
    if squeeze:
        x = x[None]
    if x.ndim != 4 or x.shape[1:] != model.input_shape:
        raise ConfigError(
            f"attack expects patches shaped {model.input_shape}, got {np.asarray(patches).shape}")
    if x.size and (x.min() < cfg.clip_low or x.max() > cfg.clip_high):
        raise ConfigError(
            f"patch values [{x.min()}, {x.max()}] fall outside the clip range "
            f"[{cfg.clip_low}, {cfg.clip_high}]")
    return x, squeeze


def _labels_for(labels, n, model):
    y = np.asarray(labels).reshape(-1)
    if y.size == 1 and n > 1:
        y = np.full(n, int(y[0]))
    if y.shape != (n,):
        raise ConfigError(f"{n} patches but labels shaped {np.asarray(labels).shape}")
    if y.size and (y.min() < 0 or y.max() >= model.num_classes):
        raise ConfigError(
            f"labels must lie in [0, {model.num_classes}), got [{y.min()}, {y.max()}]")
    return y


def _gradient(model, x, labels):
    losses, grad = model.loss_and_input_gradient_batch(x, labels)
    if not np.all(np.isfinite(grad)):
        raise NumericError("model returned a non-finite input gradient")
    return losses, grad


def _losses_only(model, x, labels):
    from .layers import softmax_cross_entropy
    losses, _ = softmax_cross_entropy(model.forward_batch(x), labels)
    return losses


def _normalize_linf(g):
    """Per-sample g / max|g|; flags samples whose gradient is identically zero."""
    flat = np.abs(g.reshape(g.shape[0], -1))
    m = flat.max(axis=1)
    zero = m == 0
    safe = np.where(zero, 1, m).astype(g.dtype)
    return g / safe[:, None, None, None], zero


# ---------------------------------------------------------------------------
# cores (batched, return plain arrays)


def _lpda_core(x, labels, model, cfg, sign):
    n = x.shape[0]
    adv = x.copy()
    stalled = np.zeros(n, dtype=np.int64)
    trace = np.empty((n, cfg.iterations + 1), dtype=np.float64)
    for step in range(cfg.iterations):
        losses, grad = _gradient(model, adv, labels)
        trace[:, step] = losses
        smoothed = filters.box_filter_mean(grad, cfg.window)
        unit, zero = _normalize_linf(smoothed)
        stalled += zero
        adv = np.clip(adv + (sign * cfg.epsilon) * unit, cfg.clip_low, cfg.clip_high)
    trace[:, cfg.iterations] = _losses_only(model, adv, labels)
    return adv, adv - x, stalled, trace


def _multiscale_core(x, labels, model, cfg, sign):
    n, k, h, w = x.shape
    _, grad = _gradient(model, x, labels)
    g64 = grad.astype(np.float64)
    if cfg.multiscale_mode == "residual":
        agg = np.zeros((n, h, w), dtype=np.float64)
        for s in cfg.scales:
            low = filters.downsample(g64, s)
            agg += filters.upsample(low, (h, w)).sum(axis=1)
        m = np.abs(agg.reshape(n, -1)).max(axis=1)
        stalled = (m == 0).astype(np.int64)
        agg /= np.where(m == 0, 1.0, m)[:, None, None]
        delta = np.broadcast_to(((sign * cfg.epsilon) * agg)[:, None], (n, k, h, w))
    else:
        x64 = x.astype(np.float64)
        agg = np.zeros((n, h, w), dtype=np.float64)
        for s in cfg.scales:
            low = filters.downsample(x64, s) + (sign * cfg.epsilon) * filters.downsample(g64, s)
            agg += filters.upsample(low, (h, w)).sum(axis=1)
        stalled = np.zeros(n, dtype=np.int64)
        delta = np.broadcast_to((cfg.epsilon * agg)[:, None], (n, k, h, w))
    delta = np.ascontiguousarray(delta).astype(x.dtype)
    adv = np.clip(x + delta, cfg.clip_low, cfg.clip_high)
    return adv, delta, stalled


def _baseline_core(x, labels, model, cfg, sign):
    _, grad = _gradient(model, x, labels)
    delta = (sign * cfg.epsilon) * np.sign(grad)
    adv = np.clip(x + delta, cfg.clip_low, cfg.clip_high)
    return adv, delta


def _combined_core(x, labels, model, cfg, sign):
    adv_l, delta_l, stalled, trace = _lpda_core(x, labels, model, cfg, sign)
    _, delta_m, stalled_m = _multiscale_core(x, labels, model, cfg, sign)
    delta = delta_l + delta_m
    adv = np.clip(x + delta, cfg.clip_low, cfg.clip_high)
    return adv, delta, delta_l, delta_m, stalled + stalled_m, trace


# ---------------------------------------------------------------------------
# budgets and wrapping


def _budget_arrays(delta, tau=1e-8):
    d = np.abs(delta.astype(np.float64))
    l0 = (d > tau).any(axis=1).sum(axis=(1, 2)).astype(np.int64)
    l2 = np.sqrt((d ** 2).sum(axis=(1, 2, 3)))
    linf = d.max(axis=(1, 2, 3)) if d.size else np.zeros(delta.shape[0])
    return l0, l2, linf


def _wrap(kind, delta, stalled=None, traces=None, parts=None):
    l0, l2, linf = _budget_arrays(delta)
    out = []
    for i in range(delta.shape[0]):
        out.append(Perturbation(
            delta=delta[i], l0=int(l0[i]), l2=float(l2[i]), linf=float(linf[i]),
            kind=kind,
            stalled_steps=int(stalled[i]) if stalled is not None else 0,
            loss_trace=traces[i].copy() if traces is not None else None,
            parts={name: arr[i] for name, arr in parts.items()} if parts else None))
    return out


def _single(adv, perts, squeeze):
    if squeeze:
        return adv[0], perts[0]
    return adv, perts


# ---------------------------------------------------------------------------
# public attacks


def lpda_untargeted(patch, label, model, config=None):
    """Iterative window-smoothed gradient ascent on the true-class loss."""
    cfg = config or AttackConfig()
    x, squeeze = _check_patches(patch, model, cfg)
    y = _labels_for(label, x.shape[0], model)
    adv, delta, stalled, trace = _lpda_core(x, y, model, cfg, +1.0)
    return _single(adv, _wrap("lpda", delta, stalled, trace), squeeze)


def lpda_targeted(patch, target_class, model, config=None, true_label=None):
    """Iterative window-smoothed gradient descent on a chosen class's loss."""
    cfg = config or AttackConfig()
    x, squeeze = _check_patches(patch, model, cfg)
    y = _labels_for(target_class, x.shape[0], model)
    if true_label is not None:
        t = _labels_for(true_label, x.shape[0], model)
        clashes = int((t == y).sum())
        if clashes:
            warnings.warn(
                f"target class equals the true label for {clashes} patch(es); "
                "the attack will reinforce the current prediction", stacklevel=2)
    adv, delta, stalled, trace = _lpda_core(x, y, model, cfg, -1.0)
    return _single(adv, _wrap("lpda_targeted", delta, stalled, trace), squeeze)


def mia_attack(patch, label, model, config=None):
    """Single-shot multiscale attack (see module docstring for the two modes)."""
    cfg = config or AttackConfig()
    x, squeeze = _check_patches(patch, model, cfg)
    y = _labels_for(label, x.shape[0], model)
    adv, delta, stalled = _multiscale_core(x, y, model, cfg, +1.0)
    return _single(adv, _wrap("mia", delta, stalled), squeeze)


def combined_attack(patch, label, model, config=None):
    """LPDA + multiscale: applies the exact sum of both deltas, then clips."""
    cfg = config or AttackConfig()
    x, squeeze = _check_patches(patch, model, cfg)
    y = _labels_for(label, x.shape[0], model)
    adv, delta, delta_l, delta_m, stalled, trace = _combined_core(x, y, model, cfg, +1.0)
    perts = _wrap("combined", delta, stalled, trace,
                  parts={"local": delta_l, "multiscale": delta_m})
    return _single(adv, perts, squeeze)


def sign_gradient_baseline(patch, label, model, config=None):
    """One signed-gradient step of size epsilon (the non-iterative baseline)."""
    cfg = config or AttackConfig()
    x, squeeze = _check_patches(patch, model, cfg)
    y = _labels_for(label, x.shape[0], model)
    adv, delta = _baseline_core(x, y, model, cfg, +1.0)
    return _single(adv, _wrap("baseline", delta), squeeze)


# ---------------------------------------------------------------------------
# scene-level driver


@dataclass
class SceneAttackResult:
    """Scene-wide outcome of one attack run."""

    kind: str
    scope: str
    pred_clean: np.ndarray        # (H, W) predicted labels before the attack
    pred_adv: np.ndarray          # (H, W) predicted labels after the attack
    attacked_indices: np.ndarray  # flat pixel indices that were attacked
    adv_patches: np.ndarray       # (M, K, h, w) adversarial patches
    perturbations: list           # per attacked patch, same order
    adv_scene_cube: np.ndarray    # (H, W, K) cube with attacked centers replaced
    l0_mean: float
    l2_mean: float
    linf_max: float
    stalled_total: int


_SCENE_ATTACKS = {
    "baseline": sign_gradient_baseline,
    "lpda": lpda_untargeted,
    "mia": mia_attack,
    "combined": combined_attack,
}


def attack_scene(scene, model, kind, config=None, *, window=11, eval_indices=None,
                 scope="all", lesion_class=None, target_class=None,
                 chunk_size=512, clean_pred=None):
    """Run one attack over a reduced scene, patch by patch.

    ``scope`` limits which of the eval pixels are attacked: "all", or "lesion"
    (only pixels whose true class is ``lesion_class``). ``eval_indices`` (flat,
    row-major) defaults to every pixel. ``kind`` "none" predicts without
    attacking. For ``lpda_targeted``, ``target_class`` chooses the class whose
    loss is descended. ``clean_pred`` can pass in a cached (H, W) clean
    prediction map to skip recomputing it.
    """
    cfg = config or AttackConfig()
    if kind not in ATTACK_KINDS:
        raise ConfigError(f"unknown attack kind {kind!r}; choose from {ATTACK_KINDS}")
    if scope not in ("all", "lesion"):
        raise ConfigError(f"scope must be 'all' or 'lesion', got {scope!r}")
    if scope == "lesion" and lesion_class is None:
        raise ConfigError("scope='lesion' requires lesion_class")
    h, w, _ = scene.cube.shape
    patches = extract_patches(scene, window)
    if clean_pred is None:
        pred_clean = model.predict_batch(patches.patches, batch_size=chunk_size).reshape(h, w)
    else:
        pred_clean = np.asarray(clean_pred).reshape(h, w).copy()

    idx = np.arange(h * w) if eval_indices is None else np.asarray(eval_indices).reshape(-1)
    if scope == "lesion":
        idx = idx[patches.labels[idx] == lesion_class]
    if kind == "none":
        idx = idx[:0]

    pred_adv = pred_clean.copy()
    adv_scene_cube = scene.cube.copy()
    adv_list, pert_list = [], []
    stalled_total = 0
    r = window // 2
    for lo in range(0, idx.size, chunk_size):
        sel = idx[lo:lo + chunk_size]
        x = patches.patches[sel]
        if kind == "lpda_targeted":
            if target_class is None:
                raise ConfigError("lpda_targeted requires target_class")
            adv, perts = lpda_targeted(x, target_class, model, cfg,
                                       true_label=patches.labels[sel])
        else:
            adv, perts = _SCENE_ATTACKS[kind](x, patches.labels[sel], model, cfg)
        pred_adv.ravel()[sel] = model.predict_batch(adv, batch_size=chunk_size)
        coords = patches.coords[sel]
        adv_scene_cube[coords[:, 0], coords[:, 1]] = adv[:, :, r, r]
        adv_list.append(adv)
        pert_list.extend(perts)
        stalled_total += sum(p.stalled_steps for p in perts)

    adv_patches = (np.concatenate(adv_list) if adv_list
                   else np.empty((0,) + patches.patches.shape[1:], dtype=np.float32))
    l0s = np.array([p.l0 for p in pert_list], dtype=np.float64)
    l2s = np.array([p.l2 for p in pert_list], dtype=np.float64)
    linfs = np.array([p.linf for p in pert_list], dtype=np.float64)
    return SceneAttackResult(
        kind=kind, scope=scope, pred_clean=pred_clean, pred_adv=pred_adv,
        attacked_indices=idx, adv_patches=adv_patches, perturbations=pert_list,
        adv_scene_cube=adv_scene_cube,
        l0_mean=float(l0s.mean()) if l0s.size else 0.0,
        l2_mean=float(l2s.mean()) if l2s.size else 0.0,
        linf_max=float(linfs.max()) if linfs.size else 0.0,
        stalled_total=stalled_total)
