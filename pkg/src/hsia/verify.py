"""Built-in self-verification: fast re-derivations of the core numerics.

Each check re-validates one contract against an independent brute-force
formulation (from ``reference``) or a closed-form identity. ``run_verification``
prints one PASS/FAIL line per check with the first counterexample on failure,
and returns True only if every check passed. The whole suite runs in seconds.

Ops are looked up through their modules at call time so a fault injected by
monkeypatching (tests do this) is caught and reported by name.
"""

import zlib

import numpy as np

from . import attacks as attacks_mod
from . import filters, layers, metrics, reference
from .attacks import AttackConfig
from .model import PatchClassifier


class CheckFailure(AssertionError):
    pass


def _close(a, b, tol, what):
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    err = float(np.max(np.abs(a - b))) if a.size else 0.0
    if not np.isfinite(err) or err > tol:
        flat = int(np.argmax(np.abs(a - b)))
        idx = np.unravel_index(flat, a.shape) if a.ndim else ()
        raise CheckFailure(f"{what}: max |diff| {err:.3e} > {tol:g} "
                           f"(first counterexample at index {idx}: "
                           f"{a.ravel()[flat]!r} vs {b.ravel()[flat]!r})")


def _toy_model(rng, num_classes=3, components=4, size=9, dtype=np.float64):
    model = PatchClassifier.build(components, size, num_classes,
                                  seed=int(rng.integers(1 << 31)), dtype=dtype)
    return model


def check_box_filter(rng):
    for trial in range(10):
        field = rng.standard_normal((rng.integers(3, 9), rng.integers(3, 9))).astype(np.float32)
        k = int(rng.choice([1, 3, 5]))
        _close(filters.box_filter_mean(field, k),
               reference.box_filter_mean_ref(field, k), 1e-6,
               f"box_filter_mean trial {trial} (window {k}, shape {field.shape})")


def check_box_filter_spot_values(rng):
    field = np.zeros((3, 3), dtype=np.float32)
    field[1, 1] = 9.0
    out = filters.box_filter_mean(field, 3)
    expect = np.array([[2.25, 1.5, 2.25], [1.5, 1.0, 1.5], [2.25, 1.5, 2.25]])
    _close(out, expect, 1e-6, "box filter 3x3 impulse")


def check_downsample(rng):
    for trial in range(10):
        field = rng.standard_normal((rng.integers(2, 11), rng.integers(2, 11))).astype(np.float32)
        s = int(rng.choice([1, 2, 3, 4]))
        _close(filters.downsample(field, s),
               reference.downsample_mean_ref(field, s), 1e-6,
               f"downsample trial {trial} (factor {s}, shape {field.shape})")


def check_upsample(rng):
    for trial in range(10):
        h, w = int(rng.integers(1, 6)), int(rng.integers(1, 6))
        ht, wt = h + int(rng.integers(0, 7)), w + int(rng.integers(0, 7))
        field = rng.standard_normal((h, w)).astype(np.float32)
        _close(filters.upsample(field, (ht, wt)),
               reference.upsample_nearest_ref(field, (ht, wt)), 0.0,
               f"upsample trial {trial} ({h}x{w} -> {ht}x{wt})")


def check_pyramid_roundtrip(rng):
    field = rng.random((8, 8)).astype(np.float32)
    down = filters.downsample(field, 2)
    up = filters.upsample(down, (8, 8))
    _close(up[::2, ::2], down, 0.0, "downsample/upsample block structure")


def check_conv_oracle(rng):
    for trial in range(5):
        x = rng.standard_normal((2, 3, 7, 7))
        w = rng.standard_normal((4, 3, 3, 3))
        b = rng.standard_normal(4)
        from . import kernels
        _close(kernels.conv2d_forward(x, w, b, 1),
               reference.conv2d_forward_ref(x, w, b, 1), 1e-9,
               f"conv2d forward trial {trial}")


def check_gradients(rng):
    model = _toy_model(rng)
    x = rng.standard_normal(model.input_shape)
    x += 0.05 * np.sign(x)  # keep away from ReLU kinks
    label = int(rng.integers(model.num_classes))
    _, grad = model.loss_and_input_gradient(x, label)
    for trial in range(8):
        v = rng.standard_normal(x.shape)
        v /= np.sqrt((v ** 2).sum())
        num = reference.directional_derivative(
            lambda z: model.loss_and_input_gradient(z, label)[0], x, v)
        ana = float((grad * v).sum())
        denom = max(abs(num), abs(ana), 1e-8)
        if abs(num - ana) / denom > 1e-4:
            raise CheckFailure(
                f"model input gradient, direction trial {trial}: finite difference "
                f"{num:.8e} vs analytic {ana:.8e} (rel err {abs(num-ana)/denom:.2e})")


def check_metrics_oracle(rng):
    for trial in range(20):
        n_cls = int(rng.integers(2, 6))
        truth = rng.integers(0, n_cls, size=60)
        pred = rng.integers(0, n_cls, size=60)
        m = metrics.confusion(truth, pred, n_cls)
        _close(m.counts, reference.confusion_ref(truth, pred, n_cls), 0.0,
               f"confusion trial {trial}")
        _close(metrics.overall_accuracy(m), reference.overall_accuracy_ref(m.counts),
               1e-9, f"overall accuracy trial {trial}")
        _close(metrics.average_accuracy(m), reference.average_accuracy_ref(m.counts),
               1e-9, f"average accuracy trial {trial}")
        _close(metrics.cohens_kappa(m), reference.cohens_kappa_ref(m.counts),
               1e-9, f"kappa trial {trial}")


def check_budget(rng):
    clean = np.zeros((2, 4, 4), dtype=np.float32)
    adv = clean.copy()
    adv[0, 1, 2] += 3.0
    adv[1, 3, 3] += 4.0
    got = metrics.perturbation_budget(clean, adv)
    if got != (2, 5.0, 4.0):
        raise CheckFailure(f"budget spot check: expected (2, 5.0, 4.0), got {got}")
    for trial in range(10):
        a = rng.standard_normal((3, 5, 5))
        b = rng.standard_normal((3, 5, 5))
        _close(metrics.perturbation_budget(a, b),
               reference.perturbation_budget_ref(a, b), 1e-9,
               f"budget trial {trial}")


def check_lpda_reduction(rng):
    """Window 1 must equal plain normalized-gradient ascent, element-exactly."""
    model = _toy_model(rng, dtype=np.float32)
    x = rng.random(model.input_shape).astype(np.float32)
    label = int(rng.integers(model.num_classes))
    cfg = AttackConfig(epsilon=0.02, iterations=4, window=1)
    adv, _ = attacks_mod.lpda_untargeted(x, label, model, cfg)
    ref = x.copy()
    for _ in range(cfg.iterations):
        _, g = model.loss_and_input_gradient(ref, label)
        m = np.abs(g).max()
        if m > 0:
            ref = np.clip(ref + np.float32(cfg.epsilon) * (g / g.dtype.type(m)),
                          cfg.clip_low, cfg.clip_high)
    _close(adv, ref, 0.0, "lpda window=1 vs plain normalized ascent")


def check_multiscale_reduction(rng):
    """scales=(1,) on a single component must equal one normalized step."""
    model = _toy_model(rng, components=1, dtype=np.float32)
    x = rng.random(model.input_shape).astype(np.float32)
    label = int(rng.integers(model.num_classes))
    cfg = AttackConfig(epsilon=0.02, scales=(1,))
    adv, _ = attacks_mod.mia_attack(x, label, model, cfg)
    _, g = model.loss_and_input_gradient(x, label)
    g64 = g.astype(np.float64)
    m = np.abs(g64).max()
    step = (cfg.epsilon * (g64 / m)).astype(np.float32) if m > 0 else 0.0
    ref = np.clip(x + step, cfg.clip_low, cfg.clip_high)
    _close(adv, ref, 0.0, "multiscale scales=(1,) vs single normalized step")


def check_multiscale_oracle(rng):
    model = _toy_model(rng, components=2, size=6, dtype=np.float32)
    x = rng.random(model.input_shape).astype(np.float32)
    label = int(rng.integers(model.num_classes))
    cfg = AttackConfig(epsilon=0.03, scales=(1, 2, 4))
    adv, pert = attacks_mod.mia_attack(x, label, model, cfg)
    _, g = model.loss_and_input_gradient(x, label)
    ref = reference.multiscale_residual_ref(g, cfg.scales, cfg.epsilon, +1.0)
    _close(pert.delta, ref, 1e-6, "multiscale residual delta vs loop oracle")


def check_combined_additivity(rng):
    model = _toy_model(rng, dtype=np.float32)
    x = rng.random(model.input_shape).astype(np.float32)
    label = int(rng.integers(model.num_classes))
    cfg = AttackConfig(epsilon=0.02, iterations=3)
    _, pert = attacks_mod.combined_attack(x, label, model, cfg)
    _close(pert.delta, pert.parts["local"] + pert.parts["multiscale"], 0.0,
           "combined delta == local + multiscale")


def check_baseline(rng):
    model = _toy_model(rng, dtype=np.float32)
    x = np.full(model.input_shape, 0.5, dtype=np.float32)
    label = int(rng.integers(model.num_classes))
    cfg = AttackConfig(epsilon=0.03)
    adv, pert = attacks_mod.sign_gradient_baseline(x, label, model, cfg)
    allowed = np.array([-0.03, 0.0, 0.03], dtype=np.float32)
    if not np.isin(pert.delta, allowed).all():
        bad = pert.delta[~np.isin(pert.delta, allowed)]
        raise CheckFailure(f"baseline delta must be exactly +/-epsilon or 0, got {bad[:3]}")
    _close(adv, np.clip(x + pert.delta, cfg.clip_low, cfg.clip_high), 0.0,
           "baseline adv == clip(x + delta)")
    if pert.linf > 0.03 + 1e-9:
        raise CheckFailure(f"baseline L-inf {pert.linf} exceeds epsilon")


CHECKS = (
    ("box_filter_oracle", check_box_filter),
    ("box_filter_spot_values", check_box_filter_spot_values),
    ("downsample_oracle", check_downsample),
    ("upsample_oracle", check_upsample),
    ("pyramid_roundtrip", check_pyramid_roundtrip),
    ("conv2d_oracle", check_conv_oracle),
    ("model_gradients", check_gradients),
    ("metrics_oracle", check_metrics_oracle),
    ("perturbation_budget", check_budget),
    ("lpda_window1_reduction", check_lpda_reduction),
    ("multiscale_single_scale_reduction", check_multiscale_reduction),
    ("multiscale_oracle", check_multiscale_oracle),
    ("combined_additivity", check_combined_additivity),
    ("baseline_step", check_baseline),
)


def run_verification(seed=0, stream=None):
    """Run every check; print one PASS/FAIL line each; True iff all passed."""
    emit = print if stream is None else stream
    all_ok = True
    for name, fn in CHECKS:
        rng = np.random.default_rng([seed, zlib.crc32(name.encode("ascii"))])
        try:
            fn(rng)
        except CheckFailure as exc:
            emit(f"FAIL {name}: {exc}")
            all_ok = False
        else:
            emit(f"PASS {name}")
    return all_ok
