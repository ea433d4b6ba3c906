"""End-to-end experiment stages shared by the CLI.

Stage functions are deterministic in the config: generate -> reduce -> train ->
attack -> report. Artifacts carry the config hash and no timestamps, so a rerun
with the same config produces byte-identical files. The reduction (PCA + scaler
+ split) is recomputed from the scene and config wherever it is needed; with
the same seed it is always identical, so it is never serialized.
"""

import csv
import io
import os
from dataclasses import dataclass

import numpy as np
import yaml

from . import attacks as attacks_mod
from . import formats
from .config import config_hash
from .data import (RECIPE_PRESETS, ComponentScaler, HsiScene, extract_patches,
                   generate_scene, pca_fit, pca_transform, stratified_split_indices)
from .errors import ConfigError
from .metrics import MetricsReport, confusion
from .model import PatchClassifier, load_model, save_model, train

SCENE_FILE = "scene.hsc"
TRUTH_MAP_FILE = "truth_map.ppm"
MODEL_FILE = "model.hsam"
TRAIN_LOG_FILE = "train_log.csv"
RESULTS_FILE = "results.csv"
REPORT_FILE = "report.yaml"


def make_recipe(cfg):
    recipe_fn = RECIPE_PRESETS[cfg.scene.preset]
    return recipe_fn(height=cfg.scene.height, width=cfg.scene.width,
                     bands=cfg.scene.bands, noise_sigma=cfg.scene.noise_sigma,
                     seed=cfg.seed)


@dataclass
class Reduction:
    """Scaled PCA scene plus the train/test pixel split used to fit it."""

    scene: HsiScene          # (H, W, K) scaled components in [0, 1]
    pca: object
    scaler: ComponentScaler
    train_idx: np.ndarray    # flat row-major pixel indices
    test_idx: np.ndarray


def reduce_scene(cfg, scene):
    """Split pixels, fit PCA + min-max scaler on train pixels, transform all."""
    if scene.cube.shape[2] != cfg.scene.bands:
        raise ConfigError(
            f"scene has {scene.cube.shape[2]} bands but config says {cfg.scene.bands}")
    labels_flat = scene.labels.ravel()
    train_idx, test_idx = stratified_split_indices(
        labels_flat, cfg.train_fraction, cfg.split_seed)
    spectra = scene.cube.reshape(-1, scene.cube.shape[2])
    pca = pca_fit(spectra[train_idx], cfg.pca_components)
    coded = pca_transform(pca, spectra)
    scaler = ComponentScaler.fit(coded[train_idx])
    scaled = scaler.apply(coded).reshape(
        scene.cube.shape[0], scene.cube.shape[1], cfg.pca_components)
    reduced = HsiScene(scaled, scene.labels, scene.class_names)
    return Reduction(reduced, pca, scaler, train_idx, test_idx)


def train_model(cfg, reduction):
    """Train the reference classifier on the training patches."""
    patches = extract_patches(reduction.scene, cfg.patch_window)
    model = PatchClassifier.build(
        cfg.pca_components, cfg.patch_window, reduction.scene.num_classes, cfg.train.seed)
    history = train(model, patches.patches[reduction.train_idx],
                    patches.labels[reduction.train_idx], cfg.train)
    return model, history


def evaluate_predictions(reduction, pred_map, budgets=(0, 0.0, 0.0), lesion_class=None):
    """MetricsReport over the held-out test pixels of a predicted label map."""
    truth = reduction.scene.labels.ravel()[reduction.test_idx]
    pred = np.asarray(pred_map).ravel()[reduction.test_idx]
    matrix = confusion(truth, pred, reduction.scene.num_classes,
                       reduction.scene.class_names)
    return MetricsReport.from_confusion(matrix, budgets=budgets, lesion_class=lesion_class)


def run_attack(cfg, reduction, model, spec, clean_pred=None):
    """Run one configured attack over the test pixels; returns (result, report)."""
    result = attacks_mod.attack_scene(
        reduction.scene, model, spec.kind, spec.config,
        window=cfg.patch_window, eval_indices=reduction.test_idx,
        scope=spec.scope, lesion_class=cfg.lesion_class,
        target_class=spec.target_class, clean_pred=clean_pred)
    report = evaluate_predictions(
        reduction, result.pred_adv,
        budgets=(result.l0_mean, result.l2_mean, result.linf_max),
        lesion_class=cfg.lesion_class)
    return result, report


# ---------------------------------------------------------------------------
# artifact helpers


def _out(cfg, name):
    return os.path.join(cfg.output_dir, name)


def _write_yaml(path, data):
    with open(path, "w", encoding="utf-8") as fh:
        yaml.safe_dump(data, fh, sort_keys=True, default_flow_style=False)


def _read_yaml(path):
    with open(path, "r", encoding="utf-8") as fh:
        return yaml.safe_load(fh)


def _float(x):
    return float(np.round(float(x), 10))


def report_to_dict(report, kind, scope, extra=None):
    data = {
        "kind": kind,
        "scope": scope,
        "confusion": [[int(v) for v in row] for row in report.matrix.counts],
        "class_names": list(report.matrix.class_names),
        "per_class_accuracy": [None if np.isnan(v) else _float(v) for v in report.per_class],
        "excluded_classes": list(report.excluded),
        "oa": _float(report.oa),
        "aa": _float(report.aa),
        "kappa": _float(report.kappa),
        "l0_mean": _float(report.l0),
        "l2_mean": _float(report.l2),
        "linf_max": _float(report.linf),
        "lesion_class": int(report.lesion_class),
        "lesion_accuracy": _float(report.lesion_accuracy),
    }
    if extra:
        data.update(extra)
    return data


# ---------------------------------------------------------------------------
# CLI stage commands


def cmd_generate(cfg):
    os.makedirs(cfg.output_dir, exist_ok=True)
    scene = generate_scene(make_recipe(cfg))
    formats.write_cube(scene, _out(cfg, SCENE_FILE))
    formats.write_class_map(scene.labels, _out(cfg, TRUTH_MAP_FILE))
    counts = np.bincount(scene.labels.ravel(), minlength=scene.num_classes)
    _write_yaml(_out(cfg, "manifest_scene.yaml"), {
        "config_hash": config_hash(cfg),
        "seed": cfg.seed,
        "preset": cfg.scene.preset,
        "shape": list(scene.cube.shape),
        "class_names": list(scene.class_names),
        "class_pixel_counts": [int(c) for c in counts],
        "files": [SCENE_FILE, TRUTH_MAP_FILE],
    })
    return scene


def _load_scene(cfg):
    path = _out(cfg, SCENE_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"scene file not found: {path} (run `hsia generate` first)")
    names = RECIPE_PRESETS[cfg.scene.preset]().class_names
    scene = formats.read_cube(path, class_names=names)
    if scene.cube.shape != (cfg.scene.height, cfg.scene.width, cfg.scene.bands):
        raise ConfigError(
            f"scene file shape {scene.cube.shape} does not match config "
            f"{(cfg.scene.height, cfg.scene.width, cfg.scene.bands)}")
    return scene


def cmd_train(cfg):
    scene = _load_scene(cfg)
    reduction = reduce_scene(cfg, scene)
    model, history = train_model(cfg, reduction)
    save_model(model, _out(cfg, MODEL_FILE))
    with open(_out(cfg, TRAIN_LOG_FILE), "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "loss"])
        for i, loss in enumerate(history):
            writer.writerow([i + 1, f"{loss:.8f}"])
    patches = extract_patches(reduction.scene, cfg.patch_window)
    pred = model.predict_batch(patches.patches)
    clean = evaluate_predictions(reduction, pred, lesion_class=cfg.lesion_class)
    train_acc = float(np.mean(pred[reduction.train_idx]
                              == patches.labels[reduction.train_idx]))
    _write_yaml(_out(cfg, "manifest_train.yaml"), {
        "config_hash": config_hash(cfg),
        "epochs": cfg.train.epochs,
        "final_loss": _float(history[-1]),
        "train_accuracy": _float(train_acc),
        "clean_test": report_to_dict(clean, "none", "all"),
        "files": [MODEL_FILE, TRAIN_LOG_FILE],
    })
    return model, history


def _load_model_checked(cfg, scene):
    path = _out(cfg, MODEL_FILE)
    if not os.path.exists(path):
        raise ConfigError(f"model file not found: {path} (run `hsia train` first)")
    model = load_model(path)
    expected = (cfg.pca_components, cfg.patch_window, cfg.patch_window)
    if model.input_shape != expected:
        raise ConfigError(
            f"model expects input {model.input_shape}, config implies {expected}")
    if model.num_classes != scene.num_classes:
        raise ConfigError(
            f"model has {model.num_classes} classes, scene has {scene.num_classes}")
    return model


def cmd_attack(cfg):
    scene = _load_scene(cfg)
    reduction = reduce_scene(cfg, scene)
    model = _load_model_checked(cfg, scene)

    patches = extract_patches(reduction.scene, cfg.patch_window)
    clean_pred = model.predict_batch(patches.patches).reshape(scene.labels.shape)
    clean_report = evaluate_predictions(reduction, clean_pred, lesion_class=cfg.lesion_class)
    formats.write_class_map(clean_pred, _out(cfg, "pred_clean.ppm"))
    _write_yaml(_out(cfg, "metrics_clean.yaml"),
                report_to_dict(clean_report, "none", "all",
                               extra={"config_hash": config_hash(cfg),
                                      "attacked_patches": 0, "stalled_steps": 0}))
    files = ["pred_clean.ppm", "metrics_clean.yaml"]
    results = {}
    for spec in cfg.attacks:
        result, report = run_attack(cfg, reduction, model, spec, clean_pred=clean_pred)
        pred_file = f"pred_{spec.name}.ppm"
        adv_file = f"adv_scene_{spec.name}.hsc"
        formats.write_class_map(result.pred_adv, _out(cfg, pred_file))
        formats.write_cube(HsiScene(result.adv_scene_cube, scene.labels,
                                    scene.class_names), _out(cfg, adv_file))
        _write_yaml(_out(cfg, f"metrics_{spec.name}.yaml"),
                    report_to_dict(report, spec.kind, spec.scope,
                                   extra={"config_hash": config_hash(cfg),
                                          "attacked_patches": int(result.attacked_indices.size),
                                          "stalled_steps": int(result.stalled_total)}))
        files += [pred_file, adv_file, f"metrics_{spec.name}.yaml"]
        results[spec.name] = (result, report)
    _write_yaml(_out(cfg, "manifest_attack.yaml"), {
        "config_hash": config_hash(cfg),
        "attacks": [a.name for a in cfg.attacks],
        "files": files,
    })
    return results


def _csv_row(name, data, class_count):
    row = [MODEL_FILE.split(".")[0], name, data["config_hash"]]
    per_class = data["per_class_accuracy"]
    for i in range(class_count):
        v = per_class[i] if i < len(per_class) else None
        row.append("" if v is None else f"{v:.4f}")
    row += [f"{data['oa']:.4f}", f"{data['aa']:.4f}", f"{data['kappa']:.4f}",
            f"{data['l0_mean']:.2f}", f"{data['l2_mean']:.6f}", f"{data['linf_max']:.6f}",
            f"{data['lesion_accuracy']:.4f}"]
    return row


def cmd_report(cfg):
    wanted = ["metrics_clean.yaml"] + [f"metrics_{a.name}.yaml" for a in cfg.attacks]
    missing = [n for n in wanted if not os.path.exists(_out(cfg, n))]
    if missing:
        raise ConfigError(
            "missing attack artifacts (run `hsia attack` first): "
            + ", ".join(_out(cfg, n) for n in missing))
    entries = [("clean", _read_yaml(_out(cfg, "metrics_clean.yaml")))]
    entries += [(a.name, _read_yaml(_out(cfg, f"metrics_{a.name}.yaml")))
                for a in cfg.attacks]
    class_names = entries[0][1]["class_names"]
    buf = io.StringIO()
    buf.write(f"# config_hash={config_hash(cfg)}\n")
    writer = csv.writer(buf, lineterminator="\n")
    header = ["model", "attack", "config_hash"]
    header += [f"acc_{n}" for n in class_names]
    header += ["oa", "aa", "kappa", "l0", "l2", "linf", "lesion_acc"]
    writer.writerow(header)
    for name, data in entries:
        writer.writerow(_csv_row(name, data, len(class_names)))
    with open(_out(cfg, RESULTS_FILE), "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())
    _write_yaml(_out(cfg, REPORT_FILE), {
        "config": cfg.to_dict(),
        "config_hash": config_hash(cfg),
        "rows": {name: data for name, data in entries},
        "files": wanted + [RESULTS_FILE],
    })
    return _out(cfg, RESULTS_FILE)
