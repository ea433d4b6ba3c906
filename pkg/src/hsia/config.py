"""Experiment configuration: YAML loading, validation, canonical hashing.

One experiment seed drives everything; the scene uses it directly, the split
uses seed+1 and training seed+2 unless the train section pins its own. The
config hash is sha256 over the fully-resolved config dict serialized as
canonical JSON (sorted keys), so reordering keys in the YAML does not change
the hash but changing any effective value does.
"""

import hashlib
import json
from dataclasses import dataclass, field

import yaml

from .attacks import ATTACK_KINDS, AttackConfig
from .data import RECIPE_PRESETS
from .errors import ConfigError
from .model import TrainConfig


@dataclass(frozen=True)
class SceneSpec:
    preset: str = "brain"
    height: int = 64
    width: int = 64
    bands: int = 60
    noise_sigma: float = 0.045

    def __post_init__(self):
        if self.preset not in RECIPE_PRESETS:
            raise ConfigError(
                f"unknown scene preset {self.preset!r}; choose from {sorted(RECIPE_PRESETS)}")
        if self.height < 8 or self.width < 8 or self.bands < 1:
            raise ConfigError(
                f"bad scene dimensions {self.height}x{self.width}x{self.bands}")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


@dataclass(frozen=True)
class AttackSpec:
    name: str
    kind: str
    config: AttackConfig
    scope: str = "all"
    target_class: int = None

    def __post_init__(self):
        if self.kind not in ATTACK_KINDS or self.kind == "none":
            raise ConfigError(f"unknown attack kind {self.kind!r}")
        if self.scope not in ("all", "lesion"):
            raise ConfigError(f"scope must be 'all' or 'lesion', got {self.scope!r}")
        if self.kind == "lpda_targeted" and self.target_class is None:
            raise ConfigError(f"attack {self.name!r} is targeted but has no target_class")
        if not self.name or any(c in self.name for c in " /\\"):
            raise ConfigError(f"attack name {self.name!r} must be a simple token")


@dataclass(frozen=True)
class ExperimentConfig:
    seed: int = 42
    output_dir: str = "out"
    scene: SceneSpec = field(default_factory=SceneSpec)
    pca_components: int = 20
    patch_window: int = 11
    train_fraction: float = 0.8
    train: TrainConfig = None
    attacks: tuple = ()
    lesion_class: int = None

    def __post_init__(self):
        if self.pca_components < 1 or self.pca_components > self.scene.bands:
            raise ConfigError(
                f"pca_components must be in [1, {self.scene.bands}], got {self.pca_components}")
        if self.patch_window < 5 or self.patch_window % 2 == 0:
            raise ConfigError(
                f"patch_window must be an odd integer >= 5, got {self.patch_window}")
        if not (0.0 < self.train_fraction < 1.0):
            raise ConfigError(f"train_fraction must be in (0, 1), got {self.train_fraction}")
        names = [a.name for a in self.attacks]
        if len(set(names)) != len(names):
            raise ConfigError(f"duplicate attack names in config: {names}")

    @property
    def split_seed(self):
        return self.seed + 1

    def to_dict(self):
        return {
            "seed": self.seed,
            "scene": {
                "preset": self.scene.preset, "height": self.scene.height,
                "width": self.scene.width, "bands": self.scene.bands,
                "noise_sigma": self.scene.noise_sigma,
            },
            "pca_components": self.pca_components,
            "patch_window": self.patch_window,
            "train_fraction": self.train_fraction,
            "train": {
                "learning_rate": self.train.learning_rate, "epochs": self.train.epochs,
                "batch_size": self.train.batch_size, "seed": self.train.seed,
                "weight_decay": self.train.weight_decay,
            },
            "attacks": [
                {
                    "name": a.name, "kind": a.kind, "scope": a.scope,
                    "target_class": a.target_class,
                    "epsilon": a.config.epsilon, "iterations": a.config.iterations,
                    "window": a.config.window, "scales": list(a.config.scales),
                    "multiscale_mode": a.config.multiscale_mode,
                    "clip": [a.config.clip_low, a.config.clip_high],
                }
                for a in self.attacks
            ],
            "lesion_class": self.lesion_class,
        }


def config_hash(cfg):
    blob = json.dumps(cfg.to_dict(), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()[:16]


def _take(mapping, key, default, caster, context):
    value = mapping.pop(key, None)
    if value is None:
        return default
    try:
        return caster(value)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad value for {context}.{key}: {value!r}") from exc


def _no_leftovers(mapping, context):
    if mapping:
        raise ConfigError(f"unknown keys in {context}: {sorted(mapping)}")


def _build_attack(entry, index, default_clip):
    if not isinstance(entry, dict):
        raise ConfigError(f"attacks[{index}] must be a mapping, got {type(entry).__name__}")
    entry = dict(entry)
    name = _take(entry, "name", None, str, f"attacks[{index}]")
    kind = _take(entry, "kind", None, str, f"attacks[{index}]")
    if name is None or kind is None:
        raise ConfigError(f"attacks[{index}] needs both 'name' and 'kind'")
    scope = _take(entry, "scope", "all", str, f"attacks[{index}]")
    target = _take(entry, "target_class", None, int, f"attacks[{index}]")
    clip = entry.pop("clip", default_clip)
    if not (isinstance(clip, (list, tuple)) and len(clip) == 2):
        raise ConfigError(f"attacks[{index}].clip must be [low, high], got {clip!r}")
    acfg = AttackConfig(
        epsilon=_take(entry, "epsilon", 0.03, float, f"attacks[{index}]"),
        iterations=_take(entry, "iterations", 20, int, f"attacks[{index}]"),
        window=_take(entry, "window", 3, int, f"attacks[{index}]"),
        scales=tuple(entry.pop("scales", (1, 2, 4))),
        multiscale_mode=_take(entry, "multiscale_mode", "residual", str, f"attacks[{index}]"),
        clip_low=float(clip[0]), clip_high=float(clip[1]))
    _no_leftovers(entry, f"attacks[{index}]")
    return AttackSpec(name=name, kind=kind, config=acfg, scope=scope, target_class=target)


DEFAULT_ATTACKS = (
    {"name": "baseline", "kind": "baseline", "scope": "lesion"},
    {"name": "lpda", "kind": "lpda", "scope": "lesion"},
    {"name": "mia", "kind": "mia", "scope": "lesion"},
    {"name": "combined", "kind": "combined", "scope": "lesion"},
)


def build_config(raw, out_override=None, seed_override=None):
    """Resolve a raw dict (parsed YAML, possibly empty) into an ExperimentConfig."""
    if raw is None:
        raw = {}
    if not isinstance(raw, dict):
        raise ConfigError(f"config root must be a mapping, got {type(raw).__name__}")
    raw = dict(raw)
    seed = _take(raw, "seed", 42, int, "config")
    if seed_override is not None:
        seed = int(seed_override)
    if not (0 <= seed < 2 ** 64):
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed}")
    output_dir = _take(raw, "output_dir", "out", str, "config")
    if out_override is not None:
        output_dir = str(out_override)

    scene_raw = dict(raw.pop("scene", {}) or {})
    scene = SceneSpec(
        preset=_take(scene_raw, "preset", "brain", str, "scene"),
        height=_take(scene_raw, "height", 64, int, "scene"),
        width=_take(scene_raw, "width", 64, int, "scene"),
        bands=_take(scene_raw, "bands", 60, int, "scene"),
        noise_sigma=_take(scene_raw, "noise_sigma", 0.045, float, "scene"))
    _no_leftovers(scene_raw, "scene")

    train_raw = dict(raw.pop("train", {}) or {})
    train = TrainConfig(
        learning_rate=_take(train_raw, "learning_rate", 0.03, float, "train"),
        epochs=_take(train_raw, "epochs", 12, int, "train"),
        batch_size=_take(train_raw, "batch_size", 64, int, "train"),
        seed=_take(train_raw, "seed", seed + 2, int, "train"),
        weight_decay=_take(train_raw, "weight_decay", 0.0, float, "train"))
    _no_leftovers(train_raw, "train")

    attacks_raw = raw.pop("attacks", None)
    if attacks_raw is None:
        attacks_raw = [dict(a) for a in DEFAULT_ATTACKS]
    if not isinstance(attacks_raw, list):
        raise ConfigError("attacks must be a list of mappings")
    clip = raw.pop("clip", [0.0, 1.0])
    attacks = tuple(_build_attack(a, i, clip) for i, a in enumerate(attacks_raw))

    lesion = _take(raw, "lesion_class", None, int, "config")
    if lesion is None:
        lesion = 2 if scene.preset == "brain" else 1
    pca_components = _take(raw, "pca_components", 20, int, "config")
    patch_window = _take(raw, "patch_window", 11, int, "config")
    train_fraction = _take(raw, "train_fraction", 0.8, float, "config")
    _no_leftovers(raw, "config")

    cfg = ExperimentConfig(
        seed=seed, output_dir=output_dir, scene=scene,
        pca_components=pca_components, patch_window=patch_window,
        train_fraction=train_fraction, train=train, attacks=attacks,
        lesion_class=lesion)
    num_classes = 4 if scene.preset == "brain" else 2
    if not (0 <= cfg.lesion_class < num_classes):
        raise ConfigError(
            f"lesion_class {cfg.lesion_class} out of range for preset {scene.preset!r}")
    for a in attacks:
        if a.target_class is not None and not (0 <= a.target_class < num_classes):
            raise ConfigError(
                f"attack {a.name!r} target_class {a.target_class} out of range")
    return cfg


def load_config(path=None, out_override=None, seed_override=None):
    """Load a YAML config file; a missing path means all defaults."""
    raw = {}
    if path is not None:
        try:
            with open(path, "r", encoding="utf-8") as fh:
                raw = yaml.safe_load(fh)
        except FileNotFoundError:
            raise ConfigError(f"config file not found: {path}")
        except yaml.YAMLError as exc:
            raise ConfigError(f"config file {path} is not valid YAML: {exc}")
    return build_config(raw, out_override=out_override, seed_override=seed_override)


def default_config(**overrides):
    return build_config(dict(overrides))
