"""hsia — adversarial attack testbed for hyperspectral patch classifiers.

Synthetic hyperspectral scenes are reduced with PCA, cut into per-pixel
patches, classified by a small conv net with hand-rolled reverse-mode
gradients, and attacked with window-smoothed iterative and multiscale
first-order attacks. See the README for the CLI workflow.
"""

__version__ = "0.1.0"

from .attacks import (AttackConfig, Perturbation, attack_scene, combined_attack,
                      lpda_targeted, lpda_untargeted, mia_attack,
                      sign_gradient_baseline)
from .config import ExperimentConfig, config_hash, default_config, load_config
from .data import (HsiScene, PatchSet, SceneRecipe, brain_recipe, extract_patches,
                   generate_scene, mdc_recipe, pca_fit, pca_inverse, pca_transform,
                   split_train_test)
from .errors import (ConfigError, FormatError, GenerationError, HsiaError,
                     NumericError, SplitError, TrainingError)
from .metrics import (ConfusionMatrix, MetricsReport, average_accuracy, cohens_kappa,
                      confusion, overall_accuracy, per_class_accuracy,
                      perturbation_budget)
from .model import PatchClassifier, TrainConfig, load_model, save_model, train
from .verify import run_verification

__all__ = [
    "AttackConfig", "Perturbation", "attack_scene", "combined_attack",
    "lpda_targeted", "lpda_untargeted", "mia_attack", "sign_gradient_baseline",
    "ExperimentConfig", "config_hash", "default_config", "load_config",
    "HsiScene", "PatchSet", "SceneRecipe", "brain_recipe", "extract_patches",
    "generate_scene", "mdc_recipe", "pca_fit", "pca_inverse", "pca_transform",
    "split_train_test",
    "ConfigError", "FormatError", "GenerationError", "HsiaError",
    "NumericError", "SplitError", "TrainingError",
    "ConfusionMatrix", "MetricsReport", "average_accuracy", "cohens_kappa",
    "confusion", "overall_accuracy", "per_class_accuracy", "perturbation_budget",
    "PatchClassifier", "TrainConfig", "load_model", "save_model", "train",
    "run_verification",
]
