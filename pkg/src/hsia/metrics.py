"""Classification and perturbation metrics.

Confusion matrices index truth by row and prediction by column. Accuracy
statistics are computed in float64. Perturbation budgets treat the last two
axes as spatial and any leading axes as components (pass ``spatial_axes`` for
other layouts).
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, NumericError


@dataclass
class ConfusionMatrix:
    counts: np.ndarray  # (C, C) int64; rows = truth, cols = prediction
    class_names: tuple

    @property
    def num_classes(self):
        return self.counts.shape[0]


def confusion(truth, pred, num_classes, class_names=None):
    truth = np.asarray(truth).reshape(-1)
    pred = np.asarray(pred).reshape(-1)
    if truth.shape != pred.shape:
        raise ConfigError(f"truth {truth.shape} and prediction {pred.shape} differ in length")
    if truth.size == 0:
        raise ConfigError("cannot build a confusion matrix from zero samples")
    for name, arr in (("truth", truth), ("prediction", pred)):
        if arr.min() < 0 or arr.max() >= num_classes:
            raise ConfigError(
                f"{name} labels must lie in [0, {num_classes}), got "
                f"[{arr.min()}, {arr.max()}]")
    counts = np.zeros((num_classes, num_classes), dtype=np.int64)
    np.add.at(counts, (truth, pred), 1)
    if class_names is None:
        class_names = tuple(f"class_{i}" for i in range(num_classes))
    return ConfusionMatrix(counts, tuple(class_names))


def overall_accuracy(matrix):
    counts = matrix.counts.astype(np.float64)
    return float(np.trace(counts) / counts.sum())


def per_class_accuracy(matrix):
    """Diagonal over row sums; NaN for classes absent from the truth."""
    counts = matrix.counts.astype(np.float64)
    rows = counts.sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        return np.where(rows > 0, np.diag(counts) / rows, np.nan)


def empty_classes(matrix):
    """Labels of classes with no ground-truth samples (excluded from AA)."""
    return [int(i) for i in np.flatnonzero(matrix.counts.sum(axis=1) == 0)]


def average_accuracy(matrix):
    """Mean of per-class accuracies over classes present in the truth."""
    acc = per_class_accuracy(matrix)
    present = ~np.isnan(acc)
    if not present.any():
        raise NumericError("no class has ground-truth samples; AA undefined")
    return float(acc[present].mean())


def cohens_kappa(matrix):
    """(p_o - p_e) / (1 - p_e); degenerate perfect-agreement marginals give 1,
    degenerate disagreement gives 0 (chance equals observation)."""
    counts = matrix.counts.astype(np.float64)
    total = counts.sum()
    p_o = np.trace(counts) / total
    p_e = float(counts.sum(axis=1) @ counts.sum(axis=0)) / (total * total)
    if p_e >= 1.0 - 1e-15:
        return 1.0 if p_o >= 1.0 - 1e-15 else 0.0
    return float((p_o - p_e) / (1.0 - p_e))


def perturbation_budget(clean, adv, tau=1e-8, spatial_axes=(-2, -1)):
    """(l0, l2, linf) of adv - clean.

    l0 counts spatial locations where any component moved by more than tau;
    l2 and linf are over all entries. Symmetric in its arguments.
    """
    clean = np.asarray(clean)
    adv = np.asarray(adv)
    if clean.shape != adv.shape:
        raise ConfigError(f"clean {clean.shape} and adversarial {adv.shape} shapes differ")
    diff = np.abs(adv.astype(np.float64) - clean.astype(np.float64))
    axes = tuple(sorted(ax % diff.ndim for ax in spatial_axes))
    comp_axes = tuple(ax for ax in range(diff.ndim) if ax not in axes)
    changed = (diff > tau)
    if comp_axes:
        changed = changed.any(axis=comp_axes)
    l0 = int(changed.sum())
    l2 = float(np.sqrt((diff ** 2).sum()))
    linf = float(diff.max()) if diff.size else 0.0
    return l0, l2, linf


@dataclass
class MetricsReport:
    """Everything the report stage serializes for one (model, attack) pair."""

    oa: float
    aa: float
    kappa: float
    per_class: np.ndarray
    excluded: list
    l0: int
    l2: float
    linf: float
    lesion_class: int
    lesion_accuracy: float
    matrix: ConfusionMatrix

    @classmethod
    def from_confusion(cls, matrix, budgets=(0, 0.0, 0.0), lesion_class=None):
        acc = per_class_accuracy(matrix)
        if lesion_class is None:
            lesion_class = matrix.num_classes - 1
        if not (0 <= lesion_class < matrix.num_classes):
            raise ConfigError(
                f"lesion class {lesion_class} out of range for {matrix.num_classes} classes")
        lesion_acc = float(acc[lesion_class]) if not np.isnan(acc[lesion_class]) else float("nan")
        return cls(
            oa=overall_accuracy(matrix),
            aa=average_accuracy(matrix),
            kappa=cohens_kappa(matrix),
            per_class=acc,
            excluded=empty_classes(matrix),
            l0=int(budgets[0]), l2=float(budgets[1]), linf=float(budgets[2]),
            lesion_class=int(lesion_class),
            lesion_accuracy=lesion_acc,
            matrix=matrix)
