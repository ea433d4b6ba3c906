"""Synthetic hyperspectral scenes and the reduction pipeline.

A scene is an (H, W, D) float32 reflectance cube in [0, 1] plus an (H, W)
integer label map. Scenes are painted from per-class spectral prototypes with
blob-shaped regions and optional Gaussian noise, all driven by one seed.

The reduction path is: PCA fitted on training pixels, a per-component min-max
scaler (also fitted on training pixels) that maps components into [0, 1], and
11x11 zero-padded patch extraction — one patch per pixel, row-major order, each
labelled by its center pixel.
"""

from dataclasses import dataclass

import numpy as np

from .errors import ConfigError, GenerationError, SplitError


@dataclass
class HsiScene:
    """Reflectance cube (H, W, D) float32 in [0, 1] plus per-pixel labels (H, W)."""

    cube: np.ndarray
    labels: np.ndarray
    class_names: tuple

    def __post_init__(self):
        cube = np.asarray(self.cube, dtype=np.float32)
        labels = np.asarray(self.labels)
        if cube.ndim != 3:
            raise ConfigError(f"scene cube must be (H, W, D), got {cube.shape}")
        if labels.shape != cube.shape[:2]:
            raise ConfigError(
                f"label map {labels.shape} does not match cube spatial dims {cube.shape[:2]}")
        if cube.size and (cube.min() < 0.0 or cube.max() > 1.0):
            raise ConfigError(
                f"cube values must lie in [0, 1], got [{cube.min()}, {cube.max()}]")
        if labels.size and (labels.min() < 0 or labels.max() >= len(self.class_names)):
            raise ConfigError(
                f"labels must lie in [0, {len(self.class_names)}), got "
                f"[{labels.min()}, {labels.max()}]")
        self.cube = cube
        self.labels = np.ascontiguousarray(labels, dtype=np.int64)
        self.class_names = tuple(self.class_names)

    @property
    def num_classes(self):
        return len(self.class_names)

    @property
    def shape(self):
        return self.cube.shape


@dataclass(frozen=True)
class BlobSpec:
    """How many roughly-circular regions a class paints, and their radius range."""

    count: int
    radius_min: float
    radius_max: float


@dataclass(frozen=True)
class SceneRecipe:
    height: int
    width: int
    bands: int
    class_names: tuple
    prototypes: np.ndarray  # (C, D) float32 in [0, 1]
    blobs: tuple  # per class: BlobSpec or None (None = background canvas)
    noise_sigma: float = 0.02
    seed: int = 0
    min_class_fraction: float = 0.01
    max_attempts: int = 32

    def validate(self):
        c = len(self.class_names)
        if self.height < 8 or self.width < 8:
            raise ConfigError(f"scene must be at least 8x8, got {self.height}x{self.width}")
        if self.bands < 1:
            raise ConfigError(f"bands must be >= 1, got {self.bands}")
        proto = np.asarray(self.prototypes)
        if proto.shape != (c, self.bands):
            raise ConfigError(
                f"prototypes shape {proto.shape} != (num_classes={c}, bands={self.bands})")
        if proto.min() < 0.0 or proto.max() > 1.0:
            raise ConfigError("prototype spectra must lie in [0, 1]")
        if len(self.blobs) != c:
            raise ConfigError(f"{len(self.blobs)} blob specs for {c} classes")
        if self.noise_sigma < 0:
            raise ConfigError(f"noise_sigma must be >= 0, got {self.noise_sigma}")


def _gauss_bump(t, center, width):
    return np.exp(-((t - center) / width) ** 2)


def brain_recipe(height=64, width=64, bands=60, noise_sigma=0.045, seed=0):
    """Four-class brain-tissue style scene: background, normal, tumor, vessel.

    Tumor is spectrally close to normal tissue (shifted absorption bump);
    background is dark and flat; vessels carry a narrow long-wavelength bump.
    """
    t = np.linspace(0.0, 1.0, bands)
    prototypes = np.stack([
        0.06 + 0.04 * t,
        0.40 + 0.05 * t + 0.25 * _gauss_bump(t, 0.28, 0.16),
        0.40 + 0.05 * t + 0.25 * _gauss_bump(t, 0.33, 0.16),
        0.25 + 0.35 * _gauss_bump(t, 0.80, 0.10),
    ]).astype(np.float32)
    scale = min(height, width) / 64.0
    return SceneRecipe(
        height=height, width=width, bands=bands,
        class_names=("background", "normal", "tumor", "vessel"),
        prototypes=prototypes,
        blobs=(
            None,
            BlobSpec(3, 10.0 * scale, 15.0 * scale),
            BlobSpec(3, 7.0 * scale, 11.0 * scale),
            BlobSpec(5, 2.0 * scale, 3.5 * scale),
        ),
        noise_sigma=noise_sigma, seed=seed)


def mdc_recipe(height=64, width=64, bands=60, noise_sigma=0.045, seed=0):
    """Two-class membranous-tissue style scene: normal canvas with cancer lesions."""
    t = np.linspace(0.0, 1.0, bands)
    prototypes = np.stack([
        0.35 + 0.10 * t + 0.20 * _gauss_bump(t, 0.35, 0.20),
        0.35 + 0.10 * t + 0.20 * _gauss_bump(t, 0.55, 0.20),
    ]).astype(np.float32)
    scale = min(height, width) / 64.0
    return SceneRecipe(
        height=height, width=width, bands=bands,
        class_names=("normal", "cancer"),
        prototypes=prototypes,
        blobs=(None, BlobSpec(3, 6.0 * scale, 10.0 * scale)),
        noise_sigma=noise_sigma, seed=seed)


RECIPE_PRESETS = {"brain": brain_recipe, "mdc": mdc_recipe}


def _paint_labels(recipe, rng):
    h, w = recipe.height, recipe.width
    labels = np.zeros((h, w), dtype=np.int64)
    ii, jj = np.mgrid[0:h, 0:w]
    for cls, spec in enumerate(recipe.blobs):
        if spec is None:
            continue
        for _ in range(spec.count):
            ci = rng.uniform(0, h)
            cj = rng.uniform(0, w)
            r = rng.uniform(spec.radius_min, spec.radius_max)
            labels[(ii - ci) ** 2 + (jj - cj) ** 2 <= r * r] = cls
    return labels


def generate_scene(recipe):
    """Deterministic scene synthesis; retries layouts until every class covers
    min_class_fraction of the pixels, then adds band noise and clips to [0, 1]."""
    recipe.validate()
    rng = np.random.default_rng(recipe.seed)
    need = recipe.min_class_fraction * recipe.height * recipe.width
    labels = None
    for _ in range(recipe.max_attempts):
        candidate = _paint_labels(recipe, rng)
        counts = np.bincount(candidate.ravel(), minlength=len(recipe.class_names))
        if counts.min() >= need:
            labels = candidate
            break
    if labels is None:
        raise GenerationError(
            f"could not reach {recipe.min_class_fraction:.0%} coverage for every class "
            f"after {recipe.max_attempts} layout attempts")
    proto = np.asarray(recipe.prototypes, dtype=np.float32)
    if recipe.noise_sigma == 0.0:
        cube = proto[labels]
    else:
        noise = rng.normal(0.0, recipe.noise_sigma, size=(recipe.height, recipe.width, recipe.bands))
        cube = np.clip(proto[labels] + noise, 0.0, 1.0).astype(np.float32)
    return HsiScene(cube, labels, recipe.class_names)


# ---------------------------------------------------------------------------
# PCA + scaling


@dataclass
class PcaModel:
    mean: np.ndarray        # (D,) float32
    components: np.ndarray  # (K, D) float32, rows orthonormal
    explained_variance: np.ndarray  # (K,) float64, descending


def pca_fit(spectra, num_components):
    """Eigendecomposition PCA on (N, D) spectra; deterministic component signs."""
    spectra = np.asarray(spectra, dtype=np.float64)
    if spectra.ndim != 2:
        raise ConfigError(f"pca_fit expects (N, D) spectra, got {spectra.shape}")
    n, d = spectra.shape
    if not (1 <= num_components <= d):
        raise ConfigError(f"num_components must be in [1, {d}], got {num_components}")
    if n <= num_components:
        raise ConfigError(f"need more than {num_components} spectra to fit, got {n}")
    mean = spectra.mean(axis=0)
    centered = spectra - mean
    cov = (centered.T @ centered) / (n - 1)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1][:num_components]
    comps = evecs[:, order].T
    # fix signs: largest-|coefficient| entry of each component is positive
    for k in range(comps.shape[0]):
        j = int(np.argmax(np.abs(comps[k])))
        if comps[k, j] < 0:
            comps[k] = -comps[k]
    return PcaModel(mean.astype(np.float32),
                    np.ascontiguousarray(comps, dtype=np.float32),
                    np.maximum(evals[order], 0.0))


def pca_transform(pca, cube):
    """Project an (H, W, D) cube (or (N, D) spectra) onto the components."""
    arr = np.asarray(cube, dtype=np.float32)
    if arr.shape[-1] != pca.mean.shape[0]:
        raise ConfigError(
            f"input has {arr.shape[-1]} bands, PCA was fitted on {pca.mean.shape[0]}")
    return (arr - pca.mean) @ pca.components.T


def pca_inverse(pca, coded):
    """Back-project (…, K) component values to (…, D) spectra."""
    arr = np.asarray(coded, dtype=np.float32)
    if arr.shape[-1] != pca.components.shape[0]:
        raise ConfigError(
            f"input has {arr.shape[-1]} components, PCA produced {pca.components.shape[0]}")
    return arr @ pca.components + pca.mean


@dataclass
class ComponentScaler:
    """Per-component affine map onto [0, 1], fitted as min-max over training pixels."""

    low: np.ndarray   # (K,) float32
    span: np.ndarray  # (K,) float32, >= tiny

    @classmethod
    def fit(cls, coded):
        coded = np.asarray(coded)
        if coded.ndim != 2 or coded.shape[0] < 2:
            raise ConfigError(f"scaler needs (N>=2, K) values, got {coded.shape}")
        low = coded.min(axis=0).astype(np.float32)
        span = (coded.max(axis=0) - coded.min(axis=0)).astype(np.float32)
        span = np.maximum(span, np.float32(1e-12))
        return cls(low, span)

    def apply(self, coded):
        out = (np.asarray(coded, dtype=np.float32) - self.low) / self.span
        return np.clip(out, 0.0, 1.0)


# ---------------------------------------------------------------------------
# patches and splits


@dataclass
class PatchSet:
    """Patches (N, K, h, w) float32, labels (N,), pixel coords (N, 2), scene id."""

    patches: np.ndarray
    labels: np.ndarray
    coords: np.ndarray
    scene_id: str = "scene"

    def __len__(self):
        return self.patches.shape[0]

    def subset(self, indices):
        indices = np.asarray(indices)
        return PatchSet(self.patches[indices], self.labels[indices],
                        self.coords[indices], self.scene_id)


def extract_patches(scene, window=11, scene_id="scene"):
    """One zero-padded (K, window, window) patch per pixel, row-major order.

    ``scene`` is an HsiScene whose cube holds the (scaled) reduced components,
    laid out (H, W, K). Each patch is labelled by its center pixel.
    """
    if window < 1 or window % 2 == 0:
        raise ConfigError(f"patch window must be a positive odd integer, got {window}")
    cube = scene.cube
    h, w, k = cube.shape
    r = window // 2
    padded = np.zeros((h + 2 * r, w + 2 * r, k), dtype=cube.dtype)
    padded[r:r + h, r:r + w] = cube
    # (H, W, window, window, K) sliding view, then to (N, K, window, window)
    s0, s1, s2 = padded.strides
    view = np.lib.stride_tricks.as_strided(
        padded, (h, w, window, window, k), (s0, s1, s0, s1, s2))
    patches = np.ascontiguousarray(
        view.reshape(h * w, window, window, k).transpose(0, 3, 1, 2))
    ii, jj = np.mgrid[0:h, 0:w]
    coords = np.stack([ii.ravel(), jj.ravel()], axis=1).astype(np.int64)
    return PatchSet(patches, scene.labels.ravel().copy(), coords, scene_id)


def stratified_split_indices(labels, train_fraction, seed):
    """Per-class shuffled index split; returns sorted (train_idx, test_idx)."""
    labels = np.asarray(labels).reshape(-1)
    if not (0.0 < train_fraction < 1.0):
        raise ConfigError(f"train_fraction must be in (0, 1), got {train_fraction}")
    rng = np.random.default_rng(seed)
    train_parts, test_parts = [], []
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < 2:
            raise SplitError(
                f"class {cls} has {idx.size} sample(s); need at least 2 to split")
        perm = rng.permutation(idx.size)
        n_train = int(np.floor(train_fraction * idx.size + 0.5))
        n_train = min(max(n_train, 1), idx.size - 1)
        train_parts.append(idx[perm[:n_train]])
        test_parts.append(idx[perm[n_train:]])
    return (np.sort(np.concatenate(train_parts)),
            np.sort(np.concatenate(test_parts)))


def split_train_test(patch_set, train_fraction=0.8, seed=0):
    """Stratified split of a PatchSet into disjoint train/test PatchSets."""
    train_idx, test_idx = stratified_split_indices(patch_set.labels, train_fraction, seed)
    return patch_set.subset(train_idx), patch_set.subset(test_idx)
