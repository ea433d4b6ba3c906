import numpy as np
import pytest

from hsia.data import (BlobSpec, ComponentScaler, HsiScene, SceneRecipe,
                       brain_recipe, extract_patches, generate_scene,
                       mdc_recipe, pca_fit, pca_inverse, pca_transform,
                       split_train_test, stratified_split_indices)
from hsia.errors import ConfigError, GenerationError, SplitError

from conftest import make_rng


class TestSceneGeneration:
    def test_zero_noise_reproduces_prototypes_exactly(self):
        recipe = brain_recipe(32, 32, 20, noise_sigma=0.0, seed=5)
        scene = generate_scene(recipe)
        np.testing.assert_array_equal(scene.cube, recipe.prototypes[scene.labels])

    def test_deterministic(self):
        a = generate_scene(brain_recipe(seed=11))
        b = generate_scene(brain_recipe(seed=11))
        np.testing.assert_array_equal(a.cube, b.cube)
        np.testing.assert_array_equal(a.labels, b.labels)

    def test_different_seed_changes_layout(self):
        a = generate_scene(brain_recipe(seed=11))
        b = generate_scene(brain_recipe(seed=12))
        assert not np.array_equal(a.labels, b.labels)

    def test_all_classes_cover_minimum_fraction(self):
        for recipe in (brain_recipe(seed=3), mdc_recipe(seed=3)):
            scene = generate_scene(recipe)
            counts = np.bincount(scene.labels.ravel(),
                                 minlength=len(recipe.class_names))
            assert counts.min() >= recipe.min_class_fraction * scene.labels.size

    def test_values_stay_in_unit_interval(self):
        scene = generate_scene(brain_recipe(seed=7, noise_sigma=0.2))
        assert scene.cube.min() >= 0.0
        assert scene.cube.max() <= 1.0
        assert scene.cube.dtype == np.float32

    def test_unreachable_coverage_raises(self):
        proto = np.full((2, 4), 0.5, dtype=np.float32)
        recipe = SceneRecipe(
            height=32, width=32, bands=4, class_names=("a", "b"),
            prototypes=proto, blobs=(None, BlobSpec(1, 0.1, 0.2)),
            noise_sigma=0.0, seed=0, min_class_fraction=0.5, max_attempts=3)
        with pytest.raises(GenerationError, match="coverage"):
            generate_scene(recipe)

    def test_scene_validation(self):
        with pytest.raises(ConfigError):
            HsiScene(np.full((4, 4, 3), 1.5, dtype=np.float32),
                     np.zeros((4, 4), dtype=np.int64), ("a",))
        with pytest.raises(ConfigError):
            HsiScene(np.zeros((4, 4, 3), dtype=np.float32),
                     np.full((4, 4), 2, dtype=np.int64), ("a", "b"))
        with pytest.raises(ConfigError):
            HsiScene(np.zeros((4, 4, 3), dtype=np.float32),
                     np.zeros((3, 4), dtype=np.int64), ("a",))


class TestPca:
    def make_spectra(self, seed, n=400, d=12):
        rng = make_rng(seed)
        basis = rng.standard_normal((3, d))
        coeff = rng.standard_normal((n, 3)) * np.array([5.0, 2.0, 0.5])
        return coeff @ basis + 0.1 * rng.standard_normal((n, d))

    def test_components_orthonormal(self):
        pca = pca_fit(self.make_spectra(0), 5)
        gram = pca.components @ pca.components.T
        np.testing.assert_allclose(gram, np.eye(5), rtol=0, atol=1e-5)

    def test_variance_descending_and_matches_projection(self):
        spectra = self.make_spectra(1)
        pca = pca_fit(spectra, 4)
        ev = pca.explained_variance
        assert np.all(np.diff(ev) <= 1e-9)
        proj = pca_transform(pca, spectra.astype(np.float32))
        sample_var = proj[:, 0].astype(np.float64).var(ddof=1)
        assert sample_var == pytest.approx(ev[0], rel=1e-3)

    def test_mean_maps_to_origin(self):
        spectra = self.make_spectra(2)
        pca = pca_fit(spectra, 3)
        coded = pca_transform(pca, spectra.mean(axis=0, keepdims=True).astype(np.float32))
        np.testing.assert_allclose(coded, 0.0, atol=1e-4)

    def test_full_rank_roundtrip(self):
        spectra = self.make_spectra(3, n=200, d=8)
        pca = pca_fit(spectra, 8)
        x = spectra[:16].astype(np.float32)
        back = pca_inverse(pca, pca_transform(pca, x))
        np.testing.assert_allclose(back, x, rtol=0, atol=1e-4)

    def test_sign_convention_and_determinism(self):
        spectra = self.make_spectra(4)
        a = pca_fit(spectra, 4)
        b = pca_fit(spectra, 4)
        np.testing.assert_array_equal(a.components, b.components)
        for row in a.components:
            assert row[np.argmax(np.abs(row))] > 0

    def test_bad_arguments(self):
        spectra = self.make_spectra(5, n=10, d=6)
        with pytest.raises(ConfigError):
            pca_fit(spectra, 7)       # more components than bands
        with pytest.raises(ConfigError):
            pca_fit(spectra[:3], 4)   # not enough spectra
        pca = pca_fit(spectra, 3)
        with pytest.raises(ConfigError):
            pca_transform(pca, np.zeros((2, 5), dtype=np.float32))
        with pytest.raises(ConfigError):
            pca_inverse(pca, np.zeros((2, 4), dtype=np.float32))


class TestScaler:
    def test_maps_training_extremes_to_unit_interval(self):
        rng = make_rng(6)
        coded = rng.standard_normal((50, 3)).astype(np.float32) * [1.0, 10.0, 0.1]
        scaler = ComponentScaler.fit(coded)
        out = scaler.apply(coded)
        np.testing.assert_allclose(out.min(axis=0), 0.0, atol=1e-6)
        np.testing.assert_allclose(out.max(axis=0), 1.0, atol=1e-6)

    def test_out_of_range_values_clipped(self):
        coded = np.array([[0.0], [1.0]], dtype=np.float32)
        scaler = ComponentScaler.fit(coded)
        out = scaler.apply(np.array([[-5.0], [0.25], [5.0]], dtype=np.float32))
        np.testing.assert_array_equal(out.ravel(), [0.0, 0.25, 1.0])

    def test_constant_component_is_safe(self):
        coded = np.full((10, 2), 0.7, dtype=np.float32)
        scaler = ComponentScaler.fit(coded)
        out = scaler.apply(coded)
        assert np.all(np.isfinite(out))

    def test_rejects_degenerate_input(self):
        with pytest.raises(ConfigError):
            ComponentScaler.fit(np.zeros((1, 3), dtype=np.float32))


class TestExtractPatches:
    def make_scene(self, h=8, w=8, k=3, seed=0):
        rng = make_rng(seed)
        cube = (0.1 + 0.8 * rng.random((h, w, k))).astype(np.float32)
        labels = rng.integers(0, 2, size=(h, w))
        return HsiScene(cube, labels, ("a", "b"))

    def test_shapes_and_labels(self):
        scene = self.make_scene()
        ps = extract_patches(scene, window=5)
        assert ps.patches.shape == (64, 3, 5, 5)
        assert ps.patches.dtype == np.float32
        np.testing.assert_array_equal(ps.labels, scene.labels.ravel())
        np.testing.assert_array_equal(ps.coords[9], [1, 1])

    def test_center_pixel_fidelity(self):
        scene = self.make_scene()
        ps = extract_patches(scene, window=5)
        for n in (0, 13, 63):
            i, j = ps.coords[n]
            np.testing.assert_array_equal(ps.patches[n, :, 2, 2], scene.cube[i, j])

    def test_corner_patch_zero_padding_count(self):
        # 8x8 scene, window 11: the (0, 0) patch covers rows/cols -5..5, of
        # which only 0..5 are in bounds, so 121 - 36 = 85 padded zeros per
        # component plane. Cube values are strictly positive by construction.
        scene = self.make_scene()
        ps = extract_patches(scene, window=11)
        corner = ps.patches[0]
        assert corner.shape == (3, 11, 11)
        for plane in corner:
            assert int(np.sum(plane == 0.0)) == 85

    def test_window_one_returns_pixels(self):
        scene = self.make_scene()
        ps = extract_patches(scene, window=1)
        np.testing.assert_array_equal(
            ps.patches.reshape(64, 3), scene.cube.reshape(64, 3))

    def test_interior_patch_matches_slice(self):
        scene = self.make_scene()
        ps = extract_patches(scene, window=3)
        n = 3 * 8 + 4  # pixel (3, 4), fully interior for window 3
        want = scene.cube[2:5, 3:6].transpose(2, 0, 1)
        np.testing.assert_array_equal(ps.patches[n], want)

    def test_rejects_even_window(self):
        with pytest.raises(ConfigError):
            extract_patches(self.make_scene(), window=4)

    def test_subset_keeps_alignment(self):
        ps = extract_patches(self.make_scene(), window=3)
        sub = ps.subset([5, 10, 20])
        assert len(sub) == 3
        np.testing.assert_array_equal(sub.labels, ps.labels[[5, 10, 20]])
        np.testing.assert_array_equal(sub.patches[1], ps.patches[10])


class TestStratifiedSplit:
    def test_exact_eighty_twenty(self):
        labels = np.repeat([0, 1, 2], [10, 5, 20])
        train, test = stratified_split_indices(labels, 0.8, seed=0)
        assert train.size == 8 + 4 + 16
        assert test.size == 2 + 1 + 4
        for cls, n_train in ((0, 8), (1, 4), (2, 16)):
            assert int(np.sum(labels[train] == cls)) == n_train

    def test_disjoint_sorted_and_complete(self):
        labels = make_rng(7).integers(0, 4, size=200)
        train, test = stratified_split_indices(labels, 0.8, seed=1)
        assert np.intersect1d(train, test).size == 0
        merged = np.concatenate([train, test])
        np.testing.assert_array_equal(np.sort(merged), np.arange(200))
        np.testing.assert_array_equal(train, np.sort(train))
        np.testing.assert_array_equal(test, np.sort(test))

    def test_two_sample_class_splits_one_one(self):
        labels = np.array([0, 0, 0, 0, 1, 1])
        train, test = stratified_split_indices(labels, 0.8, seed=2)
        assert int(np.sum(labels[train] == 1)) == 1
        assert int(np.sum(labels[test] == 1)) == 1

    def test_singleton_class_raises(self):
        with pytest.raises(SplitError, match="class 1"):
            stratified_split_indices(np.array([0, 0, 1]), 0.8, seed=0)

    def test_deterministic_per_seed(self):
        labels = make_rng(8).integers(0, 3, size=100)
        a = stratified_split_indices(labels, 0.8, seed=5)
        b = stratified_split_indices(labels, 0.8, seed=5)
        c = stratified_split_indices(labels, 0.8, seed=6)
        np.testing.assert_array_equal(a[0], b[0])
        assert not np.array_equal(a[0], c[0])

    def test_bad_fraction(self):
        with pytest.raises(ConfigError):
            stratified_split_indices(np.array([0, 0, 1, 1]), 1.0, seed=0)

    def test_split_train_test_wrapper(self):
        scene = generate_scene(mdc_recipe(32, 32, 10, seed=9))
        ps = extract_patches(scene, window=3)
        train, test = split_train_test(ps, 0.8, seed=1)
        assert len(train) + len(test) == len(ps)
        # subsets carry matched labels and coords
        i, j = train.coords[0]
        assert train.labels[0] == scene.labels[i, j]
