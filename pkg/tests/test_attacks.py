import numpy as np
import pytest

import hsia.attacks as attacks_module
from hsia import reference
from hsia.attacks import (AttackConfig, attack_scene, combined_attack,
                          lpda_targeted, lpda_untargeted, mia_attack,
                          sign_gradient_baseline)
from hsia.data import HsiScene
from hsia.errors import ConfigError, NumericError
from hsia.metrics import perturbation_budget

from conftest import make_rng, tiny_model


@pytest.fixture(scope="module")
def model():
    return tiny_model(seed=17, components=3, size=7, num_classes=3)


@pytest.fixture
def batch(model):
    rng = make_rng(40)
    x = rng.random((6, 3, 7, 7), dtype=np.float32)
    y = rng.integers(0, 3, size=6)
    return x, y


def cfg(**kw):
    base = dict(epsilon=0.03, iterations=5, window=3, scales=(1, 2))
    base.update(kw)
    return AttackConfig(**base)


class TestAttackConfig:
    def test_defaults(self):
        c = AttackConfig()
        assert c.epsilon == 0.03
        assert c.iterations == 20
        assert c.window == 3
        assert c.scales == (1, 2, 4)
        assert c.multiscale_mode == "residual"
        assert (c.clip_low, c.clip_high) == (0.0, 1.0)

    def test_validation(self):
        with pytest.raises(ConfigError):
            AttackConfig(epsilon=-0.1)
        with pytest.raises(ConfigError):
            AttackConfig(iterations=0)
        with pytest.raises(ConfigError):
            AttackConfig(window=2)
        with pytest.raises(ConfigError):
            AttackConfig(scales=())
        with pytest.raises(ConfigError):
            AttackConfig(scales=(1, 1))
        with pytest.raises(ConfigError):
            AttackConfig(scales=(0, 2))
        with pytest.raises(ConfigError):
            AttackConfig(multiscale_mode="other")
        with pytest.raises(ConfigError):
            AttackConfig(clip_low=1.0, clip_high=0.0)


class TestBaseline:
    def test_delta_is_exact_sign_step(self, model, batch):
        x, y = batch
        adv, perts = sign_gradient_baseline(x, y, model, cfg())
        eps = np.float32(0.03)
        for pert in perts:
            assert np.isin(pert.delta, [-eps, np.float32(0.0), eps]).all()
        np.testing.assert_array_equal(
            adv, np.clip(x + np.stack([p.delta for p in perts]), 0.0, 1.0))

    def test_single_patch_squeeze(self, model, batch):
        x, y = batch
        adv, pert = sign_gradient_baseline(x[0], int(y[0]), model, cfg())
        assert adv.shape == (3, 7, 7)
        assert pert.kind == "baseline"

    def test_linf_at_most_epsilon(self, model, batch):
        x, y = batch
        _, perts = sign_gradient_baseline(x, y, model, cfg())
        for pert in perts:
            assert pert.linf <= 0.03 + 1e-7


class TestLpda:
    def test_window_one_equals_plain_iterative_ascent(self, model, batch):
        """With window=1 the smoothing is the identity, so LPDA must reduce to
        plain normalized iterative ascent, element-exactly."""
        x, y = batch
        c = cfg(window=1)
        adv, perts = lpda_untargeted(x, y, model, c)

        ref = x.copy()
        for _ in range(c.iterations):
            _, grad = model.loss_and_input_gradient_batch(ref, y)
            m = np.abs(grad.reshape(grad.shape[0], -1)).max(axis=1)
            unit = grad / np.where(m == 0, 1, m).astype(grad.dtype)[:, None, None, None]
            ref = np.clip(ref + (1.0 * c.epsilon) * unit, 0.0, 1.0)
        np.testing.assert_array_equal(adv, ref)

    def test_delta_is_adv_minus_clean(self, model, batch):
        x, y = batch
        adv, perts = lpda_untargeted(x, y, model, cfg())
        delta = np.stack([p.delta for p in perts])
        # the stored delta is defined post-clip as adv - clean, exactly
        np.testing.assert_array_equal(delta, adv - x)
        assert adv.min() >= 0.0 and adv.max() <= 1.0

    def test_preclip_linf_bound(self, model, batch):
        x, y = batch
        c = cfg(iterations=7)
        _, perts = lpda_untargeted(x, y, model, c)
        for pert in perts:
            assert pert.linf <= 7 * 0.03 + 1e-6

    def test_loss_trace_rises_untargeted(self, model, batch):
        x, y = batch
        _, perts = lpda_untargeted(x, y, model, cfg(iterations=10))
        first = np.mean([p.loss_trace[0] for p in perts])
        last = np.mean([p.loss_trace[-1] for p in perts])
        assert np.isfinite(last)
        assert last > first
        assert all(p.loss_trace.shape == (11,) for p in perts)

    def test_zero_gradient_stalls(self, batch):
        x, y = batch
        dead = tiny_model(seed=0, components=3, size=7, num_classes=3,
                          zero_init=True)
        adv, perts = lpda_untargeted(x, y, dead, cfg(iterations=4))
        np.testing.assert_array_equal(adv, x)
        for pert in perts:
            assert pert.stalled_steps == 4
            np.testing.assert_array_equal(pert.delta, 0.0)

    @pytest.mark.filterwarnings("ignore::RuntimeWarning")
    def test_non_finite_gradient_raises(self, batch):
        x, y = batch
        broken = tiny_model(seed=1, components=3, size=7, num_classes=3)
        broken.layers[0].weight[0, 0, 0, 0] = np.nan
        with pytest.raises(NumericError):
            lpda_untargeted(x, y, broken, cfg())

    def test_out_of_range_patch_rejected(self, model):
        bad = np.full((3, 7, 7), 1.5, dtype=np.float32)
        with pytest.raises(ConfigError):
            lpda_untargeted(bad, 0, model, cfg())

    def test_bad_label_rejected(self, model, batch):
        x, _ = batch
        with pytest.raises(ConfigError):
            lpda_untargeted(x, 3, model, cfg())


class TestLpdaTargeted:
    def test_target_loss_descends(self, model, batch):
        x, y = batch
        target = 2
        _, perts = lpda_targeted(x, target, model, cfg(iterations=10))
        first = np.mean([p.loss_trace[0] for p in perts])
        last = np.mean([p.loss_trace[-1] for p in perts])
        assert last < first

    def test_moves_predictions_towards_target(self, model, batch):
        x, y = batch
        target = 1
        adv, _ = lpda_targeted(x, target, model, cfg(iterations=15))
        before = (model.predict_batch(x) == target).sum()
        after = (model.predict_batch(adv) == target).sum()
        assert after >= before

    def test_warns_when_target_equals_truth(self, model, batch):
        x, y = batch
        with pytest.warns(UserWarning, match="target class equals"):
            lpda_targeted(x, int(y[0]), model, cfg(iterations=1),
                          true_label=np.full(x.shape[0], int(y[0])))

    def test_no_warning_without_clash(self, model, batch, recwarn):
        x, y = batch
        target = (y + 1) % 3
        lpda_targeted(x, target, model, cfg(iterations=1), true_label=y)
        assert len(recwarn) == 0


class TestMia:
    def test_residual_matches_oracle(self, model, batch):
        x, y = batch
        c = cfg(scales=(1, 2, 4))
        _, grad = model.loss_and_input_gradient_batch(x, y)
        _, perts = mia_attack(x, y, model, c)
        for i, pert in enumerate(perts):
            want = reference.multiscale_residual_ref(grad[i], c.scales,
                                                     c.epsilon, +1.0)
            np.testing.assert_allclose(pert.delta, want, rtol=0, atol=1e-6)

    def test_literal_matches_oracle(self, model, batch):
        x, y = batch
        c = cfg(scales=(1, 2), multiscale_mode="literal")
        _, grad = model.loss_and_input_gradient_batch(x, y)
        _, perts = mia_attack(x, y, model, c)
        for i, pert in enumerate(perts):
            want = reference.multiscale_literal_ref(x[i], grad[i], c.scales,
                                                    c.epsilon, +1.0)
            np.testing.assert_allclose(pert.delta, want, rtol=0, atol=1e-6)

    def test_single_scale_reduces_to_one_normalized_step(self, model, batch):
        """scales=(1,): the pyramid is the identity, so the delta must be the
        single epsilon-scaled L-inf-normalized summed-gradient map, exactly."""
        x, y = batch
        c = cfg(scales=(1,))
        _, perts = mia_attack(x, y, model, c)
        _, grad = model.loss_and_input_gradient_batch(x, y)
        agg = grad.astype(np.float64).sum(axis=1)
        m = np.abs(agg.reshape(agg.shape[0], -1)).max(axis=1)
        agg /= np.where(m == 0, 1.0, m)[:, None, None]
        want = np.broadcast_to((c.epsilon * agg)[:, None],
                               grad.shape).astype(np.float32)
        for i, pert in enumerate(perts):
            np.testing.assert_array_equal(pert.delta, want[i])

    def test_residual_linf_at_most_epsilon(self, model, batch):
        x, y = batch
        _, perts = mia_attack(x, y, model, cfg())
        for pert in perts:
            assert pert.linf <= 0.03 + 1e-6

    def test_delta_constant_across_components(self, model, batch):
        x, y = batch
        _, perts = mia_attack(x, y, model, cfg())
        for pert in perts:
            np.testing.assert_array_equal(pert.delta[0], pert.delta[1])
            np.testing.assert_array_equal(pert.delta[0], pert.delta[2])

    def test_zero_gradient_stalls(self, batch):
        x, y = batch
        dead = tiny_model(seed=0, components=3, size=7, num_classes=3,
                          zero_init=True)
        adv, perts = mia_attack(x, y, dead, cfg())
        np.testing.assert_array_equal(adv, x)
        for pert in perts:
            assert pert.stalled_steps == 1


class TestCombined:
    def test_delta_is_exact_sum_of_parts(self, model, batch):
        x, y = batch
        adv, perts = combined_attack(x, y, model, cfg())
        for pert in perts:
            assert set(pert.parts) == {"local", "multiscale"}
            np.testing.assert_array_equal(
                pert.delta, pert.parts["local"] + pert.parts["multiscale"])
        delta = np.stack([p.delta for p in perts])
        np.testing.assert_array_equal(adv, np.clip(x + delta, 0.0, 1.0))

    def test_parts_match_constituent_attacks(self, model, batch):
        x, y = batch
        c = cfg()
        _, perts = combined_attack(x, y, model, c)
        _, lp = lpda_untargeted(x, y, model, c)
        _, mp = mia_attack(x, y, model, c)
        for i in range(len(perts)):
            np.testing.assert_array_equal(perts[i].parts["local"], lp[i].delta)
            np.testing.assert_array_equal(perts[i].parts["multiscale"], mp[i].delta)

    def test_zeroed_multiscale_collapses_to_lpda(self, model, batch, monkeypatch):
        x, y = batch
        c = cfg()
        real = attacks_module._multiscale_core

        def zero_core(xa, labels, mdl, cc, sign):
            adv, delta, stalled = real(xa, labels, mdl, cc, sign)
            z = np.zeros_like(delta)
            return xa.copy(), z, np.zeros(xa.shape[0], dtype=np.int64)

        monkeypatch.setattr(attacks_module, "_multiscale_core", zero_core)
        adv_combined, cp = combined_attack(x, y, model, c)
        adv_lpda, lp = lpda_untargeted(x, y, model, c)
        # deltas collapse exactly; adv may differ by one float32 rounding
        # because combined re-applies clip(x + delta)
        for i in range(len(cp)):
            np.testing.assert_array_equal(cp[i].delta, lp[i].delta)
        np.testing.assert_allclose(adv_combined, adv_lpda, rtol=0, atol=1e-7)

    def test_preclip_linf_bound(self, model, batch):
        x, y = batch
        c = cfg(iterations=6)
        _, perts = combined_attack(x, y, model, c)
        for pert in perts:
            assert pert.linf <= (6 + 1) * 0.03 + 1e-6

    def test_budgets_match_metrics_recomputation(self, model, batch):
        x, y = batch
        _, perts = combined_attack(x, y, model, cfg())
        for pert in perts:
            l0, l2, linf = perturbation_budget(np.zeros_like(pert.delta),
                                               pert.delta)
            assert pert.l0 == l0
            assert pert.l2 == pytest.approx(l2, abs=1e-9)
            assert pert.linf == pytest.approx(linf, abs=1e-9)


class TestAttackScene:
    def make_scene(self, seed=50, h=10, w=10, k=3):
        rng = make_rng(seed)
        cube = rng.random((h, w, k), dtype=np.float32)
        labels = rng.integers(0, 3, size=(h, w))
        return HsiScene(cube, labels, ("a", "b", "lesion"))

    def test_none_attacks_nothing(self, model):
        scene = self.make_scene()
        res = attack_scene(scene, model, "none", cfg(), window=7)
        assert res.attacked_indices.size == 0
        np.testing.assert_array_equal(res.pred_adv, res.pred_clean)
        np.testing.assert_array_equal(res.adv_scene_cube, scene.cube)
        assert res.l0_mean == 0.0 and res.linf_max == 0.0

    def test_lesion_scope_only_touches_lesion_pixels(self, model):
        scene = self.make_scene()
        res = attack_scene(scene, model, "baseline", cfg(), window=7,
                           scope="lesion", lesion_class=2)
        flat_labels = scene.labels.ravel()
        assert np.all(flat_labels[res.attacked_indices] == 2)
        assert res.attacked_indices.size == int((flat_labels == 2).sum())
        # predictions and cube untouched off the attacked set
        mask = np.ones(scene.labels.size, dtype=bool)
        mask[res.attacked_indices] = False
        np.testing.assert_array_equal(res.pred_adv.ravel()[mask],
                                      res.pred_clean.ravel()[mask])
        cube_flat = res.adv_scene_cube.reshape(-1, 3)
        np.testing.assert_array_equal(cube_flat[mask],
                                      scene.cube.reshape(-1, 3)[mask])

    def test_adv_cube_center_pixels_replaced(self, model):
        scene = self.make_scene()
        res = attack_scene(scene, model, "lpda", cfg(iterations=3), window=7,
                           scope="lesion", lesion_class=2)
        r = 7 // 2
        for pos, flat in enumerate(res.attacked_indices):
            i, j = divmod(int(flat), scene.cube.shape[1])
            np.testing.assert_array_equal(res.adv_scene_cube[i, j],
                                          res.adv_patches[pos, :, r, r])

    def test_eval_indices_respected(self, model):
        scene = self.make_scene()
        chosen = np.array([0, 5, 17, 42])
        res = attack_scene(scene, model, "baseline", cfg(), window=7,
                           eval_indices=chosen)
        np.testing.assert_array_equal(res.attacked_indices, chosen)
        assert len(res.perturbations) == 4

    def test_deterministic(self, model):
        scene = self.make_scene()
        a = attack_scene(scene, model, "combined", cfg(iterations=3), window=7,
                         scope="lesion", lesion_class=2)
        b = attack_scene(scene, model, "combined", cfg(iterations=3), window=7,
                         scope="lesion", lesion_class=2)
        np.testing.assert_array_equal(a.pred_adv, b.pred_adv)
        np.testing.assert_array_equal(a.adv_scene_cube, b.adv_scene_cube)
        assert a.l2_mean == b.l2_mean

    def test_summary_stats_match_perturbations(self, model):
        scene = self.make_scene()
        res = attack_scene(scene, model, "baseline", cfg(), window=7,
                           scope="lesion", lesion_class=2)
        assert res.l0_mean == pytest.approx(
            np.mean([p.l0 for p in res.perturbations]))
        assert res.l2_mean == pytest.approx(
            np.mean([p.l2 for p in res.perturbations]))
        assert res.linf_max == pytest.approx(
            max(p.linf for p in res.perturbations))

    def test_targeted_needs_target_class(self, model):
        scene = self.make_scene()
        with pytest.raises(ConfigError, match="target_class"):
            attack_scene(scene, model, "lpda_targeted", cfg(), window=7)

    def test_bad_kind_and_scope(self, model):
        scene = self.make_scene()
        with pytest.raises(ConfigError, match="unknown attack kind"):
            attack_scene(scene, model, "fgsm", cfg(), window=7)
        with pytest.raises(ConfigError, match="scope"):
            attack_scene(scene, model, "baseline", cfg(), window=7,
                         scope="everything")
        with pytest.raises(ConfigError, match="lesion_class"):
            attack_scene(scene, model, "baseline", cfg(), window=7,
                         scope="lesion")
