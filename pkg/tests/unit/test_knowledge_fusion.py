"""
Tests for attention, AdaIN and the per-iteration synthesizer.

These tests verify:
1. Attention matches a direct softmax oracle and its rows are distributions
2. SFE and TPKF blocks collapse as documented when residual paths are zeroed
3. AdaIN transfers token statistics and is idempotent
4. Evolution runs one iteration per guiding frame after the source
5. Variants differ only in stack depth; the discriminator is patch-local
6. Knockouts drop the modules they disable, no_tpkf the source path and IEC
"""

import unittest

import numpy as np

from iepg.core import Tensor, grad_check
from iepg.errors import ConfigurationError, ContractError
from iepg.models.attention import (
    MultiHeadAttention,
    adain,
    attention,
    attention_weights,
    token_norm,
)
from iepg.models.fusion import (
    VARIANT_DEPTHS,
    EvolutionSequence,
    FusionConfig,
    FusionModel,
    SfeBlock,
    SourceBundle,
    TargetBundle,
    TpkfBlock,
    count_parameters,
    from_tokens,
    guiding_skeletons,
    image_discriminate,
    remove_intermediates,
    sfe_block,
    source_path,
    synthesize_full,
    synthesize_step,
    to_tokens,
    tpkf_block,
)
from iepg.models.gec import GecConfig, GecModel
from iepg.pose import random_person, render_image, skeleton_at_yaw

# central differences with a step this small stay clear of leaky-rectifier kinks
FD_EPS = 1e-7

TINY = FusionConfig(
    image_size=16, width=16, heads=1, iec_base=4, disc_channels=4, seed=0
)


def _softmax_rows(x):
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


def _frames(yaws=(0.0, 30.0, 60.0), size=16):
    person = random_person(0, 11)
    skels = [skeleton_at_yaw(person, y) for y in yaws]
    src = SourceBundle.from_frame(render_image(person, skels[0], size).data, skels[0])
    return src, skels


def _tiny_gec():
    config = GecConfig(
        feature_dim=8, hidden_dim=4, noise_dim=4, layers=1, disc_channels=2
    )
    return GecModel(config)


# =============================================================================
# Attention
# =============================================================================


class TestAttention(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(0)

    def test_orthogonal_tokens_attend_to_self(self):
        v = Tensor(self.rng.standard_normal((3, 3)))
        out = attention(Tensor(60.0 * np.eye(3)), Tensor(np.eye(3)), v, heads=1)
        np.testing.assert_allclose(out.data, v.data, atol=1e-9)

    def test_zero_queries_average_values(self):
        v = Tensor(self.rng.standard_normal((5, 4)))
        k = Tensor(self.rng.standard_normal((5, 4)))
        out = attention(Tensor(np.zeros((2, 4))), k, v, heads=2)
        expected = np.tile(v.data.mean(axis=0), (2, 1))
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_matches_direct_formula(self):
        q = self.rng.standard_normal((3, 4))
        k = self.rng.standard_normal((3, 4))
        v = self.rng.standard_normal((3, 4))
        expected = _softmax_rows(q @ k.T / 2.0) @ v
        out = attention(Tensor(q), Tensor(k), Tensor(v), heads=1)
        np.testing.assert_allclose(out.data, expected, atol=1e-12)

    def test_heads_split_columns(self):
        q = self.rng.standard_normal((3, 4))
        k = self.rng.standard_normal((3, 4))
        v = self.rng.standard_normal((3, 4))
        parts = [
            _softmax_rows(q[:, s] @ k[:, s].T / np.sqrt(2.0)) @ v[:, s]
            for s in (slice(0, 2), slice(2, 4))
        ]
        out = attention(Tensor(q), Tensor(k), Tensor(v), heads=2)
        np.testing.assert_allclose(out.data, np.concatenate(parts, axis=1), atol=1e-12)

    def test_rows_sum_to_one(self):
        mha = MultiHeadAttention(8, 2, self.rng)
        x = Tensor(self.rng.standard_normal((6, 8)))
        for w in mha.weights(x, x):
            np.testing.assert_allclose(w.data.sum(axis=1), np.ones(6), atol=1e-12)

    def test_indivisible_width_raises(self):
        with self.assertRaises(ConfigurationError):
            MultiHeadAttention(6, 4, self.rng)
        with self.assertRaises(ConfigurationError):
            q = Tensor(np.zeros((2, 6)))
            attention_weights(q, q, heads=4)

    def test_token_count_mismatch_raises(self):
        with self.assertRaises(ConfigurationError):
            attention(
                Tensor(np.zeros((2, 4))),
                Tensor(np.zeros((3, 4))),
                Tensor(np.zeros((2, 4))),
                1,
            )


class TestAdain(unittest.TestCase):
    def setUp(self):
        rng = np.random.default_rng(4)
        self.a = Tensor(rng.standard_normal((9, 6)) * 2.0 + 1.0)
        self.b = Tensor(rng.standard_normal((9, 6)) * 0.5 - 3.0)

    def test_fixed_point(self):
        np.testing.assert_allclose(adain(self.a, self.a).data, self.a.data, atol=1e-9)

    def test_output_takes_style_mean(self):
        out = adain(self.a, self.b).data
        np.testing.assert_allclose(
            out.mean(axis=0), self.b.data.mean(axis=0), atol=1e-9
        )

    def test_matches_statistics_oracle(self):
        a, b = self.a.data, self.b.data
        eps = 1e-12
        normalized = (a - a.mean(axis=0)) / np.sqrt(a.var(axis=0) + eps)
        expected = normalized * np.sqrt(b.var(axis=0) + eps) + b.mean(axis=0)
        np.testing.assert_allclose(adain(self.a, self.b).data, expected, atol=1e-12)

    def test_idempotent(self):
        once = adain(self.a, self.b)
        twice = adain(once, self.b)
        np.testing.assert_allclose(twice.data, once.data, atol=1e-9)

    def test_width_mismatch_raises(self):
        with self.assertRaises(ConfigurationError):
            adain(self.a, Tensor(np.zeros((9, 5))))


# =============================================================================
# Blocks
# =============================================================================


class TestSfeBlock(unittest.TestCase):
    def setUp(self):
        self.rng = np.random.default_rng(1)
        self.block = SfeBlock(8, 2, self.rng)
        self.f = Tensor(self.rng.standard_normal((9, 8)))

    def test_shape_preserved(self):
        self.assertEqual(sfe_block(self.f, self.block).shape, (9, 8))

    def test_zeroed_outputs_reduce_to_double_norm(self):
        self.block.attn.wo.weight.data = np.zeros((8, 8))
        self.block.fcn.fc2.weight.data = np.zeros_like(self.block.fcn.fc2.weight.data)
        self.block.fcn.fc2.bias.data = np.zeros(8)
        expected = token_norm(token_norm(self.f)).data
        out = sfe_block(self.f, self.block).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_gradients(self):
        err = grad_check(lambda f: sfe_block(f, self.block), [self.f], eps=FD_EPS)
        self.assertLess(err, 1e-4)


class TestTpkfBlock(unittest.TestCase):
    """Self-attention, cross-attention, AdaIN and the FCN closure."""

    def setUp(self):
        self.rng = np.random.default_rng(2)
        self.block = TpkfBlock(8, 2, self.rng)
        self.f = Tensor(self.rng.standard_normal((9, 8)))
        self.f_s = Tensor(self.rng.standard_normal((9, 8)))
        self.iec = Tensor(self.rng.standard_normal((9, 8)))

    def test_shape_preserved(self):
        out = tpkf_block(self.f, self.f_s, self.iec, self.block)
        self.assertEqual(out.shape, (9, 8))

    def test_zero_values_reduce_to_self_attention(self):
        self.block.cross_attn.wv.weight.data = np.zeros((8, 8))
        f_hat = token_norm(self.f + self.block.self_attn(self.f, self.f, self.f))
        expected = token_norm(self.block.fcn(f_hat) + f_hat).data
        out = tpkf_block(self.f, self.f_s, self.iec, self.block).data
        np.testing.assert_allclose(out, expected, atol=1e-8)

    def test_zero_cross_output_ignores_source_and_iec(self):
        self.block.cross_attn.wo.weight.data = np.zeros((8, 8))
        base = tpkf_block(self.f, self.f_s, self.iec, self.block).data
        other_s = Tensor(self.f_s.data + 1.0)
        other_iec = Tensor(self.iec.data * -2.0)
        moved = tpkf_block(self.f, other_s, other_iec, self.block).data
        np.testing.assert_array_equal(moved, base)

    def test_token_mismatch_raises(self):
        with self.assertRaises(ConfigurationError):
            tpkf_block(self.f, Tensor(np.zeros((4, 8))), self.iec, self.block)

    def test_gradients(self):
        def f(a, b, c):
            return tpkf_block(a, b, c, self.block)

        err = grad_check(f, [self.f, self.f_s, self.iec], eps=FD_EPS)
        self.assertLess(err, 1e-4)

    def test_gradients_without_adain(self):
        def f(a):
            return tpkf_block(a, self.f_s, self.iec, self.block, use_adain=False)

        self.assertLess(grad_check(f, [self.f], eps=FD_EPS), 1e-4)


# =============================================================================
# Model
# =============================================================================


class TestFusionModel(unittest.TestCase):
    """Configuration, paths and a single synthesis step."""

    def test_variant_depths(self):
        depths = {v: FusionConfig(variant=v).blocks for v in "SBL"}
        self.assertEqual(depths, VARIANT_DEPTHS)
        with self.assertRaises(ConfigurationError):
            FusionConfig(variant="XL")

    def test_invalid_shapes_raise(self):
        with self.assertRaises(ConfigurationError):
            FusionConfig(width=18)
        with self.assertRaises(ConfigurationError):
            FusionConfig(width=12, heads=8)
        with self.assertRaises(ConfigurationError):
            FusionConfig(image_size=18)

    def test_parameters_linear_in_depth(self):
        counts = {
            d: count_parameters(
                FusionModel(FusionConfig(**{**TINY.to_dict(), "depth": d}))
            )
            for d in (2, 4, 6)
        }
        self.assertEqual(counts[6] - counts[4], counts[4] - counts[2])
        self.assertGreater(counts[4], counts[2])

    def test_discriminator_counted_separately(self):
        model = FusionModel(TINY)
        total = count_parameters(model, include_discriminator=True)
        disc = sum(p.size for p in model.discriminator_parameters().values())
        self.assertEqual(total - count_parameters(model), disc)

    def test_source_path_tokens(self):
        model = FusionModel(
            FusionConfig(image_size=64, width=128, iec_base=4, disc_channels=4)
        )
        src, _ = _frames(size=64)
        self.assertEqual(source_path(model, src).shape, (256, 128))

    def test_empty_sfe_stack_is_identity(self):
        model = FusionModel(FusionConfig(image_size=16, width=16, depth=0, iec_base=4))
        src, _ = _frames()
        np.testing.assert_array_equal(
            source_path(model, src).data, model.source_encoder(src.tensor()).data
        )

    def test_token_round_trip(self):
        x = Tensor(np.arange(24.0).reshape(2, 3, 4))
        tokens = to_tokens(x)
        self.assertEqual(tokens.shape, (12, 2))
        np.testing.assert_array_equal(from_tokens(tokens, 3, 4).data, x.data)
        with self.assertRaises(ConfigurationError):
            from_tokens(tokens, 4, 4)

    def test_bundle_size_mismatch_raises(self):
        src, _ = _frames()
        with self.assertRaises(ContractError):
            SourceBundle(src.image, src.heatmaps[:, :8, :8], src.semantics)
        with self.assertRaises(ContractError):
            TargetBundle(src.heatmaps, src.semantics[:, :8, :8])

    def test_step_output_contract(self):
        model = FusionModel(TINY)
        src, skels = _frames()
        tgt = TargetBundle.from_skeleton(skels[1], 16)
        a = synthesize_step(model, src, tgt, None)
        b = synthesize_step(model, src, tgt, None)
        self.assertEqual(a.shape, (3, 16, 16))
        self.assertTrue(np.all((a.data >= 0.0) & (a.data <= 1.0)))
        np.testing.assert_array_equal(a.data, b.data)

    def test_knockouts_construct_and_run(self):
        src, skels = _frames()
        knockouts = ("no_tpkf", "no_iec", "no_msc", "no_eada")
        for flags in ({name: True} for name in knockouts):
            cfg = FusionConfig(**{**TINY.to_dict(), **flags})
            model = FusionModel(cfg)
            image, seq = synthesize_full(
                model, None, src, skels[0], skels[-1], guides=skels
            )
            self.assertEqual(image.shape, (3, 16, 16))
            if "no_iec" in flags:
                self.assertIsNone(model.iec_encoder)
            if "no_tpkf" in flags:
                self.assertTrue(
                    all(isinstance(b, SfeBlock) for b in model.fusion_blocks)
                )
                self.assertIsNone(model.source_encoder)
                self.assertEqual(model.sfe_blocks, [])
                self.assertIsNone(model.iec_encoder)
                with self.assertRaises(ContractError):
                    source_path(model, src)
                self.assertLess(
                    count_parameters(model), count_parameters(FusionModel(TINY))
                )


class TestEvolution(unittest.TestCase):
    """guiding_skeletons, remove_intermediates and synthesize_full."""

    def setUp(self):
        self.model = FusionModel(TINY)
        self.src, self.skels = _frames()

    def test_no_increments_bypasses_gec(self):
        guides = guiding_skeletons(None, self.skels[0], self.skels[2], 0)
        self.assertEqual(guides, [self.skels[0], self.skels[2]])

    def test_increments_need_gec(self):
        with self.assertRaises(ContractError):
            guiding_skeletons(None, self.skels[0], self.skels[2], 2)
        with self.assertRaises(ConfigurationError):
            guiding_skeletons(None, self.skels[0], self.skels[2], -1)

    def test_gec_guides_keep_exact_endpoints(self):
        guides = guiding_skeletons(_tiny_gec(), self.skels[0], self.skels[2], 3)
        self.assertEqual(len(guides), 5)
        self.assertIs(guides[0], self.skels[0])
        self.assertIs(guides[-1], self.skels[2])

    def test_one_shot_sequence(self):
        image, seq = synthesize_full(
            self.model, None, self.src, self.skels[0], self.skels[2], 0
        )
        self.assertEqual(len(seq), 2)
        self.assertEqual(len(seq.generated), 1)
        self.assertIs(seq.final.image, image)

    def test_one_frame_per_increment(self):
        gec = _tiny_gec()
        for n in (1, 2):
            image, seq = synthesize_full(
                self.model, gec, self.src, self.skels[0], self.skels[2], n
            )
            self.assertEqual(len(seq.generated), n + 1)
            self.assertIs(seq.final.image, image)
            np.testing.assert_array_equal(seq.frames[0].image.data, self.src.image)

    def test_removal_shortens_sequence(self):
        guides = self.skels + self.skels[::-1]
        _, seq = synthesize_full(
            self.model,
            None,
            self.src,
            guides[0],
            guides[-1],
            guides=guides,
            remove=2,
            rng=np.random.default_rng(3),
        )
        self.assertEqual(len(seq.generated), len(guides) - 3)

    def test_remove_intermediates(self):
        guides = list(range(7))
        kept = remove_intermediates(guides, 2, np.random.default_rng(0))
        self.assertEqual(len(kept), 5)
        self.assertEqual((kept[0], kept[-1]), (0, 6))
        self.assertEqual(kept, sorted(kept))
        unchanged = remove_intermediates(guides, 0, np.random.default_rng(0))
        self.assertEqual(unchanged, guides)
        with self.assertRaises(ContractError):
            remove_intermediates(guides, 6, np.random.default_rng(0))

    def test_too_few_guides_raises(self):
        with self.assertRaises(ContractError):
            synthesize_full(
                self.model,
                None,
                self.src,
                self.skels[0],
                self.skels[0],
                guides=[self.skels[0]],
            )

    def test_empty_sequence_raises(self):
        with self.assertRaises(ContractError):
            EvolutionSequence(())

    def test_end_to_end_gradients(self):
        model = FusionModel(FusionConfig(**{**TINY.to_dict(), "depth": 2}))
        params = [
            model.decoder.out.bias,
            model.iec_encoder.blocks[0].scale_logits,
            model.fusion_blocks[1].fcn.fc2.bias,
        ]

        def f(*_):
            image, _ = synthesize_full(
                model, None, self.src, self.skels[0], self.skels[2], guides=self.skels
            )
            return image

        self.assertLess(grad_check(f, params, eps=FD_EPS), 1e-3)


class TestImageDiscriminator(unittest.TestCase):
    def setUp(self):
        self.model = FusionModel(FusionConfig(**{**TINY.to_dict(), "image_size": 32}))
        self.src, self.skels = _frames(size=32)
        self.cond = TargetBundle.from_skeleton(self.skels[0], 32)

    def test_score_in_open_unit_interval(self):
        score = image_discriminate(self.model, Tensor(self.src.image), self.cond).item()
        self.assertGreater(score, 0.0)
        self.assertLess(score, 1.0)
        again = image_discriminate(self.model, Tensor(self.src.image), self.cond).item()
        self.assertEqual(score, again)

    def test_patch_scores_are_local(self):
        image = self.src.image.copy()
        x = np.concatenate([image, self.cond.condition()], axis=0)
        moved = x.copy()
        moved[:3, :8, :8] = 1.0 - moved[:3, :8, :8]
        a = self.model.discriminator.patch_scores(Tensor(x)).data
        b = self.model.discriminator.patch_scores(Tensor(moved)).data
        self.assertEqual(a.shape, (1, 8, 8))
        np.testing.assert_array_equal(a[:, 4:, 4:], b[:, 4:, 4:])


if __name__ == "__main__":
    unittest.main()
