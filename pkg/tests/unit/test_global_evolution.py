"""
Tests for the guiding-sequence network.

These tests verify:
1. Pose encoding and decoding have the documented shapes and are deterministic
2. Recurrent cells match hand-computed arithmetic and the bidirectional
   layer is time-reversal symmetric
3. With the backward cells silenced, outputs are causal in the input steps
4. Sequence discriminator scores lie in (0, 1) and batch scoring matches
5. Semantic sequences are the per-frame part renderings
"""

import unittest

import numpy as np

from iepg.core import Adam, Tape, Tensor, backward, grad_check, ops
from iepg.errors import ConfigurationError, ContractError
from iepg.models.gec import (
    GecConfig,
    GecModel,
    evolve_sequence,
    gen_semantic_sequence,
    pose_decode,
    pose_encode,
    seq_discriminate,
    seq_discriminate_batch,
)
from iepg.models.recurrent import BiRecurrentLayer, GRUCell, TanhCell
from iepg.pose import K, PoseSkeleton, random_person, render_semantics, skeleton_at_yaw
from iepg.training.losses import loss_pose

TINY = GecConfig(
    feature_dim=16, hidden_dim=8, noise_dim=8, layers=3, disc_channels=8, seed=0
)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


def _turn(n=6, step=15.0, person_id=0):
    person = random_person(person_id, 77 + person_id)
    return [skeleton_at_yaw(person, i * step) for i in range(n)]


class TestConfig(unittest.TestCase):
    def test_unknown_cell_raises(self):
        with self.assertRaises(ConfigurationError):
            GecConfig(cell="lstm")

    def test_odd_feature_dim_raises(self):
        with self.assertRaises(ConfigurationError):
            GecConfig(feature_dim=15)

    def test_dict_round_trip(self):
        self.assertEqual(GecConfig.from_dict(TINY.to_dict()), TINY)


class TestPoseCoding(unittest.TestCase):
    """pose_encode and pose_decode."""

    def setUp(self):
        self.model = GecModel(TINY)
        self.skel = _turn(1)[0]

    def test_default_feature_is_512(self):
        model = GecModel(GecConfig(hidden_dim=8, noise_dim=8, disc_channels=4))
        self.assertEqual(pose_encode(model, self.skel).shape, (512,))

    def test_encode_is_deterministic(self):
        a = pose_encode(self.model, self.skel).data
        b = pose_encode(self.model, self.skel).data
        np.testing.assert_array_equal(a, b)

    def test_one_keypoint_changes_feature(self):
        kp = self.skel.keypoints.copy()
        kp[4] += 0.05
        moved = PoseSkeleton(kp, self.skel.visibility)
        a = pose_encode(self.model, self.skel).data
        b = pose_encode(self.model, moved).data
        self.assertFalse(np.allclose(a, b))

    def test_decode_yields_k_keypoints(self):
        out = pose_decode(self.model, Tensor(np.ones(2 * TINY.hidden_dim)))
        self.assertEqual(out.keypoints.shape, (K, 2))
        visible = out.keypoints[out.visibility]
        self.assertTrue(np.all((visible >= 0.0) & (visible <= 1.0)))

    def test_same_seed_same_weights(self):
        self.assertEqual(GecModel(TINY).parameter_hash(), self.model.parameter_hash())

    def test_autoencoding_loss_decreases(self):
        frames = _turn(4, step=90.0)
        model = GecModel(TINY)
        params = model.generator_parameters()
        opt = Adam(params, lr=1e-3)

        def epoch_loss():
            total = 0.0
            for s in frames:
                # feature_dim equals 2 * hidden_dim in TINY
                coords, _ = model.decoder(pose_encode(model, s))
                total = total + loss_pose(coords, s)
            return total

        with Tape() as tape:
            first = epoch_loss()
        opt.step(backward(first, tape, list(params.values())))
        for _ in range(30):
            with Tape() as tape:
                loss = epoch_loss()
            opt.step(backward(loss, tape, list(params.values())))
        self.assertLess(loss.item(), first.item())


# =============================================================================
# Recurrence
# =============================================================================


class TestCells(unittest.TestCase):
    """Single-step cell arithmetic against numpy."""

    def test_gru_single_step(self):
        rng = np.random.default_rng(0)
        cell = GRUCell(2, 3, rng)
        wx = rng.uniform(-0.1, 0.1, (2, 9))
        bx = rng.uniform(-0.1, 0.1, 9)
        wh = rng.uniform(-0.1, 0.1, (3, 9))
        cell.x_proj.weight.data = wx
        cell.x_proj.bias.data = bx
        cell.h_proj.weight.data = wh
        x = np.array([0.3, -0.7])
        h = np.array([0.1, 0.2, -0.4])

        xg = x @ wx + bx
        hg = h @ wh
        r = _sigmoid(xg[0:3] + hg[0:3])
        u = _sigmoid(xg[3:6] + hg[3:6])
        c = np.tanh(xg[6:] + r * hg[6:])
        expected = (1.0 - u) * h + u * c

        out = cell(Tensor(x), Tensor(h)).data
        np.testing.assert_allclose(out, expected, rtol=0, atol=1e-12)

    def test_tanh_single_step(self):
        rng = np.random.default_rng(1)
        cell = TanhCell(2, 3, rng)
        x = np.array([0.5, 0.25])
        h = np.array([-0.2, 0.0, 0.3])
        expected = np.tanh(
            x @ cell.x_proj.weight.data
            + cell.x_proj.bias.data
            + h @ cell.h_proj.weight.data
        )
        out = cell(Tensor(x), Tensor(h)).data
        np.testing.assert_allclose(out, expected, atol=1e-12)


class TestBidirectional(unittest.TestCase):
    """BiRecurrentLayer and evolve_sequence."""

    def _inputs(self, steps=4, dim=5, seed=0):
        rng = np.random.default_rng(seed)
        return [Tensor(rng.standard_normal(dim)) for _ in range(steps)]

    def test_time_reversal_with_swapped_cells(self):
        for cell in ("gru", "tanh"):
            layer = BiRecurrentLayer(5, 4, np.random.default_rng(2), cell=cell)
            swapped = BiRecurrentLayer(5, 4, np.random.default_rng(3), cell=cell)
            state = {}
            for name, arr in layer.state_dict().items():
                if name.startswith("forward_cell."):
                    state["backward_cell." + name[len("forward_cell.") :]] = arr
                else:
                    state["forward_cell." + name[len("backward_cell.") :]] = arr
            swapped.load_state_dict(state)

            xs = self._inputs()
            out = [o.data for o in layer(xs)]
            rev = [o.data for o in swapped(xs[::-1])]
            for t in range(len(xs)):
                expected = np.concatenate([out[t][4:], out[t][:4]])
                np.testing.assert_allclose(rev[len(xs) - 1 - t], expected, atol=1e-12)

    def test_silenced_backward_cells_are_causal(self):
        model = GecModel(TINY)
        for name, p in model.named_parameters():
            if ".backward_cell." in name:
                p.data = np.zeros_like(p.data)
        xs = self._inputs(steps=5, dim=TINY.feature_dim)

        def run(inputs):
            for layer in model.layers:
                inputs = layer(inputs)
            return [o.data for o in inputs]

        base = run(xs)
        for t in range(4):
            perturbed = list(xs)
            perturbed[t + 1] = perturbed[t + 1] + 0.5
            out = run(perturbed)
            for s in range(t + 1):
                np.testing.assert_array_equal(out[s], base[s])
            self.assertFalse(np.allclose(out[t + 1], base[t + 1]))

    def test_evolve_shapes(self):
        model = GecModel(TINY)
        f = pose_encode(model, _turn(1)[0])
        outputs = evolve_sequence(model, f, f, model.sample_noise(0), 6)
        self.assertEqual(len(outputs), 6)
        for o in outputs:
            self.assertEqual(o.shape, (2 * TINY.hidden_dim,))

    def test_too_few_steps_raises(self):
        model = GecModel(TINY)
        f = pose_encode(model, _turn(1)[0])
        with self.assertRaises(ContractError):
            evolve_sequence(model, f, f, model.sample_noise(0), 1)

    def test_generate(self):
        model = GecModel(TINY)
        src, tgt = _turn(2, step=60.0)
        seq = model.generate(src, tgt, steps=7)
        self.assertEqual(len(seq), 7)
        self.assertEqual(seq.coords.shape, (7, 2 * K))
        self.assertEqual(seq.visibility.shape, (7, K))
        again = model.generate(src, tgt, steps=7)
        np.testing.assert_array_equal(seq.coords.data, again.coords.data)

    def test_noise_changes_sequence(self):
        model = GecModel(TINY)
        src, tgt = _turn(2, step=60.0)
        a = model.generate(src, tgt, 4, z=model.sample_noise(1))
        b = model.generate(src, tgt, 4, z=model.sample_noise(2))
        self.assertFalse(np.allclose(a.coords.data, b.coords.data))

    def test_generator_gradients(self):
        config = GecConfig(
            feature_dim=4, hidden_dim=3, noise_dim=2, layers=1, disc_channels=2
        )
        model = GecModel(config)
        src, tgt = _turn(2, step=45.0)
        params = [model.starter.weight, model.layers[0].forward_cell.x_proj.bias]

        def f(*_):
            seq = model.generate(src, tgt, steps=3, z=Tensor(np.array([0.1, -0.2])))
            return ops.mean(seq.coords * seq.coords)

        # small step keeps the leaky-rectifier kinks out of the differences
        self.assertLess(grad_check(f, params, eps=1e-7), 1e-4)


# =============================================================================
# Discriminator and semantics
# =============================================================================


class TestSequenceDiscriminator(unittest.TestCase):
    def setUp(self):
        self.model = GecModel(TINY)

    def test_score_in_open_unit_interval(self):
        for seq in (_turn(6), _turn(3, person_id=1), [PoseSkeleton.invisible()] * 4):
            score = seq_discriminate(self.model, seq)
            self.assertGreater(score, 0.0)
            self.assertLess(score, 1.0)

    def test_batch_matches_single(self):
        seqs = [_turn(5), _turn(5)[::-1], _turn(5, person_id=2)]
        batch = seq_discriminate_batch(self.model, seqs)
        self.assertEqual(batch, [seq_discriminate(self.model, s) for s in seqs])

    def test_empty_sequence_raises(self):
        with self.assertRaises(ContractError):
            seq_discriminate(self.model, [])


class TestSemanticSequence(unittest.TestCase):
    def test_per_frame_rendering(self):
        frames = _turn(3) + [PoseSkeleton.invisible()]
        maps = gen_semantic_sequence(frames, size=32)
        self.assertEqual(len(maps), 4)
        for skel, sem in zip(frames, maps):
            np.testing.assert_array_equal(sem.labels, render_semantics(skel, 32).labels)
        self.assertTrue(np.all(maps[-1].labels == 0))


if __name__ == "__main__":
    unittest.main()
