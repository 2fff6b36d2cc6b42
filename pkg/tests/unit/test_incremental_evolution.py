"""
Tests for the intermediate queue and IE block stack.

These tests verify:
1. The queue keeps the most recent images, oldest first, detached
2. Assembled inputs are zero-padded to the queue capacity
3. Scale attention weights are a distribution and collapse to one branch
4. The block schedule halves space twice and then keeps the shape
"""

import unittest

import numpy as np

from iepg.core import Tape, Tensor, grad_check, ops, parameter
from iepg.errors import ConfigurationError, ContractError
from iepg.models.iec import (
    IeBlock,
    IecEncoder,
    IntermediateQueue,
    assemble_input,
    block_schedule,
    ie_block_forward,
    iec_forward,
    update_queue,
)


def _image(value, size=8):
    return np.full((3, size, size), float(value))


def _filled(n, capacity=4, size=8):
    q = IntermediateQueue(capacity=capacity)
    for i in range(n):
        q = update_queue(q, _image(i + 1, size))
    return q


class TestQueue(unittest.TestCase):
    def test_first_append(self):
        q = update_queue(IntermediateQueue(), _image(1))
        self.assertEqual(len(q), 1)

    def test_capacity_drops_oldest(self):
        q = _filled(6)
        self.assertEqual(len(q), 4)
        self.assertEqual([img[0, 0, 0] for img in q.images], [3.0, 4.0, 5.0, 6.0])

    def test_update_returns_new_queue(self):
        q = _filled(2)
        update_queue(q, _image(9))
        self.assertEqual(len(q), 2)

    def test_images_are_detached_copies(self):
        p = parameter(_image(0.5))
        with Tape():
            y = p * 2.0
        q = update_queue(IntermediateQueue(), y)
        self.assertIsInstance(q.images[0], np.ndarray)
        y.data[0, 0, 0] = -1.0
        self.assertEqual(q.images[0][0, 0, 0], 1.0)

    def test_shape_mismatch_raises(self):
        q = _filled(1)
        with self.assertRaises(ContractError):
            update_queue(q, _image(1, size=16))
        with self.assertRaises(ContractError):
            update_queue(q, np.zeros((1, 8, 8)))

    def test_bad_capacity_raises(self):
        with self.assertRaises(ConfigurationError):
            IntermediateQueue(capacity=0)


class TestAssemble(unittest.TestCase):
    def test_full_queue_has_twelve_channels(self):
        x = assemble_input(_filled(4))
        self.assertEqual(x.shape, (12, 8, 8))

    def test_cold_start_pads_with_zeros(self):
        x = assemble_input(_filled(1)).data
        self.assertTrue(np.all(x[:3] == 1.0))
        self.assertTrue(np.all(x[3:] == 0.0))

    def test_blocks_oldest_to_newest(self):
        x = assemble_input(_filled(3)).data
        self.assertEqual([x[3 * i, 0, 0] for i in range(4)], [1.0, 2.0, 3.0, 0.0])

    def test_empty_queue_raises(self):
        with self.assertRaises(ContractError):
            assemble_input(IntermediateQueue())


# =============================================================================
# IE blocks
# =============================================================================


class TestIeBlock(unittest.TestCase):
    """Scale attention and the down projection."""

    def setUp(self):
        self.rng = np.random.default_rng(0)
        self.x = Tensor(self.rng.standard_normal((8, 16, 16)))

    def test_down_block_shape(self):
        block = IeBlock(8, 16, "down", self.rng)
        self.assertEqual(ie_block_forward(self.x, block).shape, (16, 8, 8))

    def test_scale_weights_are_distribution(self):
        block = IeBlock(8, 8, "keep", self.rng)
        block.scale_logits.data = np.array([0.3, -1.2, 2.0])
        a = block.scale_weights().data
        self.assertTrue(np.all(a > 0))
        self.assertAlmostEqual(a.sum(), 1.0, delta=1e-12)

    def test_one_hot_logits_select_branch(self):
        block = IeBlock(8, 16, "down", self.rng)
        block.scale_logits.data = np.array([1000.0, -1000.0, -1000.0])
        out = ie_block_forward(self.x, block).data
        expected = block.project(ops.leaky_relu(block.branches[0](self.x))).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_equal_logits_average_branches(self):
        block = IeBlock(8, 16, "down", self.rng)
        b0, b1, b2 = (branch(self.x) for branch in block.branches)
        mean = (b0 + b1 + b2) * (1.0 / 3.0)
        expected = block.project(ops.leaky_relu(mean)).data
        out = ie_block_forward(self.x, block).data
        np.testing.assert_allclose(out, expected, atol=1e-12)

    def test_odd_dims_raise(self):
        block = IeBlock(8, 16, "down", self.rng)
        with self.assertRaises(ConfigurationError):
            ie_block_forward(Tensor(np.zeros((8, 5, 6))), block)

    def test_down_block_must_double(self):
        with self.assertRaises(ConfigurationError):
            IeBlock(8, 12, "down", self.rng)
        with self.assertRaises(ConfigurationError):
            IeBlock(8, 8, "sideways", self.rng)

    def test_scale_logit_gradients(self):
        block = IeBlock(2, 2, "keep", self.rng)
        block.scale_logits.data = np.array([0.1, -0.3, 0.4])
        x = Tensor(self.rng.standard_normal((2, 4, 4)))
        err = grad_check(
            lambda logits: ie_block_forward(x, block), [block.scale_logits]
        )
        self.assertLess(err, 1e-4)


class TestSchedule(unittest.TestCase):
    def test_schedules(self):
        self.assertEqual(block_schedule(3), ["stem", "down", "down"])
        self.assertEqual(
            block_schedule(6), ["stem", "down", "down", "keep", "keep", "keep"]
        )
        self.assertEqual(len(block_schedule(9)), 9)

    def test_shallow_depth_raises(self):
        with self.assertRaises(ConfigurationError):
            block_schedule(2)

    def test_shape_progression(self):
        enc = IecEncoder(capacity=2, base_channels=4, depth=3, seed=1)
        x = Tensor(np.random.default_rng(1).standard_normal((6, 16, 16)))
        shapes = []
        for block in enc.blocks:
            x = ie_block_forward(x, block)
            shapes.append(x.shape)
        self.assertEqual(shapes, [(4, 16, 16), (8, 8, 8), (16, 4, 4)])

    def test_default_width_output(self):
        enc = IecEncoder(capacity=4, base_channels=32, depth=3, seed=0)
        rng = np.random.default_rng(2)
        q = IntermediateQueue(capacity=4)
        for _ in range(4):
            q = update_queue(q, rng.uniform(size=(3, 64, 64)))
        self.assertEqual(iec_forward(q, enc).shape, (128, 16, 16))

    def test_deep_stacks_keep_shape(self):
        q = _filled(2, size=16)
        for depth in (6, 9):
            enc = IecEncoder(capacity=4, base_channels=4, depth=depth, seed=0)
            self.assertEqual(len(enc.blocks), depth)
            self.assertEqual(iec_forward(q, enc).shape, (enc.out_channels, 4, 4))

    def test_single_scale_variant(self):
        enc = IecEncoder(capacity=4, base_channels=4, multi_scale=False)
        self.assertTrue(all(len(b.branches) == 1 for b in enc.blocks))
        self.assertEqual(iec_forward(_filled(1), enc).shape, (16, 2, 2))

    def test_cold_start_is_finite(self):
        enc = IecEncoder(capacity=4, base_channels=4, seed=3)
        for n in range(1, 5):
            out = iec_forward(_filled(n), enc)
            self.assertEqual(out.shape, (16, 2, 2))
            self.assertTrue(np.all(np.isfinite(out.data)))

    def test_deterministic(self):
        q = _filled(3)
        a = iec_forward(q, IecEncoder(base_channels=4, seed=5)).data
        b = iec_forward(q, IecEncoder(base_channels=4, seed=5)).data
        np.testing.assert_array_equal(a, b)

    def test_indivisible_dims_raise(self):
        q = IntermediateQueue(capacity=4)
        q = update_queue(q, np.zeros((3, 10, 10)))
        with self.assertRaises(ConfigurationError):
            iec_forward(q, IecEncoder(base_channels=4))

    def test_capacity_mismatch_raises(self):
        with self.assertRaises(ConfigurationError):
            iec_forward(_filled(1, capacity=2), IecEncoder(capacity=4, base_channels=4))


if __name__ == "__main__":
    unittest.main()
