"""
Tests for the tensor autodiff core.

These tests verify:
1. Every differentiable op passes finite-difference checking across seeds
2. Broadcasting gradients reduce back to operand shapes
3. Shape and configuration errors carry the op name and shapes
4. Tapes, no_grad and the NonFiniteError diagnostic behave as documented
5. Adam, Module state and canonical digests are deterministic
"""

import unittest

import numpy as np

from iepg.core import (
    Adam,
    Module,
    Tape,
    Tensor,
    active_tape,
    adam_step,
    AdamState,
    backward,
    digest,
    grad_check,
    no_grad,
    ops,
    parameter,
)
from iepg.errors import (
    CheckpointError,
    ConfigurationError,
    ContractError,
    DimensionError,
    NonFiniteError,
)

OP_TOL = 1e-4
SEEDS = range(20)


def _rand(rng, *shape, positive=False):
    x = rng.standard_normal(shape)
    if positive:
        x = np.abs(x) + 0.5
    return Tensor(x)


# =============================================================================
# Gradient integrity
# =============================================================================


class TestElementwiseGradients(unittest.TestCase):
    """Finite-difference checks for the elementwise and reduction ops."""

    def _check(self, f, *inputs):
        err = grad_check(f, list(inputs))
        self.assertLess(err, OP_TOL)

    def test_binary_ops_with_broadcasting(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a = _rand(rng, 3, 4)
            b = _rand(rng, 4)
            self._check(lambda x, y: x + y, a, b)
            self._check(lambda x, y: x - y, a, b)
            self._check(lambda x, y: x * y, a, b)
            c = _rand(rng, 3, 1, positive=True)
            self._check(lambda x, y: x / y, a, c)

    def test_unary_ops(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = _rand(rng, 5)
            p = _rand(rng, 5, positive=True)
            self._check(ops.exp, x)
            self._check(ops.tanh, x)
            self._check(ops.sigmoid, x)
            self._check(ops.log, p)
            self._check(ops.sqrt, p)
            self._check(lambda t: ops.power(t, 3.0), x)
            self._check(lambda t: -t, x)

    def test_piecewise_ops_away_from_kinks(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = rng.standard_normal(6)
            x = Tensor(np.where(np.abs(x) < 0.1, 0.5, x))
            self._check(ops.abs, x)
            self._check(ops.relu, x)
            self._check(ops.leaky_relu, x)
            self._check(lambda t: ops.clip(t, -0.05, 0.05) + ops.clip(t, -3.0, 3.0), x)

    def test_reductions_and_shapes(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = _rand(rng, 2, 3, 4)
            self._check(lambda t: ops.sum(t, axis=1), x)
            self._check(lambda t: ops.mean(t, axis=(0, 2), keepdims=True), x)
            self._check(lambda t: ops.reshape(t, (6, 4)), x)
            self._check(lambda t: ops.transpose(t, (2, 0, 1)), x)
            self._check(lambda t: t[1, :, 1:3], x)
            self._check(lambda t: t[[0, 1, 1]], x)

    def test_concat_and_stack(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a, b = _rand(rng, 2, 3), _rand(rng, 2, 3)
            self._check(lambda x, y: ops.concat([x, y], axis=1), a, b)
            self._check(lambda x, y: ops.stack([x, y], axis=0) * 2.0, a, b)


class TestLinearAlgebraGradients(unittest.TestCase):
    def test_matmul_and_linear(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            a, b = _rand(rng, 3, 4), _rand(rng, 4, 2)
            self.assertLess(grad_check(ops.matmul, [a, b]), OP_TOL)
            v = _rand(rng, 4)
            w, bias = _rand(rng, 4, 3), _rand(rng, 3)
            self.assertLess(grad_check(ops.linear, [v, w, bias]), OP_TOL)

    def test_softmax_and_instance_norm(self):
        for seed in SEEDS:
            rng = np.random.default_rng(seed)
            x = _rand(rng, 3, 5)
            self.assertLess(grad_check(lambda t: ops.softmax(t, axis=-1), [x]), OP_TOL)
            img = _rand(rng, 2, 3, 3)
            self.assertLess(grad_check(ops.instance_norm, [img]), OP_TOL)
            tokens = _rand(rng, 6, 2)
            self.assertLess(
                grad_check(lambda t: ops.instance_norm(t, axes=(0,)), [tokens]), OP_TOL
            )

    def test_convolutions(self):
        for seed in range(5):
            rng = np.random.default_rng(seed)
            x = _rand(rng, 2, 6, 6)
            k = _rand(rng, 3, 2, 3, 3)
            b = _rand(rng, 3)
            err = grad_check(lambda *t: ops.conv2d(*t, pad=1), [x, k, b])
            self.assertLess(err, OP_TOL)
            k4 = _rand(rng, 3, 2, 4, 4)
            self.assertLess(
                grad_check(lambda u, v: ops.conv2d(u, v, stride=2, pad=1), [x, k4]),
                OP_TOL,
            )
            seq = _rand(rng, 4, 5)
            k1 = _rand(rng, 2, 4, 3)
            err = grad_check(lambda u, v: ops.conv1d(u, v, pad=1), [seq, k1])
            self.assertLess(err, OP_TOL)
            small = _rand(rng, 2, 3, 3)
            wt = _rand(rng, 2, 3, 4, 4)
            self.assertLess(grad_check(ops.conv_transpose2d, [small, wt]), OP_TOL)


# =============================================================================
# Op semantics
# =============================================================================


class TestOpSemantics(unittest.TestCase):
    def test_softmax_is_shift_invariant(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal((4, 7))
        a = ops.softmax(Tensor(x)).data
        b = ops.softmax(Tensor(x + 123.0)).data
        np.testing.assert_allclose(a, b, atol=1e-12)
        np.testing.assert_allclose(a.sum(axis=-1), 1.0, atol=1e-12)

    def test_softmax_large_equal_logits(self):
        out = ops.softmax(Tensor(np.array([1000.0, 1000.0]))).data
        np.testing.assert_allclose(out, [0.5, 0.5], atol=1e-12)

    def test_matmul_small_product(self):
        a = Tensor(np.array([[1.0, 2.0], [3.0, 4.0]]))
        b = Tensor(np.array([[5.0, 6.0], [7.0, 8.0]]))
        expected = [[19.0, 22.0], [43.0, 50.0]]
        np.testing.assert_array_equal(ops.matmul(a, b).data, expected)
        eye = Tensor(np.eye(2))
        np.testing.assert_array_equal(ops.matmul(eye, b).data, b.data)

    def test_instance_norm_output_statistics(self):
        for seed in SEEDS:
            x = np.random.default_rng(seed).normal(2.0, 3.0, size=(4, 8, 8))
            y = ops.instance_norm(Tensor(x)).data
            np.testing.assert_allclose(y.mean(axis=(1, 2)), 0.0, atol=1e-9)
            np.testing.assert_allclose(y.var(axis=(1, 2)), 1.0, atol=1e-4)
        flat = ops.instance_norm(Tensor(np.full((1, 3, 3), 7.0))).data
        np.testing.assert_array_equal(flat, np.zeros((1, 3, 3)))

    def test_conv_transpose_is_adjoint_of_conv(self):
        rng = np.random.default_rng(3)
        x = rng.standard_normal((2, 8, 8))
        w = rng.standard_normal((3, 2, 4, 4))
        y = rng.standard_normal((3, 4, 4))
        lhs = np.sum(ops.conv2d(Tensor(x), Tensor(w), stride=2, pad=1).data * y)
        back = ops.conv_transpose2d(Tensor(y), Tensor(w), stride=2, pad=1)
        rhs = np.sum(x * back.data)
        self.assertAlmostEqual(lhs, rhs, places=9)

    def test_conv_output_size(self):
        x = Tensor(np.zeros((3, 16, 16)))
        k = Tensor(np.zeros((5, 3, 4, 4)))
        self.assertEqual(ops.conv2d(x, k, stride=2, pad=1).shape, (5, 8, 8))

    def test_conv_non_integral_output_raises(self):
        x = Tensor(np.zeros((1, 5, 5)))
        k = Tensor(np.zeros((1, 1, 4, 4)))
        with self.assertRaises(ConfigurationError):
            ops.conv2d(x, k, stride=2, pad=0)

    def test_matmul_shape_mismatch_names_shapes(self):
        with self.assertRaises(DimensionError) as cm:
            ops.matmul(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))
        self.assertIn("(2, 3)", str(cm.exception))
        self.assertIn("(4, 5)", str(cm.exception))

    def test_split_columns_requires_divisible_width(self):
        with self.assertRaises(ConfigurationError):
            ops.split_columns(Tensor(np.zeros((4, 6))), 4)
        parts = ops.split_columns(Tensor(np.arange(12.0).reshape(2, 6)), 3)
        self.assertEqual([p.shape for p in parts], [(2, 2)] * 3)


# =============================================================================
# Tape semantics
# =============================================================================


class TestTape(unittest.TestCase):
    def test_backward_requires_scalar(self):
        x = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            y = x * 2.0
        with self.assertRaises(ContractError):
            backward(y, tape)

    def test_gradients_accumulate_over_reuse(self):
        x = Tensor(np.array([1.5, -2.0]), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(x * x + x)
        grads = backward(loss, tape)
        np.testing.assert_allclose(grads[x.uid], 2 * x.data + 1)
        np.testing.assert_allclose(x.grad, 2 * x.data + 1)

    def test_unused_params_receive_zero_gradient(self):
        x = Tensor(np.ones(2), requires_grad=True)
        unused = Tensor(np.ones(3), requires_grad=True)
        with Tape() as tape:
            loss = ops.sum(x)
        grads = backward(loss, tape, params=[unused])
        np.testing.assert_array_equal(grads[unused.uid], np.zeros(3))

    def test_no_grad_records_nothing(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with Tape() as tape:
            with no_grad():
                self.assertIsNone(active_tape())
                _ = x * 3.0
            self.assertIs(active_tape(), tape)
        self.assertEqual(len(tape), 0)
        self.assertIsNone(active_tape())

    def test_nested_tapes_shadow(self):
        x = Tensor(np.ones(2), requires_grad=True)
        with Tape() as outer:
            with Tape() as inner:
                _ = x + 1.0
            _ = x * 2.0
        self.assertEqual(len(inner), 1)
        self.assertEqual(len(outer), 1)


class TestGradCheck(unittest.TestCase):
    def test_eps_out_of_range(self):
        x = Tensor(np.ones(2))
        for eps in (1e-9, 1e-2):
            with self.assertRaises(ConfigurationError):
                grad_check(ops.exp, [x], eps=eps)

    def test_non_finite_names_the_op(self):
        x = Tensor(np.array([-1.0, 2.0]))
        with self.assertRaises(NonFiniteError) as cm:
            grad_check(ops.log, [x])
        self.assertEqual(cm.exception.op, "log")

    def test_detects_wrong_gradient(self):
        from iepg.core.tensor import record

        def bad_square(t):
            return record("bad_square", t.data**2, (t,), lambda g: (g * t.data,))

        x = Tensor(np.array([1.0, 2.0, 3.0]))
        err = grad_check(lambda t: ops.sum(bad_square(t)), [x])
        self.assertGreater(err, 0.1)


# =============================================================================
# Modules, optimizer, digests
# =============================================================================


class _Tiny(Module):
    def __init__(self, rng):
        self.w = parameter(rng.standard_normal((3, 2)))
        self.blocks = [_Leaf(rng), _Leaf(rng)]
        self._cache = parameter(np.zeros(1))


class _Leaf(Module):
    def __init__(self, rng):
        self.b = parameter(rng.standard_normal(2))


class TestModule(unittest.TestCase):
    def test_parameter_names_are_stable(self):
        m = _Tiny(np.random.default_rng(0))
        self.assertEqual(
            [n for n, _ in m.named_parameters()], ["w", "blocks.0.b", "blocks.1.b"]
        )
        self.assertEqual(m.num_parameters(), 10)

    def test_state_dict_round_trip(self):
        a = _Tiny(np.random.default_rng(0))
        b = _Tiny(np.random.default_rng(1))
        self.assertNotEqual(a.parameter_hash(), b.parameter_hash())
        b.load_state_dict(a.state_dict())
        self.assertEqual(a.parameter_hash(), b.parameter_hash())

    def test_load_state_dict_errors(self):
        m = _Tiny(np.random.default_rng(0))
        state = m.state_dict()
        del state["w"]
        with self.assertRaises(CheckpointError):
            m.load_state_dict(state)
        state = m.state_dict()
        state["w"] = np.zeros((2, 3))
        with self.assertRaises(DimensionError):
            m.load_state_dict(state)


class TestAdam(unittest.TestCase):
    def test_first_step_moves_by_lr(self):
        p = parameter(np.array([1.0, -1.0]))
        state = adam_step({"p": p}, {"p": np.array([0.5, -2.0])}, AdamState(), lr=0.1)
        # bias-corrected first step is lr * sign(g) up to eps
        np.testing.assert_allclose(p.data, [0.9, -0.9], atol=1e-4)
        self.assertEqual(state.step, 1)

    def test_zero_gradient_leaves_parameters(self):
        p = parameter(np.array([1.0]))
        state = adam_step({"p": p}, {"p": np.zeros(1)}, AdamState(), lr=0.1)
        np.testing.assert_array_equal(p.data, [1.0])
        self.assertEqual(state.step, 1)

    def test_square_decreases_every_step(self):
        w = parameter(np.array([1.0]))
        opt = Adam({"w": w}, lr=0.05)
        previous = float(w.data[0] ** 2)
        for _ in range(10):
            with Tape() as tape:
                loss = ops.sum(w * w)
            opt.step(backward(loss, tape, [w]))
            current = float(w.data[0] ** 2)
            self.assertLess(current, previous)
            previous = current
        self.assertEqual(opt.state.step, 10)

    def test_rejects_bad_lr_and_shapes(self):
        p = parameter(np.zeros(2))
        with self.assertRaises(ConfigurationError):
            adam_step({"p": p}, {"p": np.zeros(2)}, AdamState(), lr=0.0)
        with self.assertRaises(ContractError):
            adam_step({"p": p}, {"p": np.zeros(3)}, AdamState(), lr=0.1)

    def test_minimizes_quadratic(self):
        p = parameter(np.array([3.0, -2.0]))
        opt = Adam({"p": p}, lr=0.05, beta1=0.9)
        for _ in range(400):
            with Tape() as tape:
                loss = ops.sum(p * p)
            opt.step(backward(loss, tape, [p]))
        self.assertLess(np.abs(p.data).max(), 0.1)

    def test_state_round_trips_through_tensors(self):
        p = parameter(np.ones(2))
        opt = Adam({"p": p}, lr=0.1)
        opt.step({p.uid: np.array([1.0, 2.0])})
        restored = AdamState.from_tensors(opt.state.tensors("adam.g"), "adam.g")
        self.assertEqual(restored.step, 1)
        np.testing.assert_array_equal(restored.m["p"], opt.state.m["p"])
        np.testing.assert_array_equal(restored.v["p"], opt.state.v["p"])


class TestDigest(unittest.TestCase):
    def test_digest_is_order_independent_for_dicts(self):
        self.assertEqual(digest({"a": 1, "b": 2.0}), digest({"b": 2.0, "a": 1}))

    def test_digest_sees_array_values(self):
        self.assertNotEqual(digest(np.zeros(3)), digest(np.ones(3)))
        self.assertEqual(digest(np.arange(4.0)), digest(np.arange(4.0)))


if __name__ == "__main__":
    unittest.main()
