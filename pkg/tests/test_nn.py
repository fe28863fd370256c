# tests/test_nn.py

import unittest

import numpy as np

from app.exceptions import NumericalError, ShapeError
from app.nn import (DEFAULT_HIDDEN, Mlp, OptimizerState, backward, forward, gradient_check, optimizer_step,
                    random_gradient_checks, relative_error, soft_update)


class _Scalar:
    """A one-parameter stand-in for a network, for optimizer checks."""

    def __init__(self, value):
        self.w = np.array([float(value)])

    def parameters(self):
        return [self.w]


def _single_layer(weights, bias, activation='identity'):
    return Mlp((len(weights), len(weights[0])), activation,
               weights=[np.array(weights, dtype=np.float64)], biases=[np.array(bias, dtype=np.float64)])


class TestForward(unittest.TestCase):
    def test_identity_layer(self):
        """
        Identity weights, zero bias and identity activation return the input.
        """
        net = _single_layer([[1, 0], [0, 1]], [0, 0])
        np.testing.assert_array_equal(forward(net, [1.0, 2.0]), [1.0, 2.0])

    def test_rectifier_output(self):
        net = _single_layer([[1, 0], [0, 1]], [0, 0], 'relu')
        np.testing.assert_array_equal(net([-3.0, 5.0]), [0.0, 5.0])

    def test_hand_computed_affine(self):
        net = _single_layer([[2, 0], [0, 2]], [1, 1])
        np.testing.assert_array_equal(net.forward([1.0, 1.0]), [3.0, 3.0])

    def test_batch_matches_single_inputs(self):
        net = Mlp((3, 5, 2), 'tanh', rng=np.random.default_rng(1))
        batch = np.random.default_rng(2).normal(size=(4, 3))
        out = net.forward(batch)
        self.assertEqual(out.shape, (4, 2))
        for row, expected in zip(batch, out):
            np.testing.assert_allclose(net.forward(row), expected)

    def test_wrong_input_width(self):
        net = Mlp((3, 4, 1))
        with self.assertRaises(ShapeError):
            net.forward(np.zeros(2))

    def test_default_architecture(self):
        """
        Default hidden sizes give two rectifier layers of 64 units.
        """
        net = Mlp((4,) + DEFAULT_HIDDEN + (2,), rng=np.random.default_rng(0))
        self.assertEqual([w.shape for w in net.weights], [(4, 64), (64, 64), (64, 2)])
        self.assertEqual(net.hidden_activation, 'relu')

    def test_initialization_bounds(self):
        net = Mlp((16, 8, 1), rng=np.random.default_rng(0))
        self.assertTrue(np.all(np.abs(net.weights[0]) <= 1.0 / 4.0))
        self.assertTrue(np.all(np.abs(net.weights[1]) <= 1.0 / np.sqrt(8)))

    def test_mismatched_parameters_rejected(self):
        with self.assertRaises(ShapeError):
            Mlp((2, 3), weights=[np.zeros((3, 2))], biases=[np.zeros(3)])


class TestBackward(unittest.TestCase):
    def setUp(self):
        """
        Set up a small random network.
        """
        self.net = Mlp((2, 3, 1), 'identity', rng=np.random.default_rng(3))
        self.x = np.array([0.4, -0.7])

    def test_zero_upstream_gives_zero_gradients(self):
        grads, input_grad = backward(self.net, self.x, np.zeros(1))
        for g in grads:
            self.assertFalse(np.any(g))
        self.assertFalse(np.any(input_grad))

    def test_bias_gradient_equals_upstream(self):
        net = _single_layer([[1.0, 2.0], [3.0, 4.0]], [0.5, -0.5])
        upstream = np.array([0.3, -1.2])
        grads, _ = net.backward([1.0, 1.0], upstream)
        np.testing.assert_array_equal(grads[1], upstream)

    def test_matches_finite_differences(self):
        """
        Every gradient of 0.5 * output^2 on a 2-3-1 net agrees with central differences.
        """
        self.assertLess(gradient_check(self.net, self.x), 1e-4)

    def test_gradient_check_leaves_input_untouched(self):
        x = np.array([[0.1, 0.2], [0.3, 0.4]])
        before = x.copy()
        gradient_check(self.net, x)
        np.testing.assert_array_equal(x, before)

    def test_random_networks_pass(self):
        reports = random_gradient_checks(n_networks=20, seed=0)
        self.assertEqual(len(reports), 20)
        self.assertLess(max(r['max_relative_error'] for r in reports), 1e-4)

    def test_relative_error_floor(self):
        self.assertEqual(float(relative_error(0.0, 0.0)), 0.0)
        self.assertAlmostEqual(float(relative_error(1.0, 0.5)), 0.5 / 1.5)


class TestOptimizer(unittest.TestCase):
    def test_zero_gradient_fixed_point(self):
        net = Mlp((2, 3, 1), rng=np.random.default_rng(0))
        before = net.flat()
        optimizer_step(net, [np.zeros_like(p) for p in net.parameters()], OptimizerState(net))
        np.testing.assert_array_equal(net.flat(), before)

    def test_plain_gradient_step(self):
        scalar = _Scalar(1.0)
        optimizer_step(scalar, [np.array([1.0])], OptimizerState(scalar, learning_rate=0.1, mode='sgd'))
        self.assertAlmostEqual(scalar.w[0], 0.9)

    def test_adaptive_mode_converges_on_quadratic(self):
        """
        100 adaptive steps on (w - 3)^2 from w = 0 land within 0.1 of the minimum.
        """
        scalar = _Scalar(0.0)
        state = OptimizerState(scalar, learning_rate=0.1)
        for _ in range(100):
            optimizer_step(scalar, [2.0 * (scalar.w - 3.0)], state)
        self.assertLess(abs(scalar.w[0] - 3.0), 0.1)
        self.assertEqual(state.step_count, 100)

    def test_non_finite_gradient_names_layer(self):
        net = Mlp((2, 3, 1), rng=np.random.default_rng(0))
        grads = [np.zeros_like(p) for p in net.parameters()]
        grads[2][0, 0] = np.nan
        with self.assertRaises(NumericalError) as ctx:
            optimizer_step(net, grads, OptimizerState(net))
        self.assertEqual(ctx.exception.layer, 'layer 1 weights')

    def test_seeded_updates_are_bitwise_identical(self):
        def trained():
            net = Mlp((3, 8, 2), 'tanh', rng=np.random.default_rng(4))
            state = OptimizerState(net, learning_rate=0.01)
            data = np.random.default_rng(5)
            for _ in range(50):
                x = data.normal(size=(16, 3))
                grads, _ = net.backward(x, net.forward(x))
                optimizer_step(net, grads, state)
            return net

        self.assertEqual(trained().flat().tobytes(), trained().flat().tobytes())

    def test_gradient_shape_mismatch(self):
        net = Mlp((2, 3, 1), rng=np.random.default_rng(0))
        grads = [np.zeros_like(p) for p in net.parameters()]
        grads[0] = np.zeros((3, 2))
        with self.assertRaises(ShapeError):
            optimizer_step(net, grads, OptimizerState(net))


class TestSoftUpdate(unittest.TestCase):
    def setUp(self):
        """
        Set up online and target networks with different parameters.
        """
        self.online = Mlp((3, 4, 2), rng=np.random.default_rng(0))
        self.target = Mlp((3, 4, 2), rng=np.random.default_rng(1))

    def test_full_copy(self):
        soft_update(self.target, self.online, 1.0)
        np.testing.assert_array_equal(self.target.flat(), self.online.flat())

    def test_no_op(self):
        before = self.target.flat()
        soft_update(self.target, self.online, 0.0)
        np.testing.assert_array_equal(self.target.flat(), before)

    def test_convex_combination(self):
        target = _single_layer([[0.0]], [0.0])
        online = _single_layer([[10.0]], [10.0])
        soft_update(target, online, 0.1)
        self.assertAlmostEqual(target.weights[0][0, 0], 1.0)
        self.assertAlmostEqual(target.biases[0][0], 1.0)

    def test_distance_contracts_by_one_minus_tau(self):
        tau = 0.2
        gap = np.linalg.norm(self.target.flat() - self.online.flat())
        for k in range(1, 11):
            soft_update(self.target, self.online, tau)
            np.testing.assert_allclose(np.linalg.norm(self.target.flat() - self.online.flat()),
                                       (1.0 - tau) ** k * gap, rtol=1e-9)

    def test_architecture_mismatch(self):
        with self.assertRaises(ShapeError):
            soft_update(Mlp((3, 5, 2)), self.online, 0.5)

    def test_copy_is_independent(self):
        clone = self.online.copy()
        clone.weights[0][0, 0] += 1.0
        self.assertNotEqual(clone.weights[0][0, 0], self.online.weights[0][0, 0])


if __name__ == '__main__':
    unittest.main()
