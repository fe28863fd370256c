# tests/test_policy.py

import math
import tempfile
import unittest
from pathlib import Path
from unittest.mock import MagicMock, patch

import numpy as np

from app.exceptions import CheckpointError, DivergenceError, ShapeError
from app.nn import optimizer_step, relative_error
from app.policy import (AgentPair, HighAction, TransitionBatch, actor_loss_and_gradients,
                        critic_loss_and_gradients, critic_targets, ddpg_update, high_act, load_checkpoint,
                        low_act, low_input, make_high_agent, make_low_agent, noise_schedule, save_checkpoint)


def _batch(agent, size=8, seed=0, done=0.0):
    rng = np.random.default_rng(seed)
    return TransitionBatch(
        inputs=rng.normal(size=(size, agent.input_dim)),
        actions=rng.uniform(agent.action_low, agent.action_high, size=(size, agent.action_dim)),
        rewards=rng.normal(size=size),
        next_inputs=rng.normal(size=(size, agent.input_dim)),
        dones=np.full(size, done),
    )



def _numeric_gradients(net, loss, h=1e-5):
    numeric = []
    for p in net.parameters():
        grad = np.zeros_like(p)
        for idx in np.ndindex(p.shape):
            original = p[idx]
            p[idx] = original + h
            up = loss()
            p[idx] = original - h
            down = loss()
            p[idx] = original
            grad[idx] = (up - down) / (2.0 * h)
        numeric.append(grad)
    return numeric


class TestHighAct(unittest.TestCase):
    def setUp(self):
        """
        Set up a high agent for a 4-D observation.
        """
        self.agent = make_high_agent(4, hidden_sizes=(16, 16), rng=np.random.default_rng(0))
        self.obs = np.array([0.1, -0.3, 0.7, 0.2])

    def test_deterministic_without_exploration(self):
        self.assertEqual(high_act(self.agent, self.obs, False, None), high_act(self.agent, self.obs, False, None))

    def test_zero_noise_equals_greedy(self):
        self.agent.noise_scale = 0.0
        greedy = high_act(self.agent, self.obs, False, None)
        self.assertEqual(high_act(self.agent, self.obs, True, np.random.default_rng(5)), greedy)

    def test_noise_is_clamped_at_the_boundary(self):
        """
        Actor output 0.98 plus a +0.1 noise sample lands on exactly 1.0.
        """
        self.agent.noise_scale = 1.0
        self.agent.actor = MagicMock()
        self.agent.actor.forward.return_value = np.array([0.98, 0.5])
        rng = MagicMock()
        rng.normal.return_value = np.array([0.1, 0.0])
        action = high_act(self.agent, self.obs, True, rng)
        self.assertEqual(action.a1, 1.0)
        self.assertAlmostEqual(action.a2, 0.5)

    def test_rates_always_in_unit_interval(self):
        rng = np.random.default_rng(1)
        for obs in rng.normal(scale=5.0, size=(50, 4)):
            action = high_act(self.agent, obs, True, rng)
            self.assertTrue(0.0 <= action.a1 <= 1.0 and 0.0 <= action.a2 <= 1.0)

    def test_rates_in_unit_interval_over_many_noisy_inputs(self):
        self.agent.noise_scale = 1.0
        rng = np.random.default_rng(11)
        rates = self.agent.act(rng.normal(scale=50.0, size=(10 ** 5, 4)), True, rng)
        self.assertEqual(rates.shape, (10 ** 5, 2))
        self.assertTrue(np.all((rates >= 0.0) & (rates <= 1.0)))
        self.assertTrue(np.any(rates == 0.0) and np.any(rates == 1.0))

    def test_batched_greedy_rates_match_single_calls(self):
        inputs = np.random.default_rng(12).normal(size=(20, 4))
        rates = self.agent.act(inputs)
        for row, expected in zip(inputs, rates):
            np.testing.assert_allclose(high_act(self.agent, row, False, None).as_array(), expected)

    def test_high_action_validated(self):
        with self.assertRaises(ValueError):
            HighAction(1.2, 0.0)


class TestLowAct(unittest.TestCase):
    def setUp(self):
        """
        Set up a low agent with asymmetric action bounds.
        """
        self.agent = make_low_agent(2, [-1.0, 0.0], [1.0, 2.0], hidden_sizes=(16,), rng=np.random.default_rng(2))

    def test_deterministic(self):
        obs, goal = np.array([0.1, 0.2]), np.array([0.5, -0.5])
        np.testing.assert_array_equal(low_act(self.agent, obs, goal, False, None),
                                      low_act(self.agent, obs, goal, False, None))

    def test_actions_within_bounds(self):
        rng = np.random.default_rng(3)
        for obs, goal in rng.normal(scale=10.0, size=(50, 2, 2)):
            action = low_act(self.agent, obs, goal, True, rng)
            self.assertTrue(np.all(action >= [-1.0, 0.0]) and np.all(action <= [1.0, 2.0]))

    def test_actions_within_bounds_over_many_noisy_inputs(self):
        self.agent.noise_scale = 1.0
        rng = np.random.default_rng(13)
        observations = rng.normal(scale=50.0, size=(10 ** 5, 2))
        goals = rng.normal(scale=50.0, size=(10 ** 5, 2))
        actions = self.agent.act(np.concatenate([goals, observations], axis=1), True, rng)
        self.assertEqual(actions.shape, (10 ** 5, 2))
        self.assertTrue(np.all((actions >= [-1.0, 0.0]) & (actions <= [1.0, 2.0])))

    def test_goal_comes_first(self):
        obs, goal = np.array([0.1, 0.2]), np.array([0.5, -0.5])
        np.testing.assert_array_equal(low_input(obs, goal), [0.5, -0.5, 0.1, 0.2])
        self.assertFalse(np.array_equal(low_act(self.agent, obs, goal, False, None),
                                        low_act(self.agent, goal, obs, False, None)))

    def test_goal_dimension_mismatch(self):
        with self.assertRaises(ShapeError):
            low_act(self.agent, np.zeros(2), np.zeros(3), False, None)


class TestCriticTargets(unittest.TestCase):
    def setUp(self):
        """
        Set up a one-dimensional agent with hand-set critic and target parameters.
        """
        self.agent = AgentPair(1, [-1.0], [1.0], 'tanh', hidden_sizes=(), rng=np.random.default_rng(0))
        self.agent.target_actor.weights[0][...] = [[0.5]]
        self.agent.target_actor.biases[0][...] = [0.0]
        self.agent.target_critic.weights[0][...] = [[1.0], [2.0]]
        self.agent.target_critic.biases[0][...] = [0.1]
        self.agent.critic.weights[0][...] = [[0.3], [-0.4]]
        self.agent.critic.biases[0][...] = [0.2]
        self.batch = TransitionBatch(np.array([[0.5]]), np.array([[0.25]]), np.array([1.0]),
                                     np.array([[1.0]]), np.array([0.0]))

    def test_terminal_targets_are_rewards(self):
        batch = _batch(self.agent, done=1.0)
        np.testing.assert_array_equal(critic_targets(self.agent, batch, 0.99), batch.rewards)

    def test_zero_discount(self):
        batch = _batch(self.agent)
        np.testing.assert_array_equal(critic_targets(self.agent, batch, 0.0), batch.rewards)

    def test_hand_computed_loss(self):
        next_action = math.tanh(0.5)
        target = 1.0 + 0.9 * (1.0 + 2.0 * next_action + 0.1)
        q = 0.3 * 0.5 - 0.4 * 0.25 + 0.2
        loss, grads = critic_loss_and_gradients(self.agent, self.batch, 0.9)
        self.assertAlmostEqual(loss, (q - target) ** 2)
        np.testing.assert_allclose(grads[1], [2.0 * (q - target)])


class TestDdpgUpdate(unittest.TestCase):
    def setUp(self):
        """
        Set up a small agent and a random batch.
        """
        self.agent = make_low_agent(2, [-1.0, -1.0], [1.0, 1.0], hidden_sizes=(8, 8), rng=np.random.default_rng(4))
        self.batch = _batch(self.agent, seed=1)

    def test_losses_finite_and_parameters_move(self):
        before = self.agent.actor.flat()
        critic_loss, actor_loss = ddpg_update(self.agent, self.batch, 0.98, 0.005)
        self.assertTrue(np.isfinite(critic_loss) and np.isfinite(actor_loss))
        self.assertFalse(np.array_equal(before, self.agent.actor.flat()))

    def test_target_lags_online(self):
        """
        After an update the target is closer to the new online weights than before, but not equal.
        """
        target_before = self.agent.target_critic.flat()
        ddpg_update(self.agent, self.batch, 0.98, 0.005)
        online = self.agent.critic.flat()
        after = np.linalg.norm(self.agent.target_critic.flat() - online)
        self.assertLess(after, np.linalg.norm(target_before - online))
        self.assertGreater(after, 0.0)

    def test_non_finite_loss_aborts(self):
        self.batch.rewards[0] = np.nan
        with self.assertRaises(DivergenceError) as ctx:
            ddpg_update(self.agent, self.batch, 0.98, 0.005)
        self.assertEqual(ctx.exception.diagnostics['size'], len(self.batch))

    def test_batch_shape_mismatch(self):
        batch = _batch(make_high_agent(3, hidden_sizes=(4,)))
        with self.assertRaises(ShapeError):
            ddpg_update(self.agent, batch, 0.98, 0.005)

    def test_update_gradients_match_finite_differences(self):
        """
        The critic and actor gradients applied inside an update agree with central differences.
        """
        errors = {}

        def checked_step(net, grads, state):
            if net is self.agent.critic:
                name, loss = 'critic', lambda: critic_loss_and_gradients(self.agent, self.batch, 0.98)[0]
            else:
                name, loss = 'actor', lambda: actor_loss_and_gradients(self.agent, self.batch)[0]
            numeric = _numeric_gradients(net, loss)
            errors[name] = max(float(np.max(relative_error(g, n))) for g, n in zip(grads, numeric))
            return optimizer_step(net, grads, state)

        with patch('app.policy.optimizer_step', side_effect=checked_step):
            ddpg_update(self.agent, self.batch, 0.98, 0.005)
        self.assertEqual(set(errors), {'critic', 'actor'})
        for name, error in errors.items():
            self.assertLess(error, 1e-4, name)

    def test_seeded_updates_are_bitwise_identical(self):
        def trained():
            agent = make_low_agent(2, [-1.0, -1.0], [1.0, 1.0], hidden_sizes=(8, 8), rng=np.random.default_rng(4))
            for k in range(25):
                ddpg_update(agent, _batch(agent, seed=k), 0.98, 0.005)
            return agent

        first, second = trained(), trained()
        for net in ('actor', 'critic', 'target_actor', 'target_critic'):
            self.assertEqual(getattr(first, net).flat().tobytes(), getattr(second, net).flat().tobytes(), net)


class TestNoiseSchedule(unittest.TestCase):
    def test_linear_annealing(self):
        self.assertAlmostEqual(noise_schedule(0, 100, 0.1, 0.02), 0.1)
        self.assertAlmostEqual(noise_schedule(50, 100, 0.1, 0.02), 0.06)
        self.assertAlmostEqual(noise_schedule(500, 100, 0.1, 0.02), 0.02)


class TestCheckpoint(unittest.TestCase):
    def setUp(self):
        """
        Set up a temporary directory and a trained pair of agents.
        """
        self.tmp = tempfile.TemporaryDirectory()
        self.path = Path(self.tmp.name) / 'checkpoint.npz'
        self.high = make_high_agent(4, hidden_sizes=(8,), rng=np.random.default_rng(0))
        self.low = make_low_agent(4, [-1.0, -1.0], [1.0, 1.0], hidden_sizes=(8,), rng=np.random.default_rng(1))
        ddpg_update(self.low, _batch(self.low), 0.98, 0.005)

    def tearDown(self):
        """
        Remove the temporary directory.
        """
        self.tmp.cleanup()

    def test_round_trip(self):
        save_checkpoint(self.path, {'high': self.high, 'low': self.low}, extra={'seed': 3})
        agents, extra = load_checkpoint(self.path)
        self.assertEqual(extra, {'seed': 3})
        for name, original in (('high', self.high), ('low', self.low)):
            restored = agents[name]
            for net in ('actor', 'critic', 'target_actor', 'target_critic'):
                np.testing.assert_array_equal(getattr(restored, net).flat(), getattr(original, net).flat())
            self.assertEqual(restored.critic_optimizer.step_count, original.critic_optimizer.step_count)
            np.testing.assert_array_equal(restored.action_low, original.action_low)

    def test_not_a_checkpoint(self):
        with open(self.path, 'wb') as f:
            np.savez(f, weights=np.zeros(3))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_truncated_checkpoint(self):
        save_checkpoint(self.path, {'low': self.low})
        data = self.path.read_bytes()
        self.path.write_bytes(data[:len(data) // 2])
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path)

    def test_foreign_files(self):
        for content in (b'not a checkpoint at all', b''):
            with self.subTest(content=content):
                self.path.write_bytes(content)
                with self.assertRaises(CheckpointError):
                    load_checkpoint(self.path)
        np.save(self.path.with_suffix('.npy'), np.zeros(3))
        with self.assertRaises(CheckpointError):
            load_checkpoint(self.path.with_suffix('.npy'))


if __name__ == '__main__':
    unittest.main()
