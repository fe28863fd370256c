# tests/test_replay.py

import unittest

import numpy as np

from app.demonstrations import DemoIndex, DemoSet, Trajectory, index_subgoal, match_observation
from app.exceptions import EmptyBufferError, InvalidTransitionError
from app.policy import HighAction
from app.replay import (HighTransition, LowTransition, ReplayBuffer, Segment, high_batch, low_batch,
                        low_reward_validator, original_high_transition, relabel_high, relabel_low)
from app.rewards import RewardParams, low_reward


def _low(value, reward=0.0):
    obs = np.array([float(value), 0.0])
    return LowTransition(obs, np.zeros(2), reward, obs, obs, False)


def _segment(demos, observations, high_action=HighAction(0.1, 0.1), eps=0.05):
    goal_index, goal = index_subgoal(demos, high_action.a1, high_action.a2)
    observations = [np.array(o, dtype=np.float64) for o in observations]
    return Segment(goal=np.array(goal), goal_index=goal_index, high_action=high_action,
                   start_index=match_observation(demos, observations[0], eps),
                   observations=observations,
                   actions=[np.array([0.1, 0.1]) for _ in observations[1:]],
                   dones=[False for _ in observations[1:]])


class TestReplayBuffer(unittest.TestCase):
    def test_push_into_empty(self):
        buffer = ReplayBuffer(4, seed=0)
        buffer.push(_low(1))
        self.assertEqual(len(buffer), 1)

    def test_oldest_evicted_first(self):
        buffer = ReplayBuffer(2, seed=0)
        items = [_low(k) for k in (1, 2, 3)]
        for item in items:
            buffer.push(item)
        self.assertEqual(buffer.contents(), items[1:])
        self.assertEqual(buffer.insertions, 3)

    def test_sample_from_empty(self):
        with self.assertRaises(EmptyBufferError):
            ReplayBuffer(2, seed=0).sample(4)

    def test_sampling_is_seeded_and_with_replacement(self):
        first, second = ReplayBuffer(10, seed=3), ReplayBuffer(10, seed=3)
        for item in [_low(k) for k in range(3)]:
            first.push(item)
            second.push(item)
        sample = first.sample(8)
        self.assertEqual(len(sample), 8)
        self.assertEqual(sample, second.sample(8))

    def test_rejects_non_finite_reward(self):
        with self.assertRaises(InvalidTransitionError):
            ReplayBuffer(2).push(_low(0, reward=np.inf))

    def test_rejects_inconsistent_dimensions(self):
        transition = LowTransition(np.zeros(2), np.zeros(2), 0.0, np.zeros(3), np.zeros(2), False)
        with self.assertRaises(InvalidTransitionError):
            ReplayBuffer(2).push(transition)

    def test_reward_validator(self):
        params = RewardParams(eps=0.1)
        buffer = ReplayBuffer(4, validator=low_reward_validator(params))
        obs, goal = np.array([0.0, 0.0]), np.array([1.0, 1.0])
        buffer.push(LowTransition(obs, np.zeros(2), low_reward(obs, goal, params), obs, goal, False))
        with self.assertRaises(InvalidTransitionError):
            buffer.push(LowTransition(obs, np.zeros(2), 5.0, obs, goal, False))

    def test_batches(self):
        low = low_batch([_low(1), _low(2)])
        self.assertEqual(low.inputs.shape, (2, 4))
        high = high_batch([HighTransition(np.zeros(3), HighAction(0.2, 0.4), 1.0, np.ones(3), True)])
        np.testing.assert_array_equal(high.actions, [[0.2, 0.4]])
        np.testing.assert_array_equal(high.dones, [1.0])


class TestRelabeling(unittest.TestCase):
    def setUp(self):
        """
        Set up two short expert trajectories and reward parameters.
        """
        self.demos = DemoSet((Trajectory([[0.0, 0.0], [0.1, 0.0], [0.2, 0.0], [0.3, 0.0]]),
                              Trajectory([[0.0, 1.0], [0.1, 1.0], [0.2, 1.0]])), 'pointnav')
        self.params = RewardParams(eps=0.05, r_bonus=1.0, alpha=1.0, delta_t=3)

    def test_exact_match_is_relabeled(self):
        """
        Ending exactly on an expert observation yields a hindsight high transition.
        """
        segment = _segment(self.demos, [[0.1, 0.0], [0.4, 0.5], [0.2, 0.0]])
        relabeled = relabel_high(segment, segment.high_action, self.demos, self.params)
        self.assertIsNotNone(relabeled)
        self.assertEqual(relabeled.reward, 1.0 + (2 - 1))
        self.assertGreaterEqual(relabeled.reward, 1.0 - self.params.alpha * 1)

    def test_relabeled_action_decodes_to_match(self):
        segment = _segment(self.demos, [[0.0, 0.0], [0.1, 0.5], [0.2, 1.0]])
        relabeled = relabel_high(segment, segment.high_action, self.demos, self.params)
        index, _ = index_subgoal(self.demos, relabeled.high_action.a1, relabeled.high_action.a2)
        self.assertEqual(index, DemoIndex(1, 2))

    def test_far_final_observation(self):
        segment = _segment(self.demos, [[0.0, 0.0], [0.5, 0.5], [0.6, 0.5]])
        self.assertIsNone(relabel_high(segment, segment.high_action, self.demos, self.params))
        self.assertEqual(relabel_low(segment, self.demos, self.params), [])

    def test_low_relabel_targets_final_observation(self):
        segment = _segment(self.demos, [[0.0, 0.5], [0.1, 0.3], [0.3, 0.0]])
        transitions = relabel_low(segment, self.demos, self.params)
        self.assertEqual(len(transitions), 2)
        final = transitions[-1]
        np.testing.assert_array_equal(final.goal, [0.3, 0.0])
        self.assertEqual(final.reward, self.params.r_bonus)
        for t in transitions:
            self.assertEqual(t.reward, low_reward(t.next_obs, t.goal, self.params))

    def test_recomputed_rewards_over_random_segments(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            middle = rng.uniform(-1.0, 1.0, size=(3, 2))
            end = self.demos.observation(DemoIndex(int(rng.integers(2)), int(rng.integers(3))))
            segment = _segment(self.demos, [middle[0], middle[1], middle[2], end])
            for t in relabel_low(segment, self.demos, self.params):
                self.assertEqual(t.reward, low_reward(t.next_obs, end, self.params))

    def test_original_high_transition(self):
        """
        Reaching the decoded sub-goal earns 1 + alpha * progress; missing it earns 0.
        """
        reached = _segment(self.demos, [[0.0, 0.0], [0.0, 0.0], [0.0, 0.0]])
        self.assertEqual(reached.goal_index, DemoIndex(0, 0))
        self.assertEqual(original_high_transition(reached, self.params).reward, 1.0)

        missed = _segment(self.demos, [[0.0, 0.0], [0.9, 0.9]], high_action=HighAction(0.9, 0.9))
        self.assertEqual(original_high_transition(missed, self.params).reward, 0.0)


if __name__ == '__main__':
    unittest.main()
