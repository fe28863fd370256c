# app/replay.py

"""
Experience storage for both levels and hindsight relabeling.

Each completed ``delta_t``-step ``Segment`` yields the original transitions and, when its final
observation lands on an expert trajectory, hindsight copies in which the sub-goal is replaced
by the expert observation actually reached.
"""

import logging
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from app.demonstrations import DemoIndex, encode_subgoal, match_observation
from app.exceptions import EmptyBufferError, InvalidTransitionError
from app.policy import HighAction, TransitionBatch, low_input
from app.rewards import achieved, high_reward, low_reward


@dataclass(frozen=True)
class LowTransition:
    obs: np.ndarray
    action: np.ndarray
    reward: float
    next_obs: np.ndarray
    goal: np.ndarray
    done: bool

    def validate(self):
        if not (self.obs.shape == self.next_obs.shape == self.goal.shape):
            raise InvalidTransitionError(
                f"Low transition dims differ: obs {self.obs.shape}, next {self.next_obs.shape}, goal {self.goal.shape}")
        if not np.isfinite(self.reward):
            raise InvalidTransitionError(f"Low transition reward is not finite: {self.reward}")


@dataclass(frozen=True)
class HighTransition:
    obs: np.ndarray
    high_action: HighAction
    reward: float
    next_obs: np.ndarray
    done: bool

    def validate(self):
        if self.obs.shape != self.next_obs.shape:
            raise InvalidTransitionError(f"High transition dims differ: {self.obs.shape} vs {self.next_obs.shape}")
        if not np.isfinite(self.reward):
            raise InvalidTransitionError(f"High transition reward is not finite: {self.reward}")


@dataclass(frozen=True)
class FlatTransition:
    """A transition of the flat step-by-step imitation agent; inputs carry the time feature."""
    inputs: np.ndarray
    action: np.ndarray
    reward: float
    next_inputs: np.ndarray
    done: bool

    def validate(self):
        if self.inputs.shape != self.next_inputs.shape:
            raise InvalidTransitionError(f"Flat transition dims differ: {self.inputs.shape} vs {self.next_inputs.shape}")
        if not np.isfinite(self.reward):
            raise InvalidTransitionError(f"Flat transition reward is not finite: {self.reward}")


@dataclass
class Segment:
    """
    Up to ``delta_t`` consecutive steps executed under one sub-goal.

    Attributes:
        observations (list): ``o_t ... o_{t+k}``, one more entry than ``actions``.
        actions (list): Low-level actions taken.
        goal (numpy.ndarray): The active sub-goal observation.
        goal_index (DemoIndex): Where the sub-goal sits in the DemoSet.
        high_action (HighAction): Rates that selected the sub-goal.
        start_index (DemoIndex or None): Match of ``o_t`` against the DemoSet.
        dones (list): Per-step true-termination flags (time limits excluded).
        transitions (list): Original LowTransitions against ``goal``, one per step.
        warmup (bool): The sub-goal was drawn at random during warm-up.
    """
    goal: np.ndarray
    goal_index: DemoIndex
    high_action: HighAction
    start_index: Optional[DemoIndex]
    observations: list = field(default_factory=list)
    actions: list = field(default_factory=list)
    dones: list = field(default_factory=list)
    transitions: list = field(default_factory=list)
    warmup: bool = False

    @property
    def terminal(self):
        return bool(self.dones and self.dones[-1])

    @property
    def final_observation(self):
        return self.observations[-1]

    def __len__(self):
        return len(self.actions)


class ReplayBuffer:
    """
    Fixed-capacity ring buffer with seeded uniform sampling (with replacement).

    Args:
        capacity (int): Maximum number of stored transitions; the oldest is evicted first.
        seed: Seed for the sampling generator.
        validator (callable, optional): Extra check run on every pushed transition; raise
            ``InvalidTransitionError`` to reject it.
    """

    def __init__(self, capacity, seed=None, validator=None):
        if int(capacity) < 1:
            raise ValueError(f"capacity must be positive, got {capacity}")
        self.capacity = int(capacity)
        self.rng = np.random.default_rng(seed)
        self.validator = validator
        self._memory = []
        self._next_idx = 0
        self.insertions = 0

    def push(self, transition):
        transition.validate()
        if self.validator is not None:
            self.validator(transition)
        if self._next_idx >= len(self._memory):
            self._memory.append(transition)
        else:
            self._memory[self._next_idx] = transition
        self._next_idx = (self._next_idx + 1) % self.capacity
        self.insertions += 1

    def sample(self, batch_size):
        if not self._memory:
            raise EmptyBufferError("Cannot sample from an empty replay buffer")
        indexes = self.rng.integers(0, len(self._memory), size=batch_size)
        return [self._memory[i] for i in indexes]

    def contents(self):
        """Stored transitions from oldest to newest."""
        if len(self._memory) < self.capacity:
            return list(self._memory)
        return self._memory[self._next_idx:] + self._memory[:self._next_idx]

    def __len__(self):
        return len(self._memory)


def push(buffer, transition):
    buffer.push(transition)


def low_reward_validator(params):
    """Reject low transitions whose reward differs from the recomputed low reward."""
    def check(transition):
        expected = low_reward(transition.next_obs, transition.goal, params)
        if transition.reward != expected:
            raise InvalidTransitionError(f"Low transition reward {transition.reward} != recomputed {expected}")
    return check


def low_batch(transitions):
    return TransitionBatch(
        inputs=np.array([low_input(t.obs, t.goal) for t in transitions]),
        actions=np.array([t.action for t in transitions]),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_inputs=np.array([low_input(t.next_obs, t.goal) for t in transitions]),
        dones=np.array([t.done for t in transitions], dtype=np.float64),
    )


def high_batch(transitions):
    return TransitionBatch(
        inputs=np.array([t.obs for t in transitions]),
        actions=np.array([t.high_action.as_array() for t in transitions]),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_inputs=np.array([t.next_obs for t in transitions]),
        dones=np.array([t.done for t in transitions], dtype=np.float64),
    )


def original_high_transition(segment, params):
    """The high transition as executed: achieved is judged against the decoded sub-goal."""
    reached = achieved(segment.final_observation, segment.goal, params.eps)
    reward = high_reward(segment.start_index, segment.goal_index, reached, params)
    return HighTransition(segment.observations[0], segment.high_action, reward,
                          segment.final_observation, segment.terminal)


def relabel_high(segment, original, demos, params):
    """
    Replace the sub-goal with the expert observation the segment actually reached.

    Args:
        segment (Segment): The completed segment.
        original (HighAction): Rates that were executed (replaced in the copy).

    Returns:
        HighTransition or None: None when the final observation is not on an expert trajectory.
    """
    matched = match_observation(demos, segment.final_observation, params.eps)
    if matched is None:
        return None
    a1, a2 = encode_subgoal(demos, matched)
    reward = high_reward(segment.start_index, matched, True, params)
    logging.debug(f"Hindsight high relabel ({original.a1:.3f}, {original.a2:.3f}) -> {matched}")
    return HighTransition(segment.observations[0], HighAction(a1, a2), reward,
                          segment.final_observation, segment.terminal)


def relabel_low(segment, demos, params):
    """
    Re-target every step of the segment at its own final observation, if that observation
    is on an expert trajectory.

    Returns:
        list of LowTransition: Empty when the final observation matches no expert observation.
    """
    if match_observation(demos, segment.final_observation, params.eps) is None:
        return []
    goal = np.array(segment.final_observation)
    return [
        LowTransition(segment.observations[k], segment.actions[k],
                      low_reward(segment.observations[k + 1], goal, params),
                      segment.observations[k + 1], goal, segment.dones[k])
        for k in range(len(segment))
    ]


def flat_batch(transitions):
    return TransitionBatch(
        inputs=np.array([t.inputs for t in transitions]),
        actions=np.array([t.action for t in transitions]),
        rewards=np.array([t.reward for t in transitions], dtype=np.float64),
        next_inputs=np.array([t.next_inputs for t in transitions]),
        dones=np.array([t.done for t in transitions], dtype=np.float64),
    )
