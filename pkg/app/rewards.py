# app/rewards.py

"""
Engineered rewards for both policy levels, the goal-achievement predicate, and a numerical
check that following the expert path beats jumping straight to the goal under the
high-level reward.
"""

import logging
import math
from dataclasses import dataclass

import numpy as np

from app.exceptions import ShapeError


@dataclass(frozen=True)
class RewardParams:
    """
    Attributes:
        eps (float): Achievement threshold on Euclidean distance.
        r_bonus (float): Sparse bonus added to the low reward on achievement.
        alpha (float): Weight of the phase-progress term in the high reward.
        delta_t (int): Environment steps between high-level decisions.
    """
    eps: float
    r_bonus: float = 1.0
    alpha: float = 1.0
    delta_t: int = 5

    def __post_init__(self):
        if not self.eps > 0:
            raise ValueError(f"eps must be positive, got {self.eps}")
        if not self.r_bonus > 0:
            raise ValueError(f"r_bonus must be positive, got {self.r_bonus}")
        if self.alpha < 0:
            raise ValueError(f"alpha must be non-negative, got {self.alpha}")
        if int(self.delta_t) != self.delta_t or self.delta_t < 1:
            raise ValueError(f"delta_t must be a positive integer, got {self.delta_t}")


def _pair(a, b):
    a = np.asarray(a, dtype=np.float64).reshape(-1)
    b = np.asarray(b, dtype=np.float64).reshape(-1)
    if a.shape != b.shape:
        raise ShapeError(f"Dimension mismatch: {a.shape} vs {b.shape}")
    return a, b


def achieved(obs, goal, eps):
    """True iff ``||goal - obs|| < eps`` (strict)."""
    obs, goal = _pair(obs, goal)
    return bool(np.linalg.norm(goal - obs) < eps)


def low_reward(next_obs, goal, params):
    """Negative squared distance to the sub-goal, plus ``r_bonus`` once within ``eps``."""
    next_obs, goal = _pair(next_obs, goal)
    squared = float(np.dot(goal - next_obs, goal - next_obs))
    if math.sqrt(squared) < params.eps:
        return -squared + params.r_bonus
    return -squared


def phase_index(index):
    """Position of a matched observation inside its own trajectory; 0 when unmatched."""
    return 0 if index is None else index.observation_index


def high_reward(prev_index, cur_index, achieved, params):
    """
    ``1 + alpha * (I(cur) - I(prev))`` when the sub-goal was achieved, else 0.

    An absent index counts as 0, which penalises leaving the expert trajectories.
    """
    if not achieved:
        return 0.0
    return 1.0 + params.alpha * (phase_index(cur_index) - phase_index(prev_index))


@dataclass(frozen=True)
class ValueCheck:
    gamma: float
    horizon: int
    delta_t: int
    v_follow: float
    v_jump: float

    @property
    def holds(self):
        return self.v_follow > self.v_jump


def verify_value_inequality(gamma, T, delta_t):
    """
    Compare the discounted value of following the expert path with jumping to the goal.

    ``V1 = sum_{t=0..T} gamma^t (1 + delta_t / T)`` and ``V2 = 2 gamma^T`` with alpha = 1.

    Returns:
        tuple: (V1, V2, V1 > V2)
    """
    if not 0.0 < gamma < 1.0:
        raise ValueError(f"gamma must lie in (0, 1), got {gamma}")
    if int(T) != T or T < 1:
        raise ValueError(f"T must be a positive integer, got {T}")
    if int(delta_t) != delta_t or not 1 <= delta_t <= T:
        raise ValueError(f"delta_t must be an integer in [1, T], got {delta_t}")
    geometric = (1.0 - gamma ** (T + 1)) / (1.0 - gamma)
    v1 = geometric * (1.0 + delta_t / T)
    v2 = 2.0 * gamma ** T
    return v1, v2, v1 > v2


def value_inequality_sweep(gammas=(0.5, 0.9, 0.99), horizons=(5, 10, 50)):
    """Evaluate ``verify_value_inequality`` for every gamma, horizon and delta_t in {1, T/5}."""
    checks = []
    for gamma in gammas:
        for horizon in horizons:
            for delta_t in sorted({1, max(1, horizon // 5)}):
                v1, v2, _ = verify_value_inequality(gamma, horizon, delta_t)
                checks.append(ValueCheck(gamma, horizon, delta_t, v1, v2))
    failures = [c for c in checks if not c.holds]
    if failures:
        logging.warning(f"Value inequality failed for {len(failures)} of {len(checks)} cases")
    return checks
