# app/environments.py

"""
Deterministic control environments with scripted experts.

Three tasks cover both task classes:

- ``pointnav``      PointNav2D, a 2-D point mass that must reach a fixed goal (single goal).
- ``hillclimb``     HillClimb, the underpowered car that must swing out of a valley (single goal).
- ``cyclepattern``  CyclePattern, a damped point mass that must keep visiting four waypoints
                    in cyclic order (key-observation sequence, no terminal goal).

Dynamics are noise-free; the seeded start state is the only source of variation, which is
what makes expert episodes differ in length. ``eval_reward`` is a scoring signal for
evaluation and is never used for learning.
"""

import logging
import math
from dataclasses import dataclass, field, replace

import numpy as np

from app.demonstrations import DemoSet, Trajectory
from app.exceptions import EpisodeFinishedError, ExpertFailureError, ShapeError, UnknownEnvironmentError

SINGLE_GOAL = 'single-goal'
KEY_SEQUENCE = 'key-sequence'


@dataclass(frozen=True)
class EnvSpec:
    name: str
    observation_dim: int
    action_dim: int
    action_low: tuple
    action_high: tuple
    max_episode_steps: int
    task_class: str

    def __post_init__(self):
        if len(self.action_low) != self.action_dim or len(self.action_high) != self.action_dim:
            raise ShapeError(f"{self.name}: action bounds must have {self.action_dim} components")
        if any(lo > hi for lo, hi in zip(self.action_low, self.action_high)):
            raise ValueError(f"{self.name}: action_low must not exceed action_high")
        if self.max_episode_steps < 1:
            raise ValueError(f"{self.name}: max_episode_steps must be >= 1")
        if self.task_class not in (SINGLE_GOAL, KEY_SEQUENCE):
            raise ValueError(f"{self.name}: unknown task class '{self.task_class}'")

    @property
    def low(self):
        return np.asarray(self.action_low, dtype=np.float64)

    @property
    def high(self):
        return np.asarray(self.action_high, dtype=np.float64)


@dataclass
class EnvState:
    """Snapshot of an environment; ``phase`` and ``waypoints_hit`` are used by CyclePattern only."""
    physical: np.ndarray
    steps_elapsed: int = 0
    done: bool = False
    solved: bool = False
    phase: int = 0
    waypoints_hit: int = 0

    def copy(self):
        return replace(self, physical=np.array(self.physical, dtype=np.float64))


@dataclass(frozen=True)
class StepResult:
    observation: np.ndarray
    eval_reward: float
    done: bool
    steps_elapsed: int


class Environment:
    """Common reset/step bookkeeping; subclasses supply start states, dynamics and scoring."""

    spec = None

    def __init__(self):
        self.state = None
        self.clip_events = 0

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        self.state = EnvState(physical=self._sample_start(rng))
        return self.observe()

    def observe(self):
        if self.state is None:
            raise EpisodeFinishedError(f"{self.spec.name}: reset() must be called before use")
        return self._observation(self.state)

    def get_state(self):
        return self.state.copy()

    def set_state(self, state):
        self.state = state.copy()

    def clip_action(self, action):
        action = np.asarray(action, dtype=np.float64).reshape(-1)
        if action.shape != (self.spec.action_dim,):
            raise ShapeError(f"{self.spec.name}: expected action of size {self.spec.action_dim}, got {action.shape}")
        clipped = np.clip(action, self.spec.low, self.spec.high)
        if not np.array_equal(clipped, action):
            self.clip_events += 1
            logging.debug(f"{self.spec.name}: action {action} clipped to {clipped}")
        return clipped

    def step(self, action):
        if self.state is None or self.state.done:
            raise EpisodeFinishedError(f"{self.spec.name}: step() called after the episode ended")
        action = self.clip_action(action)
        state = self.state
        state.physical = self._dynamics(state, action)
        state.steps_elapsed += 1
        eval_reward = self._score(state)
        terminated = self._terminated(state)
        state.done = terminated or state.steps_elapsed >= self.spec.max_episode_steps
        return StepResult(self.observe(), float(eval_reward), state.done, state.steps_elapsed)

    def is_success(self):
        return bool(self.state is not None and self.state.solved)

    def terminated(self):
        """True termination of the current state; running out of steps does not count."""
        return bool(self.state is not None and self._terminated(self.state))

    def scripted_expert(self, observation):
        raise NotImplementedError

    def goal_tolerance(self):
        """Largest observation distance to a resting expert observation that still implies success, or None."""
        return None

    def settle(self):
        """Expert observations after the first success, for tasks with a resting point inside the goal."""
        return []

    def _sample_start(self, rng):
        raise NotImplementedError

    def _observation(self, state):
        return np.array(state.physical, dtype=np.float64)

    def _dynamics(self, state, action):
        raise NotImplementedError

    def _score(self, state):
        raise NotImplementedError

    def _terminated(self, state):
        return state.solved


class PointNav2D(Environment):
    """
    Point mass on a plane. Observation is ``(x, y, goal_x - x, goal_y - y)``; an action moves
    the point by ``STEP_SIZE * action``. Success is entering the goal disc; expert demonstrations
    continue past that step until they rest on ``GOAL``.
    """

    GOAL = np.array([0.8, 0.8])
    STEP_SIZE = 0.05
    GOAL_RADIUS = 0.1
    SETTLE_STEPS = 4
    ARENA = 1.5
    spec = EnvSpec('pointnav', 4, 2, (-1.0, -1.0), (1.0, 1.0), 100, SINGLE_GOAL)

    def _sample_start(self, rng):
        return rng.uniform(-1.0, -0.2, size=2)

    def _observation(self, state):
        position = state.physical
        return np.concatenate([position, self.GOAL - position])

    def _dynamics(self, state, action):
        return np.clip(state.physical + self.STEP_SIZE * action, -self.ARENA, self.ARENA)

    def _score(self, state):
        distance = float(np.linalg.norm(self.GOAL - state.physical))
        state.solved = distance < self.GOAL_RADIUS
        return -distance + (100.0 if state.solved else 0.0)

    def scripted_expert(self, observation):
        offset = np.asarray(observation, dtype=np.float64)[2:4]
        return offset / max(float(np.linalg.norm(offset)), self.STEP_SIZE)

    def goal_tolerance(self):
        # position error shows up in both the position and the goal-offset halves
        return self.GOAL_RADIUS * np.sqrt(2.0)

    def settle(self):
        """Continue the expert from the current state until the point rests on ``GOAL``."""
        state = self.get_state()
        path = []
        for _ in range(self.SETTLE_STEPS):
            if np.allclose(state.physical, self.GOAL):
                break
            state.physical = self._dynamics(state, self.scripted_expert(self._observation(state)))
            path.append(self._observation(state))
        return path


class HillClimb(Environment):
    """
    Underpowered car in a valley: ``v' = v + 0.001 a - 0.0025 cos(3x)``, ``x' = x + v'``.
    Observation is ``(x, v)``; success is ``x >= 0.45``.
    """

    POWER = 0.001
    GRAVITY = 0.0025
    MIN_POSITION = -1.2
    MAX_POSITION = 0.6
    MAX_SPEED = 0.07
    GOAL_POSITION = 0.45
    spec = EnvSpec('hillclimb', 2, 1, (-1.0,), (1.0,), 250, SINGLE_GOAL)

    def _sample_start(self, rng):
        return np.array([rng.uniform(-0.6, -0.4), 0.0])

    def _dynamics(self, state, action):
        position, velocity = state.physical
        velocity = velocity + float(action[0]) * self.POWER - self.GRAVITY * math.cos(3.0 * position)
        velocity = min(max(velocity, -self.MAX_SPEED), self.MAX_SPEED)
        position = min(max(position + velocity, self.MIN_POSITION), self.MAX_POSITION)
        if position == self.MIN_POSITION and velocity < 0:
            velocity = 0.0
        return np.array([position, velocity])

    def _score(self, state):
        state.solved = state.physical[0] >= self.GOAL_POSITION
        return 0.0 if state.solved else -1.0

    def scripted_expert(self, observation):
        # Energy pumping: push along the velocity, push right when at rest.
        return np.array([1.0 if observation[1] >= 0 else -1.0])


class CyclePattern(Environment):
    """
    Damped point mass that should keep circling four waypoints in order.

    Observation is ``(x, y, vx, vy)``; ``v' = 0.8 v + 0.02 a`` and ``p' = p + v'``. Entering
    the next waypoint's disc scores +1 and advances the phase. There is no terminal goal:
    episodes run for the full step budget, and success means two complete cycles.
    """

    WAYPOINTS = np.array([[-0.5, -0.5], [0.5, -0.5], [0.5, 0.5], [-0.5, 0.5]])
    DAMPING = 0.8
    ACCELERATION = 0.02
    HIT_RADIUS = 0.1
    CRUISE_SPEED = 0.1
    CYCLES_FOR_SUCCESS = 2
    ARENA = 1.5
    spec = EnvSpec('cyclepattern', 4, 2, (-1.0, -1.0), (1.0, 1.0), 200, KEY_SEQUENCE)

    def reset(self, seed):
        rng = np.random.default_rng(seed)
        velocity = rng.uniform(-0.08, 0.08, size=2)
        self.state = EnvState(physical=np.concatenate([self.WAYPOINTS[0], velocity]), phase=0)
        return self.observe()

    def next_waypoint(self):
        return (self.state.phase + 1) % len(self.WAYPOINTS)

    def _dynamics(self, state, action):
        position, velocity = state.physical[:2], state.physical[2:]
        velocity = self.DAMPING * velocity + self.ACCELERATION * action
        position = np.clip(position + velocity, -self.ARENA, self.ARENA)
        return np.concatenate([position, velocity])

    def _score(self, state):
        target = (state.phase + 1) % len(self.WAYPOINTS)
        if np.linalg.norm(state.physical[:2] - self.WAYPOINTS[target]) < self.HIT_RADIUS:
            state.phase = target
            state.waypoints_hit += 1
            state.solved = state.waypoints_hit >= self.CYCLES_FOR_SUCCESS * len(self.WAYPOINTS)
            return 1.0
        return 0.0

    def _terminated(self, state):
        return False

    def scripted_expert(self, observation):
        observation = np.asarray(observation, dtype=np.float64)
        position, velocity = observation[:2], observation[2:]
        offset = self.WAYPOINTS[self.next_waypoint()] - position
        distance = np.linalg.norm(offset)
        desired = offset * min(1.0, self.CRUISE_SPEED / distance) if distance > 0 else np.zeros(2)
        return np.clip((desired - self.DAMPING * velocity) / self.ACCELERATION, -1.0, 1.0)


ENVIRONMENTS = {
    'pointnav': PointNav2D,
    'hillclimb': HillClimb,
    'cyclepattern': CyclePattern,
}

_ALIASES = {
    'pointnav2d': 'pointnav',
}


def make_env(name):
    """
    Instantiate an environment by name (``pointnav``, ``hillclimb``, ``cyclepattern``).

    Raises:
        UnknownEnvironmentError: If the name is not registered.
    """
    key = str(name).lower()
    key = _ALIASES.get(key, key)
    if key not in ENVIRONMENTS:
        raise UnknownEnvironmentError(f"Unknown environment '{name}'. Choose from {sorted(ENVIRONMENTS)}.")
    return ENVIRONMENTS[key]()


def reset(env, seed):
    return env.reset(seed)


def step(env, action):
    return env.step(action)


def scripted_expert(env, observation):
    return env.scripted_expert(observation)


class ExpertController:
    """The environment's scripted expert behind the controller interface."""

    def __init__(self, env):
        self.env = env

    def reset(self):
        pass

    def act(self, observation):
        return self.env.scripted_expert(observation)


class RandomController:
    """Uniform random actions; the ground-level reference."""

    def __init__(self, env, seed=0):
        self.env = env
        self.seed = seed
        self.rng = np.random.default_rng(seed)

    def reset(self):
        pass

    def act(self, observation):
        return self.rng.uniform(self.env.spec.low, self.env.spec.high)


@dataclass
class Rollout:
    observations: list = field(default_factory=list)
    eval_return: float = 0.0
    success: bool = False

    @property
    def length(self):
        return len(self.observations) - 1


def rollout(env, controller, seed, stop_on_success=False):
    """
    Run one episode of ``controller`` from the start state drawn with ``seed``.

    Args:
        stop_on_success (bool): End as soon as the task is solved, even when the environment
            itself would keep running (key-sequence tasks).

    Returns:
        Rollout: Visited observations (start included), summed eval reward and success flag.
    """
    controller.reset()
    observation = env.reset(seed)
    result = Rollout(observations=[observation])
    done = False
    while not done:
        outcome = env.step(controller.act(observation))
        observation = outcome.observation
        result.observations.append(observation)
        result.eval_return += outcome.eval_reward
        done = outcome.done or (stop_on_success and env.is_success())
    result.success = env.is_success()
    return result


def _expert_trajectory(env, seed):
    episode = rollout(env, ExpertController(env), seed, stop_on_success=True)
    if not episode.success:
        logging.error(f"Scripted expert failed on {env.spec.name} with seed {seed}")
        raise ExpertFailureError(f"Scripted expert failed on {env.spec.name} (seed {seed})", seed=seed)
    return Trajectory(np.array(episode.observations + env.settle()))


def generate_demonstrations(env, n_trajectories, seed, max_realign_attempts=100):
    """
    Roll out the scripted expert ``n_trajectories`` times and keep observations only.
    Each rollout stops at the first success and is then extended by ``env.settle()``.

    Start seeds are drawn from ``seed``. When two or more trajectories are requested and they
    all happen to share one length, further seeds replace the last trajectory until the
    lengths differ.

    Raises:
        ValueError: If ``n_trajectories`` is not positive.
        ExpertFailureError: If the expert fails from some start seed.
    """
    if n_trajectories < 1:
        raise ValueError(f"n_trajectories must be positive, got {n_trajectories}")
    seeds = np.random.default_rng(seed).integers(0, 2 ** 31 - 1, size=n_trajectories + max_realign_attempts)
    trajectories = [_expert_trajectory(env, int(s)) for s in seeds[:n_trajectories]]

    if n_trajectories >= 2:
        attempts = iter(seeds[n_trajectories:])
        while len({t.length for t in trajectories}) == 1:
            extra = next(attempts, None)
            if extra is None:
                raise ExpertFailureError(
                    f"Could not produce demonstrations of differing length on {env.spec.name}", seed=seed)
            trajectories[-1] = _expert_trajectory(env, int(extra))

    demos = DemoSet(tuple(trajectories), env.spec.name)
    lengths = [t.length for t in trajectories]
    logging.info(f"Generated {len(lengths)} demonstrations on {env.spec.name}: "
                 f"length min={min(lengths)} mean={np.mean(lengths):.1f} max={max(lengths)}")
    return demos
