# app/trainer.py

"""
Training loop for the two-level agent, the flat step-by-step imitation baseline (TSRE),
greedy evaluation and the ablation harness.

Every ``delta_t`` environment steps the high agent emits sub-goal rates, decoded into an
expert observation; in between, the low agent acts on ``[goal, obs]``. The low agent is
updated once per environment step after warm-up, the high agent once per
``high_update_delay`` completed high decisions. Only engineered rewards reach the learners;
the environment's ``eval_reward`` is used for metrics alone.
"""

import csv
import hashlib
import logging
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, NamedTuple, Optional

import numpy as np

from app.demonstrations import estimate_eps, index_subgoal, load_demos, match_observation
from app.environments import ExpertController, RandomController, make_env, rollout
from app.exceptions import ConfigError, CurveParseError, DivergenceError, NumericalError, ShapeError
from app.policy import (AgentPair, HighAction, ddpg_update, high_act, low_act, make_high_agent,
                        make_low_agent, noise_schedule)
from app.replay import (FlatTransition, LowTransition, ReplayBuffer, Segment, flat_batch, high_batch,
                        low_batch, low_reward_validator, original_high_transition, relabel_high,
                        relabel_low)
from app.rewards import RewardParams, low_reward

CURVE_HEADER = ['env_steps', 'mean_return', 'success_rate', 'mean_length']
ABLATION_VARIANTS = {
    'full': {},
    'no_hindsight': {'disable_hindsight': True},
    'no_delay': {'disable_delay': True},
    'double_high_buffer': {'double_high_buffer': True},
}
_SEED_LIMIT = 2 ** 31 - 1


@dataclass(frozen=True)
class CurvePoint:
    env_steps: int
    mean_return: float
    success_rate: float
    mean_length: float


@dataclass
class LearningCurve:
    """
    Greedy evaluation results over the course of training.

    Attributes:
        points (list of CurvePoint): In strictly increasing ``env_steps`` order.
        seed (int or None): Run seed.
        fingerprint (str or None): Hash of the effective configuration and the DemoSet.
    """
    points: list = field(default_factory=list)
    seed: Optional[int] = None
    fingerprint: Optional[str] = None

    def add(self, point):
        if self.points and point.env_steps <= self.points[-1].env_steps:
            raise ValueError(f"env_steps must increase: {point.env_steps} after {self.points[-1].env_steps}")
        self.points.append(point)

    @property
    def final(self):
        return self.points[-1] if self.points else None

    def __len__(self):
        return len(self.points)

    def write_csv(self, path):
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        with open(path, 'w', newline='') as f:
            writer = csv.writer(f, lineterminator='\n')
            writer.writerow(CURVE_HEADER)
            for p in self.points:
                writer.writerow([p.env_steps, repr(p.mean_return), repr(p.success_rate), repr(p.mean_length)])
        return path

    @classmethod
    def read_csv(cls, path):
        """
        Raises:
            CurveParseError: Wrong header, wrong column count, non-numeric field or
                non-increasing ``env_steps``; the message names the row.
        """
        curve = cls()
        with open(path, 'r', newline='') as f:
            rows = list(csv.reader(f))
        if not rows or rows[0] != CURVE_HEADER:
            raise CurveParseError(f"{path}: row 1: expected header {','.join(CURVE_HEADER)}")
        for row_no, row in enumerate(rows[1:], start=2):
            if len(row) != len(CURVE_HEADER):
                raise CurveParseError(f"{path}: row {row_no}: expected {len(CURVE_HEADER)} fields, got {len(row)}")
            try:
                point = CurvePoint(int(row[0]), float(row[1]), float(row[2]), float(row[3]))
            except ValueError as e:
                raise CurveParseError(f"{path}: row {row_no}: {e}") from e
            try:
                curve.add(point)
            except ValueError as e:
                raise CurveParseError(f"{path}: row {row_no}: {e}") from e
        return curve


class EvalResult(NamedTuple):
    mean_return: float
    success_rate: float
    mean_length: float


@dataclass
class TrainResult:
    """Outcome of a run. For TSRE runs ``high`` is None and the flat agent sits in ``low``."""
    curve: LearningCurve
    high: Optional[AgentPair]
    low: AgentPair
    env_steps: int = 0
    episodes: int = 0
    low_updates: int = 0
    high_updates: int = 0
    high_decisions: int = 0


@dataclass
class EpisodeHooks:
    """
    Callbacks through which ``train`` drives an episode.

    Attributes:
        on_step: Called with each original LowTransition right after the step.
        on_segment: Called with each completed Segment and its HighTransition.
        should_stop: Ends the episode early (step budget exhausted).
        random_actions: True while warm-up draws uniform-random rates and actions.
        noise_scale: Exploration scale to apply to both agents before acting.
    """
    on_step: Optional[Callable] = None
    on_segment: Optional[Callable] = None
    should_stop: Optional[Callable] = None
    random_actions: Optional[Callable] = None
    noise_scale: Optional[Callable] = None


@dataclass
class EpisodeMetrics:
    eval_return: float = 0.0
    length: int = 0
    success: bool = False
    high_decisions: int = 0
    subgoals_achieved: int = 0


@dataclass
class EpisodeResult:
    segments: list
    high_transitions: list
    metrics: EpisodeMetrics

    @property
    def low_transitions(self):
        return [t for segment in self.segments for t in segment.transitions]


def reward_params(config, demos, env=None):
    """
    Reward parameters for a run.

    Without an explicit ``eps`` the tolerance is a fraction of the DemoSet diameter, capped by
    ``env.goal_tolerance()`` so that reaching a demonstration's last observation solves the task.
    """
    eps = config.eps
    if eps is None:
        eps = estimate_eps(demos, config.eps_fraction)
        tolerance = env.goal_tolerance() if env is not None else None
        if tolerance is not None and tolerance < eps:
            logging.debug(f"eps {eps:.4f} capped at the {env.spec.name} goal tolerance {tolerance:.4f}")
            eps = float(tolerance)
    return RewardParams(eps=eps, r_bonus=config.r_bonus, alpha=config.alpha, delta_t=config.delta_t)


def run_fingerprint(config, demos):
    digest = hashlib.sha256(config.fingerprint().encode())
    digest.update(demos.fingerprint().encode())
    return digest.hexdigest()


def episode_seeds(seed, n):
    return [int(s) for s in np.random.default_rng(seed).integers(0, _SEED_LIMIT, size=n)]


def check_components(env, demos, high, low):
    """
    Raises:
        ShapeError: Environment, DemoSet and agents disagree on a dimension.
    """
    obs_dim = env.spec.observation_dim
    if demos.observation_dim != obs_dim:
        raise ShapeError(f"DemoSet dimension {demos.observation_dim} != {env.spec.name} observation {obs_dim}")
    if high.input_dim != obs_dim or high.action_dim != 2:
        raise ShapeError(f"High agent ({high.input_dim} -> {high.action_dim}) does not fit observation {obs_dim}")
    if low.input_dim != 2 * obs_dim or low.action_dim != env.spec.action_dim:
        raise ShapeError(f"Low agent ({low.input_dim} -> {low.action_dim}) does not fit "
                         f"{env.spec.name} (observation {obs_dim}, action {env.spec.action_dim})")


def _call(hook, *args, default=None):
    return hook(*args) if hook is not None else default


def run_episode(env, demos, high, low, config, rng, seed=None, explore=True, hooks=None, params=None):
    """
    Run one episode of the two-level agent and collect its experience.

    Args:
        env (Environment): Environment to act in; reset here.
        demos (DemoSet): Source of sub-goals.
        high, low (AgentPair): High- and low-level agents.
        config (TrainConfig): Supplies ``delta_t`` and reward settings.
        rng (numpy.random.Generator): Exploration and warm-up randomness.
        seed (int, optional): Start-state seed; drawn from ``rng`` when omitted.
        explore (bool): Add exploration noise to agent actions.
        hooks (EpisodeHooks, optional): Training callbacks.
        params (RewardParams, optional): Defaults to ``reward_params(config, demos, env)``.

    Returns:
        EpisodeResult: Segments (with their low transitions), high transitions and metrics.
    """
    check_components(env, demos, high, low)
    hooks = hooks or EpisodeHooks()
    params = params or reward_params(config, demos, env)
    if seed is None:
        seed = int(rng.integers(0, _SEED_LIMIT))

    obs = env.reset(seed)
    segments, high_transitions = [], []
    metrics = EpisodeMetrics()
    segment = None
    random_segment = False
    done = False

    while not done:
        if _call(hooks.should_stop, default=False):
            break
        scale = _call(hooks.noise_scale)
        if scale is not None:
            high.noise_scale = low.noise_scale = scale

        if segment is None:
            random_segment = _call(hooks.random_actions, default=False)
            if random_segment:
                high_action = HighAction(float(rng.uniform()), float(rng.uniform()))
            else:
                high_action = high_act(high, obs, explore, rng)
            goal_index, goal = index_subgoal(demos, high_action.a1, high_action.a2)
            segment = Segment(goal=np.array(goal), goal_index=goal_index, high_action=high_action,
                              start_index=match_observation(demos, obs, params.eps),
                              observations=[obs], warmup=random_segment)
            metrics.high_decisions += 1

        if _call(hooks.random_actions, default=False):
            action = rng.uniform(env.spec.low, env.spec.high)
        else:
            action = low_act(low, obs, segment.goal, explore, rng)
        action = np.clip(np.asarray(action, dtype=np.float64), env.spec.low, env.spec.high)

        result = env.step(action)
        next_obs = result.observation
        terminal = env.terminated()
        transition = LowTransition(obs, action, low_reward(next_obs, segment.goal, params),
                                   next_obs, segment.goal, terminal)
        segment.observations.append(next_obs)
        segment.actions.append(action)
        segment.dones.append(terminal)
        segment.transitions.append(transition)
        metrics.eval_return += result.eval_reward
        metrics.length += 1
        _call(hooks.on_step, transition)

        obs = next_obs
        done = result.done
        if len(segment) == config.delta_t or done or _call(hooks.should_stop, default=False):
            high_transition = original_high_transition(segment, params)
            if high_transition.reward > 0:
                metrics.subgoals_achieved += 1
            segments.append(segment)
            high_transitions.append(high_transition)
            _call(hooks.on_segment, segment, high_transition)
            segment = None

    metrics.success = env.is_success()
    return EpisodeResult(segments, high_transitions, metrics)


class HierarchicalController:
    """
    Greedy two-level policy behind the controller interface used by ``rollout``.

    ``subgoals`` records every DemoIndex issued since the last ``reset``.
    """

    def __init__(self, high, low, demos, delta_t=5):
        self.high = high
        self.low = low
        self.demos = demos
        self.delta_t = delta_t
        self.steps = 0
        self.goal = None
        self.subgoals = []

    def reset(self):
        self.steps = 0
        self.goal = None
        self.subgoals = []

    def act(self, observation):
        if self.steps % self.delta_t == 0:
            action = high_act(self.high, observation, False, None)
            index, self.goal = index_subgoal(self.demos, action.a1, action.a2)
            self.subgoals.append(index)
        self.steps += 1
        return low_act(self.low, observation, self.goal, False, None)


def tsre_input(obs, t, max_steps):
    """Observation followed by the normalized elapsed time."""
    obs = np.asarray(obs, dtype=np.float64).reshape(-1)
    return np.concatenate([obs, [t / max_steps]])


def tsre_reward(next_obs, reference, t):
    """``-||d_t - o_t||^2`` against the reference observation at time ``t``, clamped to its end."""
    target = np.asarray(reference[min(t, len(reference) - 1)], dtype=np.float64)
    diff = target - np.asarray(next_obs, dtype=np.float64)
    return -float(np.dot(diff, diff))


class FlatController:
    """Greedy flat agent fed with the time feature."""

    def __init__(self, agent, max_steps):
        self.agent = agent
        self.max_steps = max_steps
        self.t = 0

    def reset(self):
        self.t = 0

    def act(self, observation):
        action = self.agent.act(tsre_input(observation, self.t, self.max_steps))
        self.t += 1
        return action


def evaluate_controller(env, controller, n_episodes, seed):
    """Mean eval return, success rate and episode length over seeded start states."""
    returns, successes, lengths = [], [], []
    for episode_seed in episode_seeds(seed, n_episodes):
        result = rollout(env, controller, episode_seed)
        returns.append(result.eval_return)
        successes.append(float(result.success))
        lengths.append(result.length)
    return EvalResult(float(np.mean(returns)), float(np.mean(successes)), float(np.mean(lengths)))


def evaluate(high, low, env, demos, n_episodes, seed, delta_t=5):
    check_components(env, demos, high, low)
    return evaluate_controller(env, HierarchicalController(high, low, demos, delta_t), n_episodes, seed)


def evaluate_expert(env, n_episodes, seed):
    return evaluate_controller(env, ExpertController(env), n_episodes, seed)


def evaluate_random(env, n_episodes, seed):
    return evaluate_controller(env, RandomController(env, seed), n_episodes, seed)


def resolve_demos(config, demos=None):
    """
    Load the run's DemoSet unless one is given, and check it belongs to the configured environment.

    Raises:
        ConfigError: No ``demo_path`` configured, or the DemoSet was made on another environment.
        FileNotFoundError: ``demo_path`` does not exist.
    """
    if demos is None:
        if not config.demo_path:
            raise ConfigError("demo_path is required to train", errors={'demo_path': ['required']})
        demos = load_demos(config.demo_path)
    env_name = make_env(config.env_name).spec.name
    if demos.env_name != env_name:
        raise ConfigError(f"Demonstrations were recorded on '{demos.env_name}', not '{env_name}'",
                          errors={'demo_path': [f"env mismatch: {demos.env_name}"]})
    return demos


def _eval_due(step, config):
    return step % config.eval_interval == 0 or step == config.total_env_steps


def _record(curve, step, metrics, label, on_eval):
    point = CurvePoint(step, metrics.mean_return, metrics.success_rate, metrics.mean_length)
    curve.add(point)
    logging.info(f"[{label}] step {step}: return={point.mean_return:.3f} "
                 f"success={point.success_rate:.2f} length={point.mean_length:.1f}")
    if on_eval is not None:
        on_eval(point)
    return point



def _diverged(error, curve, step, label):
    """
    Attach the curve recorded so far to a DivergenceError.

    A plain NumericalError (a non-finite gradient or parameter inside an optimizer step) is
    wrapped into a new DivergenceError whose diagnostics name the layer.
    """
    if not isinstance(error, DivergenceError):
        error = DivergenceError(f"Non-finite update in {error.layer or 'an unnamed layer'}: {error}",
                                diagnostics={'layer': error.layer, 'env_steps': step})
    error.curve = curve
    logging.error(f"[{label}] training diverged at step {step}: {error} {error.diagnostics}")
    return error

def train(config, demos=None, on_eval=None, on_snapshot=None):
    """
    Train the two-level agent.

    Args:
        config (TrainConfig): Run configuration.
        demos (DemoSet, optional): Overrides ``config.demo_path``.
        on_eval (callable, optional): Receives each CurvePoint as it is recorded.
        on_snapshot (callable, optional): Called as ``on_snapshot(env_steps, {'high': ..., 'low': ...})``
            right after each evaluation.

    Returns:
        TrainResult: Curve, final agents and schedule counters.

    Raises:
        DivergenceError: A loss or an optimizer update became non-finite; ``curve`` holds the
            points recorded so far.
    """
    demos = resolve_demos(config, demos)
    env, eval_env = make_env(config.env_name), make_env(config.env_name)
    params = reward_params(config, demos, env)
    init_seq, act_seq, low_seq, high_seq, episode_seq = np.random.SeedSequence(config.seed).spawn(5)
    init_rng = np.random.default_rng(init_seq)
    act_rng = np.random.default_rng(act_seq)
    episode_rng = np.random.default_rng(episode_seq)

    high = make_high_agent(env.spec.observation_dim, config.hidden_sizes, config.actor_lr,
                           config.critic_lr, config.noise_start, init_rng)
    low = make_low_agent(env.spec.observation_dim, env.spec.low, env.spec.high, config.hidden_sizes,
                         config.actor_lr, config.critic_lr, config.noise_start, init_rng)
    low_buffer = ReplayBuffer(config.low_buffer_capacity, low_seq, validator=low_reward_validator(params))
    high_buffer = ReplayBuffer(config.high_capacity, high_seq)

    curve = LearningCurve(seed=config.seed, fingerprint=run_fingerprint(config, demos))
    result = TrainResult(curve, high, low)
    logging.info(f"Training hilonet on {config.env_name}: {config.total_env_steps} steps, "
                 f"eps={params.eps:.4f}, delta_t={config.delta_t}, high delay={config.high_delay}")
    if config.total_env_steps == 0:
        return result

    def on_step(transition):
        low_buffer.push(transition)
        result.env_steps += 1
        if result.env_steps > config.warmup_steps:
            ddpg_update(low, low_batch(low_buffer.sample(config.batch_size)), config.gamma, config.tau)
            result.low_updates += 1
        if _eval_due(result.env_steps, config):
            metrics = evaluate(high, low, eval_env, demos, config.eval_episodes, config.seed, config.delta_t)
            _record(curve, result.env_steps, metrics, 'hilonet', on_eval)
            if on_snapshot is not None:
                on_snapshot(result.env_steps, {'high': high, 'low': low})

    def on_segment(segment, high_transition):
        high_buffer.push(high_transition)
        if not config.disable_hindsight:
            relabeled = relabel_high(segment, segment.high_action, demos, params)
            if relabeled is not None:
                high_buffer.push(relabeled)
            for transition in relabel_low(segment, demos, params):
                low_buffer.push(transition)
        if segment.warmup:
            return
        result.high_decisions += 1
        if result.high_decisions % config.high_delay == 0:
            ddpg_update(high, high_batch(high_buffer.sample(config.batch_size)), config.gamma, config.tau)
            result.high_updates += 1

    hooks = EpisodeHooks(
        on_step=on_step,
        on_segment=on_segment,
        should_stop=lambda: result.env_steps >= config.total_env_steps,
        random_actions=lambda: result.env_steps < config.warmup_steps,
        noise_scale=lambda: noise_schedule(result.env_steps, config.total_env_steps,
                                           config.noise_start, config.noise_end),
    )
    try:
        while result.env_steps < config.total_env_steps:
            run_episode(env, demos, high, low, config, act_rng, seed=int(episode_rng.integers(0, _SEED_LIMIT)),
                        explore=True, hooks=hooks, params=params)
            result.episodes += 1
    except NumericalError as e:
        error = _diverged(e, curve, result.env_steps, 'hilonet')
        if error is e:
            raise
        raise error from e

    logging.info(f"Finished hilonet: {result.episodes} episodes, {result.low_updates} low updates, "
                 f"{result.high_updates} high updates over {result.high_decisions} decisions")
    return result


def train_tsre(config, demos=None, on_eval=None, on_snapshot=None):
    """
    Train a flat DDPG agent that follows one demonstration step by step.

    The trajectory is ``demos[config.tsre_trajectory]``; the per-step reward is the negative
    squared distance to its observation at the same time index. ``on_eval`` and
    ``on_snapshot`` behave as in ``train``; snapshots hold the flat agent under ``'low'``.

    Returns:
        TrainResult: ``high`` is None; ``low`` is the flat agent.
    """
    demos = resolve_demos(config, demos)
    if not 0 <= config.tsre_trajectory < demos.num_trajectories:
        raise ConfigError(f"tsre_trajectory {config.tsre_trajectory} is outside the DemoSet "
                          f"({demos.num_trajectories} trajectories)", errors={'tsre_trajectory': ['out of range']})
    reference = demos[config.tsre_trajectory].observations
    env, eval_env = make_env(config.env_name), make_env(config.env_name)
    max_steps = env.spec.max_episode_steps
    init_seq, act_seq, buffer_seq, episode_seq = np.random.SeedSequence(config.seed).spawn(4)
    act_rng = np.random.default_rng(act_seq)
    episode_rng = np.random.default_rng(episode_seq)

    agent = AgentPair(env.spec.observation_dim + 1, env.spec.low, env.spec.high, 'tanh', config.hidden_sizes,
                      config.actor_lr, config.critic_lr, config.noise_start, np.random.default_rng(init_seq))
    buffer = ReplayBuffer(config.low_buffer_capacity, buffer_seq)
    curve = LearningCurve(seed=config.seed, fingerprint=run_fingerprint(config, demos))
    result = TrainResult(curve, None, agent)
    logging.info(f"Training tsre on {config.env_name}: {config.total_env_steps} steps, "
                 f"reference trajectory {config.tsre_trajectory} of length {len(reference)}")

    try:
        while result.env_steps < config.total_env_steps:
            obs = env.reset(int(episode_rng.integers(0, _SEED_LIMIT)))
            t = 0
            done = False
            while not done and result.env_steps < config.total_env_steps:
                inputs = tsre_input(obs, t, max_steps)
                if result.env_steps < config.warmup_steps:
                    action = act_rng.uniform(env.spec.low, env.spec.high)
                else:
                    agent.noise_scale = noise_schedule(result.env_steps, config.total_env_steps,
                                                       config.noise_start, config.noise_end)
                    action = agent.act(inputs, True, act_rng)
                step = env.step(action)
                t += 1
                buffer.push(FlatTransition(inputs, np.asarray(action, dtype=np.float64),
                                           tsre_reward(step.observation, reference, t),
                                           tsre_input(step.observation, t, max_steps), env.terminated()))
                result.env_steps += 1
                if result.env_steps > config.warmup_steps:
                    ddpg_update(agent, flat_batch(buffer.sample(config.batch_size)), config.gamma, config.tau)
                    result.low_updates += 1
                if _eval_due(result.env_steps, config):
                    metrics = evaluate_controller(eval_env, FlatController(agent, max_steps),
                                                  config.eval_episodes, config.seed)
                    _record(curve, result.env_steps, metrics, 'tsre', on_eval)
                    if on_snapshot is not None:
                        on_snapshot(result.env_steps, {'low': agent})
                obs = step.observation
                done = step.done
            result.episodes += 1
    except NumericalError as e:
        error = _diverged(e, curve, result.env_steps, 'tsre')
        if error is e:
            raise
        raise error from e
    return result


def ablate(config, demos=None, on_eval=None):
    """
    Train every ablation variant from the same seed.

    Returns:
        dict: Variant name -> LearningCurve, in ``ABLATION_VARIANTS`` order.
    """
    demos = resolve_demos(config, demos)
    base = config.with_overrides(disable_hindsight=False, disable_delay=False, double_high_buffer=False)
    results = {}
    for name, flags in ABLATION_VARIANTS.items():
        logging.info(f"Ablation variant '{name}' {flags}")
        results[name] = train(base.with_overrides(**flags), demos, on_eval).curve
    return results
