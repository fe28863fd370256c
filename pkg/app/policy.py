# app/policy.py

"""
Two-level DDPG policy.

The high level maps an observation to two rates in [0, 1] that index the demonstration set;
the low level maps ``{sub-goal, observation}`` to an environment action. Both are an
``AgentPair``: actor, critic, their targets, optimizers and exploration noise.
"""

import json
import logging
import zipfile
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from app.exceptions import CheckpointError, DivergenceError, ShapeError
from app.nn import DEFAULT_HIDDEN, Mlp, OptimizerState, optimizer_step, soft_update

CHECKPOINT_VERSION = 1


@dataclass(frozen=True)
class HighAction:
    a1: float
    a2: float

    def __post_init__(self):
        if not (0.0 <= self.a1 <= 1.0 and 0.0 <= self.a2 <= 1.0):
            raise ValueError(f"High action rates must lie in [0, 1], got ({self.a1}, {self.a2})")

    def as_array(self):
        return np.array([self.a1, self.a2])


@dataclass
class TransitionBatch:
    """Stacked transitions: inputs are whatever the actor consumes (goal already concatenated)."""
    inputs: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_inputs: np.ndarray
    dones: np.ndarray

    def __len__(self):
        return self.inputs.shape[0]

    def statistics(self):
        return {
            'size': len(self),
            'reward_mean': float(np.mean(self.rewards)),
            'reward_min': float(np.min(self.rewards)),
            'reward_max': float(np.max(self.rewards)),
            'input_abs_max': float(np.max(np.abs(self.inputs))),
            'terminal_fraction': float(np.mean(self.dones)),
        }


class AgentPair:
    """
    DDPG agent: actor, critic, target actor, target critic.

    The actor's bounded output ``y`` is mapped to the action range affinely
    (``action = offset + scale * y``). The critic consumes ``[input, action]``.

    Args:
        input_dim (int): Actor input width (observation, or goal + observation).
        action_low, action_high (array): Action bounds.
        output_activation (str): ``'sigmoid'`` for rate outputs, ``'tanh'`` for symmetric ranges.
        hidden_sizes (tuple of int): Hidden layer widths for actor and critic.
        actor_lr, critic_lr (float): Adam learning rates.
        noise_scale (float): Exploration noise std as a fraction of the action range.
        rng (numpy.random.Generator): Initialization source.
    """

    def __init__(self, input_dim, action_low, action_high, output_activation='tanh',
                 hidden_sizes=DEFAULT_HIDDEN, actor_lr=1e-4, critic_lr=1e-3, noise_scale=0.1, rng=None):
        rng = rng if rng is not None else np.random.default_rng(0)
        self.action_low = np.asarray(action_low, dtype=np.float64).reshape(-1)
        self.action_high = np.asarray(action_high, dtype=np.float64).reshape(-1)
        if self.action_low.shape != self.action_high.shape:
            raise ShapeError("action_low and action_high differ in size")
        self.action_dim = self.action_low.shape[0]
        self.input_dim = int(input_dim)
        self.output_activation = output_activation
        self.noise_scale = float(noise_scale)

        hidden = tuple(int(h) for h in hidden_sizes)
        self.actor = Mlp((self.input_dim,) + hidden + (self.action_dim,), output_activation, rng=rng)
        self.critic = Mlp((self.input_dim + self.action_dim,) + hidden + (1,), 'identity', rng=rng)
        self.target_actor = self.actor.copy()
        self.target_critic = self.critic.copy()
        self.actor_optimizer = OptimizerState(self.actor, learning_rate=actor_lr)
        self.critic_optimizer = OptimizerState(self.critic, learning_rate=critic_lr)

    @property
    def action_offset(self):
        if self.output_activation == 'tanh':
            return (self.action_high + self.action_low) / 2.0
        return self.action_low

    @property
    def action_scale(self):
        if self.output_activation == 'tanh':
            return (self.action_high - self.action_low) / 2.0
        return self.action_high - self.action_low

    def scale_action(self, y):
        return self.action_offset + self.action_scale * y

    def act(self, inputs, explore=False, rng=None):
        """
        Actor output mapped to the action range, optionally with clamped Gaussian noise.

        ``inputs`` is one input vector or a ``(batch, input_dim)`` array of them.
        """
        inputs = np.asarray(inputs, dtype=np.float64)
        if inputs.ndim not in (1, 2) or inputs.shape[-1] != self.input_dim:
            raise ShapeError(f"Expected actor input of size {self.input_dim}, got shape {inputs.shape}")
        action = self.scale_action(self.actor.forward(inputs))
        if explore and self.noise_scale > 0:
            noise = rng.normal(size=action.shape) * self.noise_scale * (self.action_high - self.action_low)
            action = action + noise
        return np.clip(action, self.action_low, self.action_high)


def make_high_agent(observation_dim, hidden_sizes=DEFAULT_HIDDEN, actor_lr=1e-4, critic_lr=1e-3,
                    noise_scale=0.1, rng=None):
    return AgentPair(observation_dim, (0.0, 0.0), (1.0, 1.0), 'sigmoid', hidden_sizes,
                     actor_lr, critic_lr, noise_scale, rng)


def make_low_agent(observation_dim, action_low, action_high, hidden_sizes=DEFAULT_HIDDEN, actor_lr=1e-4,
                   critic_lr=1e-3, noise_scale=0.1, rng=None):
    return AgentPair(2 * observation_dim, action_low, action_high, 'tanh', hidden_sizes,
                     actor_lr, critic_lr, noise_scale, rng)


def high_act(agent, obs, explore, rng):
    """Select sub-goal rates for ``obs``; noise is applied in rate space, then clamped to [0, 1]."""
    a1, a2 = agent.act(np.asarray(obs, dtype=np.float64).reshape(-1), explore, rng)
    return HighAction(float(a1), float(a2))


def low_input(obs, goal):
    """Low-policy input: the sub-goal followed by the current observation."""
    obs = np.asarray(obs, dtype=np.float64).reshape(-1)
    goal = np.asarray(goal, dtype=np.float64).reshape(-1)
    if obs.shape != goal.shape:
        raise ShapeError(f"Observation {obs.shape} and goal {goal.shape} differ in size")
    return np.concatenate([goal, obs])


def low_act(agent, obs, goal, explore, rng):
    return agent.act(low_input(obs, goal), explore, rng)


def noise_schedule(step, total_steps, start=0.1, end=0.02):
    """Linear annealing of the exploration scale from ``start`` to ``end``."""
    if total_steps <= 0:
        return end
    fraction = min(max(step / total_steps, 0.0), 1.0)
    return start + (end - start) * fraction


def critic_targets(agent, batch, gamma):
    next_actions = agent.scale_action(agent.target_actor.forward(batch.next_inputs))
    next_q = agent.target_critic.forward(np.concatenate([batch.next_inputs, next_actions], axis=1))[:, 0]
    return batch.rewards + gamma * (1.0 - batch.dones) * next_q


def critic_loss_and_gradients(agent, batch, gamma):
    """Mean squared TD error of the online critic and its parameter gradients."""
    targets = critic_targets(agent, batch, gamma)
    critic_input = np.concatenate([batch.inputs, batch.actions], axis=1)
    q = agent.critic.forward(critic_input)[:, 0]
    error = q - targets
    loss = float(np.mean(np.square(error)))
    upstream = (2.0 / len(batch)) * error[:, None]
    grads, _ = agent.critic.backward(critic_input, upstream)
    return loss, grads


def actor_loss_and_gradients(agent, batch):
    """``-mean Q(s, mu(s))`` and the actor's gradients, chained through the critic."""
    y = agent.actor.forward(batch.inputs)
    critic_input = np.concatenate([batch.inputs, agent.scale_action(y)], axis=1)
    q = agent.critic.forward(critic_input)[:, 0]
    loss = -float(np.mean(q))
    upstream = np.full((len(batch), 1), -1.0 / len(batch))
    _, input_grad = agent.critic.backward(critic_input, upstream)
    action_grad = input_grad[:, agent.input_dim:] * agent.action_scale
    grads, _ = agent.actor.backward(batch.inputs, action_grad)
    return loss, grads


def ddpg_update(agent, batch, gamma, tau):
    """
    One critic step, one actor step and a soft update of both targets.

    Raises:
        ShapeError: Empty or shape-inconsistent batch.
        DivergenceError: Non-finite loss; diagnostics hold the batch statistics.

    Returns:
        tuple: (critic_loss, actor_loss)
    """
    if len(batch) == 0:
        raise ShapeError("ddpg_update needs a non-empty batch")
    if (batch.inputs.shape[1] != agent.input_dim or batch.actions.shape[1] != agent.action_dim
            or batch.next_inputs.shape != batch.inputs.shape):
        raise ShapeError(f"Batch shapes {batch.inputs.shape}/{batch.actions.shape} do not fit the agent")

    critic_loss, critic_grads = critic_loss_and_gradients(agent, batch, gamma)
    if not np.isfinite(critic_loss):
        logging.error(f"Critic loss diverged: {critic_loss}")
        raise DivergenceError(f"Non-finite critic loss {critic_loss}", diagnostics=batch.statistics())
    optimizer_step(agent.critic, critic_grads, agent.critic_optimizer)

    actor_loss, actor_grads = actor_loss_and_gradients(agent, batch)
    if not np.isfinite(actor_loss):
        logging.error(f"Actor loss diverged: {actor_loss}")
        raise DivergenceError(f"Non-finite actor loss {actor_loss}", diagnostics=batch.statistics())
    optimizer_step(agent.actor, actor_grads, agent.actor_optimizer)

    soft_update(agent.target_critic, agent.critic, tau)
    soft_update(agent.target_actor, agent.actor, tau)
    return critic_loss, actor_loss


def _pack_agent(prefix, agent, arrays):
    for name in ('actor', 'critic', 'target_actor', 'target_critic'):
        for k, p in enumerate(getattr(agent, name).parameters()):
            arrays[f"{prefix}.{name}.{k}"] = p
    for name in ('actor_optimizer', 'critic_optimizer'):
        state = getattr(agent, name)
        for k, (m, v) in enumerate(zip(state.first_moment, state.second_moment)):
            arrays[f"{prefix}.{name}.m.{k}"] = m
            arrays[f"{prefix}.{name}.v.{k}"] = v
    return {
        'input_dim': agent.input_dim,
        'action_low': agent.action_low.tolist(),
        'action_high': agent.action_high.tolist(),
        'output_activation': agent.output_activation,
        'hidden_sizes': list(agent.actor.layer_sizes[1:-1]),
        'noise_scale': agent.noise_scale,
        'optimizers': {
            name: {
                'learning_rate': getattr(agent, name).learning_rate,
                'beta1': getattr(agent, name).beta1,
                'beta2': getattr(agent, name).beta2,
                'epsilon': getattr(agent, name).epsilon,
                'mode': getattr(agent, name).mode,
                'step_count': getattr(agent, name).step_count,
            }
            for name in ('actor_optimizer', 'critic_optimizer')
        },
    }


def _unpack_agent(prefix, meta, arrays):
    agent = AgentPair(meta['input_dim'], meta['action_low'], meta['action_high'], meta['output_activation'],
                      tuple(meta['hidden_sizes']), noise_scale=meta['noise_scale'])
    for name in ('actor', 'critic', 'target_actor', 'target_critic'):
        for k, p in enumerate(getattr(agent, name).parameters()):
            p[...] = arrays[f"{prefix}.{name}.{k}"]
    for name in ('actor_optimizer', 'critic_optimizer'):
        state = getattr(agent, name)
        settings = meta['optimizers'][name]
        state.learning_rate = settings['learning_rate']
        state.beta1 = settings['beta1']
        state.beta2 = settings['beta2']
        state.epsilon = settings['epsilon']
        state.mode = settings['mode']
        state.step_count = settings['step_count']
        for k in range(len(state.first_moment)):
            state.first_moment[k][...] = arrays[f"{prefix}.{name}.m.{k}"]
            state.second_moment[k][...] = arrays[f"{prefix}.{name}.v.{k}"]
    return agent


def save_checkpoint(path, agents, extra=None):
    """
    Write named AgentPairs (e.g. ``{'high': ..., 'low': ...}``) to a versioned ``.npz`` container.

    Args:
        path (str or Path): Destination file.
        agents (dict): Name to AgentPair.
        extra (dict, optional): JSON-serializable metadata stored alongside.
    """
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    arrays = {}
    meta = {'version': CHECKPOINT_VERSION, 'agents': {}, 'extra': extra or {}}
    for name, agent in agents.items():
        meta['agents'][name] = _pack_agent(name, agent, arrays)
    arrays['__meta__'] = np.array(json.dumps(meta, sort_keys=True))
    with open(path, 'wb') as f:
        np.savez(f, **arrays)
    logging.info(f"Checkpoint written to {path}")
    return path


def load_checkpoint(path):
    """
    Read a checkpoint written by ``save_checkpoint``.

    Raises:
        CheckpointError: Corrupt or truncated archive, foreign file, missing entry or wrong version.
        FileNotFoundError: ``path`` does not exist.

    Returns:
        tuple: (dict of name to AgentPair, extra metadata dict)
    """
    try:
        data = np.load(Path(path), allow_pickle=False)
        if not hasattr(data, 'files'):
            raise CheckpointError(f"{path} is not a checkpoint: a single array, not an archive")
        with data:
            arrays = {key: data[key] for key in data.files}
        if '__meta__' not in arrays:
            raise CheckpointError(f"{path} is not a checkpoint: no metadata entry")
        meta = json.loads(str(arrays.pop('__meta__')))
    except CheckpointError:
        raise
    except (ValueError, EOFError, zipfile.BadZipFile) as e:
        logging.error(f"Unreadable checkpoint {path}: {e}")
        raise CheckpointError(f"{path} is not a readable checkpoint: {e}") from e
    if meta.get('version') != CHECKPOINT_VERSION:
        raise CheckpointError(f"Unsupported checkpoint version {meta.get('version')} in {path}")
    try:
        agents = {name: _unpack_agent(name, agent_meta, arrays) for name, agent_meta in meta['agents'].items()}
    except KeyError as e:
        raise CheckpointError(f"{path}: missing entry {e}") from e
    return agents, meta['extra']
